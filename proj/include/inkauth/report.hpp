#pragma once

#include <string>
#include <vector>

#include "inkauth/calibrate.hpp"
#include "inkauth/contrastive.hpp"
#include "inkauth/image.hpp"
#include "inkauth/matching.hpp"

namespace inkauth {

/// Summary rows of one sweep arm (e.g. with or without the prefilter).
struct SweepArm {
  std::string name;
  std::vector<SummaryRow> rows;
};

/// Table with one row per arm and one column per condition; cells are top-1 (and
/// in a second block top-5) accuracy in percent as mean±std over seeds.
std::string summary_table(const std::vector<SweepArm>& arms);

/// arm,condition,defect_ratio,forgery_ratio,runs,top1_mean,top1_std,top5_mean,top5_std
std::string conditions_csv(const std::vector<SweepArm>& arms);

std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// Training loss against step as a standalone SVG polyline chart.
std::string loss_curve_svg(const std::vector<MetricsRow>& rows);

/// Patch-grid image (rows x cols), each cell the patch weight divided by the
/// largest weight.
Image weight_heatmap(const WeightVector& weights, int rows, int cols);

}  // namespace inkauth
