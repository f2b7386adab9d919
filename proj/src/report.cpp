#include "inkauth/report.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <sstream>

#include "inkauth/errors.hpp"

namespace inkauth {

namespace {

std::vector<std::string> condition_columns(const std::vector<SweepArm>& arms) {
  std::vector<std::string> cols;
  for (const auto& arm : arms)
    for (const auto& r : arm.rows)
      if (std::find(cols.begin(), cols.end(), r.label) == cols.end()) cols.push_back(r.label);
  return cols;
}

std::string table_block(const std::vector<SweepArm>& arms, const std::vector<std::string>& cols, bool top5) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{top5 ? "top-5 (%)" : "top-1 (%)"};
  header.insert(header.end(), cols.begin(), cols.end());
  cells.push_back(header);
  for (const auto& arm : arms) {
    std::vector<std::string> line{arm.name};
    for (const auto& c : cols) {
      auto it = std::find_if(arm.rows.begin(), arm.rows.end(), [&](const SummaryRow& r) { return r.label == c; });
      if (it == arm.rows.end())
        line.emplace_back("-");
      else
        line.push_back(top5 ? mean_std(100.0 * it->top5_mean, 100.0 * it->top5_std)
                            : mean_std(100.0 * it->top1_mean, 100.0 * it->top1_std));
    }
    cells.push_back(line);
  }
  // Display width counts code points so "±" aligns.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) w[i] = std::max(w[i], width(line[i]));
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      out += (i ? " | " : "") + cells[r][i] + std::string(w[i] - width(cells[r][i]), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += '\n';
    if (r == 0) {
      for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "-|-" : "") + std::string(w[i], '-');
      out += '\n';
    }
  }
  return out;
}

}  // namespace

std::string summary_table(const std::vector<SweepArm>& arms) {
  const auto cols = condition_columns(arms);
  return table_block(arms, cols, false) + "\n" + table_block(arms, cols, true);
}

std::string conditions_csv(const std::vector<SweepArm>& arms) {
  std::string out = "arm,condition,defect_ratio,forgery_ratio,runs,top1_mean,top1_std,top5_mean,top5_std\n";
  for (const auto& arm : arms)
    for (const auto& r : arm.rows)
      out += fmt::format("{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", arm.name, r.label, r.defect_ratio,
                         r.forgery_ratio, r.runs, r.top1_mean, r.top1_std, r.top5_mean, r.top5_std);
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,loss", 0) != 0) throw ManifestError("metrics log lacks its header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    char c1, c2, c3;
    std::istringstream ls(line);
    if (!(ls >> r.step >> c1 >> r.loss >> c2 >> r.mean_active_patches >> c3 >> r.wall_ms))
      throw ManifestError(fmt::format("malformed metrics row '{}'", line));
    rows.push_back(r);
  }
  return rows;
}

std::string loss_curve_svg(const std::vector<MetricsRow>& rows) {
  constexpr double kW = 640, kH = 360, kLeft = 60, kRight = 20, kTop = 20, kBottom = 40;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kW, kH, kW, kH);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x1, y0);
  out += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", x0, y0, x0, y1);
  out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">step</text>\n", (x0 + x1) / 2,
                     kH - 8);
  out += fmt::format("<text x=\"14\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 14 {})\" "
                     "text-anchor=\"middle\">loss</text>\n",
                     (y0 + y1) / 2, (y0 + y1) / 2);
  if (!rows.empty()) {
    double lo = rows.front().loss, hi = rows.front().loss;
    for (const auto& r : rows) {
      lo = std::min(lo, r.loss);
      hi = std::max(hi, r.loss);
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double smax = static_cast<double>(std::max<long long>(rows.back().step, 1));
    std::string points;
    for (const auto& r : rows) {
      const double x = x0 + (x1 - x0) * static_cast<double>(r.step) / smax;
      const double y = y0 - (y0 - y1) * (r.loss - lo) / (hi - lo);
      points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", x, y);
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n", points);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3f}</text>\n", x0 - 4, y1 + 4,
                       hi);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3f}</text>\n", x0 - 4, y0,
                       lo);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n", x1, y0 + 16,
                       rows.back().step);
  }
  out += "</svg>\n";
  return out;
}

Image weight_heatmap(const WeightVector& weights, int rows, int cols) {
  if (rows * cols != weights.size())
    throw ShapeError(fmt::format("{} weights do not fill a {}x{} patch grid", weights.size(), rows, cols));
  const double peak = *std::max_element(weights.w.begin(), weights.w.end());
  Image img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) img.at(r, c) = peak > 0.0 ? weights.w[r * cols + c] / peak : 0.0;
  return img;
}

}  // namespace inkauth
