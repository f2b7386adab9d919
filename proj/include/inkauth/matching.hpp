#pragma once

#include <Eigen/Dense>
#include <vector>

namespace inkauth {

/// Patch weights: active entries sum to 1, inactive entries are exactly 0.
struct WeightVector {
  std::vector<double> w;
  std::vector<bool> active;

  int size() const { return static_cast<int>(w.size()); }
  int active_count() const;
};

struct MatchingConfig {
  int steps = 3;             // A: inner boost increments
  int boost_count = 10;      // sigma: patches boosted per round
  double alpha = 0.021;      // total boost per round; about doubles a uniform weight at M=64
  int interval = 10;         // B_t: training iterations between rounds
  int floor = 20;            // C_t: active floor and early-stop streak
  int max_rounds = 20;       // T_MAX, counted in matching rounds
  double change_divisor = 3.0;
};

void validate(const MatchingConfig& config);

WeightVector init_weights(int m);

/// Renormalizes active weights to sum 1; inactive set to 0.
void renormalize(WeightVector& weights);

/// Row L2 norms of per-sample input gradients, averaged over the batch.
std::vector<double> patch_saliency(const std::vector<Eigen::MatrixXd>& input_gradients);

/// Top `boost_count` active patches by saliency (ties to the lower index), each
/// raised by alpha/steps for `steps` increments with renormalization in between.
WeightVector boost_step(const WeightVector& weights, const std::vector<double>& saliency,
                        const MatchingConfig& config);

/// Deactivates active patches whose change is below mean(active changes)/divisor,
/// lowest change first, never dropping below min(floor, current active count).
WeightVector prune_step(const WeightVector& weights, const std::vector<double>& changes,
                        const MatchingConfig& config);

/// Per-image matching bookkeeping across rounds.
struct MatchingState {
  WeightVector weights;
  std::vector<double> previous;      // weights after the last round
  std::vector<double> saliency_sum;  // accumulated since the last round
  int saliency_samples = 0;
  int rounds = 0;
  int streak = 0;  // consecutive rounds with >= floor above-threshold changes
  bool halted = false;
};

MatchingState init_matching(int m);

void accumulate_saliency(MatchingState& state, const std::vector<double>& saliency);

/// One round: boost, per-patch change since the previous round, prune, early-stop
/// bookkeeping. No-op (returns false) once halted or after max_rounds.
bool matching_round(MatchingState& state, const std::vector<double>& saliency, const MatchingConfig& config);

/// Round driven by the accumulated saliency, which is then cleared. Returns false
/// when no saliency has been accumulated.
bool matching_round_from_accumulated(MatchingState& state, const MatchingConfig& config);

/// True when training iteration `iteration` (1-based) closes a matching interval.
bool is_matching_iteration(long long iteration, const MatchingConfig& config);

}  // namespace inkauth
