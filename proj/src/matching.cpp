#include "inkauth/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "inkauth/errors.hpp"

namespace inkauth {

int WeightVector::active_count() const {
  return static_cast<int>(std::count(active.begin(), active.end(), true));
}

void validate(const MatchingConfig& c) {
  if (c.steps <= 0 || c.boost_count <= 0 || c.interval <= 0 || c.floor <= 0 || c.max_rounds < 0)
    throw ConfigError("matching steps, boost_count, interval and floor must be positive; max_rounds >= 0");
  if (!(c.alpha >= 0.0)) throw RangeError("matching alpha must be nonnegative");
  if (!(c.change_divisor > 0.0)) throw RangeError("change_divisor must be positive");
}

WeightVector init_weights(int m) {
  if (m <= 0) throw RangeError(fmt::format("weight vector needs at least one patch, got {}", m));
  return {std::vector<double>(m, 1.0 / m), std::vector<bool>(m, true)};
}

void renormalize(WeightVector& weights) {
  double total = 0.0;
  for (int i = 0; i < weights.size(); ++i)
    if (weights.active[i]) total += weights.w[i];
  for (int i = 0; i < weights.size(); ++i) {
    if (!weights.active[i])
      weights.w[i] = 0.0;
    else if (total > 0.0)
      weights.w[i] /= total;
  }
}

std::vector<double> patch_saliency(const std::vector<Eigen::MatrixXd>& input_gradients) {
  if (input_gradients.empty()) throw StateError("saliency requested without recorded gradients");
  std::vector<double> s(input_gradients.front().rows(), 0.0);
  for (const auto& g : input_gradients) {
    if (static_cast<std::size_t>(g.rows()) != s.size()) throw ShapeError("input gradients disagree in patch count");
    for (Eigen::Index i = 0; i < g.rows(); ++i) s[i] += g.row(i).norm();
  }
  for (double& v : s) v /= static_cast<double>(input_gradients.size());
  return s;
}

WeightVector boost_step(const WeightVector& weights, const std::vector<double>& saliency,
                        const MatchingConfig& config) {
  if (static_cast<int>(saliency.size()) != weights.size()) throw ShapeError("saliency length differs from weights");
  std::vector<int> order;
  for (int i = 0; i < weights.size(); ++i)
    if (weights.active[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return saliency[a] > saliency[b]; });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(config.boost_count)));

  WeightVector out = weights;
  if (config.alpha == 0.0) return out;
  const double increment = config.alpha / config.steps;
  for (int step = 0; step < config.steps; ++step) {
    for (int i : order) out.w[i] += increment;
    renormalize(out);
  }
  return out;
}

WeightVector prune_step(const WeightVector& weights, const std::vector<double>& changes,
                        const MatchingConfig& config) {
  if (static_cast<int>(changes.size()) != weights.size()) throw ShapeError("changes length differs from weights");
  std::vector<int> active;
  double total = 0.0;
  for (int i = 0; i < weights.size(); ++i)
    if (weights.active[i]) {
      active.push_back(i);
      total += changes[i];
    }
  WeightVector out = weights;
  if (active.empty()) return out;
  const double threshold = total / static_cast<double>(active.size()) / config.change_divisor;
  std::vector<int> candidates;
  for (int i : active)
    if (changes[i] < threshold) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return changes[a] < changes[b]; });

  int remaining = static_cast<int>(active.size());
  const int keep = std::min(config.floor, remaining);
  for (int i : candidates) {
    if (remaining - 1 < keep) break;
    out.active[i] = false;
    --remaining;
  }
  renormalize(out);
  return out;
}

MatchingState init_matching(int m) {
  MatchingState s;
  s.weights = init_weights(m);
  s.previous = s.weights.w;
  s.saliency_sum.assign(m, 0.0);
  return s;
}

void accumulate_saliency(MatchingState& state, const std::vector<double>& saliency) {
  if (saliency.size() != state.saliency_sum.size()) throw ShapeError("saliency length differs from weights");
  for (std::size_t i = 0; i < saliency.size(); ++i) state.saliency_sum[i] += saliency[i];
  ++state.saliency_samples;
}

bool matching_round(MatchingState& state, const std::vector<double>& saliency, const MatchingConfig& config) {
  if (state.halted || state.rounds >= config.max_rounds) return false;
  WeightVector boosted = boost_step(state.weights, saliency, config);

  std::vector<double> changes(boosted.w.size());
  for (std::size_t i = 0; i < changes.size(); ++i) changes[i] = std::abs(boosted.w[i] - state.previous[i]);

  double total = 0.0;
  int active = 0;
  for (int i = 0; i < boosted.size(); ++i)
    if (boosted.active[i]) {
      total += changes[i];
      ++active;
    }
  const double threshold = active > 0 ? total / active / config.change_divisor : 0.0;
  int above = 0;
  for (int i = 0; i < boosted.size(); ++i)
    if (boosted.active[i] && changes[i] >= threshold) ++above;

  state.weights = prune_step(boosted, changes, config);
  state.previous = state.weights.w;
  ++state.rounds;
  state.streak = above >= config.floor ? state.streak + 1 : 0;
  if (state.streak >= config.floor) state.halted = true;
  return true;
}

bool matching_round_from_accumulated(MatchingState& state, const MatchingConfig& config) {
  if (state.saliency_samples == 0) return false;
  std::vector<double> mean(state.saliency_sum.size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = state.saliency_sum[i] / state.saliency_samples;
  std::fill(state.saliency_sum.begin(), state.saliency_sum.end(), 0.0);
  state.saliency_samples = 0;
  return matching_round(state, mean, config);
}

bool is_matching_iteration(long long iteration, const MatchingConfig& config) {
  return iteration > 0 && iteration % config.interval == 0;
}

}  // namespace inkauth
