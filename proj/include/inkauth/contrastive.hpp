#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "inkauth/checkpoint.hpp"
#include "inkauth/encoder.hpp"
#include "inkauth/image.hpp"
#include "inkauth/matching.hpp"
#include "inkauth/patches.hpp"

namespace inkauth {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.6;
  double weight_decay = 0.05;
  double epsilon = 1e-8;
};

struct ContrastConfig {
  double temperature = 0.2;
  double momentum = 0.99;
  int batch_size = 32;
  int steps = 500;
  OptimizerConfig optimizer{1e-3};
  int queue_size = 0;
  int log_interval = 10;
  bool record_wall_time = false;
  std::uint64_t seed = 0;
};

void validate(const ContrastConfig& config);

/// -log softmax over `keys` (one key per row) at `positive`, with a max shift.
/// If `d_query` is given it receives the gradient w.r.t. `query`.
double info_nce(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys, int positive, double temperature,
                Eigen::VectorXd* d_query = nullptr);

/// momentum <- m * momentum + (1 - m) * online, for every paired parameter.
void ema_update(EncoderState& state, double m);

/// Adam moments over the online parameters; weight decay is decoupled.
struct AdamState {
  nn::OnlineNet m;
  nn::OnlineNet v;
  std::int64_t t = 0;
};

AdamState init_adam(const EncoderState& state);

/// One decoupled-weight-decay Adam update over parallel parameter lists; `t` is the
/// 1-based step used for bias correction.
void adam_update(const std::vector<nn::Mat*>& params, const std::vector<const nn::Mat*>& grads,
                 const std::vector<nn::Mat*>& m, const std::vector<nn::Mat*>& v, std::int64_t t,
                 const OptimizerConfig& config);

template <typename T>
std::vector<nn::Mat*> matrices(T& net) {
  std::vector<nn::Mat*> out;
  nn::visit(net, "", [&](const std::string&, nn::Mat& m) { out.push_back(&m); });
  return out;
}

template <typename T>
std::vector<const nn::Mat*> matrices(const T& net) {
  std::vector<const nn::Mat*> out;
  nn::visit(net, "", [&](const std::string&, const nn::Mat& m) { out.push_back(&m); });
  return out;
}
void adam_step(nn::OnlineNet& params, const nn::OnlineNet& grads, AdamState& adam, const OptimizerConfig& config);

struct MetricsRow {
  long long step = 0;
  double loss = 0.0;
  double mean_active_patches = 0.0;
  double wall_ms = 0.0;
};

/// Everything needed to continue a pre-training run bit-for-bit.
struct PretrainState {
  EncoderState encoder;
  AdamState adam;
  Eigen::MatrixXd queue;  // FIFO key rows, oldest first
  std::vector<MatchingState> matching;  // one per pre-training image
  double interval_loss = 0.0;
  int interval_steps = 0;
  double interval_wall_ms = 0.0;
  std::vector<MetricsRow> metrics;
};

struct PretrainSetup {
  ContrastConfig contrast;
  MatchingConfig matching;
  AugmentPolicy augment;
  int patch_size = 16;
};

PretrainState init_pretrain(const EncoderConfig& config, int num_images);

/// Image indices for training step `step`: consecutive slices of per-epoch seeded
/// permutations. A pure function of its arguments.
std::vector<int> batch_indices(int num_images, int batch_size, std::uint64_t seed, long long step);

/// One dual-channel update on `batch` (indices into `images`). Returns the mean loss.
double pretrain_step(const std::vector<Image>& images, const std::vector<int>& batch, PretrainState& state,
                     const PretrainSetup& setup);

using StepCallback = std::function<void(long long step, double loss)>;

/// Runs steps until `setup.contrast.steps` (or `stop_at` when >= 0), interleaving
/// matching rounds every `matching.interval` steps and logging one metrics row per
/// `log_interval` steps (the last row may cover a partial interval).
void pretrain(const std::vector<Image>& images, PretrainState& state, const PretrainSetup& setup,
              long long stop_at = -1, const StepCallback& on_step = {});

std::string metrics_csv(const std::vector<MetricsRow>& rows);

Checkpoint to_checkpoint(const PretrainState& state);
PretrainState pretrain_state_from_checkpoint(const Checkpoint& checkpoint);

/// Writes the encoder parameters (online and momentum) of `state` into `out`.
void store_encoder(const EncoderState& state, Checkpoint& out);
EncoderState load_encoder(const Checkpoint& checkpoint);

}  // namespace inkauth
