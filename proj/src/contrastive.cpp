#include "inkauth/contrastive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "inkauth/errors.hpp"
#include "inkauth/seeding.hpp"

namespace inkauth {

void validate(const ContrastConfig& c) {
  if (!(c.temperature > 0.0)) throw RangeError("temperature must be positive");
  if (!(c.momentum >= 0.0 && c.momentum <= 1.0)) throw RangeError("momentum must lie in [0,1]");
  if (c.batch_size < 1 || c.steps < 0 || c.queue_size < 0 || c.log_interval < 1)
    throw ConfigError("batch_size and log_interval must be positive; steps and queue_size nonnegative");
  if (c.batch_size < 2 && c.queue_size == 0) throw ConfigError("batch_size must be at least 2 without a queue");
  const auto& o = c.optimizer;
  if (!(o.learning_rate >= 0.0) || !(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0) ||
      !(o.weight_decay >= 0.0) || !(o.epsilon > 0.0))
    throw RangeError("optimizer settings out of range");
}

double info_nce(const Eigen::VectorXd& query, const Eigen::MatrixXd& keys, int positive, double temperature,
                Eigen::VectorXd* d_query) {
  if (!(temperature > 0.0)) throw RangeError(fmt::format("temperature {} must be positive", temperature));
  if (keys.rows() < 1 || positive < 0 || positive >= keys.rows())
    throw RangeError(fmt::format("positive index {} outside {} keys", positive, keys.rows()));
  if (keys.cols() != query.size()) throw ShapeError("query and key dimensions differ");
  if (!query.allFinite() || !keys.allFinite()) throw RangeError("info_nce inputs must be finite");
  const Eigen::VectorXd logits = keys * query / temperature;
  Eigen::Index top = 0;
  const double shift = logits.maxCoeff(&top);
  const Eigen::VectorXd e = (logits.array() - shift).exp();
  const double z = e.sum();
  // log1p over the non-max mass keeps wide margins accurate
  double rest = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    if (i != top) rest += e(i);
  const double loss = std::log1p(rest) - (logits(positive) - shift);
  if (d_query) {
    const Eigen::VectorXd prob = e / z;
    *d_query = (keys.transpose() * prob - keys.row(positive).transpose()) / temperature;
  }
  return std::max(loss, 0.0);
}

void ema_update(EncoderState& state, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw RangeError(fmt::format("EMA momentum {} outside [0,1]", m));
  auto online = nn::parameter_list(std::as_const(state.online.branch), "");
  auto momentum = nn::parameter_list(state.momentum, "");
  if (online.size() != momentum.size()) throw ShapeError("online and momentum branches differ in structure");
  for (std::size_t i = 0; i < online.size(); ++i) {
    const nn::Mat& src = *online[i].second;
    nn::Mat& dst = *momentum[i].second;
    if (src.rows() != dst.rows() || src.cols() != dst.cols())
      throw ShapeError(fmt::format("EMA shape mismatch at {}", online[i].first));
    dst = m * dst + (1.0 - m) * src;
  }
}

AdamState init_adam(const EncoderState& state) {
  return {nn::zeros_like(state.online), nn::zeros_like(state.online), 0};
}

void adam_update(const std::vector<nn::Mat*>& params, const std::vector<const nn::Mat*>& grads,
                 const std::vector<nn::Mat*>& m, const std::vector<nn::Mat*>& v, std::int64_t t,
                 const OptimizerConfig& c) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw ShapeError("optimizer lists differ in length");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Mat& pm = *m[i];
    nn::Mat& pv = *v[i];
    const nn::Mat& g = *grads[i];
    pm = c.beta1 * pm + (1.0 - c.beta1) * g;
    pv = c.beta2 * pv + (1.0 - c.beta2) * g.cwiseProduct(g);
    const nn::Mat update = (pm / bc1).array() / ((pv / bc2).array().sqrt() + c.epsilon) + c.weight_decay * params[i]->array();
    *params[i] -= c.learning_rate * update;
  }
}

void adam_step(nn::OnlineNet& params, const nn::OnlineNet& grads, AdamState& adam, const OptimizerConfig& c) {
  ++adam.t;
  adam_update(matrices(params), matrices(grads), matrices(adam.m), matrices(adam.v), adam.t, c);
}

PretrainState init_pretrain(const EncoderConfig& config, int num_images) {
  PretrainState s;
  s.encoder = init_state(config);
  s.adam = init_adam(s.encoder);
  s.queue.resize(0, config.embed_dim);
  s.matching.assign(num_images, init_matching(config.token_len));
  return s;
}

std::vector<int> batch_indices(int num_images, int batch_size, std::uint64_t seed, long long step) {
  if (num_images <= 0) throw RangeError("no images to batch");
  const int b = std::min(batch_size, num_images);
  std::vector<int> out;
  out.reserve(b);
  long long pos = step * b;
  while (static_cast<int>(out.size()) < b) {
    const long long epoch = pos / num_images;
    std::vector<int> perm(num_images);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, epoch));
    std::shuffle(perm.begin(), perm.end(), rng);
    for (long long i = pos % num_images; i < num_images && static_cast<int>(out.size()) < b; ++i, ++pos)
      out.push_back(perm[i]);
  }
  return out;
}

double pretrain_step(const std::vector<Image>& images, const std::vector<int>& batch, PretrainState& state,
                     const PretrainSetup& setup) {
  const ContrastConfig& cc = setup.contrast;
  validate(cc);
  const int n = static_cast<int>(batch.size());
  if (n < 2 && state.queue.rows() == 0) throw ConfigError("a batch of one has no negatives without a queue");
  const long long step = state.encoder.step;
  const int dim = state.encoder.config.embed_dim;

  AugmentPolicy policy = setup.augment;
  policy.seed = sub_seed(cc.seed, "augment");

  std::vector<nn::OnlineCache> caches(n);
  Eigen::MatrixXd queries(n, dim);
  Eigen::MatrixXd keys(n + state.queue.rows(), dim);
  for (int b = 0; b < n; ++b) {
    const int idx = batch[b];
    const Image* partner = &images[batch[(b + 1) % n]];
    const Image v1 = augment(images[idx], policy, derive_seed(step, idx, 1), partner);
    const Image v2 = augment(images[idx], policy, derive_seed(step, idx, 2), partner);
    const Eigen::VectorXd scale = weight_scale(state.matching[idx].weights);
    queries.row(b) = nn::online_embedding(state.encoder.online, patchify(v1, setup.patch_size).patches, &scale,
                                          &caches[b]);
    keys.row(b) = nn::momentum_embedding(state.encoder.momentum, patchify(v2, setup.patch_size).patches, nullptr);
  }
  if (state.queue.rows() > 0) keys.bottomRows(state.queue.rows()) = state.queue;

  ForwardRecord record;
  record.caches = std::move(caches);
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    Eigen::VectorXd dq;
    loss += info_nce(queries.row(b).transpose(), keys, b, cc.temperature, &dq);
    record.d_embeddings.push_back(dq.transpose() / static_cast<double>(n));
  }
  loss /= n;

  GradientSet grads = gradients(record, state.encoder);
  for (int b = 0; b < n; ++b)
    accumulate_saliency(state.matching[batch[b]], patch_saliency({grads.input_gradients[b]}));

  adam_step(state.encoder.online, grads.online, state.adam, cc.optimizer);
  ema_update(state.encoder, cc.momentum);

  if (cc.queue_size > 0) {
    Eigen::MatrixXd q(state.queue.rows() + n, dim);
    q << state.queue, keys.topRows(n);
    const Eigen::Index keep = std::min<Eigen::Index>(q.rows(), cc.queue_size);
    state.queue = q.bottomRows(keep);
  }
  ++state.encoder.step;
  return loss;
}

void pretrain(const std::vector<Image>& images, PretrainState& state, const PretrainSetup& setup, long long stop_at,
              const StepCallback& on_step) {
  const ContrastConfig& cc = setup.contrast;
  validate(cc);
  validate(setup.matching);
  if (state.matching.size() != images.size())
    throw ShapeError(fmt::format("state tracks {} images, {} supplied", state.matching.size(), images.size()));
  const long long total = stop_at >= 0 ? std::min<long long>(stop_at, cc.steps) : cc.steps;
  const std::uint64_t batch_seed = sub_seed(cc.seed, "batches");

  auto flush = [&](long long step) {
    double active = 0.0;
    for (const auto& m : state.matching) active += m.weights.active_count();
    state.metrics.push_back({step, state.interval_loss / state.interval_steps,
                             active / static_cast<double>(state.matching.size()),
                             cc.record_wall_time ? state.interval_wall_ms : 0.0});
    state.interval_loss = 0.0;
    state.interval_steps = 0;
    state.interval_wall_ms = 0.0;
  };

  while (state.encoder.step < total) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = batch_indices(static_cast<int>(images.size()), cc.batch_size, batch_seed, state.encoder.step);
    const double loss = pretrain_step(images, batch, state, setup);
    const long long step = state.encoder.step;
    if (is_matching_iteration(step, setup.matching))
      for (auto& m : state.matching) matching_round_from_accumulated(m, setup.matching);
    if (cc.record_wall_time)
      state.interval_wall_ms +=
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    state.interval_loss += loss;
    ++state.interval_steps;
    if (step % cc.log_interval == 0 || step == cc.steps) flush(step);
    if (on_step) on_step(step, loss);
  }
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "step,loss,mean_active_patches,wall_ms\n";
  for (const auto& r : rows) out += fmt::format("{},{:.10f},{:.4f},{:.3f}\n", r.step, r.loss, r.mean_active_patches, r.wall_ms);
  return out;
}

void store_encoder(const EncoderState& state, Checkpoint& out) {
  out.text["encoder.config"] = to_text(state.config);
  out.arrays["encoder.step"] = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(state.step));
  nn::visit(state.online, "online", [&](const std::string& name, const nn::Mat& m) { out.arrays[name] = m; });
  nn::visit(state.momentum, "momentum", [&](const std::string& name, const nn::Mat& m) { out.arrays[name] = m; });
}

namespace {

template <typename T>
void restore(T& net, const std::string& prefix, const Checkpoint& c) {
  nn::visit(net, prefix, [&](const std::string& name, nn::Mat& m) {
    const auto& src = c.array(name);
    if (src.rows() != m.rows() || src.cols() != m.cols())
      throw ShapeError(fmt::format("checkpoint array {} is {}x{}, expected {}x{}", name, src.rows(), src.cols(),
                                   m.rows(), m.cols()));
    m = src;
  });
}

}  // namespace

EncoderState load_encoder(const Checkpoint& c) {
  EncoderState s = init_state(encoder_config_from_text(c.text_entry("encoder.config")));
  restore(s.online, "online", c);
  restore(s.momentum, "momentum", c);
  s.step = static_cast<std::int64_t>(c.array("encoder.step")(0, 0));
  return s;
}

Checkpoint to_checkpoint(const PretrainState& s) {
  Checkpoint c;
  store_encoder(s.encoder, c);
  nn::visit(s.adam.m, "adam.m", [&](const std::string& name, const nn::Mat& m) { c.arrays[name] = m; });
  nn::visit(s.adam.v, "adam.v", [&](const std::string& name, const nn::Mat& m) { c.arrays[name] = m; });
  c.arrays["adam.t"] = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(s.adam.t));
  c.arrays["queue"] = s.queue;

  const auto images = static_cast<Eigen::Index>(s.matching.size());
  const Eigen::Index m = images > 0 ? static_cast<Eigen::Index>(s.matching.front().weights.w.size()) : 0;
  Eigen::MatrixXd w(images, m), active(images, m), previous(images, m), sal(images, m), info(images, 4);
  for (Eigen::Index i = 0; i < images; ++i) {
    const auto& ms = s.matching[i];
    for (Eigen::Index j = 0; j < m; ++j) {
      w(i, j) = ms.weights.w[j];
      active(i, j) = ms.weights.active[j] ? 1.0 : 0.0;
      previous(i, j) = ms.previous[j];
      sal(i, j) = ms.saliency_sum[j];
    }
    info(i, 0) = ms.saliency_samples;
    info(i, 1) = ms.rounds;
    info(i, 2) = ms.streak;
    info(i, 3) = ms.halted ? 1.0 : 0.0;
  }
  c.arrays["matching.weights"] = w;
  c.arrays["matching.active"] = active;
  c.arrays["matching.previous"] = previous;
  c.arrays["matching.saliency_sum"] = sal;
  c.arrays["matching.info"] = info;

  c.arrays["metrics.interval"] =
      (Eigen::MatrixXd(1, 3) << s.interval_loss, s.interval_steps, s.interval_wall_ms).finished();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(s.metrics.size()), 4);
  for (std::size_t i = 0; i < s.metrics.size(); ++i) {
    const auto& r = s.metrics[i];
    rows.row(static_cast<Eigen::Index>(i)) << static_cast<double>(r.step), r.loss, r.mean_active_patches, r.wall_ms;
  }
  c.arrays["metrics.rows"] = rows;
  return c;
}

PretrainState pretrain_state_from_checkpoint(const Checkpoint& c) {
  PretrainState s;
  s.encoder = load_encoder(c);
  s.adam = init_adam(s.encoder);
  restore(s.adam.m, "adam.m", c);
  restore(s.adam.v, "adam.v", c);
  s.adam.t = static_cast<std::int64_t>(c.array("adam.t")(0, 0));
  s.queue = c.array("queue");

  const auto& w = c.array("matching.weights");
  const auto& active = c.array("matching.active");
  const auto& previous = c.array("matching.previous");
  const auto& sal = c.array("matching.saliency_sum");
  const auto& info = c.array("matching.info");
  s.matching.resize(static_cast<std::size_t>(w.rows()));
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    auto& ms = s.matching[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      ms.weights.w.push_back(w(i, j));
      ms.weights.active.push_back(active(i, j) != 0.0);
      ms.previous.push_back(previous(i, j));
      ms.saliency_sum.push_back(sal(i, j));
    }
    ms.saliency_samples = static_cast<int>(info(i, 0));
    ms.rounds = static_cast<int>(info(i, 1));
    ms.streak = static_cast<int>(info(i, 2));
    ms.halted = info(i, 3) != 0.0;
  }

  const auto& interval = c.array("metrics.interval");
  s.interval_loss = interval(0, 0);
  s.interval_steps = static_cast<int>(interval(0, 1));
  s.interval_wall_ms = interval(0, 2);
  const auto& rows = c.array("metrics.rows");
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    s.metrics.push_back({static_cast<long long>(rows(i, 0)), rows(i, 1), rows(i, 2), rows(i, 3)});
  return s;
}

}  // namespace inkauth
