#include "inkauth/encoder.hpp"

#include <cmath>
#include <fmt/format.h>
#include <sstream>

#include "inkauth/errors.hpp"
#include "inkauth/matching.hpp"

namespace inkauth {

int EncoderConfig::mlp_hidden() const {
  return std::max(1, static_cast<int>(std::lround(mlp_ratio * embed_dim)));
}

void validate(const EncoderConfig& c) {
  if (c.embed_dim <= 0 || c.depth < 0 || c.heads <= 0 || c.token_len <= 0 || c.patch_dim <= 0)
    throw ConfigError("encoder dimensions must be positive");
  if (c.embed_dim % c.heads != 0)
    throw ConfigError(fmt::format("embed_dim {} is not divisible by heads {}", c.embed_dim, c.heads));
  if (!(c.mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  if (c.projection_layers < 1 || c.prediction_layers < 1) throw ConfigError("heads need at least one layer");
}

std::string to_text(const EncoderConfig& c) {
  return fmt::format(
      "embed_dim={}\ndepth={}\nheads={}\ntoken_len={}\npatch_dim={}\nmlp_ratio={}\nprojection_layers={}\n"
      "prediction_layers={}\nseed={}\n",
      c.embed_dim, c.depth, c.heads, c.token_len, c.patch_dim, c.mlp_ratio, c.projection_layers,
      c.prediction_layers, c.seed);
}

EncoderConfig encoder_config_from_text(const std::string& text) {
  EncoderConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("malformed encoder config line '{}'", line));
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "embed_dim") c.embed_dim = std::stoi(value);
    else if (key == "depth") c.depth = std::stoi(value);
    else if (key == "heads") c.heads = std::stoi(value);
    else if (key == "token_len") c.token_len = std::stoi(value);
    else if (key == "patch_dim") c.patch_dim = std::stoi(value);
    else if (key == "mlp_ratio") c.mlp_ratio = std::stod(value);
    else if (key == "projection_layers") c.projection_layers = std::stoi(value);
    else if (key == "prediction_layers") c.prediction_layers = std::stoi(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else throw ConfigError(fmt::format("unknown encoder config key '{}'", key));
  }
  validate(c);
  return c;
}

namespace nn {

Mat Encoder::forward(const Mat& patches, const Eigen::VectorXd* scale, Cache* cache) const {
  Mat scaled = scale ? Mat(patches.array().colwise() * scale->array()) : patches;
  Mat x = embed.forward(scaled) + pos;
  if (cache) cache->blocks.resize(blocks.size());
  TransformerBlock::Cache scratch;
  for (std::size_t b = 0; b < blocks.size(); ++b) x = blocks[b].forward(x, cache ? cache->blocks[b] : scratch);
  LayerNorm::Cache ln_scratch;
  Mat out = final_norm.forward(x, cache ? cache->final_norm : ln_scratch);
  if (cache) cache->scaled_input = std::move(scaled);
  return out;
}

Mat Encoder::backward(const Mat& d_tokens, const Cache& cache, Encoder& grad) const {
  Mat dx = final_norm.backward(d_tokens, cache.final_norm, grad.final_norm);
  for (std::size_t b = blocks.size(); b-- > 0;) dx = blocks[b].backward(dx, cache.blocks[b], grad.blocks[b]);
  grad.pos += dx;
  return embed.backward(cache.scaled_input, dx, grad.embed);
}

Mat MlpHead::forward(const Mat& x, Cache* cache) const {
  if (cache) {
    cache->inputs.resize(fc.size());
    cache->norm.resize(fc.size());
    cache->normed.resize(fc.size());
  }
  Mat h = x;
  LayerNorm::Cache scratch;
  for (std::size_t i = 0; i < fc.size(); ++i) {
    if (cache) cache->inputs[i] = h;
    Mat n = norm[i].forward(fc[i].forward(h), cache ? cache->norm[i] : scratch);
    const bool last = i + 1 == fc.size();
    h = last ? n : gelu(n);
    if (cache) cache->normed[i] = std::move(n);
  }
  return h;
}

Mat MlpHead::backward(const Mat& dy, const Cache& cache, MlpHead& grad) const {
  Mat d = dy;
  for (std::size_t i = fc.size(); i-- > 0;) {
    if (i + 1 != fc.size()) d = gelu_backward(cache.normed[i], d);
    d = norm[i].backward(d, cache.norm[i], grad.norm[i]);
    d = fc[i].backward(cache.inputs[i], d, grad.fc[i]);
  }
  return d;
}

Mat l2_normalize_row(const Mat& v) {
  const double n = v.norm();
  return n > 0.0 ? Mat(v / n) : v;
}

Mat l2_normalize_backward(const Mat& raw, const Mat& y, const Mat& dy) {
  const double n = raw.norm();
  if (n == 0.0) return Mat::Zero(raw.rows(), raw.cols());
  return (dy - y * (y.cwiseProduct(dy).sum())) / n;
}

Mat online_embedding(const OnlineNet& net, const Mat& patches, const Eigen::VectorXd* scale, OnlineCache* cache) {
  OnlineCache local;
  OnlineCache& c = cache ? *cache : local;
  c.tokens = net.branch.encoder.forward(patches, scale, &c.encoder);
  c.pooled = c.tokens.colwise().mean();
  c.patch_out = net.branch.patch_head.forward(c.pooled);
  const Mat proj = net.branch.projection.forward(c.patch_out, &c.projection);
  c.raw = net.prediction.forward(proj, &c.prediction);
  c.embedding = l2_normalize_row(c.raw);
  return c.embedding;
}

Mat online_backward(const OnlineNet& net, const OnlineCache& c, const Mat& d_embedding, OnlineNet& grad) {
  Mat d = l2_normalize_backward(c.raw, c.embedding, d_embedding);
  d = net.prediction.backward(d, c.prediction, grad.prediction);
  d = net.branch.projection.backward(d, c.projection, grad.branch.projection);
  d = net.branch.patch_head.backward(c.pooled, d, grad.branch.patch_head);
  const Mat d_tokens = d.replicate(c.tokens.rows(), 1) / static_cast<double>(c.tokens.rows());
  return net.branch.encoder.backward(d_tokens, c.encoder, grad.branch.encoder);
}

Mat momentum_embedding(const Branch& branch, const Mat& patches, const Eigen::VectorXd* scale) {
  const Mat tokens = branch.encoder.forward(patches, scale, nullptr);
  const Mat pooled = tokens.colwise().mean();
  return l2_normalize_row(branch.projection.forward(branch.patch_head.forward(pooled), nullptr));
}

namespace {

MlpHead init_head(int dim, int layers, Rng& rng) {
  MlpHead h;
  for (int i = 0; i < layers; ++i) {
    h.fc.push_back(Linear::init(dim, dim, rng));
    h.norm.push_back(LayerNorm::init(dim));
  }
  return h;
}

}  // namespace

}  // namespace nn

EncoderState init_state(const EncoderConfig& config) {
  validate(config);
  Rng rng(sub_seed(config.seed, "encoder-init"));
  const int d = config.embed_dim;
  EncoderState s;
  s.config = config;
  nn::Encoder& e = s.online.branch.encoder;
  e.embed = nn::Linear::init(config.patch_dim, d, rng);
  e.pos = nn::random_normal(config.token_len, d, 0.02, rng);
  for (int b = 0; b < config.depth; ++b)
    e.blocks.push_back(nn::TransformerBlock::init(d, config.heads, config.mlp_hidden(), rng));
  e.final_norm = nn::LayerNorm::init(d);
  s.online.branch.patch_head = nn::Linear::init(d, d, rng);
  s.online.branch.projection = nn::init_head(d, config.projection_layers, rng);
  s.online.prediction = nn::init_head(d, config.prediction_layers, rng);
  s.momentum = s.online.branch;
  return s;
}

Eigen::VectorXd weight_scale(const WeightVector& weights) {
  const auto m = static_cast<double>(weights.w.size());
  Eigen::VectorXd s(weights.w.size());
  for (std::size_t i = 0; i < weights.w.size(); ++i) s(static_cast<Eigen::Index>(i)) = weights.w[i] * m;
  return s;
}

namespace {

void check_sequence(const PatchSequence& seq, const WeightVector* weights, const EncoderConfig& c) {
  if (seq.count() != c.token_len || seq.patch_dim() != c.patch_dim)
    throw ShapeError(fmt::format("patch sequence {}x{} does not match encoder {}x{}", seq.count(), seq.patch_dim(),
                                 c.token_len, c.patch_dim));
  if (weights && static_cast<int>(weights->w.size()) != seq.count())
    throw ShapeError(fmt::format("weight vector has {} entries, sequence has {} patches", weights->w.size(),
                                 seq.count()));
}

}  // namespace

TokenSet encode(const PatchSequence& seq, const WeightVector* weights, BranchKind branch, const EncoderState& state) {
  check_sequence(seq, weights, state.config);
  Eigen::VectorXd scale;
  if (weights) scale = weight_scale(*weights);
  const nn::Encoder& enc =
      branch == BranchKind::Online ? state.online.branch.encoder : state.momentum.encoder;
  return {enc.forward(seq.patches, weights ? &scale : nullptr, nullptr), branch};
}

Eigen::VectorXd head_forward(const TokenSet& tokens, BranchKind branch, const EncoderState& state) {
  if (tokens.branch != branch) throw StateError("tokens were produced by the other branch");
  if (tokens.tokens.cols() != state.config.embed_dim) throw ShapeError("token width does not match embed_dim");
  const nn::Mat pooled = tokens.tokens.colwise().mean();
  nn::Mat out;
  if (branch == BranchKind::Online) {
    const auto& b = state.online.branch;
    out = state.online.prediction.forward(b.projection.forward(b.patch_head.forward(pooled), nullptr), nullptr);
  } else {
    const auto& b = state.momentum;
    out = b.projection.forward(b.patch_head.forward(pooled), nullptr);
  }
  return nn::l2_normalize_row(out).transpose();
}

GradientSet gradients(const ForwardRecord& record, const EncoderState& state) {
  if (record.caches.empty() || record.caches.size() != record.d_embeddings.size())
    throw StateError("gradients requested without a recorded forward pass");
  GradientSet g{nn::zeros_like(state.online), nn::zeros_like(state.momentum), {}};
  g.input_gradients.reserve(record.caches.size());
  for (std::size_t i = 0; i < record.caches.size(); ++i)
    g.input_gradients.push_back(nn::online_backward(state.online, record.caches[i], record.d_embeddings[i], g.online));
  return g;
}

}  // namespace inkauth
