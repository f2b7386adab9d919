#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "inkauth/layers.hpp"
#include "inkauth/patches.hpp"

namespace inkauth {

struct WeightVector;

struct EncoderConfig {
  int embed_dim = 64;
  int depth = 2;
  int heads = 4;
  int token_len = 64;   // L = M
  int patch_dim = 256;  // P*P*C
  double mlp_ratio = 2.0;
  int projection_layers = 3;
  int prediction_layers = 2;
  std::uint64_t seed = 0;

  int mlp_hidden() const;
};

void validate(const EncoderConfig& config);

/// `key=value` lines; the inverse of encoder_config_from_text.
std::string to_text(const EncoderConfig& config);
EncoderConfig encoder_config_from_text(const std::string& text);

enum class BranchKind { Online, Momentum };

namespace nn {

/// F_theta: linear patch embedding + learned positions + pre-norm blocks + final norm.
struct Encoder {
  Linear embed;
  Mat pos;  // L x D
  std::vector<TransformerBlock> blocks;
  LayerNorm final_norm;

  struct Cache {
    Mat scaled_input;
    std::vector<TransformerBlock::Cache> blocks;
    LayerNorm::Cache final_norm;
  };

  /// `scale` multiplies patch rows before embedding; nullptr means unscaled.
  Mat forward(const Mat& patches, const Eigen::VectorXd* scale, Cache* cache) const;
  /// Accumulates parameter gradients; returns dL/d(scaled patch input).
  Mat backward(const Mat& d_tokens, const Cache& cache, Encoder& grad) const;
};

/// Stack of [Linear -> LayerNorm -> GELU] layers; the last layer skips GELU.
struct MlpHead {
  std::vector<Linear> fc;
  std::vector<LayerNorm> norm;

  struct Cache {
    std::vector<Mat> inputs;
    std::vector<LayerNorm::Cache> norm;
    std::vector<Mat> normed;
  };

  Mat forward(const Mat& x, Cache* cache) const;
  Mat backward(const Mat& dy, const Cache& cache, MlpHead& grad) const;
};

/// Encoder plus patch head (mean pool + linear) and projection head. The momentum
/// branch is exactly one of these.
struct Branch {
  Encoder encoder;
  Linear patch_head;
  MlpHead projection;
};

struct OnlineNet {
  Branch branch;
  MlpHead prediction;
};

template <typename E, typename F>
  requires std::same_as<std::remove_const_t<E>, Encoder>
void visit(E& e, const std::string& prefix, F&& f) {
  visit(e.embed, prefix + ".embed", f);
  f(prefix + ".pos", e.pos);
  for (std::size_t i = 0; i < e.blocks.size(); ++i) visit(e.blocks[i], prefix + ".block" + std::to_string(i), f);
  visit(e.final_norm, prefix + ".final_norm", f);
}

template <typename H, typename F>
  requires std::same_as<std::remove_const_t<H>, MlpHead>
void visit(H& h, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < h.fc.size(); ++i) {
    visit(h.fc[i], prefix + ".fc" + std::to_string(i), f);
    visit(h.norm[i], prefix + ".norm" + std::to_string(i), f);
  }
}

template <typename B, typename F>
  requires std::same_as<std::remove_const_t<B>, Branch>
void visit(B& b, const std::string& prefix, F&& f) {
  visit(b.encoder, prefix + ".encoder", f);
  visit(b.patch_head, prefix + ".patch_head", f);
  visit(b.projection, prefix + ".projection", f);
}

template <typename O, typename F>
  requires std::same_as<std::remove_const_t<O>, OnlineNet>
void visit(O& o, const std::string& prefix, F&& f) {
  visit(o.branch, prefix, f);
  visit(o.prediction, prefix + ".prediction", f);
}

/// Flat (name, matrix*) list in visit order.
template <typename T>
auto parameter_list(T& net, const std::string& prefix) {
  using Ptr = std::conditional_t<std::is_const_v<T>, const Mat*, Mat*>;
  std::vector<std::pair<std::string, Ptr>> out;
  visit(net, prefix, [&](const std::string& name, auto& m) { out.emplace_back(name, &m); });
  return out;
}

template <typename T>
std::size_t parameter_count(const T& net) {
  std::size_t n = 0;
  visit(net, "", [&](const std::string&, const Mat& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

/// Same structure as `net`, all entries zero.
template <typename T>
T zeros_like(const T& net) {
  T out = net;
  visit(out, "", [](const std::string&, Mat& m) { m.setZero(); });
  return out;
}

/// Per-sample activations of one online forward pass through every head.
struct OnlineCache {
  Encoder::Cache encoder;
  Mat tokens;
  Mat pooled;
  Mat patch_out;
  MlpHead::Cache projection;
  MlpHead::Cache prediction;
  Mat raw;    // prediction output before L2 normalization (1 x D)
  Mat embedding;  // unit-norm output (1 x D)
};

Mat l2_normalize_row(const Mat& v);
/// Gradient of v / |v| given the upstream gradient `dy` and normalized output `y`.
Mat l2_normalize_backward(const Mat& raw, const Mat& y, const Mat& dy);

Mat online_embedding(const OnlineNet& net, const Mat& patches, const Eigen::VectorXd* scale, OnlineCache* cache);
/// Backprop of an upstream dL/d(embedding); returns dL/d(scaled patch input).
Mat online_backward(const OnlineNet& net, const OnlineCache& cache, const Mat& d_embedding, OnlineNet& grad);
Mat momentum_embedding(const Branch& branch, const Mat& patches, const Eigen::VectorXd* scale);

}  // namespace nn

struct EncoderState {
  EncoderConfig config;
  nn::OnlineNet online;
  nn::Branch momentum;
  std::int64_t step = 0;
};

EncoderState init_state(const EncoderConfig& config);

/// Tokens plus the branch that produced them.
struct TokenSet {
  Eigen::MatrixXd tokens;  // L x D
  BranchKind branch = BranchKind::Online;
};

/// Per-patch input scale w_i * M, or nullopt-equivalent empty vector when absent.
Eigen::VectorXd weight_scale(const WeightVector& weights);

TokenSet encode(const PatchSequence& seq, const WeightVector* weights, BranchKind branch, const EncoderState& state);

/// Online: P^pre(P^pro(P^pat(Z))); momentum: K^pro(K^pat(Z)). Unit L2 norm.
Eigen::VectorXd head_forward(const TokenSet& tokens, BranchKind branch, const EncoderState& state);

/// Recorded computation of a loss over a batch: per-sample caches and the upstream
/// gradient of the loss w.r.t. each online embedding.
struct ForwardRecord {
  std::vector<nn::OnlineCache> caches;
  std::vector<nn::Mat> d_embeddings;
};

struct GradientSet {
  nn::OnlineNet online;
  nn::Branch momentum;                     // always zero: stop-gradient branch
  std::vector<nn::Mat> input_gradients;    // per sample, dL/d(weighted patch input)
};

GradientSet gradients(const ForwardRecord& record, const EncoderState& state);

}  // namespace inkauth
