#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "inkauth/seeding.hpp"

namespace inkauth::nn {

// Every parameter is a dense matrix; biases and norm affines are 1 x n rows.
using Mat = Eigen::MatrixXd;

Mat random_normal(int rows, int cols, double stddev, Rng& rng);

/// y = x W + b, rows of x are independent samples/tokens.
struct Linear {
  Mat weight;  // in x out
  Mat bias;    // 1 x out

  static Linear init(int in, int out, Rng& rng);
  static Linear zeros(int in, int out);

  Mat forward(const Mat& x) const;
  /// Accumulates dW, db into `grad`; returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy, Linear& grad) const;
};

/// Feature-wise standardization per row with learned scale/shift.
struct LayerNorm {
  Mat gamma;  // 1 x n
  Mat beta;   // 1 x n

  struct Cache {
    Mat normalized;
    Eigen::VectorXd inv_std;
  };

  static constexpr double kEps = 1e-5;
  static LayerNorm init(int n);
  static LayerNorm zeros(int n);

  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, LayerNorm& grad) const;
};

Mat gelu(const Mat& x);
Mat gelu_backward(const Mat& x, const Mat& dy);

struct Attention {
  Linear qkv;  // D x 3D
  Linear out;  // D x D
  int heads = 1;

  struct Cache {
    Mat input;
    Mat qkv;
    std::vector<Mat> probs;  // one L x L softmax per head
    Mat concat;
  };

  static Attention init(int dim, int heads, Rng& rng);
  static Attention zeros(int dim, int heads);

  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, Attention& grad) const;
};

/// Pre-norm transformer block: x + attn(ln1 x), then + mlp(ln2 .).
struct TransformerBlock {
  LayerNorm ln1;
  Attention attn;
  LayerNorm ln2;
  Linear fc1;
  Linear fc2;

  struct Cache {
    LayerNorm::Cache ln1, ln2;
    Attention::Cache attn;
    Mat h1, x1, h2, pre_act, act;
  };

  static TransformerBlock init(int dim, int heads, int hidden, Rng& rng);
  static TransformerBlock zeros(int dim, int heads, int hidden);

  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Mat& dy, const Cache& cache, TransformerBlock& grad) const;
};

// Parameter visitors. `f(name, matrix)` sees every learnable matrix in a fixed order;
// the order defines checkpoint layout and optimizer pairing.
template <typename L, typename F>
  requires std::same_as<std::remove_const_t<L>, Linear>
void visit(L& l, const std::string& prefix, F&& f) {
  f(prefix + ".weight", l.weight);
  f(prefix + ".bias", l.bias);
}

template <typename L, typename F>
  requires std::same_as<std::remove_const_t<L>, LayerNorm>
void visit(L& l, const std::string& prefix, F&& f) {
  f(prefix + ".gamma", l.gamma);
  f(prefix + ".beta", l.beta);
}

template <typename L, typename F>
  requires std::same_as<std::remove_const_t<L>, Attention>
void visit(L& a, const std::string& prefix, F&& f) {
  visit(a.qkv, prefix + ".qkv", f);
  visit(a.out, prefix + ".out", f);
}

template <typename L, typename F>
  requires std::same_as<std::remove_const_t<L>, TransformerBlock>
void visit(L& b, const std::string& prefix, F&& f) {
  visit(b.ln1, prefix + ".ln1", f);
  visit(b.attn, prefix + ".attn", f);
  visit(b.ln2, prefix + ".ln2", f);
  visit(b.fc1, prefix + ".fc1", f);
  visit(b.fc2, prefix + ".fc2", f);
}

}  // namespace inkauth::nn
