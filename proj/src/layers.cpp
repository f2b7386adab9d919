#include "inkauth/layers.hpp"

#include <cmath>
#include <numbers>

namespace inkauth::nn {

Mat random_normal(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  return m;
}

Linear Linear::init(int in, int out, Rng& rng) {
  return {random_normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), Mat::Zero(1, out)};
}

Linear Linear::zeros(int in, int out) { return {Mat::Zero(in, out), Mat::Zero(1, out)}; }

Mat Linear::forward(const Mat& x) const {
  Mat y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy, Linear& grad) const {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  return dy * weight.transpose();
}

LayerNorm LayerNorm::init(int n) { return {Mat::Ones(1, n), Mat::Zero(1, n)}; }

LayerNorm LayerNorm::zeros(int n) { return {Mat::Zero(1, n), Mat::Zero(1, n)}; }

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
  const Eigen::Index n = x.cols();
  cache.normalized.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kEps);
    cache.inv_std(r) = inv;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
  }
  Mat y = cache.normalized.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  return y;
}

Mat LayerNorm::backward(const Mat& dy, const Cache& cache, LayerNorm& grad) const {
  grad.gamma += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  grad.beta += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma.row(0).array();
  const double n = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double sum = dxhat.row(r).sum();
    const double dot = dxhat.row(r).dot(cache.normalized.row(r));
    dx.row(r) = (cache.inv_std(r) / n) *
                (n * dxhat.row(r).array() - sum - cache.normalized.row(r).array() * dot).matrix();
  }
  return dx;
}

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Mat gelu_backward(const Mat& x, const Mat& dy) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const Mat d = x.unaryExpr([&](double v) {
    return 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  });
  return d.cwiseProduct(dy);
}

Attention Attention::init(int dim, int heads, Rng& rng) {
  Attention a;
  a.qkv = Linear::init(dim, 3 * dim, rng);
  a.out = Linear::init(dim, dim, rng);
  a.heads = heads;
  return a;
}

Attention Attention::zeros(int dim, int heads) {
  return {Linear::zeros(dim, 3 * dim), Linear::zeros(dim, dim), heads};
}

Mat Attention::forward(const Mat& x, Cache& cache) const {
  const Eigen::Index dim = x.cols();
  const Eigen::Index dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.input = x;
  cache.qkv = qkv.forward(x);
  cache.probs.resize(heads);
  cache.concat.resize(x.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * dh, dh);
    const auto k = cache.qkv.middleCols(dim + h * dh, dh);
    const auto v = cache.qkv.middleCols(2 * dim + h * dh, dh);
    Mat s = (q * k.transpose()) * scale;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp();
      s.row(r) /= s.row(r).sum();
    }
    cache.concat.middleCols(h * dh, dh).noalias() = s * v;
    cache.probs[h] = std::move(s);
  }
  return out.forward(cache.concat);
}

Mat Attention::backward(const Mat& dy, const Cache& cache, Attention& grad) const {
  const Eigen::Index dim = cache.input.cols();
  const Eigen::Index dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mat dconcat = out.backward(cache.concat, dy, grad.out);
  Mat dqkv(cache.qkv.rows(), cache.qkv.cols());
  for (int h = 0; h < heads; ++h) {
    const auto q = cache.qkv.middleCols(h * dh, dh);
    const auto k = cache.qkv.middleCols(dim + h * dh, dh);
    const auto v = cache.qkv.middleCols(2 * dim + h * dh, dh);
    const Mat& p = cache.probs[h];
    const auto dout = dconcat.middleCols(h * dh, dh);
    const Mat dp = dout * v.transpose();
    dqkv.middleCols(2 * dim + h * dh, dh).noalias() = p.transpose() * dout;
    Mat ds = p.cwiseProduct(dp);
    const Eigen::VectorXd row_dot = ds.rowwise().sum();
    ds -= p.cwiseProduct(row_dot.replicate(1, p.cols()));
    ds *= scale;
    dqkv.middleCols(h * dh, dh).noalias() = ds * k;
    dqkv.middleCols(dim + h * dh, dh).noalias() = ds.transpose() * q;
  }
  return qkv.backward(cache.input, dqkv, grad.qkv);
}

TransformerBlock TransformerBlock::init(int dim, int heads, int hidden, Rng& rng) {
  TransformerBlock b;
  b.ln1 = LayerNorm::init(dim);
  b.attn = Attention::init(dim, heads, rng);
  b.ln2 = LayerNorm::init(dim);
  b.fc1 = Linear::init(dim, hidden, rng);
  b.fc2 = Linear::init(hidden, dim, rng);
  return b;
}

TransformerBlock TransformerBlock::zeros(int dim, int heads, int hidden) {
  return {LayerNorm::zeros(dim), Attention::zeros(dim, heads), LayerNorm::zeros(dim), Linear::zeros(dim, hidden),
          Linear::zeros(hidden, dim)};
}

Mat TransformerBlock::forward(const Mat& x, Cache& c) const {
  c.h1 = ln1.forward(x, c.ln1);
  c.x1 = x + attn.forward(c.h1, c.attn);
  c.h2 = ln2.forward(c.x1, c.ln2);
  c.pre_act = fc1.forward(c.h2);
  c.act = gelu(c.pre_act);
  return c.x1 + fc2.forward(c.act);
}

Mat TransformerBlock::backward(const Mat& dy, const Cache& c, TransformerBlock& g) const {
  const Mat dact = fc2.backward(c.act, dy, g.fc2);
  const Mat dh2 = fc1.backward(c.h2, gelu_backward(c.pre_act, dact), g.fc1);
  const Mat dx1 = dy + ln2.backward(dh2, c.ln2, g.ln2);
  const Mat dh1 = attn.backward(dx1, c.attn, g.attn);
  return dx1 + ln1.backward(dh1, c.ln1, g.ln1);
}

}  // namespace inkauth::nn
