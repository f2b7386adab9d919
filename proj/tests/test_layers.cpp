#include <cmath>
#include <functional>

#include "inkauth/layers.hpp"
#include "test_util.hpp"

namespace inkauth::nn {
namespace {

// Central differences of a scalar function of one matrix, compared entry by entry.
void expect_gradient(const std::function<double()>& loss, Mat& param, const Mat& analytic, double h = 1e-6) {
  ASSERT_EQ(param.rows(), analytic.rows());
  ASSERT_EQ(param.cols(), analytic.cols());
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double saved = param(i);
    param(i) = saved + h;
    const double up = loss();
    param(i) = saved - h;
    const double down = loss();
    param(i) = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic(i);
    // 1e-5 floor: key-bias gradients are exactly zero and FD roundoff at h=1e-6 is ~1e-10
    EXPECT_LE(std::abs(a - numeric), 1e-4 * std::max({std::abs(a), std::abs(numeric), 1e-5}))
        << "entry " << i << " analytic " << a << " numeric " << numeric;
  }
}

Mat fixed_upstream(int rows, int cols) {
  Rng rng(99);
  return random_normal(rows, cols, 1.0, rng);
}

TEST(Linear, ForwardOracle) {
  Linear l = Linear::zeros(2, 1);
  l.weight << 2.0, -1.0;
  l.bias << 0.5;
  Mat x(1, 2);
  x << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(l.forward(x)(0, 0), 2.5);
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  Rng rng(1);
  Linear l = Linear::init(5, 3, rng);
  Mat x = random_normal(4, 5, 1.0, rng);
  const Mat up = fixed_upstream(4, 3);
  Linear g = Linear::zeros(5, 3);
  const Mat dx = l.backward(x, up, g);
  auto loss = [&] { return l.forward(x).cwiseProduct(up).sum(); };
  expect_gradient(loss, l.weight, g.weight);
  expect_gradient(loss, l.bias, g.bias);
  expect_gradient(loss, x, dx);
}

TEST(Linear, InitStatistics) {
  Rng rng(2);
  const Linear l = Linear::init(400, 200, rng);
  const double var = l.weight.array().square().mean();
  EXPECT_NEAR(var, 1.0 / 400.0, 0.05 / 400.0);
  EXPECT_TRUE(l.bias.isZero());
}

TEST(LayerNorm, OutputIsStandardized) {
  Rng rng(3);
  const LayerNorm ln = LayerNorm::init(16);
  const Mat x = random_normal(5, 16, 3.0, rng).array() + 7.0;
  LayerNorm::Cache c;
  const Mat y = ln.forward(x, c);
  for (int r = 0; r < 5; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).array().square().mean(), 1.0, 1e-4);
  }
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  LayerNorm ln = LayerNorm::init(6);
  ln.gamma = random_normal(1, 6, 1.0, rng);
  ln.beta = random_normal(1, 6, 1.0, rng);
  Mat x = random_normal(3, 6, 1.0, rng);
  const Mat up = fixed_upstream(3, 6);
  LayerNorm g = LayerNorm::zeros(6);
  LayerNorm::Cache c;
  ln.forward(x, c);
  const Mat dx = ln.backward(up, c, g);
  auto loss = [&] {
    LayerNorm::Cache t;
    return ln.forward(x, t).cwiseProduct(up).sum();
  };
  expect_gradient(loss, ln.gamma, g.gamma);
  expect_gradient(loss, ln.beta, g.beta);
  expect_gradient(loss, x, dx);
}

TEST(Gelu, ExactErfValues) {
  Mat x(1, 3);
  x << -1.0, 0.0, 1.0;
  const Mat y = gelu(x);
  EXPECT_NEAR(y(0, 0), -0.15865525393145707, 1e-15);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_NEAR(y(0, 2), 0.8413447460685429, 1e-15);
}

TEST(Gelu, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  Mat x = random_normal(3, 4, 2.0, rng);
  const Mat up = fixed_upstream(3, 4);
  const Mat dx = gelu_backward(x, up);
  expect_gradient([&] { return gelu(x).cwiseProduct(up).sum(); }, x, dx);
}

TEST(Attention, RowsOfProbabilitiesSumToOne) {
  Rng rng(6);
  const Attention a = Attention::init(8, 2, rng);
  Attention::Cache c;
  const Mat y = a.forward(random_normal(5, 8, 1.0, rng), c);
  EXPECT_EQ(y.rows(), 5);
  EXPECT_EQ(y.cols(), 8);
  ASSERT_EQ(c.probs.size(), 2u);
  for (const Mat& p : c.probs)
    for (int r = 0; r < 5; ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  Attention a = Attention::init(8, 2, rng);
  Mat x = random_normal(3, 8, 1.0, rng);
  const Mat up = fixed_upstream(3, 8);
  Attention g = Attention::zeros(8, 2);
  Attention::Cache c;
  a.forward(x, c);
  const Mat dx = a.backward(up, c, g);
  auto loss = [&] {
    Attention::Cache t;
    return a.forward(x, t).cwiseProduct(up).sum();
  };
  expect_gradient(loss, a.qkv.weight, g.qkv.weight);
  expect_gradient(loss, a.qkv.bias, g.qkv.bias);
  expect_gradient(loss, a.out.weight, g.out.weight);
  expect_gradient(loss, x, dx);
}

TEST(TransformerBlock, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  TransformerBlock b = TransformerBlock::init(8, 2, 16, rng);
  b.ln1.beta = random_normal(1, 8, 0.1, rng);
  Mat x = random_normal(3, 8, 1.0, rng);
  const Mat up = fixed_upstream(3, 8);
  TransformerBlock g = TransformerBlock::zeros(8, 2, 16);
  TransformerBlock::Cache c;
  b.forward(x, c);
  const Mat dx = b.backward(up, c, g);
  auto loss = [&] {
    TransformerBlock::Cache t;
    return b.forward(x, t).cwiseProduct(up).sum();
  };
  expect_gradient(loss, x, dx);
  expect_gradient(loss, b.ln1.gamma, g.ln1.gamma);
  expect_gradient(loss, b.attn.qkv.weight, g.attn.qkv.weight);
  expect_gradient(loss, b.fc1.weight, g.fc1.weight);
  expect_gradient(loss, b.fc2.bias, g.fc2.bias);
  expect_gradient(loss, b.ln2.beta, g.ln2.beta);
}

TEST(Visit, NamesAndOrderAreStable) {
  Rng rng(9);
  const TransformerBlock b = TransformerBlock::init(4, 2, 8, rng);
  std::vector<std::string> names;
  visit(b, "blk", [&](const std::string& n, const Mat&) { names.push_back(n); });
  const std::vector<std::string> want = {"blk.ln1.gamma",      "blk.ln1.beta",     "blk.attn.qkv.weight",
                                         "blk.attn.qkv.bias",  "blk.attn.out.weight", "blk.attn.out.bias",
                                         "blk.ln2.gamma",      "blk.ln2.beta",     "blk.fc1.weight",
                                         "blk.fc1.bias",       "blk.fc2.weight",   "blk.fc2.bias"};
  EXPECT_EQ(names, want);
}

}  // namespace
}  // namespace inkauth::nn
