#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mlatmi/errors.hpp"
#include "mlatmi/mine.hpp"
#include "mlatmi/network.hpp"

using namespace mlatmi;
using mine::Architecture;
using mine::StatisticsNetwork;

namespace {

Eigen::MatrixXd random_batch(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  const CounterRng rng(seed);
  Eigen::MatrixXd b(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) b(i, c) = 3.0 * rng.normal(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c));
  }
  return b;
}

// Moves every parameter off its initial value so no gradient is trivially 0.
void perturb(StatisticsNetwork& net, std::uint64_t seed) {
  const CounterRng rng(seed);
  auto& theta = net.parameters();
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] += 0.3 * rng.normal(static_cast<std::uint64_t>(k));
}

double neg_dv(const StatisticsNetwork& net, const Eigen::MatrixXd& batch) {
  const Eigen::VectorXd s = net.forward(batch);
  const auto n = static_cast<std::size_t>(s.size() / 2);
  return -mine::dv_objective({s.data(), n}, {s.data() + n, n});
}

}  // namespace

TEST(Network, PresetShapes) {
  const auto small = mine::preset(mine::ModelSize::small, 6);
  EXPECT_EQ(small.width, 32);
  EXPECT_EQ(small.depth, 2);
  EXPECT_EQ(mine::preset(mine::ModelSize::medium, 6).width, 128);
  EXPECT_EQ(mine::preset(mine::ModelSize::medium, 6).depth, 3);
  EXPECT_EQ(mine::preset(mine::ModelSize::large, 6).width, 256);
  EXPECT_EQ(mine::preset(mine::ModelSize::large, 6).depth, 4);
  EXPECT_THROW(mine::parse_model_size("huge"), ConfigError);

  const StatisticsNetwork net(small);
  EXPECT_EQ(net.num_parameters(), 32u * 6 + 64 + 32 * 32 + 64 + 32 + 1);
  EXPECT_EQ(net.slot("block1.dense.weight").rows, 32);
  EXPECT_EQ(net.slot("block1.dense.weight").cols, 32);
  EXPECT_EQ(net.slot("head.weight").rows, 1);
  EXPECT_THROW(net.slot("nope"), ConfigError);
}

TEST(Network, InitializationIsSeeded) {
  const Architecture arch{6, 32, 2};
  const auto a = StatisticsNetwork::initialized(arch, 1);
  const auto b = StatisticsNetwork::initialized(arch, 1);
  const auto c = StatisticsNetwork::initialized(arch, 2);
  EXPECT_TRUE(a.parameters() == b.parameters());
  EXPECT_FALSE(a.parameters() == c.parameters());
  const auto& w = a.slot("block0.dense.weight");
  const double bound = 1.0 / std::sqrt(6.0);
  for (std::size_t k = 0; k < w.size(); ++k) EXPECT_LE(std::abs(a.parameters()[static_cast<Eigen::Index>(w.offset + k)]), bound);
  const auto& g = a.slot("block0.bn.gamma");
  EXPECT_EQ(a.parameters()[static_cast<Eigen::Index>(g.offset)], 1.0);
  EXPECT_EQ(a.parameters()[static_cast<Eigen::Index>(a.slot("head.bias").offset)], 0.0);
}

TEST(Network, ZeroHeadGivesZeroScores) {
  auto net = StatisticsNetwork::initialized({4, 8, 2}, 3);
  const auto& w = net.slot("head.weight");
  net.parameters().segment(static_cast<Eigen::Index>(w.offset), w.cols).setZero();
  const Eigen::VectorXd s = net.forward(random_batch(10, 4, 5));
  EXPECT_EQ(s.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Network, BatchNormStandardizes) {
  auto net = StatisticsNetwork::initialized({4, 8, 3}, 3);
  mine::ForwardCache cache;
  net.forward(random_batch(64, 4, 7), cache);
  for (const auto& z : cache.normed) {
    const Eigen::VectorXd mean = z.rowwise().mean();
    const Eigen::VectorXd var = (z.colwise() - mean).array().square().rowwise().mean();
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((var.array() - 1.0).abs().maxCoeff(), 1e-6);
  }
}

TEST(Network, RowPermutationEquivariance) {
  auto net = StatisticsNetwork::initialized({4, 8, 2}, 3);
  perturb(net, 4);
  const Eigen::MatrixXd batch = random_batch(20, 4, 9);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[3], perm[11]);
  Eigen::MatrixXd permuted(20, 4);
  for (int i = 0; i < 20; ++i) permuted.row(i) = batch.row(perm[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd a = net.forward(batch);
  const Eigen::VectorXd b = net.forward(permuted);
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(b[i], a[perm[static_cast<std::size_t>(i)]], 1e-12);
}

TEST(Network, NonFiniteInputRejected) {
  const auto net = StatisticsNetwork::initialized({4, 8, 2}, 3);
  Eigen::MatrixXd batch = random_batch(4, 4, 1);
  batch(2, 1) = std::nan("");
  EXPECT_THROW(net.forward(batch), NumericError);
  EXPECT_THROW(net.forward(random_batch(4, 5, 1)), ConfigError);
}

TEST(Network, OverflowNamesTheBlock) {
  auto net = StatisticsNetwork::initialized({4, 8, 2}, 3);
  const auto& beta = net.slot("block1.bn.beta");
  net.parameters()[static_cast<Eigen::Index>(beta.offset)] = 1e308;
  const auto& gamma = net.slot("block1.bn.gamma");
  net.parameters()[static_cast<Eigen::Index>(gamma.offset)] = 1e308;
  try {
    net.forward(random_batch(8, 4, 2));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("block 1"), std::string::npos) << e.what();
  }
}

// Central differences with step 1e-5 on every parameter: Q = 4, P = 2, L = 2,
// N = 8 joint plus 8 marginal rows.
TEST(Network, GradientMatchesFiniteDifferences) {
  auto net = StatisticsNetwork::initialized({4, 4, 2}, 11);
  perturb(net, 12);
  const Eigen::MatrixXd batch = random_batch(16, 4, 13);

  mine::ForwardCache cache;
  const Eigen::VectorXd s = net.forward(batch, cache);
  const Eigen::VectorXd grad = mine::backward(net, cache, {s.data(), 8}, {s.data() + 8, 8});

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    auto plus = net;
    auto minus = net;
    plus.parameters()[k] += h;
    minus.parameters()[k] -= h;
    const double fd = (neg_dv(plus, batch) - neg_dv(minus, batch)) / (2.0 * h);
    const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
    worst = std::max(worst, rel);
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Network, HeadBiasGradientCancels) {
  auto net = StatisticsNetwork::initialized({4, 4, 2}, 11);
  perturb(net, 3);
  const Eigen::MatrixXd batch = random_batch(16, 4, 5);
  mine::ForwardCache cache;
  const Eigen::VectorXd s = net.forward(batch, cache);
  const Eigen::VectorXd grad = mine::backward(net, cache, {s.data(), 8}, {s.data() + 8, 8});
  EXPECT_NEAR(grad[static_cast<Eigen::Index>(net.slot("head.bias").offset)], 0.0, 1e-14);
}
