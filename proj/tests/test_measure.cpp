#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mlatmi/errors.hpp"
#include "mlatmi/measure.hpp"

using namespace mlatmi;
using measure::NoiseKind;
using measure::NoiseModel;

namespace {

measure::Scene square_scene(double range = 7.4) {
  const auto room = env::square_room(4.0);
  return measure::make_scene(
      room, 0.2, env::make_placement(room, "corners", {{0.5, 0.5}, {3.5, 0.5}, {0.5, 3.5}, {3.5, 3.5}}, range));
}

// One cell at (2, 2), one anchor straight above it.
measure::Scene one_cell_one_ref() {
  const auto room = env::square_room(4.0);
  auto scene = measure::make_scene(room, 4.0, env::make_placement(room, "above", {{2.0, 2.0}}));
  return scene;
}

}  // namespace

TEST(TrueRange, Examples) {
  EXPECT_DOUBLE_EQ(measure::true_range({0, 0, 0}, {3, 4, 0}), 5.0);
  EXPECT_DOUBLE_EQ(measure::true_range({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_NEAR(measure::true_range({2, 2, 0.1}, {2, 2, 2.5}), 2.4, 1e-15);
}

TEST(Sample, NearZeroNoiseReturnsTrueRanges) {
  const auto scene = square_scene();
  const auto set = measure::sample_measurements(scene, {NoiseKind::gaussian, 1e-12}, 3, 5);
  for (std::size_t i = 0; i < scene.num_cells(); ++i) {
    for (std::size_t o = 0; o < 3; ++o) {
      const auto m = set.row(i, o);
      for (std::size_t j = 0; j < 4; ++j) ASSERT_NEAR(m[j], scene.ranges(i, j), 1e-9);
    }
  }
}

TEST(Sample, UniformZeroMeanStaysInSupport) {
  const auto scene = square_scene();
  const auto set = measure::sample_measurements(scene, {NoiseKind::uniform_zero_mean, 0.2}, 50, 9);
  const double a = std::sqrt(3.0) * 0.2;
  for (std::size_t i = 0; i < scene.num_cells(); ++i) {
    for (std::size_t o = 0; o < 50; ++o) {
      for (std::size_t j = 0; j < 4; ++j) ASSERT_LE(std::abs(set.row(i, o)[j] - scene.ranges(i, j)), a);
    }
  }
}

TEST(Sample, BiasedUniformIsNonNegative) {
  const auto scene = square_scene();
  const auto set = measure::sample_measurements(scene, {NoiseKind::uniform_biased, 0.2}, 50, 9);
  for (std::size_t i = 0; i < scene.num_cells(); ++i) {
    for (std::size_t o = 0; o < 50; ++o) {
      const double n = set.row(i, o)[0] - scene.ranges(i, 0);
      ASSERT_GE(n, -1e-12);
      ASSERT_LE(n, 0.4 + 1e-12);
    }
  }
}

TEST(Sample, GaussianMomentsMatch) {
  const auto scene = one_cell_one_ref();
  ASSERT_EQ(scene.num_cells(), 1u);
  const auto set = measure::sample_measurements(scene, {NoiseKind::gaussian, 0.2}, 10000, 17);
  double sum = 0.0;
  double sq = 0.0;
  for (std::size_t o = 0; o < 10000; ++o) {
    const double n = set.row(0, o)[0] - scene.ranges(0, 0);
    sum += n;
    sq += n * n;
  }
  const double mean = sum / 10000.0;
  const double sd = std::sqrt(sq / 10000.0 - mean * mean);
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_GE(sd, 0.19);
  EXPECT_LE(sd, 0.21);
}

TEST(Sample, MaskedEntriesAreMinusOne) {
  // Anchors off the cell centers so a zero radius really covers nothing.
  const auto room = env::square_room(4.0);
  const auto scene = measure::make_scene(room, 0.2, env::make_placement(room, "p", {{0.6, 0.6}, {3.4, 3.4}}, 0.0));
  const auto set = measure::sample_measurements(scene, {}, 2, 1);
  for (Eigen::Index k = 0; k < set.values.size(); ++k) EXPECT_EQ(set.values.data()[k], measure::kMask);
}

TEST(Sample, SameSeedBitIdentical) {
  const auto scene = square_scene();
  const auto a = measure::sample_measurements(scene, {}, 20, 42);
  const auto b = measure::sample_measurements(scene, {}, 20, 42);
  const auto c = measure::sample_measurements(scene, {}, 20, 43);
  EXPECT_TRUE(a.values == b.values);
  EXPECT_FALSE(a.values == c.values);
}

TEST(Likelihood, GaussianPeak) {
  const auto scene = one_cell_one_ref();
  const std::vector<double> m{scene.ranges(0, 0)};
  EXPECT_NEAR(measure::likelihood(m, 0, scene, {NoiseKind::gaussian, 0.2}), 1.99471, 1e-5);
}

TEST(Likelihood, UniformBoundary) {
  const auto scene = one_cell_one_ref();
  const NoiseModel noise{NoiseKind::uniform_zero_mean, 0.2};
  const double a = std::sqrt(3.0) * 0.2;
  const std::vector<double> edge{scene.ranges(0, 0) + a};
  const std::vector<double> outside{scene.ranges(0, 0) + a + 1e-6};
  EXPECT_NEAR(measure::likelihood(edge, 0, scene, noise), 1.44338, 1e-5);
  EXPECT_EQ(measure::likelihood(outside, 0, scene, noise), 0.0);
}

TEST(Likelihood, MaskMismatchIsZero) {
  const auto room = env::l_shaped_room(10.0, 5.0);
  const auto scene = measure::make_scene(
      room, 0.2, env::make_placement(room, "p", {{1, 1}, {4, 1}, {1, 4}, {9.5, 0.5}}, 3.0));
  const auto cell = scene.grid.index_of({1.1, 1.1});
  ASSERT_TRUE(cell.has_value());
  ASSERT_FALSE(scene.vis.visible(*cell, 3));
  std::vector<double> m(4);
  for (std::size_t j = 0; j < 4; ++j) m[j] = scene.ranges(*cell, j);
  for (std::size_t j = 0; j < 4; ++j) {
    if (!scene.vis.visible(*cell, j)) m[j] = measure::kMask;
  }
  EXPECT_GT(measure::likelihood(m, *cell, scene, {}), 0.0);
  m[3] = scene.ranges(*cell, 3);  // unmasked entry the cell cannot see
  EXPECT_EQ(measure::likelihood(m, *cell, scene, {}), 0.0);
  EXPECT_EQ(measure::log_likelihood(m, *cell, scene, {}), -std::numeric_limits<double>::infinity());
}

TEST(Likelihood, OwnRealizationHasPositiveDensity) {
  const auto scene = square_scene();
  for (const auto kind : {NoiseKind::gaussian, NoiseKind::uniform_zero_mean, NoiseKind::uniform_biased}) {
    const NoiseModel noise{kind, 0.2};
    const auto set = measure::sample_measurements(scene, noise, 5, 3);
    for (std::size_t i = 0; i < scene.num_cells(); ++i) {
      for (std::size_t o = 0; o < 5; ++o) {
        ASSERT_GT(measure::likelihood(set.row(i, o), i, scene, noise), 0.0) << measure::to_string(kind);
      }
    }
  }
}

TEST(Likelihood, GaussianDensityIntegratesToOne) {
  const NoiseModel noise{NoiseKind::gaussian, 0.2};
  // Composite Simpson over +-10 sigma.
  const int n = 20000;
  const double lo = -2.0;
  const double h = 4.0 / n;
  double s = noise.density(lo) + noise.density(lo + n * h);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * noise.density(lo + k * h);
  EXPECT_NEAR(s * h / 3.0, 1.0, 1e-6);
}

TEST(Noise, ParseAndValidate) {
  EXPECT_EQ(measure::parse_noise_kind("gaussian"), NoiseKind::gaussian);
  EXPECT_EQ(measure::parse_noise_kind("uniform_biased"), NoiseKind::uniform_biased);
  EXPECT_THROW(measure::parse_noise_kind("laplace"), ConfigError);
  EXPECT_THROW((NoiseModel{NoiseKind::gaussian, 0.0}.validate()), ConfigError);
  EXPECT_THROW((NoiseModel{NoiseKind::gaussian, -1.0}.validate()), ConfigError);
}

TEST(Sample, ZeroRealizationsRejected) {
  EXPECT_THROW(measure::sample_measurements(square_scene(), {}, 0, 1), ConfigError);
}
