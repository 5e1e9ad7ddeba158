#include "mlatmi/measure.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "mlatmi/errors.hpp"
#include "mlatmi/parallel.hpp"

namespace mlatmi::measure {

namespace {
constexpr double kSqrt3 = 1.7320508075688772935;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool within(double value, double bound) { return std::abs(value) <= bound * (1.0 + 1e-12); }
}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::uniform_zero_mean: return "uniform_zero_mean";
    case NoiseKind::uniform_biased: return "uniform_biased";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "uniform_zero_mean" || name == "uniform") return NoiseKind::uniform_zero_mean;
  if (name == "uniform_biased") return NoiseKind::uniform_biased;
  throw ConfigError("unknown noise kind '" + std::string(name) +
                    "' (expected gaussian, uniform_zero_mean or uniform_biased)");
}

void NoiseModel::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sigma must be positive");
}

double NoiseModel::sample(double u1, double u2) const {
  switch (kind) {
    case NoiseKind::gaussian:
      return sigma * std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    case NoiseKind::uniform_zero_mean:
      return kSqrt3 * sigma * (2.0 * u1 - 1.0);
    case NoiseKind::uniform_biased:
      return 2.0 * sigma * u1;
  }
  return 0.0;
}

double NoiseModel::log_density(double residual) const {
  switch (kind) {
    case NoiseKind::gaussian:
      return -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma) -
             residual * residual / (2.0 * sigma * sigma);
    case NoiseKind::uniform_zero_mean:
      return within(residual, kSqrt3 * sigma) ? -std::log(2.0 * kSqrt3 * sigma) : kNegInf;
    case NoiseKind::uniform_biased:
      return within(residual - sigma, sigma) ? -std::log(2.0 * sigma) : kNegInf;
  }
  return kNegInf;
}

double NoiseModel::density(double residual) const { return std::exp(log_density(residual)); }

double true_range(const env::Point3& q, const env::Point3& p) { return (q - p).norm(); }

void refresh_ranges(Scene& scene) {
  const std::size_t k = scene.grid.size();
  const std::size_t l = scene.placement.size();
  scene.ranges.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
  for (std::size_t i = 0; i < k; ++i) {
    const env::Point3 q = scene.grid.position(i);
    for (std::size_t j = 0; j < l; ++j) {
      const double r = true_range(q, scene.placement.refs[j]);
      // Masking relies on every physical range exceeding the mask value.
      if (!(r > 0.0)) throw NumericError("true range must be positive (UE coincides with a reference)");
      scene.ranges(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r;
    }
  }
}

Scene make_scene(env::Room room, double cell_size, env::ReferencePlacement placement) {
  Scene s;
  s.room = std::move(room);
  s.grid = env::build_grid(s.room, cell_size);
  s.placement = std::move(placement);
  s.vis = env::visibility(s.room, s.grid, s.placement);
  refresh_ranges(s);
  return s;
}

void draw_realization(const Scene& scene, const NoiseModel& noise, const CounterRng& stream,
                      std::size_t cell, std::uint64_t realization, std::span<double> out) {
  const env::RefMask mask = scene.vis.masks[cell];
  for (std::size_t j = 0; j < out.size(); ++j) {
    if ((mask >> j) & 1U) {
      const double u1 = stream.uniform(cell, realization, j, 0);
      const double u2 = stream.uniform(cell, realization, j, 1);
      out[j] = scene.ranges(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(j)) +
               noise.sample(u1, u2);
    } else {
      out[j] = kMask;
    }
  }
}

CounterRng measurement_stream(std::uint64_t seed) { return CounterRng(seed).derive("measure"); }

MeasurementSet sample_measurements(const Scene& scene, const NoiseModel& noise,
                                   std::size_t realizations, std::uint64_t seed) {
  noise.validate();
  if (realizations < 1) throw ConfigError("number of realizations must be at least 1");
  MeasurementSet set;
  set.cells = scene.grid.size();
  set.realizations = realizations;
  set.refs = scene.placement.size();
  set.seed = seed;
  set.noise = noise;
  set.values.resize(static_cast<Eigen::Index>(set.cells * realizations),
                    static_cast<Eigen::Index>(set.refs));
  const CounterRng stream = measurement_stream(seed);
  parallel_for(set.cells, [&](std::size_t i) {
    for (std::size_t o = 0; o < realizations; ++o) {
      double* row = set.values.data() + (i * realizations + o) * set.refs;
      draw_realization(scene, noise, stream, i, o, {row, set.refs});
    }
  });
  return set;
}

env::RefMask mask_of(std::span<const double> m) {
  env::RefMask mask = 0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] != kMask) mask |= env::RefMask{1} << j;
  }
  return mask;
}

double log_likelihood(std::span<const double> m, std::size_t cell, const Scene& scene,
                      const NoiseModel& noise) {
  const env::RefMask mask = scene.vis.masks[cell];
  if (mask_of(m) != mask) return kNegInf;
  double total = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (!((mask >> j) & 1U)) continue;
    total += noise.log_density(m[j] - scene.ranges(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(j)));
    if (total == kNegInf) break;
  }
  return total;
}

double likelihood(std::span<const double> m, std::size_t cell, const Scene& scene, const NoiseModel& noise) {
  return std::exp(log_likelihood(m, cell, scene, noise));
}

}  // namespace mlatmi::measure
