#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "mlatmi/env.hpp"
#include "mlatmi/rng.hpp"

namespace mlatmi::measure {

inline constexpr double kMask = -1.0;

enum class NoiseKind { gaussian, uniform_zero_mean, uniform_biased };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

// Additive range noise. gaussian: N(0, sigma^2); uniform_zero_mean:
// U(-sqrt(3) sigma, sqrt(3) sigma); uniform_biased: U(0, 2 sigma).
struct NoiseModel {
  NoiseKind kind = NoiseKind::gaussian;
  double sigma = 0.2;

  void validate() const;
  // Maps two independent U[0,1) variates to a noise sample.
  double sample(double u1, double u2) const;
  // Log density of measured - true range; -inf outside the support.
  double log_density(double residual) const;
  double density(double residual) const;
};

double true_range(const env::Point3& q, const env::Point3& p);

// Everything needed to simulate and score one placement in one room.
struct Scene {
  env::Room room;
  env::GridMap grid;
  env::ReferencePlacement placement;
  env::VisibilityTable vis;
  Eigen::MatrixXd ranges;  // K x L true 3D ranges

  std::size_t num_cells() const { return grid.size(); }
  std::size_t num_refs() const { return placement.size(); }
};

Scene make_scene(env::Room room, double cell_size, env::ReferencePlacement placement);
// For hand-built scenes (tests, toy channels): recomputes `ranges`.
void refresh_ranges(Scene& scene);

// One masked realization for `cell`. Reference j's noise is a pure function of
// (stream, cell, realization, j).
void draw_realization(const Scene& scene, const NoiseModel& noise, const CounterRng& stream,
                      std::size_t cell, std::uint64_t realization, std::span<double> out);

struct MeasurementSet {
  std::size_t cells = 0;
  std::size_t realizations = 0;
  std::size_t refs = 0;
  std::uint64_t seed = 0;
  NoiseModel noise;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;  // row = cell * D + o

  std::span<const double> row(std::size_t cell, std::size_t realization) const {
    return {values.data() + (cell * realizations + realization) * refs, refs};
  }
};

// Stream used by sample_measurements for a given master seed.
CounterRng measurement_stream(std::uint64_t seed);

MeasurementSet sample_measurements(const Scene& scene, const NoiseModel& noise,
                                   std::size_t realizations, std::uint64_t seed);

// Log of p(m | cell). -inf when the unmasked entries of m differ from the
// cell's visible set or a residual falls outside the noise support.
double log_likelihood(std::span<const double> m, std::size_t cell, const Scene& scene,
                      const NoiseModel& noise);
double likelihood(std::span<const double> m, std::size_t cell, const Scene& scene,
                  const NoiseModel& noise);

env::RefMask mask_of(std::span<const double> m);

}  // namespace mlatmi::measure
