#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlatmi/measure.hpp"

namespace mlatmi::mi {

// Joint pmf over (x, z); rows index x, columns index z.
struct DiscreteJoint {
  Eigen::MatrixXd pmf;
};

enum class Method { exact, monte_carlo, mine };
std::string to_string(Method m);

struct MiEstimate {
  double value = 0.0;  // nats
  Method method = Method::exact;
  std::vector<double> per_cell;  // c_x, mean(per_cell) == value
  std::uint64_t seed = 0;
  std::size_t realizations = 0;
  std::string placement_id;

  // Standard error of the mean of per_cell (0 when per_cell is empty).
  double standard_error() const;
};

// Direct double sum, 0 log 0 = 0. Throws ConfigError if the pmf has negative
// entries or does not sum to 1 within 1e-12.
MiEstimate exact_mi(const DiscreteJoint& joint);

// Monte Carlo estimate log K - H(X|Z) with a uniform prior over the grid and a
// log-space Bayes posterior. `noise` is used for both sampling and the
// likelihood.
MiEstimate mc_mi(const measure::Scene& scene, const measure::NoiseModel& noise,
                 std::size_t realizations, std::uint64_t seed);

// Entropy (nats) of the posterior proportional to exp(log_weights), computed
// with max-subtraction; terms with mass below 1e-300 are dropped.
double posterior_entropy(std::span<const double> log_weights);

// CSV: x,y,c_x. Throws ConfigError when the estimate has no per-cell values.
void write_mi_map(std::ostream& os, const MiEstimate& estimate, const env::GridMap& grid);

inline double nats_to_bits(double nats) { return nats / 0.69314718055994530942; }

}  // namespace mlatmi::mi
