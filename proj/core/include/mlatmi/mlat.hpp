#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mlatmi/measure.hpp"

namespace mlatmi::mlat {

// Rows (1, -2 x_j, -2 y_j) and b_j = d_j^2 - x_j^2 - y_j^2 - z1^2 - z0^2 + 2 z0 z1
// for unknowns (x^2 + y^2, x, y).
struct LinearSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

// Throws ConfigError unless every anchor sits at z1.
LinearSystem linear_system(std::span<const env::Point3> anchors, std::span<const double> ranges,
                           double z0, double z1);

// Pseudoinverse solution via SVD. Throws SingularGeometryError when rank < 3.
Eigen::Vector2d linear_init(std::span<const env::Point3> anchors, std::span<const double> ranges,
                            double z0, double z1);

struct LmOptions {
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  int max_iterations = 100;
  double gradient_tolerance = 1e-9;
};

struct PositionEstimate {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double residual = 0.0;  // sum of squared range residuals, m^2
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_residuals;  // residual after each accepted step
};

// Levenberg-Marquardt on sum_j (|p_j - [x, y, z0]| - d_j)^2.
// Throws NumericError on a non-finite residual.
PositionEstimate refine_lm(const Eigen::Vector2d& init, std::span<const env::Point3> anchors,
                           std::span<const double> ranges, double z0, const LmOptions& opts = {});

// linear_init followed by refine_lm.
PositionEstimate localize(std::span<const env::Point3> anchors, std::span<const double> ranges,
                          double z0, double z1, const LmOptions& opts = {});

struct RmseMap {
  std::vector<double> rmse;        // NaN for flagged cells
  std::vector<double> mean_error;  // norm of the mean error vector (bias)
  std::vector<std::size_t> n_valid;
  std::vector<std::uint8_t> flagged;  // fewer than 3 visible references
  double global = 0.0;             // mean of per-cell RMSE over unflagged cells
  std::size_t num_flagged = 0;
  std::size_t failures = 0;        // snapshots rejected as degenerate
};

RmseMap rmse_map(const measure::Scene& scene, const measure::MeasurementSet& measurements,
                 const LmOptions& opts = {});

// CSV: x,y,rmse_m,n_valid
void write_rmse_map(std::ostream& os, const RmseMap& map, const env::GridMap& grid);

}  // namespace mlatmi::mlat
