#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mlatmi/measure.hpp"

namespace mlatmi::peb {

inline constexpr double kMaxCondition = 1e12;

// Rows (q - p_j) / |q - p_j| for every anchor. Throws SingularGeometryError
// when q coincides with an anchor.
Eigen::MatrixXd geometry_matrix(const env::Point3& q, std::span<const env::Point3> anchors);

// Condition number of H^T H (infinite when rank deficient).
double fim_condition(const Eigen::MatrixXd& h);

// sigma * sqrt([(H^T H)^-1]_00 + [(H^T H)^-1]_11) from the full 3x3 inverse.
// Throws SingularGeometryError when cond(H^T H) > kMaxCondition.
double peb_2d(const env::Point3& q, std::span<const env::Point3> anchors, double sigma);

enum class Flag { ok, singular, no_refs };
const char* to_string(Flag f);

struct PebMap {
  std::vector<double> values;  // NaN where flagged
  std::vector<Flag> flags;
  std::vector<double> condition;

  // Mean over unflagged cells.
  double mean() const;
  std::size_t num_flagged() const;
};

PebMap peb_map(const measure::Scene& scene, double sigma);

// CSV: x,y,peb_m,flag
void write_peb_map(std::ostream& os, const PebMap& map, const env::GridMap& grid);

}  // namespace mlatmi::peb
