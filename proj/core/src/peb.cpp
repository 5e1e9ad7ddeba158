#include "mlatmi/peb.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Dense>

#include "mlatmi/errors.hpp"
#include "mlatmi/io.hpp"

namespace mlatmi::peb {

Eigen::MatrixXd geometry_matrix(const env::Point3& q, std::span<const env::Point3> anchors) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(anchors.size()), 3);
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const env::Point3 d = q - anchors[j];
    const double norm = d.norm();
    if (!(norm > 0.0)) throw SingularGeometryError("UE coincides with reference " + std::to_string(j));
    h.row(static_cast<Eigen::Index>(j)) = (d / norm).transpose();
  }
  return h;
}

double fim_condition(const Eigen::MatrixXd& h) {
  const Eigen::Matrix3d g = h.transpose() * h;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(2);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double peb_2d(const env::Point3& q, std::span<const env::Point3> anchors, double sigma) {
  if (anchors.empty()) throw SingularGeometryError("no visible references");
  const Eigen::MatrixXd h = geometry_matrix(q, anchors);
  const double cond = fim_condition(h);
  if (!(cond <= kMaxCondition)) {
    throw SingularGeometryError("Fisher information is singular (condition number " + io::format_double(cond) + ")");
  }
  const Eigen::Matrix3d inv = (h.transpose() * h).inverse();
  return sigma * std::sqrt(inv(0, 0) + inv(1, 1));
}

const char* to_string(Flag f) {
  switch (f) {
    case Flag::ok: return "ok";
    case Flag::singular: return "singular";
    case Flag::no_refs: return "no_refs";
  }
  return "unknown";
}

double PebMap::mean() const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (flags[i] != Flag::ok) continue;
    s += values[i];
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

std::size_t PebMap::num_flagged() const {
  std::size_t n = 0;
  for (Flag f : flags) n += f != Flag::ok;
  return n;
}

PebMap peb_map(const measure::Scene& scene, double sigma) {
  const std::size_t k = scene.grid.size();
  PebMap map;
  map.values.assign(k, std::numeric_limits<double>::quiet_NaN());
  map.flags.assign(k, Flag::ok);
  map.condition.assign(k, std::numeric_limits<double>::infinity());
  std::vector<env::Point3> anchors;
  for (std::size_t i = 0; i < k; ++i) {
    anchors.clear();
    for (std::size_t j : scene.vis.refs(i)) anchors.push_back(scene.placement.refs[j]);
    if (anchors.empty()) {
      map.flags[i] = Flag::no_refs;
      continue;
    }
    const env::Point3 q = scene.grid.position(i);
    map.condition[i] = fim_condition(geometry_matrix(q, anchors));
    try {
      map.values[i] = peb_2d(q, anchors, sigma);
    } catch (const SingularGeometryError&) {
      map.flags[i] = Flag::singular;
    }
  }
  return map;
}

void write_peb_map(std::ostream& os, const PebMap& map, const env::GridMap& grid) {
  os << "x,y,peb_m,flag\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << io::format_double(grid.cell(i).x()) << ',' << io::format_double(grid.cell(i).y()) << ','
       << io::format_double(map.values[i]) << ',' << to_string(map.flags[i]) << '\n';
  }
}

}  // namespace mlatmi::peb
