#include "mlatmi/mlat.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Dense>

#include "mlatmi/errors.hpp"
#include "mlatmi/io.hpp"
#include "mlatmi/parallel.hpp"

namespace mlatmi::mlat {

LinearSystem linear_system(std::span<const env::Point3> anchors, std::span<const double> ranges, double z0,
                           double z1) {
  if (anchors.size() != ranges.size()) throw ConfigError("anchor and range counts differ");
  const auto r = static_cast<Eigen::Index>(anchors.size());
  LinearSystem sys{Eigen::MatrixXd(r, 3), Eigen::VectorXd(r)};
  for (Eigen::Index j = 0; j < r; ++j) {
    const env::Point3& p = anchors[static_cast<std::size_t>(j)];
    if (std::abs(p.z() - z1) > 1e-9) throw ConfigError("all references must share the height z1");
    const double d = ranges[static_cast<std::size_t>(j)];
    sys.a(j, 0) = 1.0;
    sys.a(j, 1) = -2.0 * p.x();
    sys.a(j, 2) = -2.0 * p.y();
    sys.b(j) = d * d - p.x() * p.x() - p.y() * p.y() - z1 * z1 - z0 * z0 + 2.0 * z0 * z1;
  }
  return sys;
}

Eigen::Vector2d linear_init(std::span<const env::Point3> anchors, std::span<const double> ranges, double z0,
                            double z1) {
  if (anchors.size() < 3) throw SingularGeometryError("linear initialization needs at least 3 references");
  const LinearSystem sys = linear_system(anchors, ranges, z0, z1);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s(2) > 1e-10 * s(0))) throw SingularGeometryError("references are collinear in the xy-plane");
  const Eigen::Vector3d sol = svd.matrixV() * (svd.matrixU().transpose() * sys.b).cwiseQuotient(s);
  return sol.tail<2>();
}

namespace {

struct Linearization {
  double cost = 0.0;
  Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();  // J^T r
};

double cost_at(const Eigen::Vector2d& x, std::span<const env::Point3> anchors, std::span<const double> ranges,
               double z0) {
  double c = 0.0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const env::Point3 q(x.x(), x.y(), z0);
    const double res = (anchors[j] - q).norm() - ranges[j];
    c += res * res;
  }
  return c;
}

Linearization linearize(const Eigen::Vector2d& x, std::span<const env::Point3> anchors,
                        std::span<const double> ranges, double z0) {
  Linearization lin;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const env::Point3 diff = env::Point3(x.x(), x.y(), z0) - anchors[j];
    const double dist = diff.norm();
    const double res = dist - ranges[j];
    const Eigen::Vector2d row = dist > 0.0 ? Eigen::Vector2d(diff.head<2>() / dist) : Eigen::Vector2d::Zero();
    lin.cost += res * res;
    lin.jtj += row * row.transpose();
    lin.grad += row * res;
  }
  return lin;
}

}  // namespace

PositionEstimate refine_lm(const Eigen::Vector2d& init, std::span<const env::Point3> anchors,
                           std::span<const double> ranges, double z0, const LmOptions& opts) {
  if (anchors.size() < 2) throw SingularGeometryError("refinement needs at least 2 references");
  if (anchors.size() != ranges.size()) throw ConfigError("anchor and range counts differ");
  PositionEstimate est;
  est.position = init;
  Linearization lin = linearize(est.position, anchors, ranges, z0);
  if (!std::isfinite(lin.cost)) throw NumericError("non-finite residual at the initial estimate");
  double lambda = opts.lambda0;
  est.converged = lin.grad.norm() <= opts.gradient_tolerance;
  while (!est.converged && est.iterations < opts.max_iterations) {
    ++est.iterations;
    Eigen::Matrix2d damped = lin.jtj;
    damped.diagonal() += lambda * lin.jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector2d step = damped.ldlt().solve(-lin.grad);
    const Eigen::Vector2d trial = est.position + step;
    const double trial_cost = cost_at(trial, anchors, ranges, z0);
    if (!std::isfinite(trial_cost)) throw NumericError("non-finite residual during refinement");
    if (trial_cost < lin.cost) {
      est.position = trial;
      lin = linearize(est.position, anchors, ranges, z0);
      est.accepted_residuals.push_back(lin.cost);
      lambda /= opts.lambda_down;
      est.converged = lin.grad.norm() <= opts.gradient_tolerance;
    } else {
      lambda *= opts.lambda_up;
      // No representable descent step left: the iterate is a minimum to
      // machine precision.
      if (step.norm() <= 1e-15 * (1.0 + est.position.norm())) {
        est.converged = lin.grad.norm() <= std::sqrt(opts.gradient_tolerance);
        break;
      }
    }
  }
  est.residual = lin.cost;
  return est;
}

PositionEstimate localize(std::span<const env::Point3> anchors, std::span<const double> ranges, double z0, double z1,
                          const LmOptions& opts) {
  return refine_lm(linear_init(anchors, ranges, z0, z1), anchors, ranges, z0, opts);
}

RmseMap rmse_map(const measure::Scene& scene, const measure::MeasurementSet& measurements, const LmOptions& opts) {
  const std::size_t k = scene.grid.size();
  if (measurements.cells != k || measurements.refs != scene.placement.size()) {
    throw ConfigError("measurement set does not match the scene");
  }
  RmseMap map;
  map.rmse.assign(k, std::numeric_limits<double>::quiet_NaN());
  map.mean_error.assign(k, std::numeric_limits<double>::quiet_NaN());
  map.n_valid.assign(k, 0);
  map.flagged.assign(k, 0);
  std::vector<std::size_t> failures(k, 0);
  const double z0 = scene.room.ue_height;
  const double z1 = scene.room.ref_height;

  parallel_for(k, [&](std::size_t i) {
    const auto visible = scene.vis.refs(i);
    if (visible.size() < 3) {
      map.flagged[i] = 1;
      return;
    }
    std::vector<env::Point3> anchors;
    for (std::size_t j : visible) anchors.push_back(scene.placement.refs[j]);
    std::vector<double> d(visible.size());
    const Eigen::Vector2d truth = scene.grid.cell(i);
    double sum_sq = 0.0;
    Eigen::Vector2d sum_err = Eigen::Vector2d::Zero();
    std::size_t valid = 0;
    for (std::size_t o = 0; o < measurements.realizations; ++o) {
      const auto row = measurements.row(i, o);
      for (std::size_t v = 0; v < visible.size(); ++v) d[v] = row[visible[v]];
      try {
        const PositionEstimate est = localize(anchors, d, z0, z1, opts);
        const Eigen::Vector2d err = est.position - truth;
        sum_sq += err.squaredNorm();
        sum_err += err;
        ++valid;
      } catch (const NumericError&) {
        ++failures[i];
      }
    }
    map.n_valid[i] = valid;
    if (valid > 0) {
      map.rmse[i] = std::sqrt(sum_sq / static_cast<double>(valid));
      map.mean_error[i] = (sum_err / static_cast<double>(valid)).norm();
    }
  });

  std::vector<double> included;
  for (std::size_t i = 0; i < k; ++i) {
    map.failures += failures[i];
    if (map.flagged[i]) {
      ++map.num_flagged;
    } else if (map.n_valid[i] > 0) {
      included.push_back(map.rmse[i]);
    }
  }
  map.global = included.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : pairwise_sum(included.data(), included.size()) / static_cast<double>(included.size());
  return map;
}

void write_rmse_map(std::ostream& os, const RmseMap& map, const env::GridMap& grid) {
  os << "x,y,rmse_m,n_valid\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << io::format_double(grid.cell(i).x()) << ',' << io::format_double(grid.cell(i).y()) << ','
       << io::format_double(map.rmse[i]) << ',' << map.n_valid[i] << '\n';
  }
}

}  // namespace mlatmi::mlat
