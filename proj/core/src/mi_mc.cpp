#include "mlatmi/mi_mc.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <ostream>

#include "mlatmi/errors.hpp"
#include "mlatmi/io.hpp"
#include "mlatmi/parallel.hpp"

namespace mlatmi::mi {

namespace {

constexpr double kMassFloor = 1e-300;

// Cells sharing one visibility mask: only they can explain a measurement
// carrying that mask.
struct MaskGroup {
  std::vector<std::size_t> cells;
  std::vector<Eigen::Index> refs;
  Eigen::MatrixXd ranges;  // cells x visible refs
};

std::map<env::RefMask, MaskGroup> group_by_mask(const measure::Scene& scene) {
  std::map<env::RefMask, MaskGroup> groups;
  for (std::size_t i = 0; i < scene.grid.size(); ++i) groups[scene.vis.masks[i]].cells.push_back(i);
  for (auto& [mask, g] : groups) {
    for (std::size_t j = 0; j < scene.placement.size(); ++j) {
      if ((mask >> j) & 1U) g.refs.push_back(static_cast<Eigen::Index>(j));
    }
    g.ranges.resize(static_cast<Eigen::Index>(g.cells.size()), static_cast<Eigen::Index>(g.refs.size()));
    for (std::size_t c = 0; c < g.cells.size(); ++c) {
      for (std::size_t j = 0; j < g.refs.size(); ++j) {
        g.ranges(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) =
            scene.ranges(static_cast<Eigen::Index>(g.cells[c]), g.refs[j]);
      }
    }
  }
  return groups;
}

// Log-likelihoods up to a constant shared by all candidates of the group.
void group_log_likelihood(const MaskGroup& g, const Eigen::RowVectorXd& m, const measure::NoiseModel& noise,
                          Eigen::VectorXd& out) {
  const Eigen::Index n = static_cast<Eigen::Index>(g.cells.size());
  if (g.refs.empty()) {
    out.setZero(n);
    return;
  }
  const auto residual = (-(g.ranges.rowwise() - m)).eval();  // m - r
  switch (noise.kind) {
    case measure::NoiseKind::gaussian:
      out = -residual.rowwise().squaredNorm() / (2.0 * noise.sigma * noise.sigma);
      return;
    case measure::NoiseKind::uniform_zero_mean:
    case measure::NoiseKind::uniform_biased: {
      out.resize(n);
      for (Eigen::Index c = 0; c < n; ++c) {
        double total = 0.0;
        for (Eigen::Index j = 0; j < residual.cols(); ++j) {
          total += noise.log_density(residual(c, j));
          if (std::isinf(total)) break;
        }
        out[c] = total;
      }
      return;
    }
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::exact: return "exact";
    case Method::monte_carlo: return "monte_carlo";
    case Method::mine: return "mine";
  }
  return "unknown";
}

double MiEstimate::standard_error() const {
  if (per_cell.size() < 2) return 0.0;
  const double n = static_cast<double>(per_cell.size());
  double mean = 0.0;
  for (double c : per_cell) mean += c;
  mean /= n;
  double ss = 0.0;
  for (double c : per_cell) ss += (c - mean) * (c - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

MiEstimate exact_mi(const DiscreteJoint& joint) {
  const Eigen::MatrixXd& p = joint.pmf;
  if (p.size() == 0) throw ConfigError("joint pmf is empty");
  if ((p.array() < 0.0).any() || !p.allFinite()) throw ConfigError("joint pmf has negative or non-finite entries");
  const double total = p.sum();
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("joint pmf is not normalized (sum = " + io::format_double(total) + ")");
  const Eigen::VectorXd px = p.rowwise().sum();
  const Eigen::RowVectorXd pz = p.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index x = 0; x < p.rows(); ++x) {
    for (Eigen::Index z = 0; z < p.cols(); ++z) {
      const double pxz = p(x, z);
      if (pxz > 0.0) mi += pxz * std::log(pxz / (px[x] * pz[z]));
    }
  }
  MiEstimate est;
  est.value = mi;
  est.method = Method::exact;
  return est;
}

double posterior_entropy(std::span<const double> log_weights) {
  double lmax = -std::numeric_limits<double>::infinity();
  for (double l : log_weights) lmax = std::max(lmax, l);
  if (!std::isfinite(lmax)) throw NumericError("posterior has zero total mass");
  double s = 0.0;
  for (double l : log_weights) {
    if (l != -std::numeric_limits<double>::infinity()) s += std::exp(l - lmax);
  }
  double weighted = 0.0;
  for (double l : log_weights) {
    if (l == -std::numeric_limits<double>::infinity()) continue;
    const double w = std::exp(l - lmax);
    if (w / s < kMassFloor) continue;
    weighted += w * (l - lmax);
  }
  // H = -sum p log p with p = w / s and log p = (l - lmax) - log s.
  return std::log(s) - weighted / s;
}

MiEstimate mc_mi(const measure::Scene& scene, const measure::NoiseModel& noise, std::size_t realizations,
                 std::uint64_t seed) {
  noise.validate();
  if (realizations < 1) throw ConfigError("number of realizations must be at least 1");
  const std::size_t k = scene.grid.size();
  const std::size_t l = scene.placement.size();
  const double log_k = std::log(static_cast<double>(k));
  const auto groups = group_by_mask(scene);
  const CounterRng stream = measure::measurement_stream(seed);

  MiEstimate est;
  est.method = Method::monte_carlo;
  est.seed = seed;
  est.realizations = realizations;
  est.placement_id = scene.placement.id;
  est.per_cell.assign(k, 0.0);

  parallel_for(k, [&](std::size_t x) {
    const MaskGroup& g = groups.at(scene.vis.masks[x]);
    std::vector<double> m(l);
    Eigen::RowVectorXd visible_m(static_cast<Eigen::Index>(g.refs.size()));
    Eigen::VectorXd loglik;
    std::vector<double> gains(realizations);  // log K - H(X | z_o)
    for (std::size_t o = 0; o < realizations; ++o) {
      measure::draw_realization(scene, noise, stream, x, o, m);
      for (std::size_t j = 0; j < g.refs.size(); ++j) visible_m[static_cast<Eigen::Index>(j)] = m[static_cast<std::size_t>(g.refs[j])];
      group_log_likelihood(g, visible_m, noise, loglik);
      gains[o] = log_k - posterior_entropy({loglik.data(), static_cast<std::size_t>(loglik.size())});
    }
    est.per_cell[x] = pairwise_sum(gains.data(), realizations) / static_cast<double>(realizations);
  });

  est.value = pairwise_sum(est.per_cell.data(), k) / static_cast<double>(k);
  return est;
}

void write_mi_map(std::ostream& os, const MiEstimate& estimate, const env::GridMap& grid) {
  if (estimate.per_cell.empty()) throw ConfigError("estimate carries no per-cell contributions");
  if (estimate.per_cell.size() != grid.size()) throw ConfigError("per-cell contributions do not match the grid");
  os << "x,y,c_x\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    os << io::format_double(grid.cell(i).x()) << ',' << io::format_double(grid.cell(i).y()) << ','
       << io::format_double(estimate.per_cell[i]) << '\n';
  }
}

}  // namespace mlatmi::mi
