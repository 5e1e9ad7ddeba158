#include "mlatmi/eval.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "mlatmi/io.hpp"
#include "mlatmi/mi_mc.hpp"
#include "mlatmi/mlat.hpp"
#include "mlatmi/parallel.hpp"
#include "mlatmi/peb.hpp"

namespace mlatmi::eval {

using json = nlohmann::json;

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("Pearson inputs differ in length");
  if (a.size() < 2) throw ConfigError("Pearson needs at least two samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(va > 0.0) || !(vb > 0.0)) throw UndefinedCorrelation("correlation is undefined for a constant input");
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

double concordance_fraction(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("concordance inputs differ in length");
  std::size_t concordant = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0 || db == 0.0) continue;
      ++total;
      concordant += (da > 0.0) == (db > 0.0);
    }
  }
  return total == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(concordant) / static_cast<double>(total);
}

PlacementSuite generate_suite(const env::Room& room, double cell_size, const SuiteSpec& spec) {
  room.validate();
  if (spec.num_refs < 1 || spec.num_refs > env::kMaxRefs) throw ConfigError("suite needs 1..64 references per placement");
  const env::GridMap grid = env::build_grid(room, cell_size);
  env::Point2 lo = room.boundary.front();
  env::Point2 hi = lo;
  for (const auto& v : room.boundary) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const CounterRng rng = CounterRng(spec.seed).derive("suite");
  PlacementSuite suite{room, cell_size, {}};
  std::uint64_t attempt = 0;
  while (suite.placements.size() < spec.count) {
    if (attempt >= spec.max_attempts) {
      throw NumericError("placement sampling exhausted " + std::to_string(spec.max_attempts) + " attempts");
    }
    std::vector<env::Point2> xy;
    for (std::size_t j = 0; j < spec.num_refs; ++j) {
      // Uniform over the admissible region (inside, away from walls).
      for (std::uint64_t t = 0;; ++t) {
        const env::Point2 p(lo.x() + (hi.x() - lo.x()) * rng.uniform(attempt, j, t, 0),
                            lo.y() + (hi.y() - lo.y()) * rng.uniform(attempt, j, t, 1));
        if (env::strictly_inside(room.boundary, p) &&
            env::distance_to_boundary(room.boundary, p) >= spec.rules.min_wall_distance) {
          xy.push_back(p);
          break;
        }
        if (t > 100000) throw ConfigError("room has no admissible anchor positions");
      }
    }
    ++attempt;
    char id[32];
    std::snprintf(id, sizeof id, "p%02zu", suite.placements.size());
    auto placement = env::make_placement(room, id, xy, spec.sensing_range);
    if (env::validate_placement(room, grid, placement, spec.rules).empty()) {
      suite.placements.push_back(std::move(placement));
    }
  }
  return suite;
}

std::string suite_to_json(const PlacementSuite& suite) {
  json vertices = json::array();
  for (const auto& v : suite.room.boundary) vertices.push_back({v.x(), v.y()});
  json placements = json::array();
  for (const auto& p : suite.placements) {
    json refs = json::array();
    for (const auto& r : p.refs) refs.push_back({r.x(), r.y(), r.z()});
    placements.push_back({{"id", p.id}, {"sensing_range", p.sensing_range}, {"refs", refs}});
  }
  json j = {{"format", "mlatmi-suite"},
            {"version", io::kFormatVersion},
            {"room",
             {{"vertices", vertices},
              {"height", suite.room.height},
              {"ue_height", suite.room.ue_height},
              {"ref_height", suite.room.ref_height}}},
            {"cell_size", suite.cell_size},
            {"placements", placements}};
  return j.dump(1) + "\n";
}

PlacementSuite suite_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "mlatmi-suite") throw IoError("not an mlatmi suite file");
    PlacementSuite suite;
    const auto& room = j.at("room");
    for (const auto& v : room.at("vertices")) suite.room.boundary.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    suite.room.height = room.at("height").get<double>();
    suite.room.ue_height = room.at("ue_height").get<double>();
    suite.room.ref_height = room.at("ref_height").get<double>();
    suite.cell_size = j.at("cell_size").get<double>();
    for (const auto& p : j.at("placements")) {
      env::ReferencePlacement rp;
      rp.id = p.at("id").get<std::string>();
      rp.sensing_range = p.at("sensing_range").get<double>();
      for (const auto& r : p.at("refs")) rp.refs.emplace_back(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
      suite.placements.push_back(std::move(rp));
    }
    return suite;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed suite file: ") + e.what());
  }
}

CorrelationReport correlate(std::string metric_a, std::string metric_b, std::vector<std::string> ids,
                            std::vector<double> a, std::vector<double> b) {
  CorrelationReport r;
  r.metric_a = std::move(metric_a);
  r.metric_b = std::move(metric_b);
  r.ids = std::move(ids);
  r.a = std::move(a);
  r.b = std::move(b);
  try {
    r.rho = pearson(r.a, r.b);
  } catch (const UndefinedCorrelation&) {
    r.rho.reset();
  } catch (const ConfigError&) {
    r.rho.reset();
  }
  r.concordance = concordance_fraction(r.a, r.b);
  return r;
}

void write_scatter(std::ostream& os, const CorrelationReport& report) {
  os << "# rho=" << (report.rho ? io::format_double(*report.rho) : std::string("undefined"))
     << " concordance=" << io::format_double(report.concordance) << '\n';
  for (const auto& id : report.excluded) os << "# excluded " << id << '\n';
  os << "id," << report.metric_a << ',' << report.metric_b << '\n';
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    os << report.ids[i] << ',' << io::format_double(report.a[i]) << ',' << io::format_double(report.b[i]) << '\n';
  }
}

double ConvergenceCurve::mean_estimate() const {
  if (final_estimates.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(final_estimates.begin(), final_estimates.end(), 0.0) / static_cast<double>(final_estimates.size());
}

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::string_view stage, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0) {
  return CounterRng(seed).derive(stage).derive(a).derive(b).derive(c).key();
}

}  // namespace

std::vector<ConvergenceCurve> convergence_study(const PlacementSuite& suite, const ConvergenceConfig& cfg) {
  cfg.train.validate();
  if (cfg.replicates < 1) throw ConfigError("convergence study needs at least one replicate");
  std::vector<measure::Scene> scenes;
  for (const auto& p : suite.placements) scenes.push_back(measure::make_scene(suite.room, suite.cell_size, p));

  struct Job {
    std::size_t curve;
    std::size_t replicate;
  };
  std::vector<ConvergenceCurve> curves;
  std::vector<std::size_t> curve_scene;
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < scenes.size(); ++p) {
    for (std::size_t n = 0; n < cfg.noises.size(); ++n) {
      const double mc = mi::mc_mi(scenes[p], cfg.noises[n], cfg.mc_realizations, sub_seed(cfg.seed, "mc", p, n)).value;
      for (const auto size : cfg.sizes) {
        ConvergenceCurve c;
        c.placement_id = scenes[p].placement.id;
        c.size = size;
        c.noise = cfg.noises[n];
        c.mc_reference = mc;
        curves.push_back(std::move(c));
        curve_scene.push_back(p);
        for (std::size_t r = 0; r < cfg.replicates; ++r) jobs.push_back({curves.size() - 1, r});
      }
    }
  }

  std::vector<std::optional<mine::MineTrace>> traces(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    const auto& job = jobs[k];
    const auto& curve = curves[job.curve];
    const auto& scene = scenes[curve_scene[job.curve]];
    const std::uint64_t s = sub_seed(cfg.seed, "convergence", job.curve, job.replicate);
    mine::TrainConfig tc = cfg.train;
    tc.seed = s;
    const mine::SceneSource source(scene, curve.noise, s);
    auto state = mine::TrainState::fresh(mine::preset(curve.size, 2 + static_cast<int>(scene.num_refs())), s);
    try {
      traces[k] = mine::train(source, tc, state);
    } catch (const mine::TrainingDiverged&) {
      traces[k].reset();
    }
  });

  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::vector<const mine::MineTrace*> ok;
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (jobs[k].curve != c) continue;
      if (traces[k]) {
        ok.push_back(&*traces[k]);
      } else {
        ++curves[c].diverged;
      }
    }
    if (ok.empty()) continue;
    std::size_t len = ok.front()->size();
    for (const auto* t : ok) len = std::min(len, t->size());
    curves[c].mean.assign(len, 0.0);
    curves[c].stddev.assign(len, 0.0);
    for (std::size_t e = 0; e < len; ++e) {
      double s = 0.0;
      for (const auto* t : ok) s += t->values[e];
      const double mean = s / static_cast<double>(ok.size());
      double ss = 0.0;
      for (const auto* t : ok) ss += (t->values[e] - mean) * (t->values[e] - mean);
      curves[c].mean[e] = mean;
      curves[c].stddev[e] = std::sqrt(ss / static_cast<double>(ok.size()));
    }
    for (const auto* t : ok) {
      curves[c].final_estimates.push_back(mine::estimate(*t, std::min(cfg.train.window, t->size())));
    }
  }
  return curves;
}

void write_convergence(std::ostream& os, const ConvergenceCurve& curve, std::size_t stride) {
  os << "# placement=" << curve.placement_id << " model=" << mine::to_string(curve.size)
     << " noise=" << measure::to_string(curve.noise.kind) << " sigma_r=" << io::format_double(curve.noise.sigma)
     << " replicates=" << curve.final_estimates.size() << " diverged=" << curve.diverged
     << " mean_estimate=" << io::format_double(curve.mean_estimate()) << '\n';
  os << "epoch,mean,std,mc\n";
  if (stride == 0) stride = 1;
  for (std::size_t e = 0; e < curve.mean.size(); e += stride) {
    os << e << ',' << io::format_double(curve.mean[e]) << ',' << io::format_double(curve.stddev[e]) << ','
       << io::format_double(curve.mc_reference) << '\n';
  }
}

CorrelationReport consistency_study(const PlacementSuite& suite, const ConsistencyConfig& cfg) {
  cfg.train.validate();
  const std::size_t n = suite.placements.size();
  std::vector<double> mine_est(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> mc(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> failure(n);
  parallel_for(n, [&](std::size_t p) {
    const auto scene = measure::make_scene(suite.room, suite.cell_size, suite.placements[p]);
    mc[p] = mi::mc_mi(scene, cfg.noise, cfg.mc_realizations, sub_seed(cfg.seed, "mc", p)).value;
    const std::uint64_t s = sub_seed(cfg.seed, "consistency", p);
    mine::TrainConfig tc = cfg.train;
    tc.seed = s;
    const mine::SceneSource source(scene, cfg.noise, s);
    auto state = mine::TrainState::fresh(mine::preset(cfg.size, 2 + static_cast<int>(scene.num_refs())), s);
    try {
      const auto trace = mine::train(source, tc, state);
      mine_est[p] = mine::estimate(trace, std::min(tc.window, trace.size()));
    } catch (const NumericError& e) {
      failure[p] = e.what();
    }
  });
  std::vector<std::string> ids;
  std::vector<double> a;
  std::vector<double> b;
  std::vector<std::string> excluded;
  for (std::size_t p = 0; p < n; ++p) {
    if (!failure[p].empty()) {
      excluded.push_back(suite.placements[p].id + ": " + failure[p]);
      continue;
    }
    ids.push_back(suite.placements[p].id);
    a.push_back(mine_est[p]);
    b.push_back(mc[p]);
  }
  auto report = correlate("I_MINE", "I_MC", std::move(ids), std::move(a), std::move(b));
  report.excluded = std::move(excluded);
  return report;
}

PlacementMetrics placement_metrics(const measure::Scene& scene, const measure::NoiseModel& noise,
                                   std::size_t realizations, std::uint64_t seed) {
  PlacementMetrics m;
  m.id = scene.placement.id;
  m.mi = mi::mc_mi(scene, noise, realizations, seed).value;
  const auto set = measure::sample_measurements(scene, noise, realizations, seed);
  m.rmse = mlat::rmse_map(scene, set).global;
  const auto pm = peb::peb_map(scene, noise.sigma);
  m.peb = pm.mean();
  m.singular_cells = pm.num_flagged();
  return m;
}

std::vector<MetricStudyResult> metric_correlation_study(const PlacementSuite& suite, const MetricStudyConfig& cfg) {
  std::vector<measure::Scene> scenes;
  for (const auto& p : suite.placements) scenes.push_back(measure::make_scene(suite.room, suite.cell_size, p));
  std::vector<MetricStudyResult> results;
  for (std::size_t n = 0; n < cfg.noises.size(); ++n) {
    MetricStudyResult res;
    res.noise = cfg.noises[n];
    res.metrics.resize(scenes.size());
    for (std::size_t p = 0; p < scenes.size(); ++p) {
      res.metrics[p] = placement_metrics(scenes[p], res.noise, cfg.realizations, sub_seed(cfg.seed, "metrics", p, n));
    }
    std::vector<std::string> ids;
    std::vector<double> rmse;
    std::vector<double> pebs;
    std::vector<double> mis;
    std::vector<std::string> excluded;
    for (const auto& m : res.metrics) {
      if (m.singular_cells > 0 || !std::isfinite(m.rmse)) {
        excluded.push_back(m.id + ": " + std::to_string(m.singular_cells) + " singular cells");
        continue;
      }
      ids.push_back(m.id);
      rmse.push_back(m.rmse);
      pebs.push_back(m.peb);
      mis.push_back(m.mi);
    }
    res.rmse_vs_peb = correlate("rmse_m", "peb_m", ids, rmse, pebs);
    res.rmse_vs_mi = correlate("rmse_m", "mi_nats", ids, rmse, mis);
    res.rmse_vs_peb.excluded = excluded;
    res.rmse_vs_mi.excluded = excluded;
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace mlatmi::eval
