// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--only 3,5` restricts the run.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlatmi/errors.hpp"
#include "mlatmi/eval.hpp"
#include "mlatmi/io.hpp"
#include "mlatmi/mi_mc.hpp"
#include "mlatmi/mine.hpp"
#include "mlatmi/mlat.hpp"
#include "mlatmi/network.hpp"
#include "mlatmi/parallel.hpp"
#include "mlatmi/peb.hpp"
#include "support/oracles.hpp"
#include "support/properties.hpp"

#ifndef MLATMI_CLI_PATH
#error "MLATMI_CLI_PATH must point at the mlatmi executable"
#endif

using namespace mlatmi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

env::Room rectangle(double w, double h) {
  env::Room room;
  room.boundary = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  return room;
}

const std::vector<env::Point2> kSquareAnchors{{0.6, 0.6}, {3.4, 0.7}, {3.3, 3.4}, {0.7, 3.3}};

measure::Scene square_scene(double range = 7.4) {
  const auto room = env::square_room(4.0);
  return measure::make_scene(room, 0.2, env::make_placement(room, "corners", kSquareAnchors, range));
}

eval::PlacementSuite l_room_suite() {
  eval::SuiteSpec spec;
  spec.count = 10;
  spec.num_refs = 8;
  spec.seed = 7;
  return eval::generate_suite(env::l_shaped_room(10.0, 5.0), 0.2, spec);
}

Outcome criterion1() {
  Eigen::MatrixXd p(2, 2);
  p << 0.4, 0.1, 0.1, 0.4;
  const double v = mi::exact_mi({p}).value;
  return {std::abs(v - 0.19274) <= 1e-5, "I = " + fmt(v, 8) + " nats"};
}

Outcome criterion2() {
  const auto room = rectangle(6.0, 0.2);
  const auto scene = measure::make_scene(room, 0.2, env::make_placement(room, "line", {{0.1, 0.1}}));
  std::vector<double> ranges(scene.num_cells());
  for (std::size_t x = 0; x < ranges.size(); ++x) ranges[x] = scene.ranges(static_cast<Eigen::Index>(x), 0);
  const double exact = mi::exact_mi({oracle::uniform_channel_joint(ranges, std::sqrt(3.0) * 0.2)}).value;
  const double mc = mi::mc_mi(scene, {measure::NoiseKind::uniform_zero_mean, 0.2}, 10000, 11).value;
  const double rel = std::abs(mc - exact) / exact;
  return {rel <= 0.02, "exact " + fmt(exact, 6) + ", MC " + fmt(mc, 6) + ", rel err " + fmt(rel, 3)};
}

Outcome criterion3() {
  const auto scene = square_scene();
  const double log_k = std::log(static_cast<double>(scene.num_cells()));
  const double typical = mi::mc_mi(scene, {}, 200, 1).value;
  const double sharp = mi::mc_mi(scene, {measure::NoiseKind::gaussian, 1e-6}, 20, 2).value;
  const auto blind = mi::mc_mi(square_scene(0.0), {}, 20, 3);
  bool zero = blind.value == 0.0;
  for (double c : blind.per_cell) zero = zero && c == 0.0;
  const bool bounds = typical >= 0.0 && typical <= log_k && sharp >= 0.0 && sharp <= log_k + 1e-12;
  const bool limit = std::abs(sharp - log_k) <= 0.01 * log_k;
  return {bounds && limit && zero, "sigma 0.2: " + fmt(typical) + ", sigma 1e-6: " + fmt(sharp, 6) + " vs log K " +
                                       fmt(log_k, 6) + ", no coverage: " + fmt(blind.value)};
}

Outcome criterion4() {
  auto net = mine::StatisticsNetwork::initialized({4, 4, 2}, 11);
  {
    const CounterRng rng(12);
    auto& theta = net.parameters();
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] += 0.3 * rng.normal(static_cast<std::uint64_t>(k));
  }
  Eigen::MatrixXd batch(16, 4);
  const CounterRng data(13);
  for (Eigen::Index i = 0; i < 16; ++i) {
    for (Eigen::Index c = 0; c < 4; ++c) batch(i, c) = 3.0 * data.normal(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c));
  }
  const auto neg_dv = [&](const mine::StatisticsNetwork& n) {
    const Eigen::VectorXd s = n.forward(batch);
    return -mine::dv_objective({s.data(), 8}, {s.data() + 8, 8});
  };
  mine::ForwardCache cache;
  const Eigen::VectorXd s = net.forward(batch, cache);
  const Eigen::VectorXd grad = mine::backward(net, cache, {s.data(), 8}, {s.data() + 8, 8});
  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    auto plus = net;
    auto minus = net;
    plus.parameters()[k] += h;
    minus.parameters()[k] -= h;
    const double fd = (neg_dv(plus) - neg_dv(minus)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-6}));
  }
  return {worst <= 1e-4, "max rel err " + fmt(worst, 3) + " over " + std::to_string(grad.size()) + " parameters"};
}

Outcome criterion5() {
  const double truth = -0.5 * std::log(1.0 - 0.81);
  const mine::GaussianChannelSource source(0.9, 512, 5);
  auto state = mine::TrainState::fresh(mine::preset(mine::ModelSize::medium, 2), 5);
  mine::TrainConfig cfg;
  cfg.epochs = 20000;
  cfg.window = 5000;
  cfg.seed = 5;
  const auto trace = mine::train(source, cfg, state);
  const double est = mine::estimate(trace, cfg.window);
  const double rel = std::abs(est - truth) / truth;
  return {rel <= 0.10, "estimate " + fmt(est, 5) + " vs " + fmt(truth, 5) + " nats, rel err " + fmt(rel, 3)};
}

Outcome criterion6() {
  const auto scene = square_scene();
  const double mc = mi::mc_mi(scene, {}, 1000, 1).value;
  const auto arch = mine::preset(mine::ModelSize::small, 2 + static_cast<int>(scene.num_refs()));
  double sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    mine::TrainConfig cfg;
    cfg.epochs = 50000;
    cfg.window = 20000;
    cfg.seed = seed;
    const mine::SceneSource source(scene, {}, seed);
    auto state = mine::TrainState::fresh(arch, seed);
    const double v = mine::estimate(mine::train(source, cfg, state), cfg.window);
    sum += v;
    per_seed += (per_seed.empty() ? "" : ", ") + fmt(v);
  }
  const double mean = sum / 3.0;
  const double rel = std::abs(mean - mc) / mc;
  const double over = mean - mc;
  return {rel <= 0.15 && over <= 0.3,
          "MINE mean " + fmt(mean) + " (" + per_seed + ") vs MC " + fmt(mc) + ", rel err " + fmt(rel, 3)};
}

Outcome criterion7() {
  eval::SuiteSpec spec;
  spec.count = 10;
  spec.num_refs = 4;
  spec.seed = 11;
  const auto suite = eval::generate_suite(env::square_room(4.0), 0.2, spec);
  eval::ConsistencyConfig cfg;
  cfg.train.epochs = 50000;
  cfg.train.window = 20000;
  cfg.seed = 5;
  const auto report = eval::consistency_study(suite, cfg);
  if (!report.rho) return {false, "correlation undefined"};
  return {*report.rho >= 0.8, "rho(MINE, MC) = " + fmt(*report.rho) + " over " + std::to_string(report.ids.size()) +
                                  " placements"};
}

Outcome criterion8() {
  const auto scene = square_scene();
  const auto bound = peb::peb_map(scene, 0.2);
  const auto rmse = mlat::rmse_map(scene, measure::sample_measurements(scene, {}, 1000, 1));
  std::size_t checked = 0;
  std::size_t within = 0;
  double worst = 0.0;
  for (std::size_t x = 0; x < scene.num_cells(); ++x) {
    if (!(bound.condition[x] < 1e3) || !std::isfinite(bound.values[x]) || !std::isfinite(rmse.rmse[x])) continue;
    ++checked;
    const double rel = std::abs(rmse.rmse[x] - bound.values[x]) / bound.values[x];
    worst = std::max(worst, rel);
    if (rel <= 0.25) ++within;
  }
  eval::MetricStudyConfig cfg;
  cfg.noises = {{}};
  cfg.realizations = 200;
  cfg.seed = 3;
  const auto study = eval::metric_correlation_study(l_room_suite(), cfg);
  const auto& rho = study[0].rmse_vs_peb.rho;
  const bool cells_ok = checked > 0 && within == checked;
  const bool rho_ok = rho && *rho >= 0.9;
  return {cells_ok && rho_ok, std::to_string(within) + "/" + std::to_string(checked) +
                                  " cells within 25% (worst " + fmt(worst, 3) + "), L-room rho(RMSE, PEB) = " +
                                  (rho ? fmt(*rho) : std::string("undefined"))};
}

Outcome criterion9() {
  eval::MetricStudyConfig cfg;
  cfg.noises = {{measure::NoiseKind::gaussian, 0.2}, {measure::NoiseKind::uniform_biased, 0.2}};
  cfg.realizations = 200;
  cfg.seed = 3;
  const auto study = eval::metric_correlation_study(l_room_suite(), cfg);
  const auto& g = study[0].rmse_vs_mi.rho;
  const auto& u = study[1].rmse_vs_mi.rho;
  if (!g || !u) return {false, "correlation undefined"};
  return {*g < -0.6 && std::abs(*u) > std::abs(*g),
          "rho(RMSE, MI) gaussian " + fmt(*g) + ", uniform_biased " + fmt(*u)};
}

Outcome criterion10() {
  const auto scene = square_scene();
  double worst = 0.0;
  for (std::size_t x = 0; x < scene.num_cells(); ++x) {
    const Eigen::VectorXd m = scene.ranges.row(static_cast<Eigen::Index>(x)).transpose();
    const auto est = mlat::localize(scene.placement.refs, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())), scene.room.ue_height, scene.placement.refs[0].z());
    worst = std::max(worst, (est.position - scene.grid.position(x).head<2>()).norm());
  }
  return {worst <= 1e-6, "max error " + fmt(worst, 3) + " m over " + std::to_string(scene.num_cells()) + " cells"};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MLATMI_CLI_PATH) + " --deterministic " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion11() {
  const fs::path dir = fs::temp_directory_path() / ("mlatmi_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "cfg.json";
  std::ofstream(cfg) << R"({"room": {"shape": "l_shape", "side": 4, "notch": 2}, "cell_size": 0.4,
    "placement": {"id": "d", "anchors": [[0.3, 0.3], [3.7, 0.3], [0.3, 3.7], [1.7, 1.7]]},
    "realizations": 30, "mine": {"epochs": 40, "window": 10, "batch": 64},
    "suite": {"count": 3, "num_refs": 4, "seed": 2}, "seed": 17})";
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"grid", {"grid.csv", "visibility.csv"}},
      {"simulate", {"measurements.csv"}},
      {"mc-mi", {"mi_map.csv", "estimate.json"}},
      {"peb-map", {"peb_map.csv"}},
      {"mlat-rmse", {"rmse_map.csv"}},
      {"mine-train", {"trace.csv", "checkpoint.json", "estimate.json"}},
      {"study-correlation", {"metrics_gaussian_s0.2.csv"}},
  };
  std::size_t compared = 0;
  std::string mismatch;
  for (const auto& [name, files] : commands) {
    const std::string a = (dir / (name + "_a")).string();
    const std::string b = (dir / (name + "_b")).string();
    if (run_cli(name + " -c " + cfg.string() + " -o " + a) != 0 || run_cli(name + " -c " + cfg.string() + " -o " + b) != 0) {
      mismatch += " " + name + "(failed)";
      continue;
    }
    for (const auto& f : files) {
      ++compared;
      if (io::read_text_file(a + "/" + f) != io::read_text_file(b + "/" + f)) mismatch += " " + name + "/" + f;
    }
  }
  fs::remove_all(dir);
  if (!mismatch.empty()) return {false, "differs:" + mismatch};
  return {true, std::to_string(compared) + " files byte-identical across " + std::to_string(commands.size()) + " commands"};
}

Outcome criterion12() {
  std::string detail;
  bool ok = true;
  for (const auto& r : props::all()) {
    ok = ok && r.ok() && r.cases == props::kCases;
    detail += (detail.empty() ? "" : "; ") + r.summary();
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"mlatmi acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion numbers to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"exact MI of the 2x2 joint", criterion1},
      {"Monte Carlo vs exact MI on a 1-anchor line", criterion2},
      {"MI bounds, low-noise limit, zero coverage", criterion3},
      {"MINE gradient vs finite differences", criterion4},
      {"MINE on a rho = 0.9 Gaussian channel", criterion5},
      {"4x4 room MINE vs Monte Carlo, 3 seeds", criterion6},
      {"MINE/MC consistency over 10 placements", criterion7},
      {"MLAT RMSE vs PEB", criterion8},
      {"RMSE vs MI direction under two noise models", criterion9},
      {"noiseless multilateration exactness", criterion10},
      {"CLI determinism", criterion11},
      {"property suites", criterion12},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(n)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failures;
    std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << criteria[i].first << " -- "
              << out.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
