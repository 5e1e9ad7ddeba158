// mlatmi: reproducible pipelines for scoring anchor placements.
//
// Every subcommand reads a JSON run config and writes its artifacts into the
// config's output directory. CSV artifacts start with two comment lines
// carrying the format version, the config hash and the master seed.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlatmi/config.hpp"
#include "mlatmi/errors.hpp"
#include "mlatmi/eval.hpp"
#include "mlatmi/io.hpp"
#include "mlatmi/mi_mc.hpp"
#include "mlatmi/mine.hpp"
#include "mlatmi/mlat.hpp"
#include "mlatmi/parallel.hpp"
#include "mlatmi/peb.hpp"

namespace fs = std::filesystem;
using namespace mlatmi;
using json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::string out;
  int threads = 0;
  bool deterministic = false;
  bool bits = false;
  std::optional<std::size_t> realizations;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> window;
  std::string resume;
  std::vector<std::string> parents;
  std::string trace;
  std::size_t stride = 1;
};

// Loaded config plus the bookkeeping every command needs.
class Run {
 public:
  explicit Run(const Options& opt) : opt_(opt), cfg_(load_config(opt.config)) {
    if (!opt.out.empty()) cfg_.output_dir = opt.out;
    std::string overrides;
    if (opt.realizations) {
      cfg_.realizations = *opt.realizations;
      overrides += ";realizations=" + std::to_string(*opt.realizations);
    }
    if (opt.epochs) {
      cfg_.train.epochs = *opt.epochs;
      overrides += ";epochs=" + std::to_string(*opt.epochs);
    }
    if (opt.window) {
      cfg_.train.window = *opt.window;
      overrides += ";window=" + std::to_string(*opt.window);
    }
    if (cfg_.realizations < 1) throw ConfigError("realizations must be at least 1");
    cfg_.train.validate();
    hash_ = overrides.empty() ? cfg_.config_hash : io::fnv1a_hex(cfg_.config_hash + overrides);
    std::error_code ec;
    fs::create_directories(cfg_.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg_.output_dir + "': " + ec.message());
  }

  const RunConfig& cfg() const { return cfg_; }
  const Options& opt() const { return opt_; }
  io::OutputMeta meta(std::string kind) const { return {std::move(kind), hash_, cfg_.seed}; }
  std::string path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }

  template <class Body>
  void write_csv(const std::string& name, const std::string& kind, Body&& body) {
    std::ostringstream os;
    io::write_meta(os, meta(kind));
    body(os);
    write(name, os.str());
  }

  void write(const std::string& name, const std::string& content) {
    io::write_text_file(path(name), content);
    produced_.push_back(name);
    std::cout << "wrote " << path(name) << '\n';
  }

  // Lists only the files this invocation produced.
  void write_manifest(const std::string& command, json summary) {
    json j;
    j["format"] = "mlatmi-manifest";
    j["version"] = io::kFormatVersion;
    j["command"] = command;
    j["config_hash"] = hash_;
    j["seed"] = cfg_.seed;
    j["files"] = produced_;
    j["summary"] = std::move(summary);
    write("manifest.json", j.dump(2) + "\n");
  }

  measure::Scene scene() const {
    return measure::make_scene(cfg_.room, cfg_.cell_size, cfg_.require_placement());
  }

  eval::PlacementSuite suite() const {
    if (cfg_.suite_file) return eval::suite_from_json(io::read_text_file(*cfg_.suite_file));
    if (cfg_.suite_spec) {
      eval::SuiteSpec spec = *cfg_.suite_spec;
      spec.rules = cfg_.rules;
      return eval::generate_suite(cfg_.room, cfg_.cell_size, spec);
    }
    if (cfg_.placement) return {cfg_.room, cfg_.cell_size, {*cfg_.placement}};
    throw ConfigError("missing required field 'placement' or 'suite'");
  }

  double convert(double nats) const { return opt_.bits ? mi::nats_to_bits(nats) : nats; }
  const char* unit() const { return opt_.bits ? "bits" : "nats"; }

 private:
  Options opt_;
  RunConfig cfg_;
  std::string hash_;
  std::vector<std::string> produced_;
};

std::string noise_tag(const measure::NoiseModel& n) {
  std::ostringstream os;
  os << measure::to_string(n.kind) << "_s" << n.sigma;
  return os.str();
}

json mine_record(const Run& run, const mine::MineTrace& trace, std::size_t window, const std::string& placement_id) {
  const std::size_t w = std::min(window, trace.size());
  json j;
  j["format"] = "mlatmi-estimate";
  j["version"] = io::kFormatVersion;
  j["kind"] = "mine-estimate";
  j["method"] = mi::to_string(mi::Method::mine);
  j["unit"] = run.unit();
  j["value"] = run.convert(mine::estimate(trace, w));
  j["standard_error"] = run.convert(mine::window_standard_error(trace.values, w));
  j["window"] = w;
  j["first_epoch"] = trace.first_epoch;
  j["epochs"] = trace.size();
  j["placement_id"] = placement_id;
  j["master_seed"] = run.cfg().seed;
  j["config_hash"] = run.meta("").config_hash;
  return j;
}

mine::Architecture architecture(const RunConfig& cfg, const measure::Scene& scene) {
  auto arch = mine::preset(cfg.model, 2 + static_cast<int>(scene.num_refs()));
  arch.bn_epsilon = cfg.bn_epsilon;
  return arch;
}

void write_training(Run& run, const measure::Scene& scene, const mine::TrainState& state, const mine::MineTrace& trace) {
  mine::Checkpoint ckpt{state, run.cfg().train.seed, scene.placement, run.meta("").config_hash};
  mine::save_checkpoint(run.path("checkpoint.json"), ckpt);
  std::cout << "wrote " << run.path("checkpoint.json") << '\n';
  run.write_csv("trace.csv", "mine-trace", [&](std::ostream& os) { io::write_trace(os, trace); });
  const json rec = mine_record(run, trace, run.cfg().train.window, scene.placement.id);
  run.write("estimate.json", rec.dump(2) + "\n");
  std::cout << "I_MINE = " << rec["value"].get<double>() << ' ' << run.unit() << '\n';
}

int cmd_grid(Run& run) {
  const auto grid = env::build_grid(run.cfg().room, run.cfg().cell_size);
  run.write_csv("grid.csv", "grid", [&](std::ostream& os) { io::write_grid(os, grid); });
  if (run.cfg().placement) {
    const auto vis = env::visibility(run.cfg().room, grid, *run.cfg().placement);
    run.write_csv("visibility.csv", "visibility", [&](std::ostream& os) { io::write_visibility(os, vis, grid); });
  }
  std::cout << "K = " << grid.size() << " cells\n";
  return 0;
}

int cmd_validate(Run& run) {
  const auto suite = run.suite();
  const auto grid = env::build_grid(suite.room, suite.cell_size);
  std::size_t bad = 0;
  for (const auto& p : suite.placements) {
    const auto violations = env::validate_placement(suite.room, grid, p, run.cfg().rules);
    if (violations.empty()) {
      std::cout << p.id << ": valid\n";
      continue;
    }
    ++bad;
    for (const auto& v : violations) std::cerr << p.id << ": " << env::to_string(v.kind) << ": " << v.detail << '\n';
  }
  if (bad > 0) throw ConfigError(std::to_string(bad) + " of " + std::to_string(suite.placements.size()) +
                                 " placements violate the placement rules");
  return 0;
}

int cmd_simulate(Run& run) {
  const auto scene = run.scene();
  const auto set = measure::sample_measurements(scene, run.cfg().noise, run.cfg().realizations, run.cfg().seed);
  run.write_csv("measurements.csv", "measurements", [&](std::ostream& os) { io::write_measurements(os, set); });
  return 0;
}

int cmd_mc_mi(Run& run) {
  const auto scene = run.scene();
  const auto est = mi::mc_mi(scene, run.cfg().noise, run.cfg().realizations, run.cfg().seed);
  run.write("estimate.json", io::estimate_record(est, run.meta("mc-mi"), run.opt().bits));
  run.write_csv("mi_map.csv", "mi-map", [&](std::ostream& os) { mi::write_mi_map(os, est, scene.grid); });
  std::cout << "I_MC = " << run.convert(est.value) << ' ' << run.unit() << '\n';
  return 0;
}

int cmd_mine_train(Run& run) {
  const auto scene = run.scene();
  const auto arch = architecture(run.cfg(), scene);
  mine::TrainState state = mine::TrainState::fresh(arch, run.cfg().train.seed);
  if (!run.opt().resume.empty()) {
    auto ckpt = mine::load_checkpoint(run.opt().resume);
    if (!(ckpt.state.net.architecture() == arch)) throw ConfigError("checkpoint architecture does not match the config");
    if (ckpt.seed != run.cfg().train.seed) throw ConfigError("checkpoint was trained with a different seed");
    state = std::move(ckpt.state);
  }
  const mine::SceneSource source(scene, run.cfg().noise, run.cfg().train.seed, run.cfg().batch);
  const auto trace = mine::train(source, run.cfg().train, state);
  write_training(run, scene, state, trace);
  return 0;
}

int cmd_mine_finetune(Run& run) {
  const auto scene = run.scene();
  std::vector<std::string> paths = run.opt().parents.empty() ? run.cfg().parents : run.opt().parents;
  if (paths.empty()) throw ConfigError("mine-finetune needs at least one parent checkpoint");
  std::vector<mine::Checkpoint> loaded;
  std::vector<mine::ParentCandidate> candidates;
  for (const auto& p : paths) {
    loaded.push_back(mine::load_checkpoint(p));
    if (!loaded.back().placement) throw ConfigError("parent checkpoint '" + p + "' records no placement");
    candidates.push_back({p, *loaded.back().placement});
  }
  const std::string chosen = mine::select_parent(scene.placement, candidates);
  std::cout << "parent: " << chosen << '\n';
  const auto it = std::find(paths.begin(), paths.end(), chosen);
  const auto& parent = loaded[static_cast<std::size_t>(it - paths.begin())];

  mine::TrainState state;
  const mine::SceneSource source(scene, run.cfg().noise, run.cfg().train.seed, run.cfg().batch);
  const auto trace = mine::fine_tune(parent.state.net, source, run.cfg().train, architecture(run.cfg(), scene), state);
  write_training(run, scene, state, trace);
  return 0;
}

int cmd_mine_estimate(Run& run) {
  const std::string path = run.opt().trace.empty() ? run.path("trace.csv") : run.opt().trace;
  std::istringstream in(io::read_text_file(path));
  const auto trace = io::read_trace(in);
  if (trace.size() == 0) throw ConfigError("trace '" + path + "' is empty");
  const std::string id = run.cfg().placement ? run.cfg().placement->id : "";
  const json rec = mine_record(run, trace, run.cfg().train.window, id);
  run.write("mine_estimate.json", rec.dump(2) + "\n");
  std::cout << "I_MINE = " << rec["value"].get<double>() << ' ' << run.unit() << '\n';
  return 0;
}

int cmd_peb_map(Run& run) {
  const auto scene = run.scene();
  const auto map = peb::peb_map(scene, run.cfg().noise.sigma);
  run.write_csv("peb_map.csv", "peb-map", [&](std::ostream& os) { peb::write_peb_map(os, map, scene.grid); });
  std::cout << "mean PEB = " << map.mean() << " m, flagged cells = " << map.num_flagged() << '\n';
  return 0;
}

int cmd_mlat_rmse(Run& run) {
  const auto scene = run.scene();
  const auto set = measure::sample_measurements(scene, run.cfg().noise, run.cfg().realizations, run.cfg().seed);
  const auto map = mlat::rmse_map(scene, set);
  run.write_csv("rmse_map.csv", "rmse-map", [&](std::ostream& os) { mlat::write_rmse_map(os, map, scene.grid); });
  std::cout << "global RMSE = " << map.global << " m, flagged cells = " << map.num_flagged
            << ", degenerate snapshots = " << map.failures << '\n';
  return 0;
}

int cmd_study_convergence(Run& run) {
  const auto& cfg = run.cfg();
  const auto suite = run.suite();
  eval::ConvergenceConfig cc;
  cc.sizes = cfg.study_sizes;
  cc.noises = cfg.study_noises;
  cc.replicates = cfg.replicates;
  cc.mc_realizations = cfg.realizations;
  cc.train = cfg.train;
  cc.seed = stage_seed(cfg.seed, "convergence");
  const auto curves = eval::convergence_study(suite, cc);

  json summary = json::array();
  for (const auto& c : curves) {
    const std::string name =
        "convergence_" + c.placement_id + "_" + mine::to_string(c.size) + "_" + noise_tag(c.noise) + ".csv";
    run.write_csv(name, "convergence", [&](std::ostream& os) { eval::write_convergence(os, c, run.opt().stride); });
    json s;
    s["placement_id"] = c.placement_id;
    s["model"] = mine::to_string(c.size);
    s["noise"] = measure::to_string(c.noise.kind);
    s["sigma_r"] = c.noise.sigma;
    s["mine"] = run.convert(c.final_estimates.empty() ? std::nan("") : c.mean_estimate());
    s["mc"] = run.convert(c.mc_reference);
    s["diverged"] = c.diverged;
    s["file"] = name;
    summary.push_back(s);
  }
  run.write_manifest("study-convergence", summary);
  return 0;
}

json report_json(const Run& run, const eval::CorrelationReport& r) {
  json j;
  j["metric_a"] = r.metric_a;
  j["metric_b"] = r.metric_b;
  j["n"] = r.ids.size();
  j["pearson"] = r.rho ? json(*r.rho) : json(nullptr);
  j["concordance"] = r.concordance;
  j["excluded"] = r.excluded;
  (void)run;
  return j;
}

int cmd_study_consistency(Run& run) {
  const auto& cfg = run.cfg();
  const auto suite = run.suite();
  eval::ConsistencyConfig cc;
  cc.size = cfg.model;
  cc.noise = cfg.noise;
  cc.mc_realizations = cfg.realizations;
  cc.train = cfg.train;
  cc.seed = stage_seed(cfg.seed, "consistency");
  const auto report = eval::consistency_study(suite, cc);
  run.write_csv("consistency.csv", "consistency", [&](std::ostream& os) { eval::write_scatter(os, report); });
  run.write_manifest("study-consistency", report_json(run, report));
  if (report.rho) std::cout << "pearson(" << report.metric_a << ", " << report.metric_b << ") = " << *report.rho << '\n';
  return 0;
}

int cmd_study_correlation(Run& run) {
  const auto& cfg = run.cfg();
  const auto suite = run.suite();
  eval::MetricStudyConfig mc;
  mc.noises = cfg.study_noises;
  mc.realizations = cfg.realizations;
  mc.seed = stage_seed(cfg.seed, "correlation");
  const auto results = eval::metric_correlation_study(suite, mc);

  json summary = json::array();
  for (const auto& r : results) {
    const std::string tag = noise_tag(r.noise);
    run.write_csv("metrics_" + tag + ".csv", "placement-metrics", [&](std::ostream& os) {
      os << "id,rmse_m,peb_m,mi_nats,singular_cells\n";
      for (const auto& m : r.metrics) {
        os << m.id << ',' << io::format_double(m.rmse) << ',' << io::format_double(m.peb) << ','
           << io::format_double(m.mi) << ',' << m.singular_cells << '\n';
      }
    });
    run.write_csv("scatter_rmse_peb_" + tag + ".csv", "scatter",
                  [&](std::ostream& os) { eval::write_scatter(os, r.rmse_vs_peb); });
    run.write_csv("scatter_rmse_mi_" + tag + ".csv", "scatter",
                  [&](std::ostream& os) { eval::write_scatter(os, r.rmse_vs_mi); });
    json s;
    s["noise"] = measure::to_string(r.noise.kind);
    s["sigma_r"] = r.noise.sigma;
    s["rmse_vs_peb"] = report_json(run, r.rmse_vs_peb);
    s["rmse_vs_mi"] = report_json(run, r.rmse_vs_mi);
    summary.push_back(s);
    std::cout << tag << ": rho(RMSE, PEB) = " << (r.rmse_vs_peb.rho ? *r.rmse_vs_peb.rho : std::nan(""))
              << ", rho(RMSE, MI) = " << (r.rmse_vs_mi.rho ? *r.rmse_vs_mi.rho : std::nan("")) << '\n';
  }
  run.write_manifest("study-correlation", summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"mlatmi: mutual-information scoring of anchor placements for indoor multilateration"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--threads", opt.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--deterministic", opt.deterministic, "single thread, serial reductions");

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(Run&);
  };
  const std::vector<Command> commands{
      {"grid", "write the cell grid and visibility table", cmd_grid},
      {"validate", "check placements against the placement rules", cmd_validate},
      {"simulate", "sample masked range measurements", cmd_simulate},
      {"mc-mi", "Monte Carlo mutual information and per-cell map", cmd_mc_mi},
      {"mine-train", "train a statistics network from scratch or resume", cmd_mine_train},
      {"mine-finetune", "fine-tune from the nearest parent checkpoint", cmd_mine_finetune},
      {"mine-estimate", "trailing-window estimate from a trace", cmd_mine_estimate},
      {"peb-map", "per-cell position error bound", cmd_peb_map},
      {"mlat-rmse", "per-cell multilateration RMSE", cmd_mlat_rmse},
      {"study-convergence", "MINE convergence curves against Monte Carlo", cmd_study_convergence},
      {"study-consistency", "MINE vs Monte Carlo across a placement suite", cmd_study_consistency},
      {"study-correlation", "RMSE vs PEB and RMSE vs MI across a suite", cmd_study_correlation},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", opt.config, "run config (JSON)")->required();
    sub->add_option("-o,--out", opt.out, "override output_dir");
    sub->add_flag("--bits", opt.bits, "report MI in bits instead of nats");
    const std::string name = c.name;
    if (name == "simulate" || name == "mc-mi" || name == "mlat-rmse" || name.starts_with("study-")) {
      sub->add_option("-D,--realizations", opt.realizations, "override realizations");
    }
    if (name.starts_with("mine-") || name == "study-convergence" || name == "study-consistency") {
      sub->add_option("--epochs", opt.epochs, "override mine.epochs");
      sub->add_option("--window", opt.window, "override mine.window");
    }
    if (name == "mine-train") sub->add_option("--resume", opt.resume, "checkpoint to continue from");
    if (name == "mine-finetune") sub->add_option("--parent", opt.parents, "parent checkpoint(s)");
    if (name == "mine-estimate") sub->add_option("--trace", opt.trace, "trace CSV (default <out>/trace.csv)");
    if (name == "study-convergence") sub->add_option("--stride", opt.stride, "write every n-th epoch");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  set_thread_count(opt.deterministic ? 1 : opt.threads);
  try {
    for (const auto& c : commands) {
      if (!app.got_subcommand(c.name)) continue;
      Run run(opt);
      return c.fn(run);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
