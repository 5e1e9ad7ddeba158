#include "mlatmi/mine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "mlatmi/io.hpp"

namespace mlatmi::mine {

using json = nlohmann::json;

namespace {

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double dv_objective(std::span<const double> joint, std::span<const double> marginal) {
  if (joint.empty() || marginal.empty()) throw ConfigError("DV objective needs non-empty score vectors");
  const double mean_joint = std::accumulate(joint.begin(), joint.end(), 0.0) / static_cast<double>(joint.size());
  return mean_joint - (log_sum_exp(marginal) - std::log(static_cast<double>(marginal.size())));
}

Eigen::VectorXd dv_score_gradient(std::span<const double> joint, std::span<const double> marginal) {
  if (joint.empty() || marginal.empty()) throw ConfigError("DV objective needs non-empty score vectors");
  const auto nj = static_cast<Eigen::Index>(joint.size());
  const auto nm = static_cast<Eigen::Index>(marginal.size());
  Eigen::VectorXd g(nj + nm);
  g.head(nj).setConstant(1.0 / static_cast<double>(nj));
  const double lse = log_sum_exp(marginal);
  for (Eigen::Index i = 0; i < nm; ++i) g[nj + i] = -std::exp(marginal[static_cast<std::size_t>(i)] - lse);
  return g;
}

Eigen::VectorXd backward(const StatisticsNetwork& net, const ForwardCache& cache, std::span<const double> joint,
                         std::span<const double> marginal) {
  if (static_cast<Eigen::Index>(joint.size() + marginal.size()) != cache.input.cols()) {
    throw ConfigError("score vectors do not match the cached batch");
  }
  const Eigen::VectorXd dscores = -dv_score_gradient(joint, marginal);
  return net.backward(cache, dscores);
}

std::vector<std::size_t> shuffle_permutation(std::size_t n, const CounterRng& rng, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i, epoch, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

Eigen::MatrixXd marginal_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z, std::span<const std::size_t> perm) {
  Eigen::MatrixXd out(x.rows(), x.cols() + z.cols());
  out.leftCols(x.cols()) = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i).tail(z.cols()) = z.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]));
  return out;
}

SceneSource::SceneSource(const measure::Scene& scene, measure::NoiseModel noise, std::uint64_t seed, std::size_t batch)
    : scene_(&scene), noise_(noise), stream_(CounterRng(seed).derive("mine-data")), batch_(batch == 0 ? scene.grid.size() : batch) {
  noise_.validate();
  if (batch_ < 2 || batch_ > scene.grid.size()) throw ConfigError("MINE batch size must lie in [2, K]");
}

int SceneSource::z_dim() const { return static_cast<int>(scene_->placement.size()); }

void SceneSource::draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const {
  const std::size_t k = scene_->grid.size();
  const std::size_t l = scene_->placement.size();
  std::vector<std::size_t> cells(k);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  if (batch_ < k) {
    const CounterRng pick = stream_.derive("subset");
    for (std::size_t i = 0; i < batch_; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(pick.below(k - i, epoch, i));
      std::swap(cells[i], cells[j]);
    }
  }
  x.resize(static_cast<Eigen::Index>(batch_), 2);
  z.resize(static_cast<Eigen::Index>(batch_), static_cast<Eigen::Index>(l));
  std::vector<double> m(l);
  for (std::size_t i = 0; i < batch_; ++i) {
    const std::size_t c = cells[i];
    x.row(static_cast<Eigen::Index>(i)) = scene_->grid.cell(c).transpose();
    measure::draw_realization(*scene_, noise_, stream_, c, epoch, m);
    for (std::size_t j = 0; j < l; ++j) z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[j];
  }
}

GaussianChannelSource::GaussianChannelSource(double rho, std::size_t batch, std::uint64_t seed)
    : rho_(rho), batch_(batch), stream_(CounterRng(seed).derive("gaussian-channel")) {
  if (!(std::abs(rho) < 1.0)) throw ConfigError("correlation must lie in (-1, 1)");
  if (batch < 2) throw ConfigError("batch size must be at least 2");
}

void GaussianChannelSource::draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const {
  const auto n = static_cast<Eigen::Index>(batch_);
  x.resize(n, 1);
  z.resize(n, 1);
  const double s = std::sqrt(1.0 - rho_ * rho_);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = stream_.normal(epoch, static_cast<std::uint64_t>(i), 0);
    x(i, 0) = xi;
    z(i, 0) = rho_ * xi + s * stream_.normal(epoch, static_cast<std::uint64_t>(i), 1);
  }
}

double GaussianChannelSource::true_mi() const { return -0.5 * std::log(1.0 - rho_ * rho_); }

IndependentSource::IndependentSource(std::size_t batch, int x_dim, int z_dim, std::uint64_t seed)
    : batch_(batch), x_dim_(x_dim), z_dim_(z_dim), stream_(CounterRng(seed).derive("independent")) {
  if (batch < 2 || x_dim < 1 || z_dim < 1) throw ConfigError("invalid independent source dimensions");
}

void IndependentSource::draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const {
  const auto n = static_cast<Eigen::Index>(batch_);
  x.resize(n, x_dim_);
  z.resize(n, z_dim_);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int d = 0; d < x_dim_; ++d) x(i, d) = stream_.normal(epoch, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(d));
    for (int d = 0; d < z_dim_; ++d) z(i, d) = stream_.normal(epoch, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(1000 + d));
  }
}

void AdamState::reset(std::size_t n) {
  m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  step = 0;
}

void AdamState::update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr, const AdamConfig& cfg) {
  if (m.size() != theta.size()) reset(static_cast<std::size_t>(theta.size()));
  ++step;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
}

void TrainConfig::validate() const {
  if (ema_denominator) {
    throw ConfigError(
        "EMA smoothing of the E[exp(T)] denominator is not supported: it makes training numerically "
        "unstable; the log-sum-exp objective is used instead");
  }
  if (window < 1) throw ConfigError("averaging window must be at least 1");
  if (!(lr0 > 0.0) || !(lr_decay > 0.0) || !(lr_period > 0.0)) throw ConfigError("invalid learning-rate schedule");
  if (early_stop_std && early_stop_window < 2) throw ConfigError("early-stop window must be at least 2");
}

double TrainConfig::learning_rate(std::uint64_t epoch) const {
  return lr0 * std::pow(lr_decay, static_cast<double>(epoch) / lr_period);
}

double estimate(std::span<const double> trace, std::size_t window) {
  if (window == 0) throw ConfigError("empty averaging window");
  if (window > trace.size()) throw ConfigError("averaging window exceeds the trace length");
  const auto tail = trace.subspan(trace.size() - window);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(window);
}

double estimate(const MineTrace& trace, std::size_t window) { return estimate(std::span<const double>(trace.values), window); }

double window_standard_error(std::span<const double> trace, std::size_t window) {
  const double mean = estimate(trace, window);
  if (window < 2) return 0.0;
  const auto tail = trace.subspan(trace.size() - window);
  double ss = 0.0;
  for (double v : tail) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(window - 1)) / std::sqrt(static_cast<double>(window));
}

TrainState TrainState::fresh(const Architecture& arch, std::uint64_t seed) {
  TrainState s;
  s.net = StatisticsNetwork::initialized(arch, seed);
  s.optimizer.reset(s.net.num_parameters());
  return s;
}

MineTrace train(const SampleSource& source, const TrainConfig& cfg, TrainState& state) {
  cfg.validate();
  const int input_dim = source.x_dim() + source.z_dim();
  if (state.net.architecture().input_dim != input_dim) {
    throw ConfigError("network input dimension " + std::to_string(state.net.architecture().input_dim) +
                      " does not match the data (" + std::to_string(input_dim) + ")");
  }
  const CounterRng shuffle_rng = CounterRng(cfg.seed).derive("mine-shuffle");
  const auto n = static_cast<Eigen::Index>(source.batch_size());

  MineTrace trace;
  trace.first_epoch = state.epoch;
  trace.values.reserve(cfg.epochs);
  trace.lrs.reserve(cfg.epochs);

  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  Eigen::MatrixXd batch(2 * n, input_dim);
  ForwardCache cache;
  const std::uint64_t end = state.epoch + cfg.epochs;
  for (; state.epoch < end; ++state.epoch) {
    const std::uint64_t epoch = state.epoch;
    source.draw(epoch, x, z);
    const auto perm = shuffle_permutation(static_cast<std::size_t>(n), shuffle_rng, epoch);
    batch.topLeftCorner(n, x.cols()) = x;
    batch.topRightCorner(n, z.cols()) = z;
    batch.bottomRows(n) = marginal_batch(x, z, perm);

    Eigen::VectorXd scores;
    try {
      scores = state.net.forward(batch, cache);
    } catch (const NumericError& e) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": " + e.what(), trace);
    }
    const std::span<const double> joint(scores.data(), static_cast<std::size_t>(n));
    const std::span<const double> marginal(scores.data() + n, static_cast<std::size_t>(n));
    const double objective = dv_objective(joint, marginal);
    if (!std::isfinite(objective)) {
      throw TrainingDiverged("non-finite MINE estimate at epoch " + std::to_string(epoch), trace);
    }
    const double lr = cfg.learning_rate(epoch);
    const Eigen::VectorXd grad = backward(state.net, cache, joint, marginal);
    state.optimizer.update(state.net.parameters(), grad, lr, cfg.adam);
    trace.values.push_back(objective);
    trace.lrs.push_back(lr);

    if (cfg.early_stop_std && trace.size() >= cfg.early_stop_window) {
      const auto tail = std::span<const double>(trace.values).subspan(trace.size() - cfg.early_stop_window);
      const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(tail.size());
      double ss = 0.0;
      for (double v : tail) ss += (v - mean) * (v - mean);
      if (std::sqrt(ss / static_cast<double>(tail.size() - 1)) < *cfg.early_stop_std) {
        ++state.epoch;
        break;
      }
    }
  }
  return trace;
}

TrainState fine_tune_state(const StatisticsNetwork& parent, const Architecture& expected) {
  if (!(parent.architecture() == expected)) {
    throw ConfigError("parent architecture (Q=" + std::to_string(parent.architecture().width) +
                      ", P=" + std::to_string(parent.architecture().depth) +
                      ", input=" + std::to_string(parent.architecture().input_dim) +
                      ") does not match the configured model");
  }
  TrainState s;
  s.net = parent;
  s.optimizer.reset(parent.num_parameters());
  s.epoch = 0;
  return s;
}

MineTrace fine_tune(const StatisticsNetwork& parent, const SampleSource& source, const TrainConfig& cfg,
                    const Architecture& expected, TrainState& out) {
  out = fine_tune_state(parent, expected);
  return train(source, cfg, out);
}

std::string select_parent(const env::ReferencePlacement& child, std::span<const ParentCandidate> parents) {
  if (parents.empty()) throw ConfigError("parent pool is empty");
  const std::string* best = nullptr;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto& p : parents) {
    if (p.placement.size() != child.size()) {
      throw ConfigError("parent '" + p.id + "' has a different number of references");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < child.size(); ++j) total += (child.refs[j] - p.placement.refs[j]).norm();
    const double mean = total / static_cast<double>(child.size());
    if (mean == 0.0) continue;  // identical placement
    if (mean < best_distance) {
      best_distance = mean;
      best = &p.id;
    }
  }
  if (best == nullptr) throw ConfigError("parent pool holds only the child's own placement");
  return *best;
}

namespace {

json to_json(const env::ReferencePlacement& p) {
  json refs = json::array();
  for (const auto& r : p.refs) refs.push_back({r.x(), r.y(), r.z()});
  return {{"id", p.id}, {"sensing_range", p.sensing_range}, {"refs", refs}};
}

env::ReferencePlacement placement_from_json(const json& j) {
  env::ReferencePlacement p;
  p.id = j.at("id").get<std::string>();
  p.sensing_range = j.at("sensing_range").get<double>();
  for (const auto& r : j.at("refs")) p.refs.emplace_back(r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>());
  return p;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const auto& net = ckpt.state.net;
  const auto& arch = net.architecture();
  json params = json::array();
  for (const auto& slot : net.layout()) {
    const double* data = net.parameters().data() + slot.offset;
    params.push_back({{"name", slot.name},
                      {"rows", slot.rows},
                      {"cols", slot.cols},
                      {"data", std::vector<double>(data, data + slot.size())}});
  }
  json j = {{"format", "mlatmi-checkpoint"},
            {"version", io::kFormatVersion},
            {"architecture",
             {{"input_dim", arch.input_dim}, {"width", arch.width}, {"depth", arch.depth}, {"bn_epsilon", arch.bn_epsilon}}},
            {"parameters", params},
            {"optimizer",
             {{"step", ckpt.state.optimizer.step},
              {"m", to_vector(ckpt.state.optimizer.m)},
              {"v", to_vector(ckpt.state.optimizer.v)}}},
            {"epoch", ckpt.state.epoch},
            {"seed", ckpt.seed},
            {"config_hash", ckpt.config_hash}};
  if (ckpt.placement) j["placement"] = to_json(*ckpt.placement);
  return j.dump(1);
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "mlatmi-checkpoint") throw IoError("not an mlatmi checkpoint");
    if (j.at("version").get<int>() != io::kFormatVersion) throw IoError("unsupported checkpoint version");
    Architecture arch;
    const auto& a = j.at("architecture");
    arch.input_dim = a.at("input_dim").get<int>();
    arch.width = a.at("width").get<int>();
    arch.depth = a.at("depth").get<int>();
    arch.bn_epsilon = a.at("bn_epsilon").get<double>();
    Checkpoint ckpt;
    ckpt.state.net = StatisticsNetwork(arch);
    auto& theta = ckpt.state.net.parameters();
    for (const auto& p : j.at("parameters")) {
      const TensorSlot& slot = ckpt.state.net.slot(p.at("name").get<std::string>());
      const auto data = p.at("data").get<std::vector<double>>();
      if (p.at("rows").get<int>() != slot.rows || p.at("cols").get<int>() != slot.cols || data.size() != slot.size()) {
        throw IoError("checkpoint tensor '" + slot.name + "' has the wrong shape");
      }
      std::copy(data.begin(), data.end(), theta.data() + slot.offset);
    }
    const auto& opt = j.at("optimizer");
    ckpt.state.optimizer.step = opt.at("step").get<std::uint64_t>();
    ckpt.state.optimizer.m = from_vector(opt.at("m").get<std::vector<double>>());
    ckpt.state.optimizer.v = from_vector(opt.at("v").get<std::vector<double>>());
    if (ckpt.state.optimizer.m.size() != theta.size() || ckpt.state.optimizer.v.size() != theta.size()) {
      throw IoError("checkpoint optimizer state has the wrong size");
    }
    ckpt.state.epoch = j.at("epoch").get<std::uint64_t>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    ckpt.config_hash = j.value("config_hash", std::string{});
    if (j.contains("placement")) ckpt.placement = placement_from_json(j.at("placement"));
    return ckpt;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string text = checkpoint_to_string(ckpt);
  io::write_text_file(path, text);
  // Verify the round trip on disk.
  const Checkpoint back = checkpoint_from_string(io::read_text_file(path));
  if (back.state.net.parameters() != ckpt.state.net.parameters()) {
    throw IoError("checkpoint round trip altered parameters: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_string(io::read_text_file(path)); }

}  // namespace mlatmi::mine
