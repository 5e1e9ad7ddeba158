#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlatmi/errors.hpp"
#include "mlatmi/measure.hpp"
#include "mlatmi/network.hpp"
#include "mlatmi/rng.hpp"

namespace mlatmi::mine {

// Donsker-Varadhan estimate mean(T_joint) - (LSE(T_marginal) - log N).
double dv_objective(std::span<const double> joint, std::span<const double> marginal);

// d(objective)/d(score): +1/N per joint score, -softmax(marginal) per
// marginal score. Output has joint.size() + marginal.size() entries.
Eigen::VectorXd dv_score_gradient(std::span<const double> joint, std::span<const double> marginal);

// Gradient of -objective for a forward pass over [joint; marginal] rows.
Eigen::VectorXd backward(const StatisticsNetwork& net, const ForwardCache& cache,
                         std::span<const double> joint, std::span<const double> marginal);

// Fisher-Yates permutation of [0, n), a pure function of (rng, epoch).
std::vector<std::size_t> shuffle_permutation(std::size_t n, const CounterRng& rng, std::uint64_t epoch);

// Rows of x with the rows of z reordered by perm; used as product-of-marginals
// samples.
Eigen::MatrixXd marginal_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                               std::span<const std::size_t> perm);

// Produces a fresh i.i.d. batch for every epoch; deterministic in epoch.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t batch_size() const = 0;
  virtual int x_dim() const = 0;
  virtual int z_dim() const = 0;
  virtual void draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const = 0;
};

// x = cell (x, y), z = one masked realization per cell. With batch < K a
// random subset of cells is drawn every epoch.
class SceneSource final : public SampleSource {
 public:
  SceneSource(const measure::Scene& scene, measure::NoiseModel noise, std::uint64_t seed,
              std::size_t batch = 0);
  std::size_t batch_size() const override { return batch_; }
  int x_dim() const override { return 2; }
  int z_dim() const override;
  void draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const override;

 private:
  const measure::Scene* scene_;
  measure::NoiseModel noise_;
  CounterRng stream_;
  std::size_t batch_;
};

// x ~ N(0, 1), z = rho x + sqrt(1 - rho^2) e; I = -0.5 log(1 - rho^2).
class GaussianChannelSource final : public SampleSource {
 public:
  GaussianChannelSource(double rho, std::size_t batch, std::uint64_t seed);
  std::size_t batch_size() const override { return batch_; }
  int x_dim() const override { return 1; }
  int z_dim() const override { return 1; }
  void draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const override;
  double true_mi() const;

 private:
  double rho_;
  std::size_t batch_;
  CounterRng stream_;
};

// x and z drawn independently; I = 0.
class IndependentSource final : public SampleSource {
 public:
  IndependentSource(std::size_t batch, int x_dim, int z_dim, std::uint64_t seed);
  std::size_t batch_size() const override { return batch_; }
  int x_dim() const override { return x_dim_; }
  int z_dim() const override { return z_dim_; }
  void draw(std::uint64_t epoch, Eigen::MatrixXd& x, Eigen::MatrixXd& z) const override;

 private:
  std::size_t batch_;
  int x_dim_;
  int z_dim_;
  CounterRng stream_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;

  void reset(std::size_t n);
  void update(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr, const AdamConfig& cfg);
};

struct TrainConfig {
  std::size_t epochs = 500000;
  std::size_t window = 20000;
  double lr0 = 1e-3;
  double lr_decay = 0.98;
  double lr_period = 2000.0;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Smoothing E[e^T] with a moving average destabilizes training and is
  // rejected by validate().
  bool ema_denominator = false;
  // Stop once the std of the last early_stop_window estimates drops below
  // this value.
  std::optional<double> early_stop_std;
  std::size_t early_stop_window = 2000;

  void validate() const;
  double learning_rate(std::uint64_t epoch) const;
};

struct MineTrace {
  std::vector<double> values;  // I_N per epoch, nats
  std::vector<double> lrs;
  std::uint64_t first_epoch = 0;

  std::size_t size() const { return values.size(); }
};

// Arithmetic mean of the trailing `window` values.
double estimate(std::span<const double> trace, std::size_t window);
double estimate(const MineTrace& trace, std::size_t window);
// Std of the trailing window divided by sqrt(window).
double window_standard_error(std::span<const double> trace, std::size_t window);

struct TrainState {
  StatisticsNetwork net;
  AdamState optimizer;
  std::uint64_t epoch = 0;  // next epoch to run

  static TrainState fresh(const Architecture& arch, std::uint64_t seed);
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(std::string what, MineTrace prefix)
      : NumericError(std::move(what)), trace(std::move(prefix)) {}
  MineTrace trace;
};

// Runs cfg.epochs further epochs starting at state.epoch. Data, shuffles and
// the learning rate are keyed by the absolute epoch, so a resumed run matches
// an uninterrupted one.
MineTrace train(const SampleSource& source, const TrainConfig& cfg, TrainState& state);

// Starts from the parent's parameters with a fresh optimizer and the learning
// rate schedule restarted at epoch 0.
TrainState fine_tune_state(const StatisticsNetwork& parent, const Architecture& expected);
MineTrace fine_tune(const StatisticsNetwork& parent, const SampleSource& source,
                    const TrainConfig& cfg, const Architecture& expected, TrainState& out);

struct ParentCandidate {
  std::string id;
  env::ReferencePlacement placement;
};

// Smallest mean distance between same-index anchors; an identical placement is
// never its own parent. Throws ConfigError for an empty pool or mismatched L.
std::string select_parent(const env::ReferencePlacement& child,
                          std::span<const ParentCandidate> parents);

// Checkpoint: architecture, named parameter tensors, optimizer state and
// metadata as versioned JSON. Parameters round-trip bit-exactly.
struct Checkpoint {
  TrainState state;
  std::uint64_t seed = 0;
  std::optional<env::ReferencePlacement> placement;
  std::string config_hash;
};

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mlatmi::mine
