#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mlatmi::mine {

struct Architecture {
  int input_dim = 6;  // 2 + L for localization data
  int width = 32;     // Q
  int depth = 2;      // P
  double bn_epsilon = 1e-8;

  bool operator==(const Architecture&) const = default;
};

enum class ModelSize { small, medium, large };
Architecture preset(ModelSize size, int input_dim);
ModelSize parse_model_size(std::string_view name);
std::string to_string(ModelSize size);

// Location of one named tensor inside the flat parameter vector.
struct TensorSlot {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// Activations kept from a train-mode forward pass. Matrices are
// features x samples.
struct ForwardCache {
  Eigen::MatrixXd input;                 // d x n
  std::vector<Eigen::MatrixXd> normed;   // per block: standardized pre-activations
  std::vector<Eigen::VectorXd> inv_std;  // per block
  std::vector<Eigen::MatrixXd> shifted;  // per block: gamma * normed + beta (ELU input)
  std::vector<Eigen::MatrixXd> output;   // per block: ELU output
};

// T_theta: depth x [dense (no bias) -> batch norm -> ELU] -> dense(1).
// The dense bias is omitted ahead of batch norm, whose shift absorbs it.
// Batch norm always uses statistics of the presented batch.
class StatisticsNetwork {
 public:
  StatisticsNetwork() = default;
  explicit StatisticsNetwork(const Architecture& arch);

  // Dense weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); BN scale 1, shift 0;
  // final bias 0.
  static StatisticsNetwork initialized(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(std::string_view name) const;

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  std::size_t num_parameters() const { return static_cast<std::size_t>(theta_.size()); }

  // batch: n x input_dim (one sample per row). Returns n scores.
  // Throws NumericError naming the block when an activation is non-finite.
  Eigen::VectorXd forward(const Eigen::MatrixXd& batch, ForwardCache& cache) const;
  Eigen::VectorXd forward(const Eigen::MatrixXd& batch) const;

  // Gradient of sum_i dscores[i] * score_i w.r.t. the flat parameters.
  Eigen::VectorXd backward(const ForwardCache& cache, const Eigen::VectorXd& dscores) const;

 private:
  Eigen::Map<const Eigen::MatrixXd> view(const TensorSlot& s) const;
  Eigen::Map<Eigen::MatrixXd> view(const TensorSlot& s, Eigen::VectorXd& flat) const;

  Architecture arch_;
  std::vector<TensorSlot> layout_;
  Eigen::VectorXd theta_;
};

}  // namespace mlatmi::mine
