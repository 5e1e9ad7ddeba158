#include "mlatmi/network.hpp"

#include <cmath>

#include "mlatmi/errors.hpp"
#include "mlatmi/rng.hpp"

namespace mlatmi::mine {

Architecture preset(ModelSize size, int input_dim) {
  Architecture a;
  a.input_dim = input_dim;
  switch (size) {
    case ModelSize::small: a.width = 32; a.depth = 2; break;
    case ModelSize::medium: a.width = 128; a.depth = 3; break;
    case ModelSize::large: a.width = 256; a.depth = 4; break;
  }
  return a;
}

ModelSize parse_model_size(std::string_view name) {
  if (name == "small") return ModelSize::small;
  if (name == "medium") return ModelSize::medium;
  if (name == "large") return ModelSize::large;
  throw ConfigError("unknown model preset '" + std::string(name) + "' (expected small, medium or large)");
}

std::string to_string(ModelSize size) {
  switch (size) {
    case ModelSize::small: return "small";
    case ModelSize::medium: return "medium";
    case ModelSize::large: return "large";
  }
  return "unknown";
}

StatisticsNetwork::StatisticsNetwork(const Architecture& arch) : arch_(arch) {
  if (arch.input_dim < 1 || arch.width < 1 || arch.depth < 1) {
    throw ConfigError("network dimensions must be positive");
  }
  if (!(arch.bn_epsilon >= 0.0)) throw ConfigError("batch-norm epsilon must be non-negative");
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    layout_.push_back({std::move(name), rows, cols, offset});
    offset += layout_.back().size();
  };
  int in = arch.input_dim;
  for (int b = 0; b < arch.depth; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    add(prefix + ".dense.weight", arch.width, in);
    add(prefix + ".bn.gamma", arch.width, 1);
    add(prefix + ".bn.beta", arch.width, 1);
    in = arch.width;
  }
  add("head.weight", 1, arch.width);
  add("head.bias", 1, 1);
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

StatisticsNetwork StatisticsNetwork::initialized(const Architecture& arch, std::uint64_t seed) {
  StatisticsNetwork net(arch);
  const CounterRng rng = CounterRng(seed).derive("mine-init");
  for (std::size_t s = 0; s < net.layout_.size(); ++s) {
    const TensorSlot& slot = net.layout_[s];
    auto w = net.view(slot, net.theta_);
    if (slot.name.ends_with(".weight")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(slot.cols));
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        w.data()[i] = bound * (2.0 * rng.uniform(s, static_cast<std::uint64_t>(i)) - 1.0);
      }
    } else if (slot.name.ends_with(".gamma")) {
      w.setOnes();
    } else {
      w.setZero();
    }
  }
  return net;
}

const TensorSlot& StatisticsNetwork::slot(std::string_view name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw ConfigError("no parameter tensor named '" + std::string(name) + "'");
}

Eigen::Map<const Eigen::MatrixXd> StatisticsNetwork::view(const TensorSlot& s) const {
  return {theta_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> StatisticsNetwork::view(const TensorSlot& s, Eigen::VectorXd& flat) const {
  return {flat.data() + s.offset, s.rows, s.cols};
}

Eigen::VectorXd StatisticsNetwork::forward(const Eigen::MatrixXd& batch) const {
  ForwardCache cache;
  return forward(batch, cache);
}

Eigen::VectorXd StatisticsNetwork::forward(const Eigen::MatrixXd& batch, ForwardCache& cache) const {
  if (batch.cols() != arch_.input_dim) throw ConfigError("batch width does not match the network input");
  if (batch.rows() < 1) throw ConfigError("empty batch");
  if (!batch.allFinite()) throw NumericError("non-finite network input");
  const double n = static_cast<double>(batch.rows());
  const auto depth = static_cast<std::size_t>(arch_.depth);
  cache.input = batch.transpose();
  cache.normed.resize(depth);
  cache.inv_std.resize(depth);
  cache.shifted.resize(depth);
  cache.output.resize(depth);

  const Eigen::MatrixXd* prev = &cache.input;
  for (std::size_t b = 0; b < depth; ++b) {
    const auto w = view(layout_[3 * b]);
    const auto gamma = view(layout_[3 * b + 1]).col(0);
    const auto beta = view(layout_[3 * b + 2]).col(0);

    Eigen::MatrixXd z = w * *prev;
    const Eigen::VectorXd mean = z.rowwise().sum() / n;
    z.colwise() -= mean;
    const Eigen::VectorXd var = z.array().square().rowwise().sum() / n;
    cache.inv_std[b] = (var.array() + arch_.bn_epsilon).rsqrt();
    cache.normed[b] = z.array().colwise() * cache.inv_std[b].array();
    cache.shifted[b] = (cache.normed[b].array().colwise() * gamma.array()).colwise() + beta.array();
    // max(y, 0) + exp(min(y, 0)) - 1 keeps the whole expression vectorized.
    const auto& y = cache.shifted[b].array();
    cache.output[b] = y.max(0.0) + (y.min(0.0).exp() - 1.0);
    if (!cache.output[b].allFinite()) {
      throw NumericError("non-finite activation in block " + std::to_string(b));
    }
    prev = &cache.output[b];
  }
  const auto head_w = view(layout_[3 * depth]);
  const double head_b = theta_[static_cast<Eigen::Index>(layout_[3 * depth + 1].offset)];
  Eigen::VectorXd scores = (head_w * *prev).transpose();
  scores.array() += head_b;
  if (!scores.allFinite()) throw NumericError("non-finite activation in output layer");
  return scores;
}

Eigen::VectorXd StatisticsNetwork::backward(const ForwardCache& cache, const Eigen::VectorXd& dscores) const {
  const auto depth = static_cast<std::size_t>(arch_.depth);
  if (cache.output.size() != depth || cache.input.cols() != dscores.size()) {
    throw ConfigError("gradient shape does not match the cached forward pass");
  }
  const double n = static_cast<double>(dscores.size());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());

  const auto head_w = view(layout_[3 * depth]);
  view(layout_[3 * depth], grad) = (cache.output[depth - 1] * dscores).transpose();
  grad[static_cast<Eigen::Index>(layout_[3 * depth + 1].offset)] = dscores.sum();

  Eigen::MatrixXd d_out = head_w.transpose() * dscores.transpose();
  for (std::size_t bb = depth; bb-- > 0;) {
    const auto w = view(layout_[3 * bb]);
    const auto gamma = view(layout_[3 * bb + 1]).col(0);
    const Eigen::MatrixXd& normed = cache.normed[bb];

    // elu + 1 exceeds 1 exactly when y > 0, so min(elu + 1, 1) is the derivative.
    const Eigen::ArrayXXd d_shifted = d_out.array() * (cache.output[bb].array() + 1.0).min(1.0);

    view(layout_[3 * bb + 1], grad).col(0) = (d_shifted * normed.array()).rowwise().sum().matrix();
    view(layout_[3 * bb + 2], grad).col(0) = d_shifted.rowwise().sum().matrix();

    const Eigen::ArrayXXd d_normed = d_shifted.colwise() * gamma.array();
    const Eigen::ArrayXd sum_d = d_normed.rowwise().sum();
    const Eigen::ArrayXd sum_dx = (d_normed * normed.array()).rowwise().sum();
    Eigen::MatrixXd d_pre =
        ((n * d_normed).colwise() - sum_d - normed.array().colwise() * sum_dx).colwise() *
        (cache.inv_std[bb].array() / n);

    const Eigen::MatrixXd& prev = bb == 0 ? cache.input : cache.output[bb - 1];
    view(layout_[3 * bb], grad) = d_pre * prev.transpose();
    if (bb > 0) d_out = w.transpose() * d_pre;
  }
  return grad;
}

}  // namespace mlatmi::mine
