#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlatmi/env.hpp"
#include "mlatmi/eval.hpp"
#include "mlatmi/measure.hpp"
#include "mlatmi/mine.hpp"

namespace mlatmi {

// Pipeline configuration. Every default mirrors the reference setup: 0.2 m
// cells, sigma 0.2 m Gaussian noise, 7.4 m sensing range, D = 1000,
// N = K and a 20 000 epoch averaging window.
struct RunConfig {
  env::Room room;
  double cell_size = 0.2;
  std::optional<env::ReferencePlacement> placement;
  std::optional<std::string> suite_file;
  std::optional<eval::SuiteSpec> suite_spec;
  env::PlacementRules rules;

  measure::NoiseModel noise;
  std::vector<measure::NoiseModel> study_noises;  // defaults to {noise}
  std::size_t realizations = 1000;

  mine::ModelSize model = mine::ModelSize::small;
  std::vector<mine::ModelSize> study_sizes;  // defaults to {model}
  mine::TrainConfig train;
  std::size_t batch = 0;  // 0 = K
  double bn_epsilon = 1e-8;
  std::size_t replicates = 10;
  std::vector<std::string> parents;  // checkpoint paths for fine-tuning

  std::string output_dir = "out";
  std::uint64_t seed = 0;

  std::string config_hash;  // FNV-1a of the canonical JSON

  const env::ReferencePlacement& require_placement() const;
};

// Throws ConfigError with "line L, column C" for JSON syntax errors and the
// offending field path for schema errors.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

// Named sub-streams fanned out from the master seed.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage);

}  // namespace mlatmi
