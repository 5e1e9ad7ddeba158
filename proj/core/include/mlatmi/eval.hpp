#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlatmi/errors.hpp"
#include "mlatmi/measure.hpp"
#include "mlatmi/mine.hpp"

namespace mlatmi::eval {

class UndefinedCorrelation : public NumericError {
 public:
  using NumericError::NumericError;
};

// Population Pearson coefficient. Throws ConfigError on length mismatch or
// fewer than 2 samples, UndefinedCorrelation when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

// Fraction of concordant pairs among pairs with no ties.
double concordance_fraction(std::span<const double> a, std::span<const double> b);

struct PlacementSuite {
  env::Room room;
  double cell_size = 0.2;
  std::vector<env::ReferencePlacement> placements;
};

struct SuiteSpec {
  std::size_t count = 50;
  std::size_t num_refs = 4;
  double sensing_range = 7.4;
  env::PlacementRules rules;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 1000000;
};

// Rejection sampling: anchors uniform over the room's bounding box, kept when
// the whole placement passes validate_placement.
PlacementSuite generate_suite(const env::Room& room, double cell_size, const SuiteSpec& spec);

std::string suite_to_json(const PlacementSuite& suite);
PlacementSuite suite_from_json(const std::string& text);

struct CorrelationReport {
  std::string metric_a;
  std::string metric_b;
  std::vector<std::string> ids;
  std::vector<double> a;
  std::vector<double> b;
  std::optional<double> rho;  // empty when undefined
  double concordance = 0.0;
  std::vector<std::string> excluded;  // ids dropped with a reason
};

CorrelationReport correlate(std::string metric_a, std::string metric_b, std::vector<std::string> ids,
                            std::vector<double> a, std::vector<double> b);

// CSV: id,<metric_a>,<metric_b>
void write_scatter(std::ostream& os, const CorrelationReport& report);

struct ConvergenceConfig {
  std::vector<mine::ModelSize> sizes{mine::ModelSize::small};
  std::vector<measure::NoiseModel> noises{measure::NoiseModel{}};
  std::size_t replicates = 10;
  std::size_t mc_realizations = 1000;
  mine::TrainConfig train;
  std::uint64_t seed = 0;
};

struct ConvergenceCurve {
  std::string placement_id;
  mine::ModelSize size = mine::ModelSize::small;
  measure::NoiseModel noise;
  std::vector<double> mean;  // per epoch across replicates
  std::vector<double> stddev;
  std::vector<double> final_estimates;  // trailing-window estimate per replicate
  std::size_t diverged = 0;
  double mc_reference = 0.0;

  double mean_estimate() const;
};

std::vector<ConvergenceCurve> convergence_study(const PlacementSuite& suite, const ConvergenceConfig& cfg);

// CSV: epoch,mean,std,mc
void write_convergence(std::ostream& os, const ConvergenceCurve& curve, std::size_t stride = 1);

struct ConsistencyConfig {
  mine::ModelSize size = mine::ModelSize::small;
  measure::NoiseModel noise;
  std::size_t mc_realizations = 1000;
  mine::TrainConfig train;
  std::uint64_t seed = 0;
};

CorrelationReport consistency_study(const PlacementSuite& suite, const ConsistencyConfig& cfg);

struct PlacementMetrics {
  std::string id;
  double rmse = 0.0;
  double peb = 0.0;
  double mi = 0.0;
  std::size_t singular_cells = 0;
};

struct MetricStudyConfig {
  std::vector<measure::NoiseModel> noises;
  std::size_t realizations = 1000;
  std::uint64_t seed = 0;
};

struct MetricStudyResult {
  measure::NoiseModel noise;
  std::vector<PlacementMetrics> metrics;
  CorrelationReport rmse_vs_peb;
  CorrelationReport rmse_vs_mi;
};

// PEB always uses the Gaussian model at the noise's sigma; RMSE and MI use the
// actual noise.
PlacementMetrics placement_metrics(const measure::Scene& scene, const measure::NoiseModel& noise,
                                   std::size_t realizations, std::uint64_t seed);

std::vector<MetricStudyResult> metric_correlation_study(const PlacementSuite& suite,
                                                        const MetricStudyConfig& cfg);

}  // namespace mlatmi::eval
