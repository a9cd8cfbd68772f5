#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metadiff/dataset.hpp"
#include "metadiff/denoiser.hpp"
#include "metadiff/sampler.hpp"
#include "metadiff/surrogate.hpp"

namespace metadiff {

/// Mean absolute difference over the 52 spectral points.
/// Throws LengthMismatch unless both spans have length 52.
double sample_mae(std::span<const double> target, std::span<const double> generated);

inline constexpr std::size_t kHistogramBins = 40;

struct Histogram {
  std::vector<double> edges;  ///< kHistogramBins + 1 edges over [0, max]
  std::vector<std::size_t> counts;
};

struct EvalReport {
  std::vector<double> per_sample;
  double mean = 0.0;
  double p95 = 0.0;
  Histogram histogram;

  /// Aggregates a list of per-sample errors. Empty lists give an empty report.
  static EvalReport from_errors(std::vector<double> errors);
  bool empty() const noexcept { return per_sample.empty(); }
};

/// Smallest element v such that at least q of the values are <= v.
double nearest_rank_percentile(std::vector<double> values, double q);

/// Produces one binary quadrant per condition of a split.
using QuadrantGenerator = std::function<std::vector<QuadrantGrid>(const std::vector<Sample>&)>;

/// Returns each sample's own stored quadrant.
QuadrantGenerator oracle_generator();
/// Draws from the dataset structure prior, stream derive_seed(seed, i).
QuadrantGenerator random_generator(std::size_t quadrant_side, std::uint64_t seed);
/// Guided sampling through generate_many.
QuadrantGenerator model_generator(const DenoiserModel& model, const NoiseSchedule& sched,
                                  double guidance_w, std::uint64_t seed,
                                  const SamplerOptions& options = {});

/// MAE of one quadrant against a stored condition.
double score_quadrant(const QuadrantGrid& q, const ConditionVector& c, const ProxyParams& proxy);

/// Throws InvalidConfig on an empty split.
EvalReport evaluate_generator(const std::vector<Sample>& split, const ProxyParams& proxy,
                              const QuadrantGenerator& generator);
EvalReport evaluate_model(const DenoiserModel& model, const NoiseSchedule& sched,
                          const std::vector<Sample>& split, const ProxyParams& proxy,
                          double guidance_w, std::uint64_t seed,
                          const SamplerOptions& options = {});

inline constexpr const char* kPerSampleFile = "per_sample.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kHistogramFile = "histogram.dat";

/// Writes per_sample.csv, summary.json and histogram.dat into dir.
/// Throws InvalidConfig for an empty report, IoError on write failure.
void export_report(const EvalReport& report, const std::string& dir);
/// Reads back per_sample.csv.
std::vector<double> read_per_sample_csv(const std::string& path);
std::string summary_json(const EvalReport& report);

}  // namespace metadiff
