#include "metadiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "metadiff/binary_io.hpp"
#include "metadiff/error.hpp"
#include "metadiff/parallel.hpp"

namespace metadiff {

double sample_mae(std::span<const double> target, std::span<const double> generated) {
  if (target.size() != kSpectralLen || generated.size() != kSpectralLen) {
    throw LengthMismatch("sample_mae: expected 52 values, got " + std::to_string(target.size()) +
                         " and " + std::to_string(generated.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < kSpectralLen; ++i) sum += std::abs(target[i] - generated[i]);
  return sum / static_cast<double>(kSpectralLen);
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidConfig("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  return values[k - 1];
}

EvalReport EvalReport::from_errors(std::vector<double> errors) {
  EvalReport r;
  r.per_sample = std::move(errors);
  if (r.per_sample.empty()) return r;
  const auto n = r.per_sample.size();
  double sum = 0.0;
  for (double e : r.per_sample) sum += e;
  r.mean = sum / static_cast<double>(n);
  // ceil(0.95 n) in integers.
  std::vector<double> sorted = r.per_sample;
  std::sort(sorted.begin(), sorted.end());
  r.p95 = sorted[(95 * n + 99) / 100 - 1];

  const double hi = sorted.back() > 0.0 ? sorted.back() : 1.0;
  r.histogram.edges.resize(kHistogramBins + 1);
  for (std::size_t i = 0; i <= kHistogramBins; ++i) {
    r.histogram.edges[i] = hi * static_cast<double>(i) / kHistogramBins;
  }
  r.histogram.counts.assign(kHistogramBins, 0);
  for (double e : r.per_sample) {
    auto bin = static_cast<std::size_t>(e / hi * kHistogramBins);
    r.histogram.counts[std::min(bin, kHistogramBins - 1)]++;
  }
  return r;
}

QuadrantGenerator oracle_generator() {
  return [](const std::vector<Sample>& split) {
    std::vector<QuadrantGrid> out;
    out.reserve(split.size());
    for (const Sample& s : split) out.push_back(s.quadrant);
    return out;
  };
}

QuadrantGenerator random_generator(std::size_t quadrant_side, std::uint64_t seed) {
  return [quadrant_side, seed](const std::vector<Sample>& split) {
    std::vector<QuadrantGrid> out(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
      Rng rng(derive_seed(seed, i));
      out[i] = sample_structure(rng, quadrant_side);
    }
    return out;
  };
}

QuadrantGenerator model_generator(const DenoiserModel& model, const NoiseSchedule& sched,
                                  double guidance_w, std::uint64_t seed,
                                  const SamplerOptions& options) {
  return [&model, &sched, guidance_w, seed, options](const std::vector<Sample>& split) {
    std::vector<ConditionVector> conds;
    conds.reserve(split.size());
    for (const Sample& s : split) conds.push_back(s.condition);
    return generate_many_quadrants(model, sched, conds, guidance_w, seed, options);
  };
}

double score_quadrant(const QuadrantGrid& q, const ConditionVector& c, const ProxyParams& proxy) {
  const SpectralResponse r = solve(expand_symmetric(q), c.extras(), proxy);
  return sample_mae(c.spectral(), r.values);
}

EvalReport evaluate_generator(const std::vector<Sample>& split, const ProxyParams& proxy,
                              const QuadrantGenerator& generator) {
  if (split.empty()) throw InvalidConfig("split: nothing to evaluate");
  const std::vector<QuadrantGrid> quads = generator(split);
  if (quads.size() != split.size()) throw LengthMismatch("generator returned wrong sample count");
  std::vector<double> errors(split.size());
  parallel_for(split.size(), [&](std::size_t i) {
    errors[i] = score_quadrant(quads[i], split[i].condition, proxy);
  });
  return EvalReport::from_errors(std::move(errors));
}

EvalReport evaluate_model(const DenoiserModel& model, const NoiseSchedule& sched,
                          const std::vector<Sample>& split, const ProxyParams& proxy,
                          double guidance_w, std::uint64_t seed, const SamplerOptions& options) {
  return evaluate_generator(split, proxy, model_generator(model, sched, guidance_w, seed, options));
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string summary_json(const EvalReport& report) {
  nlohmann::json j;
  j["count"] = report.per_sample.size();
  j["mean_mae"] = report.mean;
  j["p95_mae"] = report.p95;
  j["max_mae"] = report.empty() ? 0.0 : *std::max_element(report.per_sample.begin(),
                                                          report.per_sample.end());
  return j.dump(2);
}

void export_report(const EvalReport& report, const std::string& dir) {
  if (report.empty()) throw InvalidConfig("report: no samples to export");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);

  std::ostringstream csv;
  csv << "index,mae\n";
  for (std::size_t i = 0; i < report.per_sample.size(); ++i) {
    csv << i << ',' << fmt(report.per_sample[i]) << '\n';
  }
  write_text_file((base / kPerSampleFile).string(), csv.str());
  write_text_file((base / kSummaryFile).string(), summary_json(report) + "\n");

  std::ostringstream hist;
  hist << "# bin_lo bin_hi count\n";
  for (std::size_t i = 0; i < report.histogram.counts.size(); ++i) {
    hist << fmt(report.histogram.edges[i]) << ' ' << fmt(report.histogram.edges[i + 1]) << ' '
         << report.histogram.counts[i] << '\n';
  }
  write_text_file((base / kHistogramFile).string(), hist.str());
}

std::vector<double> read_per_sample_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "index,mae") throw CorruptContainer(path + ": unexpected header");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw CorruptContainer(path + ": malformed row");
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace metadiff
