#include "metadiff/surrogate.hpp"

#include <cmath>
#include <numbers>

#include "metadiff/error.hpp"
#include "metadiff/parallel.hpp"
#include "metadiff/rng.hpp"

namespace metadiff {

namespace {

// (u, v) with u + v <= 3, by total order then u.
constexpr std::array<std::array<int, 2>, 10> kOrders = {{
    {0, 0}, {0, 1}, {1, 0}, {0, 2}, {1, 1}, {2, 0}, {0, 3}, {1, 2}, {2, 1}, {3, 0}}};

double normalized(double v, double lo, double hi) { return (v - lo) / (hi - lo); }

}  // namespace

ProxyParams::ProxyParams(std::uint64_t seed, std::size_t n_features)
    : seed_(seed), n_features_(n_features) {
  if (n_features == 0) throw InvalidConfig("proxy.n_features must be positive");
  Rng rng(seed);
  proj_.resize(n_features * kRawFeatures);
  offset_.resize(n_features);
  mix_.resize(kSpectralLen * n_features);
  const double proj_scale = 2.0 / std::sqrt(static_cast<double>(kRawFeatures));
  for (double& v : proj_) v = rng.normal() * proj_scale;
  for (double& v : offset_) v = rng.normal() * 0.1;
  const double mix_scale = 1.5 / std::sqrt(static_cast<double>(n_features));
  for (double& v : mix_) v = rng.normal() * mix_scale;
  for (double& v : amp_) v = rng.uniform(0.2, 0.5);
  for (double& v : omega_) v = rng.uniform(0.5, 2.0);
  for (double& v : phase_) v = rng.uniform(0.0, 2.0 * std::numbers::pi);
}

std::array<double, ProxyParams::kRawFeatures> ProxyParams::raw_features(const Matrix& q,
                                                                          const ExtraParams& e) const {
  const std::size_t n = q.rows();
  std::array<std::vector<double>, 4> basis;
  for (int u = 0; u < 4; ++u) {
    basis[u].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      basis[u][i] = std::cos(std::numbers::pi * static_cast<double>((2 * i + 1) * u) /
                             static_cast<double>(2 * n));
    }
  }
  const auto cells = static_cast<double>(n * n);
  std::array<double, kRawFeatures> r{};
  double fill = 0.0;
  for (double v : q.data()) fill += v;
  r[0] = 2.0 * fill / cells - 1.0;
  for (std::size_t k = 0; k < kOrders.size(); ++k) {
    const auto [u, v] = kOrders[k];
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) row += q(i, j) * basis[v][j];
      acc += basis[u][i] * row;
    }
    r[1 + k] = acc / cells * (k == 0 ? 1.0 : 2.0);
  }
  r[11] = 2.0 * normalized(e.w1, ExtraParams::kW1Min, ExtraParams::kW1Max) - 1.0;
  r[12] = 2.0 * normalized(e.h2, ExtraParams::kH2Min, ExtraParams::kH2Max) - 1.0;
  r[13] = 2.0 * normalized(e.n2, ExtraParams::kN2Min, ExtraParams::kN2Max) - 1.0;
  return r;
}

SpectralResponse ProxyParams::respond(const Matrix& quadrant, const ExtraParams& e) const {
  const auto r = raw_features(quadrant, e);
  std::vector<double> h(n_features_);
  for (std::size_t f = 0; f < n_features_; ++f) {
    double acc = offset_[f];
    for (std::size_t i = 0; i < kRawFeatures; ++i) acc += proj_[f * kRawFeatures + i] * r[i];
    h[f] = std::tanh(acc);
  }
  SpectralResponse out;
  const double optical = e.n2 * e.h2;
  for (std::size_t k = 0; k < kSpectralLen; ++k) {
    const double freq = 1.0 + static_cast<double>(k % kFrequencyPoints) / 25.0;
    double acc = 0.0;
    for (std::size_t f = 0; f < n_features_; ++f) acc += mix_[k * n_features_ + f] * h[f];
    acc += amp_[k] * std::sin(omega_[k] * optical * freq + phase_[k]);
    out.values[k] = static_cast<float>(std::tanh(acc));
  }
  return out;
}

SpectralResponse solve(const StructureGrid& grid, const ExtraParams& extra, const ProxyParams& proxy) {
  if (grid.domain() != GridDomain::kBinary01) throw NonBinaryInput("solve expects a binary grid");
  if (!extra.in_range()) throw OutOfRange("extra parameters outside their ranges");
  const QuadrantGrid q = reduce_quadrant(grid);
  return proxy.respond(q.values(), extra);
}

std::vector<SpectralResponse> solve_batch(std::span<const StructureGrid> grids,
                                          std::span<const ExtraParams> extras,
                                          const ProxyParams& proxy) {
  if (grids.size() != extras.size()) throw LengthMismatch("solve_batch: grids and extras differ in length");
  std::vector<SpectralResponse> out(grids.size());
  parallel_for(grids.size(), [&](std::size_t i) { out[i] = solve(grids[i], extras[i], proxy); });
  return out;
}

}  // namespace metadiff
