#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "metadiff/grid.hpp"

namespace metadiff {

inline constexpr std::size_t kFrequencyPoints = 26;
inline constexpr std::size_t kSpectralLen = 2 * kFrequencyPoints;
inline constexpr double kBandStartTHz = 30.0;
inline constexpr double kBandEndTHz = 60.0;

/// Transmission response: 26 real then 26 imaginary samples over the band.
struct SpectralResponse {
  std::array<double, kSpectralLen> values{};

  std::span<const double, kFrequencyPoints> re() const {
    return std::span(values).first<kFrequencyPoints>();
  }
  std::span<const double, kFrequencyPoints> im() const {
    return std::span(values).last<kFrequencyPoints>();
  }
  bool operator==(const SpectralResponse&) const = default;
};

/// Frozen weights of the analytic forward proxy.
///
/// Structure features (14): 2*fill - 1; ten cosine-transform coefficients of
/// the quadrant for orders u + v <= 3, ordered by u + v then u, each the mean
/// of x_ij cos(pi (2i+1) u / 2n) cos(pi (2j+1) v / 2n) and scaled by 2 except
/// (0,0); then 2 * normalized W1/H2/N2 - 1. Hidden features are
/// h = tanh(P r + q). Output k (re block then im block) is
///   tanh(a_k . h + b_k sin(omega_k * N2 * H2 * f_k + phi_k)),
/// f_k = 1 + (k mod 26) / 25 (frequency over 30 THz), rounded to float.
///
/// Weights are drawn from Rng(seed) in this order: P row-major
/// (normal * 2/sqrt(14)), q (normal * 0.1), a row-major
/// (normal * 1.5/sqrt(n_features)), b (uniform [0.2, 0.5)), omega (uniform
/// [0.5, 2)), phi (uniform [0, 2 pi)).
class ProxyParams {
 public:
  static constexpr std::size_t kRawFeatures = 14;
  static constexpr std::uint64_t kDefaultSeed = 7;
  static constexpr std::size_t kDefaultFeatures = 24;

  explicit ProxyParams(std::uint64_t seed = kDefaultSeed,
                       std::size_t n_features = kDefaultFeatures);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t n_features() const noexcept { return n_features_; }

  /// Raw feature vector of a binary quadrant plus extras.
  std::array<double, kRawFeatures> raw_features(const Matrix& quadrant, const ExtraParams& e) const;
  /// Response from a binary quadrant (no symmetry check needed).
  SpectralResponse respond(const Matrix& quadrant, const ExtraParams& e) const;

 private:
  std::uint64_t seed_;
  std::size_t n_features_;
  std::vector<double> proj_;    // [n_features, 14]
  std::vector<double> offset_;  // [n_features]
  std::vector<double> mix_;     // [52, n_features]
  std::array<double, kSpectralLen> amp_{}, omega_{}, phase_{};
};

/// Throws NonBinaryInput, SymmetryViolation or OutOfRange.
SpectralResponse solve(const StructureGrid& grid, const ExtraParams& extra, const ProxyParams& proxy);

/// Elementwise solve; order-preserving and run in parallel.
std::vector<SpectralResponse> solve_batch(std::span<const StructureGrid> grids,
                                          std::span<const ExtraParams> extras,
                                          const ProxyParams& proxy);

}  // namespace metadiff
