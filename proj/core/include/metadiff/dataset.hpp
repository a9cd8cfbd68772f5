#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metadiff/grid.hpp"
#include "metadiff/rng.hpp"
#include "metadiff/surrogate.hpp"

namespace metadiff {

/// Index ranges of the condition vector. Shared by training, sampling and
/// evaluation.
struct ConditionLayout {
  static constexpr std::size_t kReBegin = 0;
  static constexpr std::size_t kImBegin = kFrequencyPoints;
  static constexpr std::size_t kSpectralEnd = kSpectralLen;
  static constexpr std::size_t kW1 = 52;
  static constexpr std::size_t kH2 = 53;
  static constexpr std::size_t kN2 = 54;
  static constexpr std::size_t kLength = 55;
};

/// 52 spectral samples followed by min-max normalized W1, H2, N2.
/// The all-zero vector is reserved as the unconditional token.
class ConditionVector {
 public:
  ConditionVector() = default;
  explicit ConditionVector(const std::array<double, ConditionLayout::kLength>& values)
      : values_(values) {}

  static ConditionVector mask() { return ConditionVector(); }

  std::span<const double, ConditionLayout::kLength> values() const { return values_; }
  std::span<const double, kSpectralLen> spectral() const {
    return std::span(values_).first<kSpectralLen>();
  }
  double operator[](std::size_t i) const { return values_.at(i); }

  bool is_mask() const noexcept;
  /// Spectral entries in [-1, 1], normalized extras in [0, 1], all finite.
  bool valid() const noexcept;
  /// Throws OutOfRange describing the first violated invariant.
  void check() const;
  /// Extras recovered from the normalized entries.
  ExtraParams extras() const;

  bool operator==(const ConditionVector&) const = default;

 private:
  std::array<double, ConditionLayout::kLength> values_{};
};

/// (v - lo) / (hi - lo) per field. Throws OutOfRange.
std::array<double, 3> normalize_extras(const ExtraParams& e);
ExtraParams denormalize_extras(std::span<const double, 3> normalized);

inline constexpr double kMaskCollisionOffset = 1e-9;

/// Concatenates response and normalized extras. A result that would equal
/// the unconditional token gets kMaskCollisionOffset at the N2 slot.
ConditionVector make_condition(const SpectralResponse& resp, const ExtraParams& e);

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);
/// Accepts "train", "val" or "test"; throws InvalidConfig.
Split parse_split(const std::string& name);

struct DatasetManifest {
  std::uint32_t version = 1;
  std::size_t grid_side = 16;
  std::size_t total = 0;
  std::array<std::size_t, 3> counts{};  ///< train, val, test
  std::array<std::size_t, 3> split_ratio{8, 1, 1};
  std::uint64_t proxy_seed = ProxyParams::kDefaultSeed;
  std::size_t proxy_features = ProxyParams::kDefaultFeatures;
  std::uint64_t creation_seed = 0;

  std::size_t quadrant_side() const noexcept { return grid_side / 2; }
  ProxyParams proxy() const { return ProxyParams(proxy_seed, proxy_features); }
  /// Canonical JSON (sorted keys), also embedded in the container.
  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  bool operator==(const DatasetManifest&) const = default;
};

/// A stored sample: binary quadrant and its condition.
struct Sample {
  QuadrantGrid quadrant;
  ConditionVector condition;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::array<std::vector<Sample>, 3> splits;

  std::vector<Sample>& split(Split s) { return splits[static_cast<std::size_t>(s)]; }
  const std::vector<Sample>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

/// Training view of a sample: signed quadrant in {-1, +1}.
struct SignedSample {
  Matrix x0;
  ConditionVector condition;
};

/// Structure prior: quadrant cells Bernoulli(p), p ~ U(0.2, 0.8), then one
/// pass of 3x3 majority smoothing on the mirrored full grid (in-bounds
/// neighbours only; ties go to 0).
QuadrantGrid sample_structure(Rng& rng, std::size_t quadrant_side);
QuadrantGrid majority_smooth(const QuadrantGrid& q);

/// Synthetic corpus labelled by the proxy. Extras are canonicalized to the
/// values recoverable from the float-stored condition before labelling.
/// Throws InvalidConfig if n < 10 or grid_side is odd or < 2.
Dataset generate_dataset(std::size_t n, std::size_t grid_side, const ProxyParams& proxy,
                         std::uint64_t seed);

inline constexpr std::uint32_t kDatasetVersion = 1;

/// Container layout (little-endian):
///   "MDIF" | u32 version | u64 manifest length | manifest JSON |
///   u64 CRC-64 of the preceding header bytes |
///   for train, val, test: u64 count | f32 quadrants (row-major) |
///   f32 conditions (x55) | u64 CRC-64 of this split block.
std::vector<std::byte> encode_dataset(const Dataset& ds);
/// Throws CorruptContainer or VersionMismatch.
Dataset decode_dataset(std::span<const std::byte> bytes);

inline constexpr const char* kDatasetFileName = "dataset.mdif";
inline constexpr const char* kManifestFileName = "manifest.json";

/// Writes <dir>/dataset.mdif and <dir>/manifest.json, creating dir.
void write_dataset(const std::string& dir, const Dataset& ds);
/// `path` may be the container file or its directory.
Dataset load_dataset(const std::string& path);
std::vector<SignedSample> load_split(const std::string& path, Split split);
std::vector<SignedSample> to_signed_samples(const std::vector<Sample>& samples);

/// Rounds through float, as the container stores values.
double to_f32(double v);

}  // namespace metadiff
