#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metadiff/matrix.hpp"
#include "metadiff/tensor.hpp"

namespace metadiff {

/// Shape of the noise-prediction network.
///
/// Encoder level i runs a residual block at side quadrant_side / 2^i with
/// channel_widths[i] channels; levels are separated by 2x2 average pooling.
/// The deepest map is flattened through a bottleneck_dim vector and added
/// back, then each decoder level upsamples with a 2x2 transposed
/// convolution, adds the projected time and condition embeddings, concatenates
/// the encoder skip and runs a residual block.
struct DenoiserConfig {
  std::size_t quadrant_side = 8;
  std::vector<std::size_t> channel_widths{16, 32};
  std::size_t bottleneck_dim = 64;
  std::size_t time_embed_dim = 32;
  std::size_t cond_embed_dim = 64;
  std::size_t condition_len = 55;
  std::size_t norm_groups = 8;
  /// Largest timestep the model accepts; equals the training schedule's T.
  std::size_t timesteps = 200;

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
  std::size_t levels() const noexcept { return channel_widths.size(); }
  /// Side of the deepest feature map.
  std::size_t bottom_side() const noexcept {
    return quadrant_side >> (channel_widths.size() - 1);
  }

  std::string to_json() const;
  static DenoiserConfig from_json(const std::string& text);

  /// 32x32 quadrant, three levels, 512-wide bottleneck.
  static DenoiserConfig full_scale();

  bool operator==(const DenoiserConfig&) const = default;
};

/// Named tensors packed into one flat buffer.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t count() const noexcept { return values_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  /// Index of a named entry; throws InvalidConfig if absent.
  std::size_t find(const std::string& name) const;

  std::span<double> view(std::size_t i) {
    return {values_.data() + entries_[i].offset, entries_[i].size};
  }
  std::span<const double> view(std::size_t i) const {
    return {values_.data() + entries_[i].offset, entries_[i].size};
  }
  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

 private:
  std::vector<Entry> entries_;
  std::vector<double> values_;
};

/// Test hooks that disconnect parts of the graph.
struct ForwardOptions {
  /// drop_skip[i] zeroes the encoder contribution at level i (the deepest
  /// level's contribution is the residual around the bottleneck).
  std::vector<bool> drop_skip;
};

/// Sinusoidal encoding of a timestep: [sin(t f_0), ..., cos(t f_0), ...] with
/// f_i = 10000^(-i / (dim / 2)). dim must be even.
std::vector<double> sinusoidal_encoding(std::size_t t, std::size_t dim);

/// Noise-prediction network eps_theta(x_t, t, c).
///
/// Parameters hold single-precision values (arithmetic is double); the
/// optimizer rounds after every update so checkpoints store them exactly.
class DenoiserModel {
 public:
  /// Deterministic given (config, seed). Throws InvalidConfig.
  static DenoiserModel init(const DenoiserConfig& config, std::uint64_t seed);
  /// Fresh parameter layout with all values zero.
  static DenoiserModel zeros(const DenoiserConfig& config);

  const DenoiserConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.count(); }

  /// x: [N, 1, side, side]; t: N timesteps in [1, timesteps]; cond: N x
  /// condition_len (an all-zero row is the unconditional token).
  /// Throws ShapeMismatch, NonFiniteInput or InvalidTimestep.
  Tensor forward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                 const ForwardOptions& options = {}) const;

  /// Mean squared error against target_eps and its exact gradient with
  /// respect to every parameter. `grad` is resized and overwritten.
  double backward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                  const Tensor& target_eps, std::vector<double>& grad) const;

  /// Learned time embedding (sinusoidal base followed by the time MLP).
  std::vector<double> embed_time(std::size_t t) const;

  /// FNV-1a over the parameter bytes.
  std::uint64_t checksum() const;

  /// Rounds every parameter to the nearest float.
  void round_to_float();

 /// Opaque table of parameter indices per layer.
  struct Layout;

 private:
  explicit DenoiserModel(const DenoiserConfig& config);

  DenoiserConfig config_;
  ParameterSet params_;
  std::shared_ptr<const Layout> layout_;
};

}  // namespace metadiff
