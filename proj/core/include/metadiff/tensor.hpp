#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace metadiff {

/// Batch of feature maps in NCHW layout. Dense vectors use h == w == 1.
struct Tensor {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

  std::size_t plane() const noexcept { return h * w; }
  std::size_t per_sample() const noexcept { return c * h * w; }
  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const Tensor& o) const noexcept {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::span<double> sample(std::size_t i) {
    return {data.data() + i * per_sample(), per_sample()};
  }
  std::span<const double> sample(std::size_t i) const {
    return {data.data() + i * per_sample(), per_sample()};
  }
  double* channel(std::size_t i, std::size_t ch) { return data.data() + (i * c + ch) * plane(); }
  const double* channel(std::size_t i, std::size_t ch) const {
    return data.data() + (i * c + ch) * plane();
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace metadiff
