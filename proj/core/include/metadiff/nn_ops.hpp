#pragma once

// Layer kernels with hand-written backward passes.
//
// Every kernel processes samples independently and accumulates each output
// element in a fixed order, so results for one sample do not depend on the
// rest of the batch. Backward functions add into parameter gradients and
// overwrite input gradients.

#include <span>
#include <vector>

#include "metadiff/tensor.hpp"

namespace metadiff::nn {

/// Same-padded stride-1 convolution with an odd square kernel.
/// weight: [out, in, k, k].
void conv2d_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
                    std::size_t out_channels, std::size_t kernel, Tensor& y);
void conv2d_backward(const Tensor& x, std::span<const double> weight, std::size_t kernel,
                     const Tensor& dy, Tensor* dx, std::span<double> dweight,
                     std::span<double> dbias);

/// 2x2 stride-2 transposed convolution. weight: [in, out, 2, 2].
void tconv2x2_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, std::size_t out_channels, Tensor& y);
void tconv2x2_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy,
                       Tensor& dx, std::span<double> dweight, std::span<double> dbias);

struct GroupNormStats {
  std::vector<double> mean;  ///< [n * groups]
  std::vector<double> rstd;  ///< [n * groups]
};

inline constexpr double kGroupNormEps = 1e-5;

void group_norm_forward(const Tensor& x, std::span<const double> gamma,
                        std::span<const double> beta, std::size_t groups, Tensor& y,
                        GroupNormStats& stats);
void group_norm_backward(const Tensor& x, std::span<const double> gamma, std::size_t groups,
                         const GroupNormStats& stats, const Tensor& dy, Tensor& dx,
                         std::span<double> dgamma, std::span<double> dbeta);

void silu_forward(const Tensor& x, Tensor& y);
void silu_backward(const Tensor& x, const Tensor& dy, Tensor& dx);

void avg_pool2_forward(const Tensor& x, Tensor& y);
void avg_pool2_backward(const Tensor& dy, Tensor& dx);

/// Dense layer on per-sample feature vectors. weight: [out, in].
void linear_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
                    std::size_t out_features, Tensor& y);
/// dx may be null when the input gradient is not needed.
void linear_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy,
                     Tensor* dx, std::span<double> dweight, std::span<double> dbias);

}  // namespace metadiff::nn
