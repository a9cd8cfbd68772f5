#include "metadiff/nn_ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "metadiff/error.hpp"

namespace metadiff::nn {

namespace {

// Column buffer [in * k * k][h * w] for one sample (zero padded).
void im2col(const double* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::vector<double>& col) {
  const std::size_t hw = h * w;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  col.assign(channels * k * k * hw, 0.0);
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const double* plane = x + ci * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col.data() + ((ci * k + ky) * k + kx) * hw;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t xx = 0; xx < w; ++xx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx) + dx;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            row[y * w + xx] = plane[sy * static_cast<std::ptrdiff_t>(w) + sx];
          }
        }
      }
    }
  }
}

// Transposed column buffer [h * w][in * k * k].
void im2col_t(const double* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
              std::vector<double>& colt) {
  const std::size_t hw = h * w;
  const std::size_t kk = channels * k * k;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  colt.assign(hw * kk, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      double* row = colt.data() + (y * w + xx) * kk;
      for (std::size_t ci = 0; ci < channels; ++ci) {
        const double* plane = x + ci * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            row[(ci * k + ky) * k + kx] = plane[sy * static_cast<std::ptrdiff_t>(w) + sx];
          }
        }
      }
    }
  }
}

// Scatter-add of a transposed column buffer back into an image.
void col2im_t(const std::vector<double>& colt, std::size_t channels, std::size_t h, std::size_t w,
              std::size_t k, double* dx) {
  const std::size_t hw = h * w;
  const std::size_t kk = channels * k * k;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  std::fill(dx, dx + channels * hw, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const double* row = colt.data() + (y * w + xx) * kk;
      for (std::size_t ci = 0; ci < channels; ++ci) {
        double* plane = dx + ci * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - pad;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - pad;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
            plane[sy * static_cast<std::ptrdiff_t>(w) + sx] += row[(ci * k + ky) * k + kx];
          }
        }
      }
    }
  }
}

void check_span(std::span<const double> s, std::size_t expected, const char* what) {
  if (s.size() != expected) {
    throw ShapeMismatch(std::string(what) + ": expected " + std::to_string(expected) +
                        " values, got " + std::to_string(s.size()));
  }
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

void conv2d_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
                    std::size_t out_channels, std::size_t kernel, Tensor& y) {
  const std::size_t kk = x.c * kernel * kernel;
  check_span(weight, out_channels * kk, "conv2d weight");
  check_span(bias, out_channels, "conv2d bias");
  const std::size_t hw = x.plane();
  y = Tensor(x.n, out_channels, x.h, x.w);
  thread_local std::vector<double> col;
  for (std::size_t n = 0; n < x.n; ++n) {
    const double* src = x.channel(n, 0);
    double* out = y.channel(n, 0);
    for (std::size_t co = 0; co < out_channels; ++co) std::fill(out + co * hw, out + (co + 1) * hw, bias[co]);
    if (kernel == 1) {
      for (std::size_t ci = 0; ci < x.c; ++ci) {
        const double* in_row = src + ci * hw;
        for (std::size_t co = 0; co < out_channels; ++co) {
          const double wv = weight[co * kk + ci];
          double* o = out + co * hw;
          for (std::size_t p = 0; p < hw; ++p) o[p] += wv * in_row[p];
        }
      }
      continue;
    }
    im2col(src, x.c, x.h, x.w, kernel, col);
    for (std::size_t r = 0; r < kk; ++r) {
      const double* col_row = col.data() + r * hw;
      for (std::size_t co = 0; co < out_channels; ++co) {
        const double wv = weight[co * kk + r];
        double* o = out + co * hw;
        for (std::size_t p = 0; p < hw; ++p) o[p] += wv * col_row[p];
      }
    }
  }
}

void conv2d_backward(const Tensor& x, std::span<const double> weight, std::size_t kernel,
                     const Tensor& dy, Tensor* dx, std::span<double> dweight,
                     std::span<double> dbias) {
  const std::size_t kk = x.c * kernel * kernel;
  const std::size_t out_channels = dy.c;
  const std::size_t hw = x.plane();
  if (dx != nullptr) *dx = Tensor(x.n, x.c, x.h, x.w);
  thread_local std::vector<double> colt;
  thread_local std::vector<double> dcolt;
  for (std::size_t n = 0; n < x.n; ++n) {
    const double* g = dy.channel(n, 0);
    for (std::size_t co = 0; co < out_channels; ++co) {
      double s = 0.0;
      for (std::size_t p = 0; p < hw; ++p) s += g[co * hw + p];
      dbias[co] += s;
    }
    im2col_t(x.channel(n, 0), x.c, x.h, x.w, kernel, colt);
    for (std::size_t co = 0; co < out_channels; ++co) {
      double* dw = dweight.data() + co * kk;
      for (std::size_t p = 0; p < hw; ++p) {
        const double gv = g[co * hw + p];
        const double* row = colt.data() + p * kk;
        for (std::size_t r = 0; r < kk; ++r) dw[r] += gv * row[r];
      }
    }
    if (dx == nullptr) continue;
    dcolt.assign(hw * kk, 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
      double* drow = dcolt.data() + p * kk;
      for (std::size_t co = 0; co < out_channels; ++co) {
        const double gv = g[co * hw + p];
        const double* wrow = weight.data() + co * kk;
        for (std::size_t r = 0; r < kk; ++r) drow[r] += gv * wrow[r];
      }
    }
    col2im_t(dcolt, x.c, x.h, x.w, kernel, dx->channel(n, 0));
  }
}

void tconv2x2_forward(const Tensor& x, std::span<const double> weight,
                      std::span<const double> bias, std::size_t out_channels, Tensor& y) {
  check_span(weight, x.c * out_channels * 4, "tconv weight");
  check_span(bias, out_channels, "tconv bias");
  const std::size_t oh = 2 * x.h, ow = 2 * x.w;
  y = Tensor(x.n, out_channels, oh, ow);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      double* out = y.channel(n, co);
      std::fill(out, out + oh * ow, bias[co]);
    }
    for (std::size_t ci = 0; ci < x.c; ++ci) {
      const double* in = x.channel(n, ci);
      for (std::size_t co = 0; co < out_channels; ++co) {
        const double* wk = weight.data() + (ci * out_channels + co) * 4;
        double* out = y.channel(n, co);
        for (std::size_t yy = 0; yy < x.h; ++yy) {
          for (std::size_t xx = 0; xx < x.w; ++xx) {
            const double v = in[yy * x.w + xx];
            double* o = out + 2 * yy * ow + 2 * xx;
            o[0] += wk[0] * v;
            o[1] += wk[1] * v;
            o[ow] += wk[2] * v;
            o[ow + 1] += wk[3] * v;
          }
        }
      }
    }
  }
}

void tconv2x2_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy,
                       Tensor& dx, std::span<double> dweight, std::span<double> dbias) {
  const std::size_t out_channels = dy.c;
  const std::size_t ow = dy.w;
  dx = Tensor(x.n, x.c, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      const double* g = dy.channel(n, co);
      double s = 0.0;
      for (std::size_t p = 0; p < dy.plane(); ++p) s += g[p];
      dbias[co] += s;
    }
    for (std::size_t ci = 0; ci < x.c; ++ci) {
      const double* in = x.channel(n, ci);
      double* din = dx.channel(n, ci);
      for (std::size_t co = 0; co < out_channels; ++co) {
        const double* wk = weight.data() + (ci * out_channels + co) * 4;
        double* dwk = dweight.data() + (ci * out_channels + co) * 4;
        const double* g = dy.channel(n, co);
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        for (std::size_t yy = 0; yy < x.h; ++yy) {
          for (std::size_t xx = 0; xx < x.w; ++xx) {
            const std::size_t p = yy * x.w + xx;
            const double* go = g + 2 * yy * ow + 2 * xx;
            const double v = in[p];
            s0 += go[0] * v;
            s1 += go[1] * v;
            s2 += go[ow] * v;
            s3 += go[ow + 1] * v;
            din[p] += wk[0] * go[0] + wk[1] * go[1] + wk[2] * go[ow] + wk[3] * go[ow + 1];
          }
        }
        dwk[0] += s0;
        dwk[1] += s1;
        dwk[2] += s2;
        dwk[3] += s3;
      }
    }
  }
}

void group_norm_forward(const Tensor& x, std::span<const double> gamma,
                        std::span<const double> beta, std::size_t groups, Tensor& y,
                        GroupNormStats& stats) {
  check_span(gamma, x.c, "group norm gamma");
  check_span(beta, x.c, "group norm beta");
  if (groups == 0 || x.c % groups != 0) throw ShapeMismatch("group count must divide channels");
  const std::size_t cpg = x.c / groups;
  const std::size_t hw = x.plane();
  const auto m = static_cast<double>(cpg * hw);
  y = Tensor(x.n, x.c, x.h, x.w);
  stats.mean.assign(x.n * groups, 0.0);
  stats.rstd.assign(x.n * groups, 0.0);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double* in = x.channel(n, g * cpg);
      const std::size_t len = cpg * hw;
      double sum = 0.0;
      for (std::size_t i = 0; i < len; ++i) sum += in[i];
      const double mean = sum / m;
      double var = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double d = in[i] - mean;
        var += d * d;
      }
      var /= m;
      const double rstd = 1.0 / std::sqrt(var + kGroupNormEps);
      stats.mean[n * groups + g] = mean;
      stats.rstd[n * groups + g] = rstd;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = g * cpg + cc;
        const double* src = x.channel(n, ch);
        double* out = y.channel(n, ch);
        const double scale = gamma[ch] * rstd;
        const double shift = beta[ch];
        for (std::size_t p = 0; p < hw; ++p) out[p] = (src[p] - mean) * scale + shift;
      }
    }
  }
}

void group_norm_backward(const Tensor& x, std::span<const double> gamma, std::size_t groups,
                         const GroupNormStats& stats, const Tensor& dy, Tensor& dx,
                         std::span<double> dgamma, std::span<double> dbeta) {
  const std::size_t cpg = x.c / groups;
  const std::size_t hw = x.plane();
  const auto m = static_cast<double>(cpg * hw);
  dx = Tensor(x.n, x.c, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double mean = stats.mean[n * groups + g];
      const double rstd = stats.rstd[n * groups + g];
      double sum_dxhat = 0.0;
      double sum_dxhat_xhat = 0.0;
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = g * cpg + cc;
        const double* src = x.channel(n, ch);
        const double* gy = dy.channel(n, ch);
        double dg = 0.0, db = 0.0;
        for (std::size_t p = 0; p < hw; ++p) {
          const double xhat = (src[p] - mean) * rstd;
          dg += gy[p] * xhat;
          db += gy[p];
          const double dxhat = gy[p] * gamma[ch];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        dgamma[ch] += dg;
        dbeta[ch] += db;
      }
      for (std::size_t cc = 0; cc < cpg; ++cc) {
        const std::size_t ch = g * cpg + cc;
        const double* src = x.channel(n, ch);
        const double* gy = dy.channel(n, ch);
        double* out = dx.channel(n, ch);
        for (std::size_t p = 0; p < hw; ++p) {
          const double xhat = (src[p] - mean) * rstd;
          const double dxhat = gy[p] * gamma[ch];
          out[p] = rstd / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
        }
      }
    }
  }
}

void silu_forward(const Tensor& x, Tensor& y) {
  y = Tensor(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] * sigmoid(x.data[i]);
}

void silu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  dx = Tensor(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sigmoid(x.data[i]);
    dx.data[i] = dy.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
  }
}

void avg_pool2_forward(const Tensor& x, Tensor& y) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeMismatch("avg_pool2 needs even spatial size");
  const std::size_t oh = x.h / 2, ow = x.w / 2;
  y = Tensor(x.n, x.c, oh, ow);
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const double* in = x.channel(n, ch);
      double* out = y.channel(n, ch);
      for (std::size_t yy = 0; yy < oh; ++yy) {
        for (std::size_t xx = 0; xx < ow; ++xx) {
          const double* p = in + 2 * yy * x.w + 2 * xx;
          out[yy * ow + xx] = 0.25 * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
        }
      }
    }
  }
}

void avg_pool2_backward(const Tensor& dy, Tensor& dx) {
  const std::size_t iw = 2 * dy.w;
  dx = Tensor(dy.n, dy.c, 2 * dy.h, iw);
  for (std::size_t n = 0; n < dy.n; ++n) {
    for (std::size_t ch = 0; ch < dy.c; ++ch) {
      const double* g = dy.channel(n, ch);
      double* out = dx.channel(n, ch);
      for (std::size_t yy = 0; yy < dy.h; ++yy) {
        for (std::size_t xx = 0; xx < dy.w; ++xx) {
          const double v = 0.25 * g[yy * dy.w + xx];
          double* p = out + 2 * yy * iw + 2 * xx;
          p[0] = v;
          p[1] = v;
          p[iw] = v;
          p[iw + 1] = v;
        }
      }
    }
  }
}

void linear_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
                    std::size_t out_features, Tensor& y) {
  const std::size_t in = x.per_sample();
  check_span(weight, out_features * in, "linear weight");
  check_span(bias, out_features, "linear bias");
  y = Tensor(x.n, out_features, 1, 1);
  for (std::size_t n = 0; n < x.n; ++n) {
    const double* xv = x.data.data() + n * in;
    double* out = y.data.data() + n * out_features;
    for (std::size_t o = 0; o < out_features; ++o) {
      const double* wrow = weight.data() + o * in;
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * xv[i];
      out[o] = acc;
    }
  }
}

void linear_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy,
                     Tensor* dx, std::span<double> dweight, std::span<double> dbias) {
  const std::size_t in = x.per_sample();
  const std::size_t out_features = dy.per_sample();
  if (dx != nullptr) *dx = Tensor(x.n, x.c, x.h, x.w);
  for (std::size_t n = 0; n < x.n; ++n) {
    const double* xv = x.data.data() + n * in;
    const double* g = dy.data.data() + n * out_features;
    double* dxv = dx != nullptr ? dx->data.data() + n * in : nullptr;
    for (std::size_t o = 0; o < out_features; ++o) {
      const double gv = g[o];
      dbias[o] += gv;
      double* dw = dweight.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dw[i] += gv * xv[i];
      if (dxv != nullptr) {
        const double* wrow = weight.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dxv[i] += gv * wrow[i];
      }
    }
  }
}

}  // namespace metadiff::nn
