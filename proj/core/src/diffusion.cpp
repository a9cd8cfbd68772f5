#include "metadiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "metadiff/error.hpp"

namespace metadiff {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

}  // namespace

Matrix q_sample(const Matrix& x0, std::size_t t, const Matrix& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  const double a = sched.sqrt_alpha_bar(t);
  const double b = sched.sqrt_one_minus_alpha_bar(t);
  Matrix out(x0.rows(), x0.cols());
  auto o = out.data();
  auto x = x0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * e[i];
  return out;
}

Matrix iterative_q_sample(const Matrix& x0, std::size_t t, const std::function<Matrix()>& noise,
                          const NoiseSchedule& sched) {
  if (t != 0) sched.check_timestep(t);
  Matrix x = x0;
  for (std::size_t s = 1; s <= t; ++s) {
    const Matrix eps = noise();
    require_same_shape(x, eps, "iterative_q_sample");
    const double keep = std::sqrt(1.0 - sched.beta(s));
    const double add = std::sqrt(sched.beta(s));
    auto xv = x.data();
    auto ev = eps.data();
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = keep * xv[i] + add * ev[i];
  }
  return x;
}

Matrix guided_noise(const Matrix& eps_cond, const Matrix& eps_uncond, double w) {
  require_same_shape(eps_cond, eps_uncond, "guided_noise");
  if (!(w >= 0.0)) throw InvalidConfig("guidance weight must be >= 0");
  Matrix out(eps_cond.rows(), eps_cond.cols());
  auto o = out.data();
  auto c = eps_cond.data();
  auto u = eps_uncond.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 + w) * c[i] - w * u[i];
  return out;
}

double reverse_noise_scale(const NoiseSchedule& sched, std::size_t t, ReverseNoise mode) {
  const double var = sched.posterior_variance(t);
  return mode == ReverseNoise::kPosteriorStd ? std::sqrt(var) : var;
}

Matrix reverse_step(const Matrix& x_t, std::size_t t, const Matrix& eps_hat, const Matrix& z,
                    const NoiseSchedule& sched, ReverseNoise mode) {
  require_same_shape(x_t, eps_hat, "reverse_step eps_hat");
  require_same_shape(x_t, z, "reverse_step z");
  sched.check_timestep(t);
  if (t == 1 && std::ranges::any_of(z.data(), [](double v) { return v != 0.0; })) {
    throw InvalidConfig("reverse_step: z must be zero at t == 1");
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
  const double eps_coef = sched.beta(t) / sched.sqrt_one_minus_alpha_bar(t);
  const double sigma = reverse_noise_scale(sched, t, mode);
  Matrix out(x_t.rows(), x_t.cols());
  auto o = out.data();
  auto x = x_t.data();
  auto e = eps_hat.data();
  auto n = z.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = inv_sqrt_alpha * (x[i] - eps_coef * e[i]) + sigma * n[i];
  }
  return out;
}

}  // namespace metadiff
