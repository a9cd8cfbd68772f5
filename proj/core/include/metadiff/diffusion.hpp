#pragma once

#include <functional>

#include "metadiff/matrix.hpp"
#include "metadiff/schedule.hpp"

namespace metadiff {

/// Noise scale used for the stochastic term of a reverse step.
enum class ReverseNoise {
  /// sigma_t = sqrt(posterior_variance(t)), the posterior standard deviation.
  kPosteriorStd,
  /// sigma_t = posterior_variance(t), the coefficient exactly as it is
  /// sometimes printed (a variance used as a scale). For comparison only.
  kLegacyVariance,
};

/// Closed-form forward noising: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
/// Throws ShapeMismatch or InvalidTimestep.
Matrix q_sample(const Matrix& x0, std::size_t t, const Matrix& eps, const NoiseSchedule& sched);

/// Step-by-step forward chain x_s = sqrt(1 - beta_s) x_{s-1} + sqrt(beta_s) eps_s
/// for s = 1..t, pulling each eps_s from `noise`. Test oracle for q_sample.
Matrix iterative_q_sample(const Matrix& x0, std::size_t t, const std::function<Matrix()>& noise,
                          const NoiseSchedule& sched);

/// Guidance mixing: (1 + w) * eps_cond - w * eps_uncond.
Matrix guided_noise(const Matrix& eps_cond, const Matrix& eps_uncond, double w);

/// One ancestral step x_t -> x_{t-1}:
///   (x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z
/// z must be all zeros at t == 1. Throws ShapeMismatch, InvalidTimestep, or
/// InvalidConfig (non-zero z at t == 1).
Matrix reverse_step(const Matrix& x_t, std::size_t t, const Matrix& eps_hat, const Matrix& z,
                    const NoiseSchedule& sched, ReverseNoise mode = ReverseNoise::kPosteriorStd);

double reverse_noise_scale(const NoiseSchedule& sched, std::size_t t, ReverseNoise mode);

}  // namespace metadiff
