#include "metadiff/schedule.hpp"

#include <cmath>
#include <string>

#include "metadiff/error.hpp"

namespace metadiff {

NoiseSchedule NoiseSchedule::linear(std::size_t T, double beta_start, double beta_end) {
  if (T < 2) throw InvalidTimestep("schedule needs T >= 2, got " + std::to_string(T));
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw InvalidConfig("schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_.resize(T);
  s.alpha_.resize(T);
  s.alpha_bar_.resize(T);
  s.sqrt_alpha_bar_.resize(T);
  s.sqrt_one_minus_alpha_bar_.resize(T);
  s.posterior_variance_.resize(T);

  const double step = (beta_end - beta_start) / static_cast<double>(T - 1);
  double prev_bar = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double beta = i + 1 == T ? beta_end : beta_start + static_cast<double>(i) * step;
    const double alpha = 1.0 - beta;
    const double bar = prev_bar * alpha;
    s.beta_[i] = beta;
    s.alpha_[i] = alpha;
    s.alpha_bar_[i] = bar;
    s.sqrt_alpha_bar_[i] = std::sqrt(bar);
    s.sqrt_one_minus_alpha_bar_[i] = std::sqrt(1.0 - bar);
    s.posterior_variance_[i] = (1.0 - prev_bar) / (1.0 - bar) * beta;
    prev_bar = bar;
  }
  return s;
}

void NoiseSchedule::check_timestep(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw InvalidTimestep("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(beta_.size()) + "]");
  }
}

}  // namespace metadiff
