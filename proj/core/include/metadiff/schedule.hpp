#pragma once

#include <cstddef>
#include <vector>

namespace metadiff {

/// Linear variance schedule and the derived per-timestep tables.
///
/// Timesteps are 1-based throughout the public API: valid t is [1, T].
/// alpha_bar(0) is defined as 1, which makes posterior_variance(1) == 0.
class NoiseSchedule {
 public:
  static constexpr double kBetaStart = 1e-4;
  static constexpr double kBetaEnd = 0.02;

  /// beta_t = beta_start + (t - 1) / (T - 1) * (beta_end - beta_start).
  /// Throws InvalidTimestep if T < 2.
  static NoiseSchedule linear(std::size_t T, double beta_start = kBetaStart,
                              double beta_end = kBetaEnd);

  std::size_t timesteps() const noexcept { return beta_.size(); }
  double beta_start() const noexcept { return beta_.front(); }
  double beta_end() const noexcept { return beta_.back(); }

  double beta(std::size_t t) const { return beta_[index(t)]; }
  double alpha(std::size_t t) const { return alpha_[index(t)]; }
  /// Accepts t == 0 (returns 1).
  double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }
  double sqrt_alpha_bar(std::size_t t) const { return sqrt_alpha_bar_[index(t)]; }
  double sqrt_one_minus_alpha_bar(std::size_t t) const {
    return sqrt_one_minus_alpha_bar_[index(t)];
  }
  /// ((1 - alpha_bar(t-1)) / (1 - alpha_bar(t))) * beta(t)
  double posterior_variance(std::size_t t) const { return posterior_variance_[index(t)]; }

  /// Throws InvalidTimestep unless 1 <= t <= T.
  void check_timestep(std::size_t t) const;

 private:
  std::size_t index(std::size_t t) const {
    check_timestep(t);
    return t - 1;
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sqrt_alpha_bar_;
  std::vector<double> sqrt_one_minus_alpha_bar_;
  std::vector<double> posterior_variance_;
};

}  // namespace metadiff
