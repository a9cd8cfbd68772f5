#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "metadiff/checkpoint.hpp"
#include "metadiff/dataset.hpp"
#include "metadiff/denoiser.hpp"
#include "metadiff/rng.hpp"
#include "metadiff/sampler.hpp"
#include "metadiff/schedule.hpp"

namespace metadiff {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 2e-4;
  double cond_dropout_prob = 0.10;
  std::uint64_t seed = 0;
  std::size_t timesteps = 200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Also save epoch_NNN.mdck every this many epochs; 0 disables.
  std::size_t checkpoint_every = 0;
  /// Validation conditions sampled per epoch.
  std::size_t val_cap = 64;
  double guidance_w = 2.0;
  std::uint64_t eval_seed = 0;
  /// Where best.mdck and last.mdck go; empty keeps everything in memory.
  std::string checkpoint_dir;

  /// Throws InvalidConfig naming the field ("train.<field>: ...").
  void validate() const;
  std::string to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const std::string& text);
};

/// Adam with bias correction. Parameters are rounded to float after each
/// update so the stored model is exactly representable.
class Adam {
 public:
  Adam(std::size_t n, double beta1, double beta2, double eps);
  explicit Adam(std::size_t n, const TrainConfig& c = {})
      : Adam(n, c.adam_beta1, c.adam_beta2, c.adam_eps) {}

  void step(std::vector<double>& params, std::span<const double> grad, double lr);
  std::size_t steps() const noexcept { return steps_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<double> m_, v_;
};

/// Network inputs for one minibatch.
struct PreparedBatch {
  Tensor x_t;
  std::vector<std::size_t> t;
  Matrix cond;
  Tensor eps;
  std::vector<bool> masked;
};

/// For each sample in order: t = uniform_int(1, T), mask = bernoulli(p),
/// then eps row-major standard normals; x_t = q_sample(x0, t, eps).
/// Masked samples get the all-zero condition.
PreparedBatch prepare_batch(std::span<const SignedSample> data, std::span<const std::size_t> indices,
                            const NoiseSchedule& sched, Rng& rng, double cond_dropout_prob);

/// One optimizer update on the prepared batch; returns the batch loss
/// measured before the update.
double train_step_prepared(DenoiserModel& model, Adam& opt, const PreparedBatch& batch,
                           double learning_rate);

/// prepare_batch followed by train_step_prepared.
double train_step(DenoiserModel& model, Adam& opt, std::span<const SignedSample> data,
                  std::span<const std::size_t> indices, const NoiseSchedule& sched, Rng& rng,
                  const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  /// 1-based epoch with the lowest validation MAE; 0 when no epoch ran.
  std::size_t best_epoch = 0;

  /// "epoch,train_loss,val_mae,seconds" with one row per epoch.
  std::string to_csv() const;
};

struct TrainResult {
  DenoiserModel final_model;
  DenoiserModel best_model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on the train split, validating on up to val_cap validation
/// conditions after every epoch. Throws ScheduleMismatch if the model's T
/// differs from config.timesteps, InvalidConfig on bad config, IoError on
/// checkpoint write failure.
TrainResult fit(const DenoiserModel& initial, const Dataset& dataset, const TrainConfig& config,
                const EpochCallback& on_epoch = {});

/// Stream id used for model initialization in the CLI and tests.
inline constexpr std::uint64_t kInitStream = 0x494e4954;  // "INIT"

}  // namespace metadiff
