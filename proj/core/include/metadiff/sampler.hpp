#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "metadiff/dataset.hpp"
#include "metadiff/denoiser.hpp"
#include "metadiff/diffusion.hpp"
#include "metadiff/grid.hpp"
#include "metadiff/schedule.hpp"

namespace metadiff {

struct SampleRequest {
  ConditionVector condition;
  std::size_t count = 1;
  double guidance_w = 2.0;
  std::uint64_t seed = 0;
};

struct SamplerOptions {
  ReverseNoise noise = ReverseNoise::kPosteriorStd;
  /// Chains advanced together through one forward call.
  std::size_t batch_size = 64;
  /// Skip the unconditional pass and use eps_cond directly. Reference
  /// sampler for the w = 0 identity.
  bool conditional_only = false;
  /// false sets z = 0 at every step (deterministic chain from x_T).
  bool stochastic = true;
};

/// eps prediction for a batch: x [N,1,s,s], timesteps, N x 55 conditions.
using NoisePredictor =
    std::function<Tensor(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond)>;

NoisePredictor model_predictor(const DenoiserModel& model);

/// Runs one reverse chain per (condition, seed) pair and returns the final
/// signed quadrants before binarization. Chain j draws x_T and then z for
/// t = T..2 from Rng(seeds[j]); chains are independent of batching.
std::vector<Matrix> run_chains(const NoisePredictor& predict, std::size_t quadrant_side,
                               const NoiseSchedule& sched,
                               std::span<const ConditionVector> conditions,
                               std::span<const std::uint64_t> seeds, double guidance_w,
                               const SamplerOptions& options = {});

/// `count` samples for one condition; chain j uses derive_seed(seed, j).
/// Throws ScheduleMismatch, OutOfRange or InvalidConfig.
std::vector<QuadrantGrid> generate_quadrants(const DenoiserModel& model, const NoiseSchedule& sched,
                                             const SampleRequest& req,
                                             const SamplerOptions& options = {});
std::vector<StructureGrid> generate(const DenoiserModel& model, const NoiseSchedule& sched,
                                    const SampleRequest& req, const SamplerOptions& options = {});

/// Seed for a condition in generate_many: derived from the condition's
/// bytes, so outputs follow their conditions under any reordering.
std::uint64_t condition_seed(std::uint64_t seed, const ConditionVector& c);

/// One sample per condition.
std::vector<QuadrantGrid> generate_many_quadrants(const DenoiserModel& model,
                                                  const NoiseSchedule& sched,
                                                  std::span<const ConditionVector> conditions,
                                                  double guidance_w, std::uint64_t seed,
                                                  const SamplerOptions& options = {});
std::vector<StructureGrid> generate_many(const DenoiserModel& model, const NoiseSchedule& sched,
                                         std::span<const ConditionVector> conditions,
                                         double guidance_w, std::uint64_t seed,
                                         const SamplerOptions& options = {});

}  // namespace metadiff
