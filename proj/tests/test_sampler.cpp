#include <gtest/gtest.h>

#include <chrono>

#include "metadiff/error.hpp"
#include "metadiff/sampler.hpp"
#include "test_support.hpp"

using namespace metadiff;

namespace {

DenoiserConfig toy_config() {
  auto c = metadiff::testing::tiny_config(20);
  c.quadrant_side = 8;
  return c;
}

ConditionVector some_condition(std::uint64_t seed) {
  Rng rng(seed);
  std::array<double, 55> v{};
  for (std::size_t i = 0; i < 52; ++i) v[i] = rng.uniform(-0.9, 0.9);
  for (std::size_t i = 52; i < 55; ++i) v[i] = rng.uniform();
  return ConditionVector(v);
}

// Predicts the exact noise relating x_t to a planted x0.
NoisePredictor planted_oracle(const Matrix& x0, const NoiseSchedule& s) {
  return [x0, &s](const Tensor& x, std::span<const std::size_t> t, const Matrix&) {
    Tensor eps(x.n, 1, x.h, x.w);
    for (std::size_t n = 0; n < x.n; ++n) {
      for (std::size_t k = 0; k < x.plane(); ++k) {
        eps.data[n * x.plane() + k] = (x.data[n * x.plane() + k] - s.sqrt_alpha_bar(t[n]) * x0.data()[k]) /
                                      s.sqrt_one_minus_alpha_bar(t[n]);
      }
    }
    return eps;
  };
}

}  // namespace

TEST(Sampler, ZeroGuidanceEqualsConditionalOnly) {
  const auto model = DenoiserModel::init(toy_config(), 3);
  const auto sched = NoiseSchedule::linear(20);
  const SampleRequest req{some_condition(1), 4, 0.0, 9};
  SamplerOptions cond_only;
  cond_only.conditional_only = true;
  EXPECT_EQ(generate(model, sched, req), generate(model, sched, req, cond_only));
  // The raw chains agree bit for bit too, not just after thresholding.
  const std::vector<ConditionVector> conds(3, req.condition);
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  EXPECT_EQ(run_chains(model_predictor(model), 8, sched, conds, seeds, 0.0),
            run_chains(model_predictor(model), 8, sched, conds, seeds, 0.0, cond_only));
}

TEST(Sampler, DeterministicAndDistinct) {
  const auto model = DenoiserModel::init(toy_config(), 3);
  const auto sched = NoiseSchedule::linear(20);
  const SampleRequest req{some_condition(2), 3, 2.0, 5};
  const auto a = generate(model, sched, req);
  EXPECT_EQ(a, generate(model, sched, req));
  ASSERT_EQ(a.size(), 3u);
  EXPECT_NE(a[0], a[1]);
  EXPECT_NE(a[0], a[2]);
  EXPECT_NE(a[1], a[2]);
  for (const auto& g : a) {
    EXPECT_EQ(g.side(), 16u);
    EXPECT_TRUE(is_flip_symmetric(g));
  }
}

TEST(Sampler, PlantedOracleRecoversGrid) {
  const auto sched = NoiseSchedule::linear(10);
  Rng rng(4);
  Matrix x0(8, 8);
  for (double& v : x0.data()) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  const std::vector<ConditionVector> conds(2, some_condition(3));
  const std::vector<std::uint64_t> seeds{11, 12};
  for (bool stochastic : {false, true}) {
    SamplerOptions opt;
    opt.stochastic = stochastic;
    const auto out = run_chains(planted_oracle(x0, sched), 8, sched, conds, seeds, 2.0, opt);
    for (const Matrix& m : out) {
      EXPECT_LE(max_abs_diff(m, x0), 1e-6);
      EXPECT_EQ(binarize_signed(m), binarize_signed(x0));
    }
  }
}

TEST(Sampler, BatchingDoesNotChangeResults) {
  const auto model = DenoiserModel::init(toy_config(), 4);
  const auto sched = NoiseSchedule::linear(20);
  std::vector<ConditionVector> conds;
  for (int i = 0; i < 7; ++i) conds.push_back(some_condition(10 + i));
  SamplerOptions one, three;
  one.batch_size = 1;
  three.batch_size = 3;
  const auto a = generate_many_quadrants(model, sched, conds, 1.5, 2, one);
  EXPECT_EQ(a, generate_many_quadrants(model, sched, conds, 1.5, 2, three));
  EXPECT_EQ(a, generate_many_quadrants(model, sched, conds, 1.5, 2));
}

TEST(Sampler, GenerateManyFollowsConditionsUnderPermutation) {
  const auto model = DenoiserModel::init(toy_config(), 5);
  const auto sched = NoiseSchedule::linear(20);
  std::vector<ConditionVector> conds;
  for (int i = 0; i < 6; ++i) conds.push_back(some_condition(20 + i));
  const auto a = generate_many(model, sched, conds, 2.0, 8);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<ConditionVector> permuted;
  for (std::size_t p : perm) permuted.push_back(conds[p]);
  const auto b = generate_many(model, sched, permuted, 2.0, 8);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(b[i], a[perm[i]]);
  EXPECT_TRUE(generate_many(model, sched, {}, 2.0, 8).empty());
}

TEST(Sampler, RejectsMismatchedScheduleAndBadRequests) {
  const auto model = DenoiserModel::init(toy_config(), 6);
  const SampleRequest req{some_condition(3), 1, 1.0, 0};
  EXPECT_THROW(generate(model, NoiseSchedule::linear(30), req), ScheduleMismatch);
  const auto sched = NoiseSchedule::linear(20);
  EXPECT_THROW(generate(model, sched, {some_condition(3), 1, -1.0, 0}), InvalidConfig);
  EXPECT_THROW(generate(model, sched, {some_condition(3), 0, 1.0, 0}), InvalidConfig);
  std::array<double, 55> bad{};
  bad[0] = 2.0;
  EXPECT_THROW(generate(model, sched, {ConditionVector(bad), 1, 1.0, 0}), OutOfRange);
}

TEST(Sampler, DeskThroughput) {
  const auto model = DenoiserModel::init(DenoiserConfig{}, 7);
  const auto sched = NoiseSchedule::linear(200);
  std::vector<ConditionVector> conds;
  for (int i = 0; i < 64; ++i) conds.push_back(some_condition(100 + i));
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = generate_many(model, sched, conds, 2.0, 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  for (const auto& g : out) EXPECT_TRUE(is_flip_symmetric(g));
}
