#include "metadiff/sampler.hpp"

#include <algorithm>

#include "metadiff/error.hpp"
#include "metadiff/parallel.hpp"
#include "metadiff/rng.hpp"

namespace metadiff {

namespace {

void check_compatible(const DenoiserModel& model, const NoiseSchedule& sched) {
  if (model.config().timesteps != sched.timesteps()) {
    throw ScheduleMismatch("model trained for T=" + std::to_string(model.config().timesteps) +
                           ", schedule has T=" + std::to_string(sched.timesteps()));
  }
}

void check_guidance(double w) {
  if (!(w >= 0.0)) throw InvalidConfig("guidance: w must be >= 0");
}

Matrix slice(const Tensor& t, std::size_t i) {
  return Matrix(t.h, t.w, std::vector<double>(t.sample(i).begin(), t.sample(i).end()));
}

std::vector<QuadrantGrid> to_quadrants(const std::vector<Matrix>& signed_x) {
  std::vector<QuadrantGrid> out;
  out.reserve(signed_x.size());
  for (const Matrix& m : signed_x) out.emplace_back(binarize_signed(m));
  return out;
}

std::vector<StructureGrid> to_full(const std::vector<QuadrantGrid>& quads) {
  std::vector<StructureGrid> out;
  out.reserve(quads.size());
  for (const QuadrantGrid& q : quads) out.push_back(expand_symmetric(q));
  return out;
}

}  // namespace

NoisePredictor model_predictor(const DenoiserModel& model) {
  return [&model](const Tensor& x, std::span<const std::size_t> t, const Matrix& cond) {
    return model.forward(x, t, cond);
  };
}

std::vector<Matrix> run_chains(const NoisePredictor& predict, std::size_t side,
                               const NoiseSchedule& sched,
                               std::span<const ConditionVector> conditions,
                               std::span<const std::uint64_t> seeds, double guidance_w,
                               const SamplerOptions& options) {
  check_guidance(guidance_w);
  if (conditions.size() != seeds.size()) {
    throw LengthMismatch("run_chains: conditions and seeds differ in length");
  }
  for (const auto& c : conditions) c.check();
  const std::size_t n = conditions.size();
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
  const std::size_t n_batches = (n + batch - 1) / batch;
  const std::size_t T = sched.timesteps();
  const std::size_t plane = side * side;
  std::vector<Matrix> out(n);

  parallel_for(n_batches, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t m = std::min(batch, n - begin);
    const bool both = !options.conditional_only;
    const std::size_t rows = both ? 2 * m : m;

    std::vector<Rng> rngs;
    rngs.reserve(m);
    for (std::size_t j = 0; j < m; ++j) rngs.emplace_back(seeds[begin + j]);

    // Conditional rows first, then the unconditional (all-zero) rows.
    Matrix cond(rows, ConditionLayout::kLength, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const auto v = conditions[begin + j].values();
      std::copy(v.begin(), v.end(), &cond(j, 0));
    }

    std::vector<Matrix> x(m, Matrix(side, side));
    for (std::size_t j = 0; j < m; ++j) {
      for (double& v : x[j].data()) v = rngs[j].normal();
    }

    Tensor input(rows, 1, side, side);
    std::vector<std::size_t> ts(rows);
    const Matrix zero(side, side, 0.0);
    for (std::size_t t = T; t >= 1; --t) {
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = x[r % m].data();
        std::copy(src.begin(), src.end(), input.data.begin() + static_cast<std::ptrdiff_t>(r * plane));
      }
      std::fill(ts.begin(), ts.end(), t);
      const Tensor eps = predict(input, ts, cond);
      for (std::size_t j = 0; j < m; ++j) {
        const Matrix eps_c = slice(eps, j);
        const Matrix eps_hat = both ? guided_noise(eps_c, slice(eps, m + j), guidance_w) : eps_c;
        Matrix z = zero;
        if (t > 1 && options.stochastic) {
          for (double& v : z.data()) v = rngs[j].normal();
        }
        x[j] = reverse_step(x[j], t, eps_hat, z, sched, options.noise);
      }
    }
    for (std::size_t j = 0; j < m; ++j) out[begin + j] = std::move(x[j]);
  });
  return out;
}

std::vector<QuadrantGrid> generate_quadrants(const DenoiserModel& model, const NoiseSchedule& sched,
                                             const SampleRequest& req,
                                             const SamplerOptions& options) {
  check_compatible(model, sched);
  if (req.count == 0) throw InvalidConfig("count: must be >= 1");
  std::vector<ConditionVector> conds(req.count, req.condition);
  std::vector<std::uint64_t> seeds(req.count);
  for (std::size_t j = 0; j < req.count; ++j) seeds[j] = derive_seed(req.seed, j);
  return to_quadrants(run_chains(model_predictor(model), model.config().quadrant_side, sched,
                                 conds, seeds, req.guidance_w, options));
}

std::vector<StructureGrid> generate(const DenoiserModel& model, const NoiseSchedule& sched,
                                    const SampleRequest& req, const SamplerOptions& options) {
  return to_full(generate_quadrants(model, sched, req, options));
}

std::uint64_t condition_seed(std::uint64_t seed, const ConditionVector& c) {
  const auto v = c.values();
  return derive_seed(seed, hash_bytes(v.data(), v.size_bytes()));
}

std::vector<QuadrantGrid> generate_many_quadrants(const DenoiserModel& model,
                                                  const NoiseSchedule& sched,
                                                  std::span<const ConditionVector> conditions,
                                                  double guidance_w, std::uint64_t seed,
                                                  const SamplerOptions& options) {
  check_compatible(model, sched);
  std::vector<std::uint64_t> seeds;
  seeds.reserve(conditions.size());
  for (const auto& c : conditions) seeds.push_back(condition_seed(seed, c));
  return to_quadrants(run_chains(model_predictor(model), model.config().quadrant_side, sched,
                                 conditions, seeds, guidance_w, options));
}

std::vector<StructureGrid> generate_many(const DenoiserModel& model, const NoiseSchedule& sched,
                                         std::span<const ConditionVector> conditions,
                                         double guidance_w, std::uint64_t seed,
                                         const SamplerOptions& options) {
  return to_full(generate_many_quadrants(model, sched, conditions, guidance_w, seed, options));
}

}  // namespace metadiff
