#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "metadiff/error.hpp"
#include "metadiff/surrogate.hpp"
#include "test_support.hpp"

using namespace metadiff;
using metadiff::testing::random_binary;

namespace {

// Frozen for proxy seed 7, 24 features, extras (2.75, 0.75, 4.25).
constexpr double kEmptyFullGap = 1.902959049;
// Largest observed |d response / d extra| over the sampled grids is 9.70;
// the bound leaves a little headroom.
constexpr double kExtrasLipschitzBound = 10.0;

// Independent re-derivation of the proxy from its documented definition:
// weights redrawn in the documented order, features computed from the full
// outer-product cosine basis.
SpectralResponse documented_proxy(std::uint64_t seed, std::size_t nf, const Matrix& q,
                                  const ExtraParams& e) {
  Rng rng(seed);
  std::vector<double> P(nf * 14), off(nf), A(52 * nf), b(52), om(52), ph(52);
  for (double& v : P) v = rng.normal() * 2.0 / std::sqrt(14.0);
  for (double& v : off) v = rng.normal() * 0.1;
  for (double& v : A) v = rng.normal() * 1.5 / std::sqrt(static_cast<double>(nf));
  for (double& v : b) v = 0.2 + 0.3 * rng.uniform();
  for (double& v : om) v = 0.5 + 1.5 * rng.uniform();
  for (double& v : ph) v = 2 * std::numbers::pi * rng.uniform();

  const std::size_t n = q.rows();
  std::vector<double> r;
  double fill = 0;
  for (double v : q.data()) fill += v;
  r.push_back(2 * fill / (n * n) - 1);
  for (int total = 0; total <= 3; ++total) {
    for (int u = 0; u <= total; ++u) {
      const int v = total - u;
      double c = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          c += q(i, j) * std::cos(std::numbers::pi * (2.0 * i + 1) * u / (2.0 * n)) *
               std::cos(std::numbers::pi * (2.0 * j + 1) * v / (2.0 * n));
      r.push_back(c / (n * n) * (total == 0 ? 1 : 2));
    }
  }
  r.push_back(2 * (e.w1 - 2.5) / 0.5 - 1);
  r.push_back(2 * (e.h2 - 0.5) / 0.5 - 1);
  r.push_back(2 * (e.n2 - 3.5) / 1.5 - 1);

  std::vector<double> h(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    double a = off[f];
    for (std::size_t i = 0; i < 14; ++i) a += P[f * 14 + i] * r[i];
    h[f] = std::tanh(a);
  }
  SpectralResponse out;
  for (std::size_t k = 0; k < 52; ++k) {
    const double fk = (30.0 + 30.0 * (k % 26) / 25.0) / 30.0;
    double a = b[k] * std::sin(om[k] * e.n2 * e.h2 * fk + ph[k]);
    for (std::size_t f = 0; f < nf; ++f) a += A[k * nf + f] * h[f];
    out.values[k] = std::tanh(a);
  }
  return out;
}

StructureGrid random_grid(Rng& rng, std::size_t quadrant_side) {
  return expand_symmetric(QuadrantGrid(random_binary(rng, quadrant_side)));
}

ExtraParams random_extras(Rng& rng) {
  return {rng.uniform(2.5, 3.0), rng.uniform(0.5, 1.0), rng.uniform(3.5, 5.0)};
}

double max_abs(const SpectralResponse& a, const SpectralResponse& b) {
  double d = 0;
  for (std::size_t k = 0; k < kSpectralLen; ++k) d = std::max(d, std::abs(a.values[k] - b.values[k]));
  return d;
}

}  // namespace

TEST(Surrogate, MatchesDocumentedDefinition) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t side = trial % 2 ? 8 : 32;
    const Matrix q = random_binary(rng, side);
    const ExtraParams e = random_extras(rng);
    const auto want = documented_proxy(7, 24, q, e);
    const auto got = ProxyParams(7, 24).respond(q, e);
    // Outputs are stored as floats; allow one float ulp near 1.
    EXPECT_LE(max_abs(want, got), 1e-7);
  }
  const Matrix q = random_binary(rng, 8);
  EXPECT_LE(max_abs(documented_proxy(3, 10, q, {}), ProxyParams(3, 10).respond(q, {})), 1e-7);
}

TEST(Surrogate, DeterministicAndFlipInvariant) {
  const ProxyParams proxy;
  Rng rng(1);
  const auto g = random_grid(rng, 8);
  const ExtraParams e{2.7, 0.8, 4.1};
  EXPECT_EQ(solve(g, e, proxy), solve(g, e, proxy));
  EXPECT_EQ(solve(g, e, ProxyParams(7, 24)), solve(g, e, proxy));
  Matrix flipped(16, 16);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) flipped(i, j) = g(i, 15 - j);
  EXPECT_EQ(solve(StructureGrid(flipped, GridDomain::kBinary01), e, proxy), solve(g, e, proxy));
  EXPECT_NE(solve(g, e, ProxyParams(8, 24)), solve(g, e, proxy));
}

TEST(Surrogate, EmptyVersusFullGridRegression) {
  const ProxyParams proxy;
  const ExtraParams e{2.75, 0.75, 4.25};
  const auto zero = solve(StructureGrid(Matrix(16, 16, 0.0), GridDomain::kBinary01), e, proxy);
  const auto ones = solve(StructureGrid(Matrix(16, 16, 1.0), GridDomain::kBinary01), e, proxy);
  const double d = max_abs(zero, ones);
  EXPECT_GT(d, 0.1);
  EXPECT_NEAR(d, kEmptyFullGap, 1e-6);
}

TEST(Surrogate, OutputsStrictlyBounded) {
  const ProxyParams proxy;
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const auto r = solve(random_grid(rng, 8), random_extras(rng), proxy);
    for (double v : r.values) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Surrogate, EveryCellMatters) {
  const ProxyParams proxy;
  Rng rng(3);
  std::size_t changed = 0, total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix q = random_binary(rng, 8);
    const ExtraParams e = random_extras(rng);
    const auto base = proxy.respond(q, e);
    for (std::size_t c = 0; c < q.size(); ++c) {
      Matrix p = q;
      p.data()[c] = 1.0 - p.data()[c];
      changed += max_abs(proxy.respond(p, e), base) > 0.0 ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(changed * 100, total * 99);
}

TEST(Surrogate, LipschitzInExtras) {
  const ProxyParams proxy;
  Rng rng(4);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix q = random_binary(rng, 8);
    ExtraParams e{rng.uniform(2.5, 2.9), rng.uniform(0.5, 0.9), rng.uniform(3.5, 4.9)};
    const auto base = proxy.respond(q, e);
    for (int field = 0; field < 3; ++field) {
      ExtraParams p = e;
      (field == 0 ? p.w1 : field == 1 ? p.h2 : p.n2) += 1e-4;
      worst = std::max(worst, max_abs(proxy.respond(q, p), base) / 1e-4);
    }
  }
  EXPECT_LT(worst, kExtrasLipschitzBound);
}

TEST(Surrogate, InputChecks) {
  const ProxyParams proxy;
  EXPECT_THROW(solve(StructureGrid(Matrix(4, 4, 0.3), GridDomain::kContinuous01), {}, proxy),
               NonBinaryInput);
  Matrix asym(4, 4);
  asym(0, 1) = 1;
  EXPECT_THROW(solve(StructureGrid(asym, GridDomain::kBinary01), {}, proxy), SymmetryViolation);
  EXPECT_THROW(solve(StructureGrid(Matrix(4, 4), GridDomain::kBinary01), {2.0, 0.5, 4.0}, proxy),
               OutOfRange);
  EXPECT_THROW(ProxyParams(1, 0), InvalidConfig);
}

TEST(Surrogate, BatchMatchesElementwise) {
  const ProxyParams proxy;
  Rng rng(5);
  std::vector<StructureGrid> grids;
  std::vector<ExtraParams> extras;
  for (int i = 0; i < 50; ++i) {
    grids.push_back(random_grid(rng, 8));
    extras.push_back(random_extras(rng));
  }
  const auto all = solve_batch(grids, extras, proxy);
  ASSERT_EQ(all.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], solve(grids[i], extras[i], proxy));
  EXPECT_EQ(solve_batch(std::span(grids).first(1), std::span(extras).first(1), proxy)[0], all[0]);
  std::reverse(grids.begin(), grids.end());
  std::reverse(extras.begin(), extras.end());
  const auto rev = solve_batch(grids, extras, proxy);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(rev[i], all[49 - i]);
  EXPECT_THROW(solve_batch(grids, std::span(extras).first(3), proxy), LengthMismatch);
}

TEST(Surrogate, Throughput) {
  const ProxyParams proxy;
  Rng rng(6);
  std::vector<StructureGrid> grids;
  std::vector<ExtraParams> extras;
  for (int i = 0; i < 10000; ++i) {
    grids.push_back(random_grid(rng, 8));
    extras.push_back(random_extras(rng));
  }
  auto t0 = std::chrono::steady_clock::now();
  solve_batch(grids, extras, proxy);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 2.0);

  const auto big = random_grid(rng, 32);
  t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 100; ++i) solve(big, extras[0], proxy);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 100, 1e-3);
}
