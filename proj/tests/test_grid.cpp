#include <gtest/gtest.h>

#include <sstream>

#include "metadiff/error.hpp"
#include "metadiff/grid.hpp"
#include "test_support.hpp"

using namespace metadiff;
using metadiff::testing::random_binary;

namespace {

Matrix flip_h(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, m.cols() - 1 - j);
  return out;
}

Matrix flip_v(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(m.rows() - 1 - i, j);
  return out;
}

// All 2^(k*k) binary k x k quadrants.
std::vector<QuadrantGrid> all_quadrants(std::size_t k) {
  std::vector<QuadrantGrid> out;
  for (unsigned bits = 0; bits < (1u << (k * k)); ++bits) {
    Matrix m(k, k);
    for (std::size_t c = 0; c < k * k; ++c) m.data()[c] = (bits >> c) & 1u ? 1.0 : 0.0;
    out.emplace_back(std::move(m));
  }
  return out;
}

}  // namespace

TEST(Grid, SingleCellMirror) {
  const auto g = expand_symmetric(QuadrantGrid(Matrix::from_rows({{1}})));
  EXPECT_EQ(g.values(), Matrix::from_rows({{1, 1}, {1, 1}}));
}

TEST(Grid, CornerSymmetry) {
  const auto g = expand_symmetric(QuadrantGrid(Matrix::from_rows({{1, 0}, {0, 0}})));
  EXPECT_EQ(g.values(), Matrix::from_rows({{1, 0, 0, 1}, {0, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 1}}));
}

TEST(Grid, ExhaustiveRoundTripAndFlipInvariance) {
  for (const auto& q : all_quadrants(2)) {
    const auto g = expand_symmetric(q);
    ASSERT_EQ(g.side(), 4u);
    EXPECT_EQ(reduce_quadrant(g), q);
    EXPECT_EQ(flip_h(g.values()), g.values());
    EXPECT_EQ(flip_v(g.values()), g.values());
    EXPECT_TRUE(is_flip_symmetric(g));
  }
}

TEST(Grid, ReduceExpandOnRandomSymmetricGrids) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto g = expand_symmetric(QuadrantGrid(random_binary(rng, 1 + seed % 8)));
    EXPECT_EQ(expand_symmetric(reduce_quadrant(g)), g);
  }
}

TEST(Grid, ReduceRejectsAsymmetric) {
  const StructureGrid g(Matrix::from_rows({{1, 0}, {0, 0}}), GridDomain::kBinary01);
  EXPECT_THROW(reduce_quadrant(g), SymmetryViolation);
}

TEST(Grid, ReduceToleratesTinyMismatchOnly) {
  Matrix m(2, 2, 0.25);
  m(1, 1) = 0.25 + 1e-12;
  EXPECT_NO_THROW(reduce_quadrant(StructureGrid(m, GridDomain::kContinuous01)));
  m(1, 1) = 0.25 + 1e-6;
  EXPECT_THROW(reduce_quadrant(StructureGrid(m, GridDomain::kContinuous01)), SymmetryViolation);
}

TEST(Grid, ReduceRejectsOddSide) {
  const StructureGrid g(Matrix(3, 3, 1.0), GridDomain::kBinary01);
  EXPECT_THROW(reduce_quadrant(g), SymmetryViolation);
}

TEST(Grid, ConstructorChecks) {
  EXPECT_THROW(StructureGrid(Matrix(2, 3), GridDomain::kBinary01), InvalidConfig);
  EXPECT_THROW(StructureGrid(Matrix(2, 2, 0.5), GridDomain::kBinary01), NonBinaryInput);
  EXPECT_NO_THROW(StructureGrid(Matrix(2, 2, 3.0), GridDomain::kSigned));
}

TEST(Grid, ToSigned) {
  const StructureGrid g(Matrix::from_rows({{0, 1}, {1, 0}}), GridDomain::kBinary01);
  const auto s = to_signed(g);
  EXPECT_EQ(s.domain(), GridDomain::kSigned);
  EXPECT_EQ(s.values(), Matrix::from_rows({{-1, 1}, {1, -1}}));
  const auto zeros = to_signed(StructureGrid(Matrix(4, 4), GridDomain::kBinary01));
  for (double v : zeros.values().data()) EXPECT_EQ(v, -1.0);
}

TEST(Grid, BinarizeInvertsToSignedExhaustively) {
  for (unsigned bits = 0; bits < 16; ++bits) {
    Matrix m(2, 2);
    for (std::size_t c = 0; c < 4; ++c) m.data()[c] = (bits >> c) & 1u;
    const StructureGrid g(m, GridDomain::kBinary01);
    EXPECT_EQ(binarize(to_signed(g)), g);
  }
}

TEST(Grid, ThresholdAtHalfInclusive) {
  const StructureGrid c(Matrix::from_rows({{0.5, 0.4999}, {0.7, 0.0}}), GridDomain::kContinuous01);
  EXPECT_EQ(binarize(c).values(), Matrix::from_rows({{1, 0}, {1, 0}}));
  // Signed 0 maps to 0.5 in [0, 1] space.
  const StructureGrid s(Matrix::from_rows({{0.0, -0.0002}, {2.0, -3.0}}), GridDomain::kSigned);
  EXPECT_EQ(binarize(s).values(), Matrix::from_rows({{1, 0}, {1, 0}}));
  EXPECT_EQ(binarize_signed(s.values()), binarize(s).values());
}

TEST(Grid, BinarizeIdempotent) {
  Rng rng(3);
  Matrix m(6, 6);
  for (double& v : m.data()) v = rng.uniform(-2, 2);
  const auto once = binarize(StructureGrid(m, GridDomain::kSigned));
  EXPECT_EQ(binarize(once), once);
  for (double v : once.values().data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Grid, ExtraRanges) {
  EXPECT_TRUE((ExtraParams{2.5, 0.5, 3.5}.in_range()));
  EXPECT_TRUE((ExtraParams{3.0, 1.0, 5.0}.in_range()));
  EXPECT_FALSE((ExtraParams{3.01, 1.0, 5.0}.in_range()));
  EXPECT_FALSE((ExtraParams{2.7, 0.4, 4.0}.in_range()));
}

TEST(Grid, PgmRoundTrip) {
  metadiff::testing::TempDir dir("pgm");
  Rng rng(5);
  const auto g = expand_symmetric(QuadrantGrid(random_binary(rng, 4)));
  write_pgm(dir.str("g.pgm"), g);
  EXPECT_EQ(read_pgm(dir.str("g.pgm")), g);
  std::ostringstream out;
  write_pgm(out, g);
  EXPECT_EQ(out.str().substr(0, 3), "P2\n");
}
