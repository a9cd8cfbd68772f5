#pragma once

#include <iosfwd>
#include <string>

#include "metadiff/matrix.hpp"

namespace metadiff {

/// Value range convention of a grid's entries.
enum class GridDomain {
  kBinary01,      ///< every entry is exactly 0 or 1
  kSigned,        ///< diffusion space; clean data is {-1, +1}
  kContinuous01,  ///< real values nominally in [0, 1]
};

/// Full-size square meta-atom occupancy grid (0 = air, 1 = dielectric).
class StructureGrid {
 public:
  StructureGrid() = default;
  /// Throws InvalidConfig if `values` is not square or a binary grid has
  /// entries outside {0, 1}.
  StructureGrid(Matrix values, GridDomain domain);

  std::size_t side() const noexcept { return values_.rows(); }
  GridDomain domain() const noexcept { return domain_; }
  const Matrix& values() const noexcept { return values_; }
  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }

  bool operator==(const StructureGrid&) const = default;

 private:
  Matrix values_;
  GridDomain domain_ = GridDomain::kBinary01;
};

/// Upper-left quarter of a mirror-symmetric grid.
class QuadrantGrid {
 public:
  QuadrantGrid() = default;
  explicit QuadrantGrid(Matrix values);

  std::size_t side() const noexcept { return values_.rows(); }
  std::size_t full_side() const noexcept { return 2 * values_.rows(); }
  const Matrix& values() const noexcept { return values_; }
  Matrix& values() noexcept { return values_; }
  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }

  bool operator==(const QuadrantGrid&) const = default;

 private:
  Matrix values_;
};

/// Upper-layer geometry and material. Lower layer is fixed: index
/// kSubstrateIndex, thickness kSubstrateThicknessUm.
struct ExtraParams {
  double w1 = 2.5;  ///< cell size, um
  double h2 = 0.5;  ///< structure thickness, um
  double n2 = 3.5;  ///< structure refractive index

  static constexpr double kW1Min = 2.5, kW1Max = 3.0;
  static constexpr double kH2Min = 0.5, kH2Max = 1.0;
  static constexpr double kN2Min = 3.5, kN2Max = 5.0;
  static constexpr double kSubstrateIndex = 1.4;
  static constexpr double kSubstrateThicknessUm = 2.0;

  bool in_range() const noexcept;
  bool operator==(const ExtraParams&) const = default;
};

inline constexpr double kSymmetryTolerance = 1e-9;

/// Mirrors a quadrant across both midlines. Mirror axes pass between cells,
/// so the result has side 2 * q.side() and is exactly flip-invariant.
StructureGrid expand_symmetric(const QuadrantGrid& q, GridDomain domain = GridDomain::kBinary01);

/// Upper-left block of a grid that is symmetric about both midlines.
/// Throws SymmetryViolation when a mirrored pair differs by more than
/// kSymmetryTolerance or the side is odd.
QuadrantGrid reduce_quadrant(const StructureGrid& g);

bool is_flip_symmetric(const StructureGrid& g, double tolerance = 0.0);

/// v -> 2v - 1. Requires a binary grid.
StructureGrid to_signed(const StructureGrid& g);

/// Threshold at 0.5 in [0, 1] space. Signed grids are first mapped by
/// v -> (v + 1) / 2. Values equal to the threshold become 1.
StructureGrid binarize(const StructureGrid& g);

/// Same rule on a bare signed matrix (used on quadrants during sampling).
Matrix binarize_signed(const Matrix& m);

/// Writes a plain-text PGM (P2, maxval 1). Non-binary grids are binarized.
void write_pgm(std::ostream& out, const StructureGrid& g);
void write_pgm(const std::string& path, const StructureGrid& g);
/// Reads a P2 PGM with maxval 1 into a binary grid.
StructureGrid read_pgm(const std::string& path);

}  // namespace metadiff
