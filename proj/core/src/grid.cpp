#include "metadiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "metadiff/error.hpp"

namespace metadiff {

namespace {

bool is_binary_value(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

StructureGrid::StructureGrid(Matrix values, GridDomain domain)
    : values_(std::move(values)), domain_(domain) {
  if (values_.rows() != values_.cols()) {
    throw InvalidConfig("structure grid must be square, got " + std::to_string(values_.rows()) + "x" +
                        std::to_string(values_.cols()));
  }
  if (domain_ == GridDomain::kBinary01 &&
      !std::ranges::all_of(values_.data(), is_binary_value)) {
    throw NonBinaryInput("binary grid has an entry outside {0, 1}");
  }
}

QuadrantGrid::QuadrantGrid(Matrix values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) throw InvalidConfig("quadrant grid must be square");
}

bool ExtraParams::in_range() const noexcept {
  return w1 >= kW1Min && w1 <= kW1Max && h2 >= kH2Min && h2 <= kH2Max && n2 >= kN2Min &&
         n2 <= kN2Max;
}

StructureGrid expand_symmetric(const QuadrantGrid& q, GridDomain domain) {
  const std::size_t half = q.side();
  const std::size_t side = 2 * half;
  Matrix full(side, side);
  for (std::size_t i = 0; i < side; ++i) {
    const std::size_t qi = std::min(i, side - 1 - i);
    for (std::size_t j = 0; j < side; ++j) {
      full(i, j) = q(qi, std::min(j, side - 1 - j));
    }
  }
  return StructureGrid(std::move(full), domain);
}

bool is_flip_symmetric(const StructureGrid& g, double tolerance) {
  const std::size_t s = g.side();
  if (s % 2 != 0) return false;
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double v = g(i, j);
      if (std::abs(v - g(s - 1 - i, j)) > tolerance) return false;
      if (std::abs(v - g(i, s - 1 - j)) > tolerance) return false;
    }
  }
  return true;
}

QuadrantGrid reduce_quadrant(const StructureGrid& g) {
  const std::size_t s = g.side();
  if (s % 2 != 0) throw SymmetryViolation("grid side " + std::to_string(s) + " is odd");
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double v = g(i, j);
      if (std::abs(v - g(s - 1 - i, j)) > kSymmetryTolerance ||
          std::abs(v - g(i, s - 1 - j)) > kSymmetryTolerance) {
        std::ostringstream msg;
        msg << "grid is not mirror symmetric at (" << i << ", " << j << ")";
        throw SymmetryViolation(msg.str());
      }
    }
  }
  const std::size_t half = s / 2;
  Matrix q(half, half);
  for (std::size_t i = 0; i < half; ++i)
    for (std::size_t j = 0; j < half; ++j) q(i, j) = g(i, j);
  return QuadrantGrid(std::move(q));
}

StructureGrid to_signed(const StructureGrid& g) {
  if (g.domain() != GridDomain::kBinary01) throw InvalidConfig("to_signed expects a binary grid");
  Matrix m = g.values();
  for (double& v : m.data()) v = 2.0 * v - 1.0;
  return StructureGrid(std::move(m), GridDomain::kSigned);
}

Matrix binarize_signed(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = (v + 1.0) / 2.0 >= 0.5 ? 1.0 : 0.0;
  return out;
}

StructureGrid binarize(const StructureGrid& g) {
  if (g.domain() == GridDomain::kSigned) {
    return StructureGrid(binarize_signed(g.values()), GridDomain::kBinary01);
  }
  Matrix m = g.values();
  for (double& v : m.data()) v = v >= 0.5 ? 1.0 : 0.0;
  return StructureGrid(std::move(m), GridDomain::kBinary01);
}

void write_pgm(std::ostream& out, const StructureGrid& g) {
  const StructureGrid b = g.domain() == GridDomain::kBinary01 ? g : binarize(g);
  out << "P2\n" << b.side() << ' ' << b.side() << "\n1\n";
  for (std::size_t i = 0; i < b.side(); ++i) {
    for (std::size_t j = 0; j < b.side(); ++j) {
      if (j != 0) out << ' ';
      out << (b(i, j) != 0.0 ? 1 : 0);
    }
    out << '\n';
  }
}

void write_pgm(const std::string& path, const StructureGrid& g) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_pgm(out, g);
  if (!out) throw IoError("failed writing " + path);
}

StructureGrid read_pgm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  std::size_t width = 0, height = 0;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P2" || maxval != 1 || width != height) {
    throw CorruptContainer(path + ": not a square P2 PGM with maxval 1");
  }
  Matrix m(height, width);
  for (double& v : m.data()) {
    int x = -1;
    in >> x;
    if (!in || (x != 0 && x != 1)) throw CorruptContainer(path + ": bad pixel value");
    v = x;
  }
  return StructureGrid(std::move(m), GridDomain::kBinary01);
}

}  // namespace metadiff
