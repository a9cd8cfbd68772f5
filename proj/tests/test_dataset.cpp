#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "metadiff/binary_io.hpp"
#include "metadiff/dataset.hpp"
#include "metadiff/error.hpp"
#include "test_support.hpp"

using namespace metadiff;
using metadiff::testing::TempDir;

namespace {

const Dataset& small_dataset() {
  static const Dataset ds = generate_dataset(200, 16, ProxyParams(), 11);
  return ds;
}

}  // namespace

TEST(Condition, NormalizeExtras) {
  EXPECT_EQ(normalize_extras({2.5, 0.5, 3.5}), (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(normalize_extras({3.0, 1.0, 5.0}), (std::array<double, 3>{1, 1, 1}));
  EXPECT_EQ(normalize_extras({2.75, 0.75, 4.25})[0], 0.5);
  EXPECT_THROW(normalize_extras({3.1, 0.7, 4.0}), OutOfRange);
  const std::array<double, 3> n{0.25, 0.5, 0.75};
  const auto back = normalize_extras(denormalize_extras(n));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(back[i], n[i], 1e-15);
}

TEST(Condition, LayoutOrdering) {
  SpectralResponse r;
  for (std::size_t k = 0; k < kSpectralLen; ++k) r.values[k] = 0.01 * static_cast<double>(k + 1);
  const auto c = make_condition(r, {3.0, 0.5, 3.5});
  EXPECT_EQ(c[0], r.re()[0]);
  EXPECT_EQ(c[26], r.im()[0]);
  EXPECT_EQ(c[ConditionLayout::kW1], 1.0);
  EXPECT_EQ(c[ConditionLayout::kH2], 0.0);
  EXPECT_EQ(c[ConditionLayout::kN2], 0.0);
  EXPECT_TRUE(c.valid());
  EXPECT_FALSE(c.is_mask());
}

TEST(Condition, MaskCollisionNudge) {
  const auto c = make_condition(SpectralResponse{}, {2.5, 0.5, 3.5});
  for (std::size_t i = 0; i < 54; ++i) EXPECT_EQ(c[i], 0.0);
  EXPECT_EQ(c[54], kMaskCollisionOffset);
  EXPECT_FALSE(c.is_mask());
  EXPECT_TRUE(ConditionVector::mask().is_mask());
  EXPECT_TRUE(ConditionVector::mask().valid());
}

TEST(Condition, RangeChecks) {
  std::array<double, 55> v{};
  v[3] = 1.5;
  EXPECT_FALSE(ConditionVector(v).valid());
  EXPECT_THROW(ConditionVector(v).check(), OutOfRange);
  v[3] = -1.0;
  v[53] = -0.1;
  EXPECT_THROW(ConditionVector(v).check(), OutOfRange);
  v[53] = std::nan("");
  EXPECT_FALSE(ConditionVector(v).valid());
}

TEST(Dataset, MajoritySmoothing) {
  // A lone 1 in the corner of a 4x4 quadrant has 1 of 4 in-bounds
  // neighbours set, so it is removed.
  Matrix lone(4, 4);
  lone(0, 0) = 1;
  EXPECT_EQ(majority_smooth(QuadrantGrid(lone)).values(), Matrix(4, 4));
  // At the mirror seam the neighbourhood reaches into the mirrored copy.
  Matrix seam(2, 2);
  seam(1, 1) = 1;
  seam(1, 0) = 1;
  // Full 4x4 grid has a 2x4 band of ones in rows 1..2; cell (1, 1) sees
  // 6 of 9 ones, cell (0, 0) sees 2 of 4.
  const auto s = majority_smooth(QuadrantGrid(seam)).values();
  EXPECT_EQ(s, Matrix::from_rows({{0, 0}, {1, 1}}));
}

TEST(Dataset, SplitSizes) {
  const auto ds = generate_dataset(10, 16, ProxyParams(), 1);
  EXPECT_EQ(ds.split(Split::kTrain).size(), 8u);
  EXPECT_EQ(ds.split(Split::kVal).size(), 1u);
  EXPECT_EQ(ds.split(Split::kTest).size(), 1u);
  const auto& m = small_dataset().manifest;
  EXPECT_EQ(m.counts, (std::array<std::size_t, 3>{160, 20, 20}));
  EXPECT_EQ(m.total, 200u);
}

TEST(Dataset, RejectsBadArguments) {
  EXPECT_THROW(generate_dataset(5, 16, ProxyParams(), 1), InvalidConfig);
  EXPECT_THROW(generate_dataset(10, 15, ProxyParams(), 1), InvalidConfig);
  try {
    generate_dataset(9, 16, ProxyParams(), 1);
  } catch (const InvalidConfig& e) {
    EXPECT_EQ(std::string(e.what()).substr(0, 2), "n:");
  }
}

TEST(Dataset, SamplesAreValidAndLabelledByTheProxy) {
  const auto& ds = small_dataset();
  const ProxyParams proxy = ds.manifest.proxy();
  for (const auto& split : ds.splits) {
    for (const Sample& s : split) {
      ASSERT_EQ(s.quadrant.side(), 8u);
      const auto full = expand_symmetric(s.quadrant);
      EXPECT_TRUE(is_flip_symmetric(full));
      EXPECT_TRUE(s.condition.valid());
      EXPECT_FALSE(s.condition.is_mask());
      // Labels are exactly reproducible from the stored condition.
      const auto r = solve(full, s.condition.extras(), proxy);
      for (std::size_t k = 0; k < kSpectralLen; ++k) ASSERT_EQ(r.values[k], s.condition[k]);
      for (double v : s.condition.values()) ASSERT_EQ(v, to_f32(v));
    }
  }
}

TEST(Dataset, SplitsAreDisjointAndCoverEverything) {
  // Regenerate without splitting: sample i uses stream derive_seed(seed, i).
  const auto& ds = small_dataset();
  std::multiset<std::uint64_t> seen;
  for (const auto& split : ds.splits) {
    for (const Sample& s : split) {
      const auto v = s.condition.values();
      seen.insert(hash_bytes(v.data(), v.size_bytes()));
    }
  }
  std::set<std::uint64_t> unique(seen.begin(), seen.end());
  EXPECT_EQ(unique.size(), 200u);
  const auto bigger = generate_dataset(200, 16, ProxyParams(), 11);
  std::set<std::uint64_t> again;
  for (const auto& split : bigger.splits)
    for (const Sample& s : split) {
      const auto v = s.condition.values();
      again.insert(hash_bytes(v.data(), v.size_bytes()));
    }
  EXPECT_EQ(again, unique);
}

TEST(Dataset, StructurePriorSpread) {
  Rng rng(2);
  double lo = 1, hi = 0;
  for (int i = 0; i < 300; ++i) {
    const auto q = sample_structure(rng, 8);
    double fill = 0;
    for (double v : q.values().data()) fill += v;
    fill /= 64;
    lo = std::min(lo, fill);
    hi = std::max(hi, fill);
  }
  EXPECT_LT(lo, 0.15);
  EXPECT_GT(hi, 0.85);
}

TEST(Container, RoundTripIsBitExact) {
  const auto& ds = small_dataset();
  const auto bytes = encode_dataset(ds);
  const Dataset back = decode_dataset(bytes);
  EXPECT_EQ(back.manifest, ds.manifest);
  for (int s = 0; s < 3; ++s) EXPECT_EQ(back.splits[s], ds.splits[s]);
  EXPECT_EQ(encode_dataset(back), bytes);
}

TEST(Container, FilesAreDeterministic) {
  TempDir a("ds_a"), b("ds_b");
  write_dataset(a.str(), generate_dataset(50, 16, ProxyParams(), 3));
  write_dataset(b.str(), generate_dataset(50, 16, ProxyParams(), 3));
  for (const char* f : {kDatasetFileName, kManifestFileName}) {
    EXPECT_EQ(read_file(a.str(f)), read_file(b.str(f))) << f;
  }
  TempDir c("ds_c");
  write_dataset(c.str(), generate_dataset(50, 16, ProxyParams(), 4));
  EXPECT_NE(read_file(a.str(kDatasetFileName)), read_file(c.str(kDatasetFileName)));
}

TEST(Container, LoadSplitGivesSignedGrids) {
  TempDir dir("ds_split");
  write_dataset(dir.str(), small_dataset());
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto samples = load_split(dir.str(), s);
    EXPECT_EQ(samples.size(), small_dataset().manifest.counts[static_cast<int>(s)]);
    for (const auto& x : samples)
      for (double v : x.x0.data()) ASSERT_TRUE(v == -1.0 || v == 1.0);
  }
  EXPECT_EQ(load_dataset(dir.str(kDatasetFileName)).manifest, small_dataset().manifest);
  EXPECT_THROW(load_dataset(dir.str("nope")), IoError);
}

TEST(Container, TamperingIsDetected) {
  const auto bytes = encode_dataset(generate_dataset(20, 8, ProxyParams(), 2));
  for (std::size_t i = 0; i < bytes.size(); i += 37) {
    auto bad = bytes;
    bad[i] ^= std::byte{0x10};
    EXPECT_THROW(decode_dataset(bad), Error) << "offset " << i;
  }
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_dataset(truncated), CorruptContainer);
  auto extended = bytes;
  extended.push_back(std::byte{0});
  EXPECT_THROW(decode_dataset(extended), CorruptContainer);
}

TEST(Container, VersionIsChecked) {
  auto bytes = encode_dataset(generate_dataset(10, 4, ProxyParams(), 2));
  bytes[4] = std::byte{9};
  EXPECT_THROW(decode_dataset(bytes), VersionMismatch);
}

TEST(Container, ParseSplitNames) {
  EXPECT_EQ(parse_split("train"), Split::kTrain);
  EXPECT_EQ(parse_split("val"), Split::kVal);
  EXPECT_EQ(parse_split("test"), Split::kTest);
  EXPECT_THROW(parse_split("dev"), InvalidConfig);
}
