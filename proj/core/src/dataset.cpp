#include "metadiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "json.hpp"
#include "metadiff/binary_io.hpp"
#include "metadiff/error.hpp"
#include "metadiff/parallel.hpp"

namespace metadiff {

// Out of line on purpose: GCC 11 at -O3 vectorizes a short inlined
// double->float->double loop into a no-op for some lanes.
__attribute__((noinline)) double to_f32(double v) {
  return static_cast<double>(static_cast<float>(v));
}

namespace {

constexpr char kMagic[] = "MDIF";
constexpr std::uint64_t kSplitStream = 0x5350'4c49'5400ULL;  // "SPLIT"

struct Range {
  double lo, hi;
};
constexpr std::array<Range, 3> kExtraRanges = {{{ExtraParams::kW1Min, ExtraParams::kW1Max},
                                                 {ExtraParams::kH2Min, ExtraParams::kH2Max},
                                                 {ExtraParams::kN2Min, ExtraParams::kN2Max}}};

}  // namespace

// ---------------------------------------------------------------------------
// Conditions

bool ConditionVector::is_mask() const noexcept {
  return std::ranges::all_of(values_, [](double v) { return v == 0.0; });
}

bool ConditionVector::valid() const noexcept {
  for (std::size_t i = 0; i < ConditionLayout::kLength; ++i) {
    const double v = values_[i];
    if (!std::isfinite(v)) return false;
    const double lo = i < kSpectralLen ? -1.0 : 0.0;
    if (v < lo || v > 1.0) return false;
  }
  return true;
}

void ConditionVector::check() const {
  for (std::size_t i = 0; i < ConditionLayout::kLength; ++i) {
    const double v = values_[i];
    const double lo = i < kSpectralLen ? -1.0 : 0.0;
    if (!std::isfinite(v) || v < lo || v > 1.0) {
      throw OutOfRange("condition[" + std::to_string(i) + "] = " + std::to_string(v) +
                       " outside [" + std::to_string(lo) + ", 1]");
    }
  }
}

ExtraParams ConditionVector::extras() const {
  const std::array<double, 3> n = {values_[ConditionLayout::kW1], values_[ConditionLayout::kH2],
                                   values_[ConditionLayout::kN2]};
  return denormalize_extras(n);
}

std::array<double, 3> normalize_extras(const ExtraParams& e) {
  if (!e.in_range()) {
    throw OutOfRange("extras out of range: W1=" + std::to_string(e.w1) + " H2=" +
                     std::to_string(e.h2) + " N2=" + std::to_string(e.n2));
  }
  const std::array<double, 3> raw = {e.w1, e.h2, e.n2};
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = (raw[i] - kExtraRanges[i].lo) / (kExtraRanges[i].hi - kExtraRanges[i].lo);
  }
  return out;
}

ExtraParams denormalize_extras(std::span<const double, 3> n) {
  std::array<double, 3> raw{};
  for (std::size_t i = 0; i < 3; ++i) {
    const double v = std::clamp(n[i], 0.0, 1.0);
    raw[i] = kExtraRanges[i].lo + v * (kExtraRanges[i].hi - kExtraRanges[i].lo);
  }
  return {raw[0], raw[1], raw[2]};
}

ConditionVector make_condition(const SpectralResponse& resp, const ExtraParams& e) {
  std::array<double, ConditionLayout::kLength> v{};
  std::copy(resp.values.begin(), resp.values.end(), v.begin());
  const auto n = normalize_extras(e);
  v[ConditionLayout::kW1] = n[0];
  v[ConditionLayout::kH2] = n[1];
  v[ConditionLayout::kN2] = n[2];
  if (std::ranges::all_of(v, [](double x) { return x == 0.0; })) {
    v[ConditionLayout::kN2] = kMaskCollisionOffset;
  }
  return ConditionVector(v);
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw InvalidConfig("split: expected train, val or test, got '" + name + "'");
}

// ---------------------------------------------------------------------------
// Manifest

std::string DatasetManifest::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["grid_side"] = grid_side;
  j["quadrant_side"] = quadrant_side();
  j["total"] = total;
  j["counts"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
  j["split_ratio"] = split_ratio;
  j["proxy"] = {{"seed", proxy_seed}, {"n_features", proxy_features}};
  j["creation_seed"] = creation_seed;
  j["normalization"] = {{"w1", {ExtraParams::kW1Min, ExtraParams::kW1Max}},
                        {"h2", {ExtraParams::kH2Min, ExtraParams::kH2Max}},
                        {"n2", {ExtraParams::kN2Min, ExtraParams::kN2Max}}};
  return j.dump();
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.version = j.at("version").get<std::uint32_t>();
    m.grid_side = j.at("grid_side").get<std::size_t>();
    m.total = j.at("total").get<std::size_t>();
    m.counts = {j.at("counts").at("train").get<std::size_t>(),
                j.at("counts").at("val").get<std::size_t>(),
                j.at("counts").at("test").get<std::size_t>()};
    m.split_ratio = j.at("split_ratio").get<std::array<std::size_t, 3>>();
    m.proxy_seed = j.at("proxy").at("seed").get<std::uint64_t>();
    m.proxy_features = j.at("proxy").at("n_features").get<std::size_t>();
    m.creation_seed = j.at("creation_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptContainer(std::string("dataset manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Generation

QuadrantGrid majority_smooth(const QuadrantGrid& q) {
  const std::size_t n = q.side();
  const StructureGrid full = expand_symmetric(q, GridDomain::kContinuous01);
  const auto side = static_cast<std::ptrdiff_t>(2 * n);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      int ones = 0, cells = 0;
      for (std::ptrdiff_t di = -1; di <= 1; ++di) {
        for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i) + di;
          const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j) + dj;
          if (r < 0 || c < 0 || r >= side || c >= side) continue;
          ++cells;
          ones += full(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) != 0.0 ? 1 : 0;
        }
      }
      out(i, j) = 2 * ones > cells ? 1.0 : 0.0;
    }
  }
  return QuadrantGrid(std::move(out));
}

QuadrantGrid sample_structure(Rng& rng, std::size_t quadrant_side) {
  const double p = rng.uniform(0.2, 0.8);
  Matrix m(quadrant_side, quadrant_side);
  for (double& v : m.data()) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return majority_smooth(QuadrantGrid(std::move(m)));
}

Dataset generate_dataset(std::size_t n, std::size_t grid_side, const ProxyParams& proxy,
                         std::uint64_t seed) {
  if (n < 10) throw InvalidConfig("n: need at least 10 samples, got " + std::to_string(n));
  if (grid_side < 2 || grid_side % 2 != 0) {
    throw InvalidConfig("size: grid side must be even and >= 2, got " + std::to_string(grid_side));
  }
  const std::size_t q = grid_side / 2;
  std::vector<Sample> all(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    QuadrantGrid quad = sample_structure(rng, q);
    const ExtraParams drawn{rng.uniform(ExtraParams::kW1Min, ExtraParams::kW1Max),
                            rng.uniform(ExtraParams::kH2Min, ExtraParams::kH2Max),
                            rng.uniform(ExtraParams::kN2Min, ExtraParams::kN2Max)};
    // Canonical extras: what a reader recovers from the float-stored condition.
    auto norm = normalize_extras(drawn);
    for (double& v : norm) v = to_f32(v);
    const ExtraParams extras = denormalize_extras(norm);
    const SpectralResponse resp = proxy.respond(quad.values(), extras);
    ConditionVector cond = make_condition(resp, extras);
    std::array<double, ConditionLayout::kLength> v{};
    std::ranges::copy(cond.values(), v.begin());
    for (double& x : v) x = to_f32(x);
    all[i] = Sample{std::move(quad), ConditionVector(v)};
  });

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng shuffle(derive_seed(seed, kSplitStream));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }

  Dataset ds;
  ds.manifest.grid_side = grid_side;
  ds.manifest.total = n;
  ds.manifest.proxy_seed = proxy.seed();
  ds.manifest.proxy_features = proxy.n_features();
  ds.manifest.creation_seed = seed;
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_val = n / 10;
  ds.manifest.counts = {n_train, n_val, n - n_train - n_val};
  std::size_t k = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < ds.manifest.counts[s]; ++c) ds.splits[s].push_back(all[order[k++]]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Container

std::vector<std::byte> encode_dataset(const Dataset& ds) {
  const std::string manifest = ds.manifest.to_json();
  const std::size_t q = ds.manifest.quadrant_side();
  ByteWriter w;
  w.put_text(std::string_view(kMagic, 4));
  w.put_u32(kDatasetVersion);
  w.put_u64(manifest.size());
  w.put_text(manifest);
  w.put_crc_since(0);
  for (const auto& split : ds.splits) {
    const std::size_t start = w.size();
    w.put_u64(split.size());
    for (const Sample& s : split) {
      if (s.quadrant.side() != q) throw ShapeMismatch("sample quadrant side differs from manifest");
      for (double v : s.quadrant.values().data()) w.put_f32(static_cast<float>(v));
    }
    for (const Sample& s : split) {
      for (double v : s.condition.values()) w.put_f32(static_cast<float>(v));
    }
    w.put_crc_since(start);
  }
  return w.bytes();
}

Dataset decode_dataset(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  if (r.get_text(4) != std::string_view(kMagic, 4)) throw CorruptContainer("not a dataset container");
  const std::uint32_t version = r.get_u32();
  if (version != kDatasetVersion) {
    throw VersionMismatch("dataset version " + std::to_string(version) + ", expected " +
                          std::to_string(kDatasetVersion));
  }
  const std::uint64_t len = r.get_u64();
  if (len > r.remaining()) throw CorruptContainer("manifest length out of range");
  const std::string manifest = r.get_text(len);
  r.expect_crc_since(0, "dataset header");

  Dataset ds;
  ds.manifest = DatasetManifest::from_json(manifest);
  if (ds.manifest.version != kDatasetVersion) throw VersionMismatch("manifest version mismatch");
  const std::size_t q = ds.manifest.quadrant_side();
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t start = r.position();
    const std::uint64_t count = r.get_u64();
    if (count != ds.manifest.counts[s]) {
      throw CorruptContainer(std::string(split_name(static_cast<Split>(s))) +
                             " count disagrees with manifest");
    }
    const std::size_t block = count * (q * q + ConditionLayout::kLength) * 4 + 8;
    if (block > r.remaining()) throw CorruptContainer("split block truncated");
    auto& split = ds.splits[s];
    split.resize(count);
    for (auto& sample : split) {
      Matrix m(q, q);
      for (double& v : m.data()) v = r.get_f32();
      sample.quadrant = QuadrantGrid(std::move(m));
    }
    for (auto& sample : split) {
      std::array<double, ConditionLayout::kLength> v{};
      for (double& x : v) x = r.get_f32();
      sample.condition = ConditionVector(v);
    }
    r.expect_crc_since(start, std::string(split_name(static_cast<Split>(s))) + " split");
    for (const auto& sample : split) {
      if (!std::ranges::all_of(sample.quadrant.values().data(),
                               [](double v) { return v == 0.0 || v == 1.0; })) {
        throw CorruptContainer("stored quadrant is not binary");
      }
    }
  }
  if (r.remaining() != 0) throw CorruptContainer("trailing bytes after dataset");
  return ds;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  write_file((base / kDatasetFileName).string(), encode_dataset(ds));
  const std::string pretty = nlohmann::json::parse(ds.manifest.to_json()).dump(2) + "\n";
  write_text_file((base / kManifestFileName).string(), pretty);
}

Dataset load_dataset(const std::string& path) {
  std::filesystem::path p(path);
  if (std::filesystem::is_directory(p)) p /= kDatasetFileName;
  if (!std::filesystem::exists(p)) throw IoError("dataset not found: " + p.string());
  return decode_dataset(read_file(p.string()));
}

std::vector<SignedSample> to_signed_samples(const std::vector<Sample>& samples) {
  std::vector<SignedSample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    Matrix m = s.quadrant.values();
    for (double& v : m.data()) v = 2.0 * v - 1.0;
    out.push_back({std::move(m), s.condition});
  }
  return out;
}

std::vector<SignedSample> load_split(const std::string& path, Split split) {
  return to_signed_samples(load_dataset(path).split(split));
}

}  // namespace metadiff
