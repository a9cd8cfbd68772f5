#include "metadiff/checkpoint.hpp"

#include <cmath>

#include "json.hpp"
#include "metadiff/binary_io.hpp"
#include "metadiff/error.hpp"

namespace metadiff {

namespace {
constexpr char kMagic[] = "MDCK";
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["model"] = nlohmann::json::parse(ckpt.model.config().to_json());
  header["schedule"] = {{"timesteps", ckpt.schedule.timesteps},
                        {"beta_start", ckpt.schedule.beta_start},
                        {"beta_end", ckpt.schedule.beta_end}};
  header["meta"] = {{"proxy_seed", ckpt.proxy_seed},
                    {"proxy_features", ckpt.proxy_features},
                    {"epoch", ckpt.epoch}};
  const std::string text = header.dump();

  ByteWriter w;
  w.put_text(std::string_view(kMagic, 4));
  w.put_u32(kCheckpointVersion);
  w.put_u64(text.size());
  w.put_text(text);
  const ParameterSet& params = ckpt.model.parameters();
  w.put_u32(static_cast<std::uint32_t>(params.entries().size()));
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const auto& e = params.entry(i);
    w.put_u32(static_cast<std::uint32_t>(e.name.size()));
    w.put_text(e.name);
    w.put_u32(static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.put_u64(d);
    for (double v : params.view(i)) w.put_f32(static_cast<float>(v));
  }
  w.put_crc_since(0);
  return w.bytes();
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 + 8) throw CorruptContainer("checkpoint too short");
  {
    // Verify the trailing checksum before trusting any length field.
    ByteReader tail(bytes.subspan(bytes.size() - 8));
    if (crc64(bytes.first(bytes.size() - 8)) != tail.get_u64()) {
      throw CorruptContainer("checkpoint checksum mismatch");
    }
  }
  ByteReader r(bytes.first(bytes.size() - 8));
  if (r.get_text(4) != std::string_view(kMagic, 4)) throw CorruptContainer("not a checkpoint file");
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const std::uint64_t header_len = r.get_u64();
  if (header_len > r.remaining()) throw CorruptContainer("checkpoint header length out of range");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_text(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptContainer(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ckpt{DenoiserModel::zeros(DenoiserConfig::from_json(header.at("model").dump())), {}};
  try {
    const auto& s = header.at("schedule");
    ckpt.schedule.timesteps = s.at("timesteps").get<std::size_t>();
    ckpt.schedule.beta_start = s.at("beta_start").get<double>();
    ckpt.schedule.beta_end = s.at("beta_end").get<double>();
    const auto& m = header.at("meta");
    ckpt.proxy_seed = m.at("proxy_seed").get<std::uint64_t>();
    ckpt.proxy_features = m.at("proxy_features").get<std::size_t>();
    ckpt.epoch = m.at("epoch").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptContainer(std::string("checkpoint header: ") + e.what());
  }

  ParameterSet& params = ckpt.model.parameters();
  const std::uint32_t count = r.get_u32();
  if (count != params.entries().size()) {
    throw CorruptContainer("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                           std::to_string(params.entries().size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto& e = params.entry(i);
    const std::string name = r.get_text(r.get_u32());
    if (name != e.name) throw CorruptContainer("unexpected tensor " + name + ", expected " + e.name);
    const std::uint32_t rank = r.get_u32();
    if (rank != e.shape.size()) throw CorruptContainer("rank mismatch for " + name);
    for (std::size_t d = 0; d < rank; ++d) {
      if (r.get_u64() != e.shape[d]) throw CorruptContainer("shape mismatch for " + name);
    }
    for (double& v : params.view(i)) {
      const float f = r.get_f32();
      if (!std::isfinite(f)) throw CorruptContainer("non-finite value in " + name);
      v = f;
    }
  }
  if (r.remaining() != 0) throw CorruptContainer("trailing bytes in checkpoint");
  if (ckpt.schedule.timesteps != ckpt.model.config().timesteps) {
    throw ScheduleMismatch("checkpoint schedule T differs from model timesteps");
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace metadiff
