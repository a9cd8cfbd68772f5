#pragma once

#include <cstdint>
#include <string>

#include "metadiff/denoiser.hpp"
#include "metadiff/schedule.hpp"

namespace metadiff {

/// Schedule parameters stored with a model so sampling reuses them.
struct ScheduleHeader {
  std::size_t timesteps = 200;
  double beta_start = NoiseSchedule::kBetaStart;
  double beta_end = NoiseSchedule::kBetaEnd;

  NoiseSchedule build() const { return NoiseSchedule::linear(timesteps, beta_start, beta_end); }
  bool operator==(const ScheduleHeader&) const = default;
};

/// Model plus everything needed to sample from it and score the samples.
struct Checkpoint {
  DenoiserModel model;
  ScheduleHeader schedule;
  std::uint64_t proxy_seed = 7;
  std::size_t proxy_features = 24;
  std::size_t epoch = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian):
///   "MDCK" | u32 version | u64 header length | header JSON |
///   u32 tensor count | per tensor: u32 name length, name, u32 rank,
///   u64 dims[rank], f32 values | u64 CRC-64 of all preceding bytes.
/// The header JSON has sorted keys: {"meta", "model", "schedule"}.
std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
/// Throws CorruptContainer, VersionMismatch, InvalidConfig or ScheduleMismatch.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace metadiff
