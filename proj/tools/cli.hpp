#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "metadiff/denoiser.hpp"
#include "metadiff/trainer.hpp"

namespace metadiff::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kCorrupt = 4, kInternal = 1 };

struct GenDataConfig {
  std::size_t n = 2000;
  std::size_t size = 16;
  std::uint64_t seed = 0;
  std::uint64_t proxy_seed = 7;
  std::size_t proxy_features = 24;
};

/// Everything a run can be configured with. A config file is a JSON object
/// with optional keys "data", "out", "gen", "train" and "model"; command
/// flags override it.
struct AppConfig {
  std::string data;
  std::string out;
  GenDataConfig gen;
  TrainConfig train;
  DenoiserConfig model;
  /// Set when the config pinned model.quadrant_side; otherwise it follows
  /// the dataset.
  bool model_side_pinned = false;
  bool model_timesteps_pinned = false;

  /// Throws InvalidConfig with a "<section>.<field>: ..." message.
  static AppConfig from_json(const std::string& text);
  std::string to_json() const;
};

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace metadiff::cli
