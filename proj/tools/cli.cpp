#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "metadiff/binary_io.hpp"
#include "metadiff/checkpoint.hpp"
#include "metadiff/dataset.hpp"
#include "metadiff/error.hpp"
#include "metadiff/eval.hpp"
#include "metadiff/grid.hpp"
#include "metadiff/parallel.hpp"
#include "metadiff/sampler.hpp"
#include "metadiff/surrogate.hpp"

#ifndef METADIFF_VERSION
#define METADIFF_VERSION "0.0.0"
#endif

namespace metadiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSidecarFile = "samples.json";

// Wrong-type errors from json::get are reported under the field name.
template <typename T>
T field(const json& v, const std::string& name) {
  if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw InvalidConfig(name + ": expected a non-negative integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw InvalidConfig(name + ": expected a number");
  } else {
    if (!v.is_string()) throw InvalidConfig(name + ": expected a string");
  }
  return v.get<T>();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidConfig(what + ": " + e.what());
  }
}

std::string read_text(const std::string& path) {
  const auto bytes = read_file(path);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

// Container contents that decode but are inconsistent count as corrupt.
template <typename F>
auto load_container(const std::string& path, F&& load) {
  try {
    return load(path);
  } catch (const IoError&) {
    throw;
  } catch (const VersionMismatch&) {
    throw;
  } catch (const CorruptContainer&) {
    throw;
  } catch (const Error& e) {
    throw CorruptContainer(path + ": " + e.what());
  }
}

void require_existing(const std::string& path, const std::string& name) {
  if (path.empty()) throw InvalidConfig(name + ": required");
  std::error_code ec;
  if (!fs::exists(path, ec)) throw InvalidConfig(name + ": no such file or directory: " + path);
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
  if (flag) {
    if (*flag == 0) throw InvalidConfig("threads: must be positive");
    return *flag;
  }
  const char* env = std::getenv("METADIFF_THREADS");
  if (env == nullptr || *env == '\0') return 0;
  std::size_t n = 0;
  std::size_t used = 0;
  try {
    n = std::stoull(env, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || env[used] != '\0' || n == 0 || env[0] == '-') {
    throw InvalidConfig(std::string("METADIFF_THREADS: expected a positive integer, got '") + env + "'");
  }
  return n;
}

void print_header(std::ostream& out, const std::string& command, const json& config) {
  json h;
  h["command"] = command;
  h["version"] = METADIFF_VERSION;
  h["threads"] = thread_count();
  h["config"] = config;
  out << h.dump() << std::endl;
}

void print_event(std::ostream& out, json j) { out << j.dump() << std::endl; }

// ---------------------------------------------------------------------------
// Condition files: {"spectral": [52 numbers], "w1": um, "h2": um, "n2": index}

struct ConditionFile {
  SpectralResponse spectral;
  ExtraParams extras;

  json to_json() const {
    return {{"spectral", spectral.values}, {"w1", extras.w1}, {"h2", extras.h2}, {"n2", extras.n2}};
  }
  ConditionVector vector() const { return make_condition(spectral, extras); }
};

ConditionFile parse_condition(const json& j, const std::string& where) {
  if (!j.is_object()) throw InvalidConfig(where + ": expected an object");
  ConditionFile c;
  bool seen[4] = {false, false, false, false};
  for (const auto& [key, value] : j.items()) {
    const std::string name = where + "." + key;
    if (key == "spectral") {
      if (!value.is_array() || value.size() != kSpectralLen) {
        throw InvalidConfig(name + ": expected " + std::to_string(kSpectralLen) + " numbers");
      }
      for (std::size_t k = 0; k < kSpectralLen; ++k) {
        const double v = field<double>(value[k], name + "[" + std::to_string(k) + "]");
        if (!(v >= -1.0 && v <= 1.0)) {
          throw InvalidConfig(name + "[" + std::to_string(k) + "]: must lie in [-1, 1]");
        }
        c.spectral.values[k] = v;
      }
      seen[0] = true;
    } else if (key == "w1") {
      c.extras.w1 = field<double>(value, name);
      seen[1] = true;
    } else if (key == "h2") {
      c.extras.h2 = field<double>(value, name);
      seen[2] = true;
    } else if (key == "n2") {
      c.extras.n2 = field<double>(value, name);
      seen[3] = true;
    } else {
      throw InvalidConfig(name + ": unknown field");
    }
  }
  const char* names[4] = {"spectral", "w1", "h2", "n2"};
  for (int i = 0; i < 4; ++i) {
    if (!seen[i]) throw InvalidConfig(where + "." + names[i] + ": required");
  }
  auto range = [&](const char* f, double v, double lo, double hi) {
    if (!(v >= lo && v <= hi)) {
      std::ostringstream s;
      s << where << "." << f << ": " << v << " outside [" << lo << ", " << hi << "]";
      throw InvalidConfig(s.str());
    }
  };
  range("w1", c.extras.w1, ExtraParams::kW1Min, ExtraParams::kW1Max);
  range("h2", c.extras.h2, ExtraParams::kH2Min, ExtraParams::kH2Max);
  range("n2", c.extras.n2, ExtraParams::kN2Min, ExtraParams::kN2Max);
  return c;
}

std::string sample_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04zu.pgm", i);
  return buf;
}

// ---------------------------------------------------------------------------
// Commands

struct Flags {
  std::optional<std::size_t> threads;
  std::string config;
  std::function<void(AppConfig&)> apply = [](AppConfig&) {};
};

AppConfig resolve_config(const Flags& flags) {
  AppConfig cfg;
  if (!flags.config.empty()) {
    require_existing(flags.config, "config");
    cfg = AppConfig::from_json(read_text(flags.config));
  }
  flags.apply(cfg);
  return cfg;
}

int cmd_gen_data(const Flags& flags, std::ostream& out) {
  const AppConfig cfg = resolve_config(flags);
  if (cfg.out.empty()) throw InvalidConfig("out: required");
  if (cfg.gen.n < 10) throw InvalidConfig("n: must be at least 10, got " + std::to_string(cfg.gen.n));
  if (cfg.gen.size < 2 || cfg.gen.size % 2 != 0) {
    throw InvalidConfig("size: must be even and >= 2, got " + std::to_string(cfg.gen.size));
  }
  if (cfg.gen.proxy_features == 0) throw InvalidConfig("proxy_features: must be positive");
  json header = json::parse(cfg.to_json());
  header.erase("train");
  header.erase("model");
  header.erase("data");
  print_header(out, "gen-data", header);

  const Dataset ds = generate_dataset(cfg.gen.n, cfg.gen.size,
                                      ProxyParams(cfg.gen.proxy_seed, cfg.gen.proxy_features),
                                      cfg.gen.seed);
  write_dataset(cfg.out, ds);
  print_event(out, {{"event", "done"},
                    {"path", (fs::path(cfg.out) / kDatasetFileName).string()},
                    {"manifest", json::parse(ds.manifest.to_json())}});
  return kOk;
}

int cmd_train(const Flags& flags, std::ostream& out) {
  AppConfig cfg = resolve_config(flags);
  require_existing(cfg.data, "data");
  if (cfg.out.empty()) throw InvalidConfig("out: required");
  cfg.train.validate();
  if (cfg.model_timesteps_pinned && cfg.model.timesteps != cfg.train.timesteps) {
    throw InvalidConfig("model.timesteps: must equal train.timesteps (" +
                        std::to_string(cfg.train.timesteps) + ")");
  }
  cfg.model.timesteps = cfg.train.timesteps;
  cfg.train.checkpoint_dir = cfg.out;

  const Dataset ds = load_container(cfg.data, [](const std::string& p) { return load_dataset(p); });
  if (!cfg.model_side_pinned) cfg.model.quadrant_side = ds.manifest.quadrant_side();
  if (cfg.model.quadrant_side != ds.manifest.quadrant_side()) {
    throw InvalidConfig("model.quadrant_side: " + std::to_string(cfg.model.quadrant_side) +
                        " does not match the dataset (" +
                        std::to_string(ds.manifest.quadrant_side()) + ")");
  }
  cfg.model.validate();
  json header = json::parse(cfg.to_json());
  header.erase("gen");
  print_header(out, "train", header);

  make_dir(cfg.out);
  write_text_file((fs::path(cfg.out) / "config.json").string(), header.dump(2) + "\n");
  const DenoiserModel init = DenoiserModel::init(cfg.model, derive_seed(cfg.train.seed, kInitStream));
  const TrainResult r = fit(init, ds, cfg.train, [&](const EpochRecord& e) {
    print_event(out, {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mae", e.val_mae}});
  });
  write_text_file((fs::path(cfg.out) / "report.csv").string(), r.report.to_csv());
  print_event(out, {{"event", "done"},
                    {"best_epoch", r.report.best_epoch},
                    {"checkpoint", (fs::path(cfg.out) / "best.mdck").string()},
                    {"parameters", init.parameter_count()}});
  return kOk;
}

struct SampleArgs {
  std::string checkpoint, condition, out;
  std::size_t count = 1;
  double guidance = 2.0;
  std::uint64_t seed = 0;
  bool legacy_variance = false;
};

SamplerOptions sampler_options(bool legacy_variance) {
  SamplerOptions o;
  if (legacy_variance) o.noise = ReverseNoise::kLegacyVariance;
  return o;
}

int cmd_sample(const Flags& flags, const SampleArgs& a, std::ostream& out) {
  require_existing(a.checkpoint, "checkpoint");
  require_existing(a.condition, "condition");
  if (a.out.empty()) throw InvalidConfig("out: required");
  if (a.count == 0) throw InvalidConfig("count: must be positive");
  if (!(a.guidance >= 0.0)) throw InvalidConfig("guidance: must be >= 0");
  (void)flags;
  const ConditionFile cond = parse_condition(parse_json(read_text(a.condition), "condition"), "condition");
  const Checkpoint ck =
      load_container(a.checkpoint, [](const std::string& p) { return load_checkpoint(p); });

  json request = {{"checkpoint", a.checkpoint}, {"condition", cond.to_json()},
                  {"count", a.count},          {"guidance", a.guidance},
                  {"seed", a.seed},            {"legacy_variance", a.legacy_variance}};
  print_header(out, "sample", request);

  const ConditionVector c = cond.vector();
  const ProxyParams proxy(ck.proxy_seed, ck.proxy_features);
  const auto quads = generate_quadrants(ck.model, ck.schedule.build(),
                                        SampleRequest{c, a.count, a.guidance, a.seed},
                                        sampler_options(a.legacy_variance));
  make_dir(a.out);
  json samples = json::array();
  std::vector<double> errors;
  for (std::size_t i = 0; i < quads.size(); ++i) {
    const std::string name = sample_file_name(i);
    write_pgm((fs::path(a.out) / name).string(), expand_symmetric(quads[i]));
    const double mae = score_quadrant(quads[i], c, proxy);
    errors.push_back(mae);
    samples.push_back({{"file", name}, {"mae", mae}});
  }
  const EvalReport report = EvalReport::from_errors(errors);
  json sidecar = {{"request", request},
                  {"proxy", {{"seed", ck.proxy_seed}, {"features", ck.proxy_features}}},
                  {"samples", samples},
                  {"mean_mae", report.mean}};
  write_text_file((fs::path(a.out) / kSidecarFile).string(), sidecar.dump(2) + "\n");
  print_event(out, {{"event", "done"}, {"count", quads.size()}, {"mean_mae", report.mean}});
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, split = "test", out, from_sample;
  double guidance = 2.0;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  bool legacy_variance = false;
};

// Re-scores the PGMs of a sample run against the condition in its sidecar.
EvalReport rescore_samples(const std::string& dir) {
  const std::string path = (fs::path(dir) / kSidecarFile).string();
  require_existing(path, "from_sample");
  const json side = parse_json(read_text(path), path);
  try {
    const ConditionFile cond = parse_condition(side.at("request").at("condition"), "sidecar.condition");
    const ProxyParams proxy(side.at("proxy").at("seed").get<std::uint64_t>(),
                            side.at("proxy").at("features").get<std::size_t>());
    const ConditionVector c = cond.vector();
    std::vector<double> errors;
    for (const auto& s : side.at("samples")) {
      const StructureGrid g = read_pgm((fs::path(dir) / s.at("file").get<std::string>()).string());
      errors.push_back(score_quadrant(reduce_quadrant(g), c, proxy));
    }
    return EvalReport::from_errors(errors);
  } catch (const json::exception& e) {
    throw CorruptContainer(path + ": " + e.what());
  }
}

int cmd_eval(const Flags& flags, const EvalArgs& a, std::ostream& out) {
  (void)flags;
  if (a.out.empty()) throw InvalidConfig("out: required");
  EvalReport report;
  if (!a.from_sample.empty()) {
    require_existing(a.from_sample, "from_sample");
    print_header(out, "eval", {{"from_sample", a.from_sample}, {"out", a.out}});
    report = rescore_samples(a.from_sample);
  } else {
    require_existing(a.checkpoint, "checkpoint");
    require_existing(a.data, "data");
    if (!(a.guidance >= 0.0)) throw InvalidConfig("guidance: must be >= 0");
    const Split split = parse_split(a.split);
    const Checkpoint ck =
        load_container(a.checkpoint, [](const std::string& p) { return load_checkpoint(p); });
    const Dataset ds = load_container(a.data, [](const std::string& p) { return load_dataset(p); });
    if (ds.manifest.proxy_seed != ck.proxy_seed || ds.manifest.proxy_features != ck.proxy_features) {
      throw InvalidConfig("data: dataset proxy differs from the checkpoint's");
    }
    if (ds.manifest.quadrant_side() != ck.model.config().quadrant_side) {
      throw InvalidConfig("data: grid size differs from the checkpoint's");
    }
    std::vector<Sample> samples = ds.split(split);
    if (a.limit != 0 && samples.size() > a.limit) samples.resize(a.limit);
    if (samples.empty()) throw InvalidConfig("split: " + a.split + " is empty");
    print_header(out, "eval",
                 {{"checkpoint", a.checkpoint}, {"data", a.data}, {"split", split_name(split)},
                  {"guidance", a.guidance}, {"seed", a.seed}, {"limit", a.limit}, {"out", a.out},
                  {"legacy_variance", a.legacy_variance}});
    report = evaluate_model(ck.model, ck.schedule.build(), samples, ds.manifest.proxy(), a.guidance,
                            a.seed, sampler_options(a.legacy_variance));
  }
  make_dir(a.out);
  export_report(report, a.out);
  print_event(out, {{"event", "done"},
                    {"count", report.per_sample.size()},
                    {"mean_mae", report.mean},
                    {"p95_mae", report.p95}});
  return kOk;
}

int cmd_inspect(const Flags& flags, const std::string& target, std::ostream& out) {
  (void)flags;
  require_existing(target, "path");
  std::string path = target;
  if (fs::is_directory(path)) path = (fs::path(path) / kDatasetFileName).string();
  const auto bytes = read_file(path);
  const std::string magic(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(4, bytes.size()));
  print_header(out, "inspect", {{"path", path}});
  json info;
  if (magic == "MDIF") {
    const Dataset ds = load_container(path, [&](const std::string&) { return decode_dataset(bytes); });
    info["kind"] = "dataset";
    info["manifest"] = json::parse(ds.manifest.to_json());
    const std::size_t s = ds.manifest.quadrant_side();
    for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) {
      info["splits"][split_name(sp)] = {{"count", ds.split(sp).size()},
                                        {"quadrants", {ds.split(sp).size(), s, s}},
                                        {"conditions", {ds.split(sp).size(), ConditionLayout::kLength}}};
    }
  } else if (magic == "MDCK") {
    const Checkpoint ck =
        load_container(path, [&](const std::string&) { return decode_checkpoint(bytes); });
    info["kind"] = "checkpoint";
    info["model"] = json::parse(ck.model.config().to_json());
    info["schedule"] = {{"timesteps", ck.schedule.timesteps},
                        {"beta_start", ck.schedule.beta_start},
                        {"beta_end", ck.schedule.beta_end}};
    info["meta"] = {{"proxy_seed", ck.proxy_seed},
                    {"proxy_features", ck.proxy_features},
                    {"epoch", ck.epoch}};
    info["parameters"] = ck.model.parameter_count();
    json tensors = json::array();
    for (const auto& e : ck.model.parameters().entries()) {
      tensors.push_back({{"name", e.name}, {"shape", e.shape}});
    }
    info["tensors"] = tensors;
  } else {
    throw CorruptContainer(path + ": not a dataset or checkpoint container");
  }
  info["checksums"] = "ok";
  info["bytes"] = bytes.size();
  out << info.dump(2) << std::endl;
  return kOk;
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const CorruptContainer& e) {
    err << "error: " << e.what() << "\n";
    return kCorrupt;
  } catch (const VersionMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kCorrupt;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace

AppConfig AppConfig::from_json(const std::string& text) {
  const json j = parse_json(text, "config");
  if (!j.is_object()) throw InvalidConfig("config: expected an object");
  AppConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "data") {
      c.data = field<std::string>(value, "data");
    } else if (key == "out") {
      c.out = field<std::string>(value, "out");
    } else if (key == "train") {
      c.train = TrainConfig::from_json(value.dump());
    } else if (key == "model") {
      c.model = DenoiserConfig::from_json(value.dump());
      c.model_side_pinned = value.is_object() && value.contains("quadrant_side");
      c.model_timesteps_pinned = value.is_object() && value.contains("timesteps");
    } else if (key == "gen") {
      if (!value.is_object()) throw InvalidConfig("gen: expected an object");
      for (const auto& [k, v] : value.items()) {
        const std::string name = "gen." + k;
        if (k == "n") c.gen.n = field<std::size_t>(v, name);
        else if (k == "size") c.gen.size = field<std::size_t>(v, name);
        else if (k == "seed") c.gen.seed = field<std::uint64_t>(v, name);
        else if (k == "proxy_seed") c.gen.proxy_seed = field<std::uint64_t>(v, name);
        else if (k == "proxy_features") c.gen.proxy_features = field<std::size_t>(v, name);
        else throw InvalidConfig(name + ": unknown field");
      }
    } else {
      throw InvalidConfig(key + ": unknown config key");
    }
  }
  return c;
}

std::string AppConfig::to_json() const {
  json j;
  j["data"] = data;
  j["out"] = out;
  j["gen"] = {{"n", gen.n},
              {"size", gen.size},
              {"seed", gen.seed},
              {"proxy_seed", gen.proxy_seed},
              {"proxy_features", gen.proxy_features}};
  j["train"] = json::parse(train.to_json());
  j["model"] = json::parse(model.to_json());
  return j.dump();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional diffusion for inverse design of symmetric meta-atoms.", "metadiff"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  Flags flags;
  std::size_t threads_flag = 0;
  auto* threads_opt = app.add_option("--threads", threads_flag,
                                     "Worker cap (default: METADIFF_THREADS, then all cores)");

  // Flags that only override when given.
  std::vector<std::function<void(AppConfig&)>> overrides;
  auto over = [&](CLI::App* sub, const std::string& name, auto& slot, auto setter,
                  const std::string& help) {
    using T = std::decay_t<decltype(slot)>;
    auto holder = std::make_shared<T>(slot);
    auto* opt = sub->add_option(name, *holder, help)->capture_default_str();
    overrides.push_back([opt, holder, setter](AppConfig& c) {
      if (opt->count() > 0) setter(c, *holder);
    });
    return opt;
  };
  AppConfig defaults;

  auto* gen = app.add_subcommand("gen-data", "Generate a labelled synthetic dataset");
  gen->add_option("--config", flags.config, "JSON config file (flags take precedence)");
  over(gen, "--out", defaults.out, [](AppConfig& c, const std::string& v) { c.out = v; },
       "Output directory");
  over(gen, "--n", defaults.gen.n, [](AppConfig& c, std::size_t v) { c.gen.n = v; },
       "Number of samples (>= 10)");
  over(gen, "--size", defaults.gen.size, [](AppConfig& c, std::size_t v) { c.gen.size = v; },
       "Full grid side, even");
  over(gen, "--seed", defaults.gen.seed, [](AppConfig& c, std::uint64_t v) { c.gen.seed = v; },
       "Generation seed");
  over(gen, "--proxy-seed", defaults.gen.proxy_seed,
       [](AppConfig& c, std::uint64_t v) { c.gen.proxy_seed = v; }, "Surrogate weight seed");
  over(gen, "--proxy-features", defaults.gen.proxy_features,
       [](AppConfig& c, std::size_t v) { c.gen.proxy_features = v; }, "Surrogate hidden width");

  auto* train = app.add_subcommand("train", "Train the denoiser");
  train->add_option("--config", flags.config, "JSON config file (flags take precedence)");
  over(train, "--data", defaults.data, [](AppConfig& c, const std::string& v) { c.data = v; },
       "Dataset directory or container");
  over(train, "--out", defaults.out, [](AppConfig& c, const std::string& v) { c.out = v; },
       "Run directory for checkpoints and report.csv");
  over(train, "--epochs", defaults.train.epochs,
       [](AppConfig& c, std::size_t v) { c.train.epochs = v; }, "Training epochs");
  over(train, "--batch-size", defaults.train.batch_size,
       [](AppConfig& c, std::size_t v) { c.train.batch_size = v; }, "Minibatch size");
  over(train, "--lr", defaults.train.learning_rate,
       [](AppConfig& c, double v) { c.train.learning_rate = v; }, "Adam learning rate");
  over(train, "--dropout", defaults.train.cond_dropout_prob,
       [](AppConfig& c, double v) { c.train.cond_dropout_prob = v; }, "Condition dropout probability");
  over(train, "--seed", defaults.train.seed,
       [](AppConfig& c, std::uint64_t v) { c.train.seed = v; }, "Training seed");
  over(train, "--timesteps", defaults.train.timesteps,
       [](AppConfig& c, std::size_t v) { c.train.timesteps = v; }, "Diffusion steps T");
  over(train, "--guidance", defaults.train.guidance_w,
       [](AppConfig& c, double v) { c.train.guidance_w = v; }, "Guidance weight for validation");
  over(train, "--eval-seed", defaults.train.eval_seed,
       [](AppConfig& c, std::uint64_t v) { c.train.eval_seed = v; }, "Validation sampling seed");
  over(train, "--val-cap", defaults.train.val_cap,
       [](AppConfig& c, std::size_t v) { c.train.val_cap = v; }, "Validation conditions per epoch");
  over(train, "--checkpoint-every", defaults.train.checkpoint_every,
       [](AppConfig& c, std::size_t v) { c.train.checkpoint_every = v; },
       "Also keep epoch_NNN.mdck every N epochs");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Generate structures for a target condition");
  sample->add_option("--checkpoint", sa.checkpoint, "Model checkpoint")->required();
  sample->add_option("--condition", sa.condition, "Condition JSON: spectral[52], w1, h2, n2")->required();
  sample->add_option("--count", sa.count, "Number of samples")->capture_default_str();
  sample->add_option("--guidance", sa.guidance, "Guidance weight w")->capture_default_str();
  sample->add_option("--seed", sa.seed, "Sampling seed")->capture_default_str();
  sample->add_option("--out", sa.out, "Output directory")->required();
  sample->add_flag("--legacy-variance", sa.legacy_variance,
                   "Scale reverse-step noise by the posterior variance instead of its square root");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score generated structures with the surrogate");
  auto* ck_opt = eval->add_option("--checkpoint", ea.checkpoint, "Model checkpoint");
  auto* data_opt = eval->add_option("--data", ea.data, "Dataset directory or container");
  eval->add_option("--split", ea.split, "train, val or test")->capture_default_str();
  eval->add_option("--guidance", ea.guidance, "Guidance weight w")->capture_default_str();
  eval->add_option("--seed", ea.seed, "Sampling seed")->capture_default_str();
  eval->add_option("--limit", ea.limit, "Score only the first N conditions (0 = all)")
      ->capture_default_str();
  eval->add_option("--out", ea.out, "Report directory")->required();
  eval->add_flag("--legacy-variance", ea.legacy_variance,
                 "Scale reverse-step noise by the posterior variance instead of its square root");
  auto* from_opt = eval->add_option("--from-sample", ea.from_sample,
                                    "Re-score the output directory of `sample` instead");
  from_opt->excludes(ck_opt)->excludes(data_opt);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Verify and describe a dataset or checkpoint");
  inspect->add_option("path", inspect_path, "Container file or dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  return guarded(err, [&] {
    std::optional<std::size_t> threads;
    if (threads_opt->count() > 0) threads = threads_flag;
    set_thread_count(resolve_threads(threads));
    flags.apply = [&](AppConfig& c) {
      for (const auto& f : overrides) f(c);
    };
    if (gen->parsed()) return cmd_gen_data(flags, out);
    if (train->parsed()) return cmd_train(flags, out);
    if (sample->parsed()) return cmd_sample(flags, sa, out);
    if (eval->parsed()) {
      if (ea.from_sample.empty() && (ea.checkpoint.empty() || ea.data.empty())) {
        throw InvalidConfig("eval: needs --checkpoint and --data, or --from-sample");
      }
      return cmd_eval(flags, ea, out);
    }
    return cmd_inspect(flags, inspect_path, out);
  });
}

}  // namespace metadiff::cli
