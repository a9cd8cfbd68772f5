#include "metadiff/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "metadiff/diffusion.hpp"
#include "metadiff/error.hpp"
#include "metadiff/eval.hpp"

namespace metadiff {

namespace {

constexpr std::uint64_t kBatchStream = 0x4241'5443'48;  // "BATCH"
constexpr std::uint64_t kShuffleStream = 0x5348'5546;   // "SHUF"

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw InvalidConfig("train." + field + ": " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate > 0, "learning_rate", "must be > 0");
  require(cond_dropout_prob >= 0 && cond_dropout_prob < 1, "cond_dropout_prob",
          "must be in [0, 1)");
  require(timesteps >= 2, "timesteps", "must be >= 2");
  require(adam_beta1 >= 0 && adam_beta1 < 1, "adam_beta1", "must be in [0, 1)");
  require(adam_beta2 >= 0 && adam_beta2 < 1, "adam_beta2", "must be in [0, 1)");
  require(adam_eps > 0, "adam_eps", "must be > 0");
  require(val_cap >= 1, "val_cap", "must be >= 1");
  require(guidance_w >= 0, "guidance_w", "must be >= 0");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["cond_dropout_prob"] = cond_dropout_prob;
  j["seed"] = seed;
  j["timesteps"] = timesteps;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["checkpoint_every"] = checkpoint_every;
  j["val_cap"] = val_cap;
  j["guidance_w"] = guidance_w;
  j["eval_seed"] = eval_seed;
  j["checkpoint_dir"] = checkpoint_dir;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("train: ") + e.what());
  }
  if (!j.is_object()) throw InvalidConfig("train: expected an object");
  // get<size_t>() would silently wrap a negative number.
  auto count = [](const nlohmann::json& v) {
    if (!v.is_number_unsigned()) throw nlohmann::json::type_error::create(302, "", &v);
    return v.get<std::uint64_t>();
  };
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = count(value);
      else if (key == "batch_size") c.batch_size = count(value);
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "cond_dropout_prob") c.cond_dropout_prob = value.get<double>();
      else if (key == "seed") c.seed = count(value);
      else if (key == "timesteps") c.timesteps = count(value);
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "checkpoint_every") c.checkpoint_every = count(value);
      else if (key == "val_cap") c.val_cap = count(value);
      else if (key == "guidance_w") c.guidance_w = value.get<double>();
      else if (key == "eval_seed") c.eval_seed = count(value);
      else if (key == "checkpoint_dir") c.checkpoint_dir = value.get<std::string>();
      else throw InvalidConfig("train." + key + ": unknown field");
    } catch (const nlohmann::json::exception&) {
      throw InvalidConfig("train." + key + ": wrong type");
    }
  }
  return c;
}

Adam::Adam(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ShapeMismatch("Adam: parameter count changed");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double update = lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    params[i] = static_cast<double>(static_cast<float>(params[i] - update));
  }
}

PreparedBatch prepare_batch(std::span<const SignedSample> data, std::span<const std::size_t> indices,
                            const NoiseSchedule& sched, Rng& rng, double cond_dropout_prob) {
  if (indices.empty()) throw InvalidConfig("batch: empty");
  const std::size_t n = indices.size();
  if (indices[0] >= data.size()) throw OutOfRange("batch: sample index out of range");
  const std::size_t side = data[indices[0]].x0.rows();
  PreparedBatch b;
  b.x_t = Tensor(n, 1, side, side);
  b.eps = Tensor(n, 1, side, side);
  b.t.resize(n);
  b.masked.resize(n);
  b.cond = Matrix(n, ConditionLayout::kLength, 0.0);
  const auto T = static_cast<std::int64_t>(sched.timesteps());
  for (std::size_t k = 0; k < n; ++k) {
    if (indices[k] >= data.size()) throw OutOfRange("batch: sample index out of range");
    const SignedSample& s = data[indices[k]];
    if (s.x0.rows() != side || s.x0.cols() != side) throw ShapeMismatch("batch: mixed grid sizes");
    b.t[k] = static_cast<std::size_t>(rng.uniform_int(1, T));
    b.masked[k] = rng.bernoulli(cond_dropout_prob);
    Matrix eps(side, side);
    for (double& v : eps.data()) v = rng.normal();
    const Matrix xt = q_sample(s.x0, b.t[k], eps, sched);
    std::ranges::copy(eps.data(), b.eps.sample(k).begin());
    std::ranges::copy(xt.data(), b.x_t.sample(k).begin());
    if (!b.masked[k]) {
      const auto c = s.condition.values();
      std::copy(c.begin(), c.end(), &b.cond(k, 0));
    }
  }
  return b;
}

double train_step_prepared(DenoiserModel& model, Adam& opt, const PreparedBatch& batch,
                           double learning_rate) {
  std::vector<double> grad;
  const double loss = model.backward(batch.x_t, batch.t, batch.cond, batch.eps, grad);
  opt.step(model.parameters().values(), grad, learning_rate);
  return loss;
}

double train_step(DenoiserModel& model, Adam& opt, std::span<const SignedSample> data,
                  std::span<const std::size_t> indices, const NoiseSchedule& sched, Rng& rng,
                  const TrainConfig& config) {
  const PreparedBatch b = prepare_batch(data, indices, sched, rng, config.cond_dropout_prob);
  return train_step_prepared(model, opt, b, config.learning_rate);
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_mae,seconds\n";
  char buf[128];
  for (const EpochRecord& r : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", r.epoch, r.train_loss, r.val_mae,
                  r.seconds);
    out << buf;
  }
  return out.str();
}

TrainResult fit(const DenoiserModel& initial, const Dataset& dataset, const TrainConfig& config,
                const EpochCallback& on_epoch) {
  config.validate();
  if (initial.config().timesteps != config.timesteps) {
    throw ScheduleMismatch("model T=" + std::to_string(initial.config().timesteps) +
                           " but train.timesteps=" + std::to_string(config.timesteps));
  }
  if (initial.config().quadrant_side != dataset.manifest.quadrant_side()) {
    throw ShapeMismatch("model quadrant side differs from dataset");
  }
  const auto& train = dataset.split(Split::kTrain);
  const auto& val_all = dataset.split(Split::kVal);
  if (train.empty()) throw InvalidConfig("dataset: empty train split");
  if (val_all.empty()) throw InvalidConfig("dataset: empty validation split");

  const NoiseSchedule sched = NoiseSchedule::linear(config.timesteps);
  const ProxyParams proxy = dataset.manifest.proxy();
  const std::vector<SignedSample> data = to_signed_samples(train);
  const std::vector<Sample> val(val_all.begin(),
                                val_all.begin() + static_cast<std::ptrdiff_t>(
                                                      std::min(config.val_cap, val_all.size())));

  TrainResult result{initial, initial, {}};
  DenoiserModel& model = result.final_model;
  Adam opt(model.parameter_count(), config);
  Rng batch_rng(derive_seed(config.seed, kBatchStream));

  const std::filesystem::path dir(config.checkpoint_dir);
  auto save = [&](const std::string& name, const DenoiserModel& m, std::size_t epoch) {
    if (config.checkpoint_dir.empty()) return;
    Checkpoint ck{m, ScheduleHeader{config.timesteps}, proxy.seed(), proxy.n_features(), epoch};
    save_checkpoint((dir / name).string(), ck);
  };
  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + config.checkpoint_dir + ": " + ec.message());
  }

  std::vector<std::size_t> order(data.size());
  double best_mae = 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(config.seed, kShuffleStream + epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i)));
      std::swap(order[i], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, order.size() - b);
      loss_sum += train_step(model, opt, data, std::span(order).subspan(b, m), sched, batch_rng,
                             config);
      ++steps;
    }
    const EvalReport ev =
        evaluate_model(model, sched, val, proxy, config.guidance_w, config.eval_seed);
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    EpochRecord rec{epoch, loss_sum / static_cast<double>(steps), ev.mean, took.count()};
    result.report.epochs.push_back(rec);
    if (result.report.best_epoch == 0 || rec.val_mae < best_mae) {
      best_mae = rec.val_mae;
      result.report.best_epoch = epoch;
      result.best_model = model;
      save("best.mdck", model, epoch);
    }
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.mdck", epoch);
      save(name, model, epoch);
    }
    if (on_epoch) on_epoch(rec);
  }
  if (config.epochs == 0) save("best.mdck", model, 0);
  save("last.mdck", model, config.epochs);
  return result;
}

}  // namespace metadiff
