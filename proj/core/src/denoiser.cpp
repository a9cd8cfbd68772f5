#include "metadiff/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "json.hpp"
#include "metadiff/error.hpp"
#include "metadiff/nn_ops.hpp"
#include "metadiff/rng.hpp"

namespace metadiff {

// ---------------------------------------------------------------------------
// Config

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw InvalidConfig("model." + field + ": " + why);
  };
  if (quadrant_side == 0) fail("quadrant_side", "must be positive");
  if (channel_widths.empty()) fail("channel_widths", "needs at least one level");
  for (std::size_t w : channel_widths) {
    if (w == 0) fail("channel_widths", "widths must be positive");
  }
  const std::size_t div = std::size_t{1} << (channel_widths.size() - 1);
  if (quadrant_side % div != 0) {
    fail("quadrant_side", "must be divisible by 2^(levels-1) = " + std::to_string(div));
  }
  if (bottleneck_dim == 0) fail("bottleneck_dim", "must be positive");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) fail("time_embed_dim", "must be positive and even");
  if (cond_embed_dim == 0) fail("cond_embed_dim", "must be positive");
  if (condition_len != 55) fail("condition_len", "must be 52 + 3 = 55");
  if (norm_groups == 0) fail("norm_groups", "must be positive");
  if (timesteps < 2) fail("timesteps", "must be >= 2");
}

std::string DenoiserConfig::to_json() const {
  nlohmann::json j;
  j["quadrant_side"] = quadrant_side;
  j["channel_widths"] = channel_widths;
  j["bottleneck_dim"] = bottleneck_dim;
  j["time_embed_dim"] = time_embed_dim;
  j["cond_embed_dim"] = cond_embed_dim;
  j["condition_len"] = condition_len;
  j["norm_groups"] = norm_groups;
  j["timesteps"] = timesteps;
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& text) {
  DenoiserConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("model: ") + e.what());
  }
  if (!j.is_object()) throw InvalidConfig("model: expected an object");
  auto count = [](const nlohmann::json& v) {
    if (!v.is_number_unsigned()) throw nlohmann::json::type_error::create(302, "", &v);
    return v.get<std::size_t>();
  };
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "quadrant_side") c.quadrant_side = count(value);
      else if (key == "channel_widths") {
        if (!value.is_array()) throw nlohmann::json::type_error::create(302, "", &value);
        c.channel_widths.clear();
        for (const auto& w : value) c.channel_widths.push_back(count(w));
      }
      else if (key == "bottleneck_dim") c.bottleneck_dim = count(value);
      else if (key == "time_embed_dim") c.time_embed_dim = count(value);
      else if (key == "cond_embed_dim") c.cond_embed_dim = count(value);
      else if (key == "condition_len") c.condition_len = count(value);
      else if (key == "norm_groups") c.norm_groups = count(value);
      else if (key == "timesteps") c.timesteps = count(value);
      else throw InvalidConfig("model." + key + ": unknown field");
    } catch (const nlohmann::json::exception&) {
      throw InvalidConfig("model." + key + ": wrong type");
    }
  }
  c.validate();
  return c;
}

DenoiserConfig DenoiserConfig::full_scale() {
  DenoiserConfig c;
  c.quadrant_side = 32;
  c.channel_widths = {64, 128, 256};
  c.bottleneck_dim = 512;
  c.time_embed_dim = 128;
  c.cond_embed_dim = 128;
  c.timesteps = 1000;
  return c;
}

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, std::vector<std::size_t> shape) {
  const std::size_t size =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  entries_.push_back({std::move(name), std::move(shape), values_.size(), size});
  values_.resize(values_.size() + size, 0.0);
  return entries_.size() - 1;
}

std::size_t ParameterSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw InvalidConfig("no parameter named " + name);
}

// ---------------------------------------------------------------------------
// Layout

namespace {

struct Lin {
  std::size_t w = 0, b = 0, in = 0, out = 0;
};
struct Conv {
  std::size_t w = 0, b = 0, in = 0, out = 0, k = 0;
};
struct Norm {
  std::size_t g = 0, b = 0, channels = 0, groups = 1;
};
struct Res {
  Norm n1;
  Conv c1;
  Norm n2;
  Conv c2;
  bool has_skip = false;
  Conv skip;
};
struct Dec {
  std::size_t up_w = 0, up_b = 0, in = 0, out = 0;
  Lin time, cond;
  Res res;
};

Lin add_linear(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out) {
  Lin l;
  l.in = in;
  l.out = out;
  l.w = p.add(name + ".weight", {out, in});
  l.b = p.add(name + ".bias", {out});
  return l;
}

Conv add_conv(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out,
              std::size_t k) {
  Conv c;
  c.in = in;
  c.out = out;
  c.k = k;
  c.w = p.add(name + ".weight", {out, in, k, k});
  c.b = p.add(name + ".bias", {out});
  return c;
}

Norm add_norm(ParameterSet& p, const std::string& name, std::size_t channels, std::size_t groups) {
  Norm n;
  n.channels = channels;
  n.groups = std::gcd(channels, groups);
  n.g = p.add(name + ".weight", {channels});
  n.b = p.add(name + ".bias", {channels});
  return n;
}

Res add_res(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out,
            std::size_t groups) {
  Res r;
  r.n1 = add_norm(p, name + ".norm1", in, groups);
  r.c1 = add_conv(p, name + ".conv1", in, out, 3);
  r.n2 = add_norm(p, name + ".norm2", out, groups);
  r.c2 = add_conv(p, name + ".conv2", out, out, 3);
  r.has_skip = in != out;
  if (r.has_skip) r.skip = add_conv(p, name + ".skip", in, out, 1);
  return r;
}

}  // namespace

struct DenoiserModel::Layout {
  Lin time1, time2, cond1, cond2;
  Conv stem;
  std::vector<Res> enc;
  Lin mid_down, mid_time, mid_cond, mid_up;
  std::vector<Dec> dec;  // dec[i] produces level i, i < levels - 1
  Norm out_norm;
  Conv out_conv;
  std::vector<std::size_t> fan_in;  // per parameter entry
};

DenoiserModel::DenoiserModel(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  auto layout = std::make_shared<Layout>();
  auto& L = *layout;
  auto& p = params_;
  const auto& widths = config_.channel_widths;
  const std::size_t levels = widths.size();
  const std::size_t groups = config_.norm_groups;
  const std::size_t te = config_.time_embed_dim;
  const std::size_t ce = config_.cond_embed_dim;

  L.time1 = add_linear(p, "time.fc1", te, te);
  L.time2 = add_linear(p, "time.fc2", te, te);
  L.cond1 = add_linear(p, "cond.fc1", config_.condition_len, ce);
  L.cond2 = add_linear(p, "cond.fc2", ce, ce);
  L.stem = add_conv(p, "enc.stem", 1, widths[0], 3);
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t in = i == 0 ? widths[0] : widths[i - 1];
    L.enc.push_back(add_res(p, "enc." + std::to_string(i), in, widths[i], groups));
  }
  const std::size_t bottom = config_.bottom_side();
  const std::size_t flat = widths.back() * bottom * bottom;
  L.mid_down = add_linear(p, "mid.down", flat, config_.bottleneck_dim);
  L.mid_time = add_linear(p, "mid.time", te, config_.bottleneck_dim);
  L.mid_cond = add_linear(p, "mid.cond", ce, config_.bottleneck_dim);
  L.mid_up = add_linear(p, "mid.up", config_.bottleneck_dim, flat);
  L.dec.resize(levels - 1);
  for (std::size_t i = levels - 1; i-- > 0;) {
    Dec& d = L.dec[i];
    const std::string name = "dec." + std::to_string(i);
    d.in = widths[i + 1];
    d.out = widths[i];
    d.up_w = p.add(name + ".up.weight", {d.in, d.out, 2, 2});
    d.up_b = p.add(name + ".up.bias", {d.out});
    d.time = add_linear(p, name + ".time", te, d.out);
    d.cond = add_linear(p, name + ".cond", ce, d.out);
    d.res = add_res(p, name + ".res", 2 * d.out, d.out, groups);
  }
  L.out_norm = add_norm(p, "out.norm", widths[0], groups);
  L.out_conv = add_conv(p, "out.conv", widths[0], 1, 3);

  // Fan-in per entry for initialization: weights and their biases share it.
  L.fan_in.assign(p.entries().size(), 0);
  auto set_lin = [&](const Lin& l) { L.fan_in[l.w] = L.fan_in[l.b] = l.in; };
  auto set_conv = [&](const Conv& c) { L.fan_in[c.w] = L.fan_in[c.b] = c.in * c.k * c.k; };
  auto set_res = [&](const Res& r) {
    set_conv(r.c1);
    set_conv(r.c2);
    if (r.has_skip) set_conv(r.skip);
  };
  set_lin(L.time1);
  set_lin(L.time2);
  set_lin(L.cond1);
  set_lin(L.cond2);
  set_conv(L.stem);
  for (const auto& r : L.enc) set_res(r);
  set_lin(L.mid_down);
  set_lin(L.mid_time);
  set_lin(L.mid_cond);
  set_lin(L.mid_up);
  for (const auto& d : L.dec) {
    L.fan_in[d.up_w] = L.fan_in[d.up_b] = d.in;
    set_lin(d.time);
    set_lin(d.cond);
    set_res(d.res);
  }
  set_conv(L.out_conv);
  layout_ = std::move(layout);
}

DenoiserModel DenoiserModel::zeros(const DenoiserConfig& config) { return DenoiserModel(config); }

DenoiserModel DenoiserModel::init(const DenoiserConfig& config, std::uint64_t seed) {
  DenoiserModel m(config);
  Rng rng(seed);
  const auto& entries = m.params_.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    auto v = m.params_.view(e);
    const std::size_t fan_in = m.layout_->fan_in[e];
    if (fan_in == 0) {
      // normalization: scale 1, shift 0
      const bool is_scale = entries[e].name.ends_with(".weight");
      std::fill(v.begin(), v.end(), is_scale ? 1.0 : 0.0);
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : v) x = rng.uniform(-bound, bound);
  }
  m.round_to_float();
  return m;
}

void DenoiserModel::round_to_float() {
  for (double& v : params_.values()) v = static_cast<double>(static_cast<float>(v));
}

std::uint64_t DenoiserModel::checksum() const {
  const auto& v = params_.values();
  return hash_bytes(v.data(), v.size() * sizeof(double));
}

std::vector<double> sinusoidal_encoding(std::size_t t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw InvalidConfig("sinusoidal_encoding: dim must be even");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double a = static_cast<double>(t) * freq;
    out[i] = std::sin(a);
    out[half + i] = std::cos(a);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

struct ResCache {
  Tensor x, n1, a1, h1, n2, a2;
  nn::GroupNormStats s1, s2;
};

struct DecCache {
  Tensor up_in;
  Tensor cat;
  ResCache res;
};

struct Cache {
  Tensor tbase, t_h1, t_a1, te;
  Tensor cin, c_h1, c_a1, ce;
  Tensor x, stem_out;
  std::vector<Tensor> pooled;  // pooled[i] feeds enc[i], i >= 1
  std::vector<ResCache> enc;
  std::vector<Tensor> enc_out;
  Tensor mid_pre, mid_v;
  std::vector<DecCache> dec;
  Tensor out_in, on, oa;
  nn::GroupNormStats out_stats;
};

class Grads {
 public:
  Grads(const ParameterSet& p, std::vector<double>& g) : p_(p), g_(g) {}
  std::span<double> operator[](std::size_t i) {
    const auto& e = p_.entry(i);
    return {g_.data() + e.offset, e.size};
  }

 private:
  const ParameterSet& p_;
  std::vector<double>& g_;
};

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

// Adds per-sample, per-channel offsets to every pixel of the channel.
void add_channel_bias(Tensor& x, const Tensor& a, const Tensor& b) {
  for (std::size_t n = 0; n < x.n; ++n) {
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const double v = a.data[n * x.c + ch] + b.data[n * x.c + ch];
      double* plane = x.channel(n, ch);
      for (std::size_t p = 0; p < x.plane(); ++p) plane[p] += v;
    }
  }
}

class Graph {
 public:
  Graph(const DenoiserConfig& cfg, const ParameterSet& params, const DenoiserModel::Layout& layout)
      : cfg_(cfg), params_(params), L_(layout) {}

  Tensor forward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                 const ForwardOptions& opt, Cache& c) const;
  void backward(const Cache& c, const Tensor& dy, const ForwardOptions& opt, Grads& g) const;

  Tensor time_embedding(std::span<const std::size_t> t, Cache& c) const;

 private:
  std::span<const double> P(std::size_t i) const { return params_.view(i); }

  void linear(const Lin& l, const Tensor& x, Tensor& y) const {
    nn::linear_forward(x, P(l.w), P(l.b), l.out, y);
  }
  void linear_back(const Lin& l, const Tensor& x, const Tensor& dy, Tensor* dx, Grads& g) const {
    nn::linear_backward(x, P(l.w), dy, dx, g[l.w], g[l.b]);
  }

  void res_forward(const Res& r, const Tensor& x, ResCache& c, Tensor& out) const;
  Tensor res_backward(const Res& r, const ResCache& c, const Tensor& dout, Grads& g) const;

  bool dropped(const ForwardOptions& opt, std::size_t level) const {
    return level < opt.drop_skip.size() && opt.drop_skip[level];
  }

  const DenoiserConfig& cfg_;
  const ParameterSet& params_;
  const DenoiserModel::Layout& L_;
};

void Graph::res_forward(const Res& r, const Tensor& x, ResCache& c, Tensor& out) const {
  c.x = x;
  nn::group_norm_forward(x, P(r.n1.g), P(r.n1.b), r.n1.groups, c.n1, c.s1);
  nn::silu_forward(c.n1, c.a1);
  nn::conv2d_forward(c.a1, P(r.c1.w), P(r.c1.b), r.c1.out, 3, c.h1);
  nn::group_norm_forward(c.h1, P(r.n2.g), P(r.n2.b), r.n2.groups, c.n2, c.s2);
  nn::silu_forward(c.n2, c.a2);
  nn::conv2d_forward(c.a2, P(r.c2.w), P(r.c2.b), r.c2.out, 3, out);
  if (r.has_skip) {
    Tensor s;
    nn::conv2d_forward(x, P(r.skip.w), P(r.skip.b), r.skip.out, 1, s);
    add_into(out, s);
  } else {
    add_into(out, x);
  }
}

Tensor Graph::res_backward(const Res& r, const ResCache& c, const Tensor& dout, Grads& g) const {
  Tensor da2, dn2, dh1, da1, dn1, dx;
  nn::conv2d_backward(c.a2, P(r.c2.w), 3, dout, &da2, g[r.c2.w], g[r.c2.b]);
  nn::silu_backward(c.n2, da2, dn2);
  nn::group_norm_backward(c.h1, P(r.n2.g), r.n2.groups, c.s2, dn2, dh1, g[r.n2.g], g[r.n2.b]);
  nn::conv2d_backward(c.a1, P(r.c1.w), 3, dh1, &da1, g[r.c1.w], g[r.c1.b]);
  nn::silu_backward(c.n1, da1, dn1);
  nn::group_norm_backward(c.x, P(r.n1.g), r.n1.groups, c.s1, dn1, dx, g[r.n1.g], g[r.n1.b]);
  if (r.has_skip) {
    Tensor ds;
    nn::conv2d_backward(c.x, P(r.skip.w), 1, dout, &ds, g[r.skip.w], g[r.skip.b]);
    add_into(dx, ds);
  } else {
    add_into(dx, dout);
  }
  return dx;
}

Tensor Graph::time_embedding(std::span<const std::size_t> t, Cache& c) const {
  const std::size_t dim = cfg_.time_embed_dim;
  c.tbase = Tensor(t.size(), dim, 1, 1);
  for (std::size_t n = 0; n < t.size(); ++n) {
    const auto e = sinusoidal_encoding(t[n], dim);
    std::copy(e.begin(), e.end(), c.tbase.data.begin() + static_cast<std::ptrdiff_t>(n * dim));
  }
  linear(L_.time1, c.tbase, c.t_h1);
  nn::silu_forward(c.t_h1, c.t_a1);
  linear(L_.time2, c.t_a1, c.te);
  return c.te;
}

Tensor Graph::forward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                      const ForwardOptions& opt, Cache& c) const {
  const std::size_t levels = cfg_.levels();
  const std::size_t n = x.n;

  time_embedding(t, c);
  c.cin = Tensor(n, cfg_.condition_len, 1, 1);
  std::copy(cond.data().begin(), cond.data().end(), c.cin.data.begin());
  linear(L_.cond1, c.cin, c.c_h1);
  nn::silu_forward(c.c_h1, c.c_a1);
  linear(L_.cond2, c.c_a1, c.ce);

  // Encoder
  c.x = x;
  nn::conv2d_forward(x, P(L_.stem.w), P(L_.stem.b), L_.stem.out, 3, c.stem_out);
  c.enc.resize(levels);
  c.enc_out.resize(levels);
  c.pooled.resize(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const Tensor* in = &c.stem_out;
    if (i > 0) {
      nn::avg_pool2_forward(c.enc_out[i - 1], c.pooled[i]);
      in = &c.pooled[i];
    }
    res_forward(L_.enc[i], *in, c.enc[i], c.enc_out[i]);
  }

  // Bottleneck
  const Tensor& deepest = c.enc_out[levels - 1];
  Tensor down, tproj, cproj, up;
  linear(L_.mid_down, deepest, down);
  linear(L_.mid_time, c.te, tproj);
  linear(L_.mid_cond, c.ce, cproj);
  c.mid_pre = down;
  for (std::size_t i = 0; i < c.mid_pre.size(); ++i) {
    c.mid_pre.data[i] += tproj.data[i] + cproj.data[i];
  }
  nn::silu_forward(c.mid_pre, c.mid_v);
  linear(L_.mid_up, c.mid_v, up);
  Tensor h(n, deepest.c, deepest.h, deepest.w);
  h.data = std::move(up.data);
  if (!dropped(opt, levels - 1)) add_into(h, deepest);

  // Decoder
  c.dec.resize(levels - 1);
  for (std::size_t i = levels - 1; i-- > 0;) {
    const Dec& d = L_.dec[i];
    DecCache& dc = c.dec[i];
    dc.up_in = std::move(h);
    Tensor u;
    nn::tconv2x2_forward(dc.up_in, P(d.up_w), P(d.up_b), d.out, u);
    Tensor ti, ci;
    linear(d.time, c.te, ti);
    linear(d.cond, c.ce, ci);
    add_channel_bias(u, ti, ci);
    const Tensor& skip = c.enc_out[i];
    dc.cat = Tensor(n, 2 * d.out, u.h, u.w);
    const bool drop = dropped(opt, i);
    for (std::size_t s = 0; s < n; ++s) {
      auto dst = dc.cat.sample(s);
      auto us = u.sample(s);
      std::copy(us.begin(), us.end(), dst.begin());
      if (!drop) {
        auto ks = skip.sample(s);
        std::copy(ks.begin(), ks.end(), dst.begin() + static_cast<std::ptrdiff_t>(us.size()));
      }
    }
    res_forward(d.res, dc.cat, dc.res, h);
  }

  // Output head
  c.out_in = std::move(h);
  nn::group_norm_forward(c.out_in, P(L_.out_norm.g), P(L_.out_norm.b), L_.out_norm.groups, c.on,
                         c.out_stats);
  nn::silu_forward(c.on, c.oa);
  Tensor y;
  nn::conv2d_forward(c.oa, P(L_.out_conv.w), P(L_.out_conv.b), 1, 3, y);
  return y;
}

void Graph::backward(const Cache& c, const Tensor& dy, const ForwardOptions& opt, Grads& g) const {
  const std::size_t levels = cfg_.levels();

  Tensor doa, don, dh;
  nn::conv2d_backward(c.oa, P(L_.out_conv.w), 3, dy, &doa, g[L_.out_conv.w], g[L_.out_conv.b]);
  nn::silu_backward(c.on, doa, don);
  nn::group_norm_backward(c.out_in, P(L_.out_norm.g), L_.out_norm.groups, c.out_stats, don, dh,
                          g[L_.out_norm.g], g[L_.out_norm.b]);

  Tensor dte(c.te.n, c.te.c, 1, 1);
  Tensor dce(c.ce.n, c.ce.c, 1, 1);
  std::vector<Tensor> denc(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const Tensor& e = c.enc_out[i];
    denc[i] = Tensor(e.n, e.c, e.h, e.w);
  }

  // Decoder, shallow to deep.
  for (std::size_t i = 0; i + 1 < levels; ++i) {
    const Dec& d = L_.dec[i];
    const DecCache& dc = c.dec[i];
    const Tensor dcat = res_backward(d.res, dc.res, dh, g);
    Tensor du(dcat.n, d.out, dcat.h, dcat.w);
    const bool drop = dropped(opt, i);
    for (std::size_t s = 0; s < dcat.n; ++s) {
      auto src = dcat.sample(s);
      const std::size_t half = du.per_sample();
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(half), du.sample(s).begin());
      if (!drop) {
        auto dst = denc[i].sample(s);
        for (std::size_t k = 0; k < half; ++k) dst[k] += src[half + k];
      }
    }
    Tensor dinj(du.n, du.c, 1, 1);
    for (std::size_t s = 0; s < du.n; ++s) {
      for (std::size_t ch = 0; ch < du.c; ++ch) {
        const double* plane = du.channel(s, ch);
        double sum = 0.0;
        for (std::size_t p = 0; p < du.plane(); ++p) sum += plane[p];
        dinj.data[s * du.c + ch] = sum;
      }
    }
    Tensor dte_i, dce_i;
    linear_back(d.time, c.te, dinj, &dte_i, g);
    linear_back(d.cond, c.ce, dinj, &dce_i, g);
    add_into(dte, dte_i);
    add_into(dce, dce_i);
    Tensor dup;
    nn::tconv2x2_backward(dc.up_in, P(d.up_w), du, dup, g[d.up_w], g[d.up_b]);
    dh = std::move(dup);
  }

  // Bottleneck. dh is the gradient of the bottleneck output map.
  const Tensor& deepest = c.enc_out[levels - 1];
  if (!dropped(opt, levels - 1)) add_into(denc[levels - 1], dh);
  Tensor dup_flat(dh.n, dh.per_sample(), 1, 1);
  dup_flat.data = dh.data;
  Tensor dv, dpre;
  linear_back(L_.mid_up, c.mid_v, dup_flat, &dv, g);
  nn::silu_backward(c.mid_pre, dv, dpre);
  Tensor ddeep, dte_m, dce_m;
  linear_back(L_.mid_down, deepest, dpre, &ddeep, g);
  linear_back(L_.mid_time, c.te, dpre, &dte_m, g);
  linear_back(L_.mid_cond, c.ce, dpre, &dce_m, g);
  add_into(denc[levels - 1], ddeep);
  add_into(dte, dte_m);
  add_into(dce, dce_m);

  // Encoder, deep to shallow.
  for (std::size_t i = levels; i-- > 0;) {
    Tensor din = res_backward(L_.enc[i], c.enc[i], denc[i], g);
    if (i > 0) {
      Tensor dprev;
      nn::avg_pool2_backward(din, dprev);
      add_into(denc[i - 1], dprev);
    } else {
      nn::conv2d_backward(c.x, P(L_.stem.w), 3, din, nullptr, g[L_.stem.w], g[L_.stem.b]);
    }
  }

  // Embedding MLPs.
  Tensor dta1, dth1;
  linear_back(L_.time2, c.t_a1, dte, &dta1, g);
  nn::silu_backward(c.t_h1, dta1, dth1);
  linear_back(L_.time1, c.tbase, dth1, nullptr, g);
  Tensor dca1, dch1;
  linear_back(L_.cond2, c.c_a1, dce, &dca1, g);
  nn::silu_backward(c.c_h1, dca1, dch1);
  linear_back(L_.cond1, c.cin, dch1, nullptr, g);
}

void validate_inputs(const DenoiserConfig& cfg, const Tensor& x, std::span<const std::size_t> t,
                     const Matrix& cond) {
  const std::size_t q = cfg.quadrant_side;
  if (x.c != 1 || x.h != q || x.w != q) {
    throw ShapeMismatch("denoiser input must be [N, 1, " + std::to_string(q) + ", " +
                        std::to_string(q) + "]");
  }
  if (t.size() != x.n) throw ShapeMismatch("timestep batch size differs from input batch");
  if (cond.rows() != x.n || cond.cols() != cfg.condition_len) {
    throw ShapeMismatch("condition batch must be N x " + std::to_string(cfg.condition_len));
  }
  for (double v : x.data) {
    if (!std::isfinite(v)) throw NonFiniteInput("denoiser input contains NaN or Inf");
  }
  for (double v : cond.data()) {
    if (!std::isfinite(v)) throw NonFiniteInput("condition contains NaN or Inf");
  }
  for (std::size_t s : t) {
    if (s < 1 || s > cfg.timesteps) {
      throw InvalidTimestep("timestep " + std::to_string(s) + " outside [1, " +
                            std::to_string(cfg.timesteps) + "]");
    }
  }
}

}  // namespace

Tensor DenoiserModel::forward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                              const ForwardOptions& options) const {
  validate_inputs(config_, x, t, cond);
  Cache cache;
  return Graph(config_, params_, *layout_).forward(x, t, cond, options, cache);
}

double DenoiserModel::backward(const Tensor& x, std::span<const std::size_t> t, const Matrix& cond,
                               const Tensor& target_eps, std::vector<double>& grad) const {
  validate_inputs(config_, x, t, cond);
  if (!target_eps.same_shape(x)) throw ShapeMismatch("target noise shape differs from input");
  Graph graph(config_, params_, *layout_);
  Cache cache;
  const ForwardOptions options;
  const Tensor y = graph.forward(x, t, cond, options, cache);
  const auto count = static_cast<double>(y.size());
  double loss = 0.0;
  Tensor dy(y.n, y.c, y.h, y.w);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y.data[i] - target_eps.data[i];
    loss += r * r;
    dy.data[i] = 2.0 * r / count;
  }
  grad.assign(params_.count(), 0.0);
  Grads g(params_, grad);
  graph.backward(cache, dy, options, g);
  return loss / count;
}

std::vector<double> DenoiserModel::embed_time(std::size_t t) const {
  if (t < 1 || t > config_.timesteps) {
    throw InvalidTimestep("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(config_.timesteps) + "]");
  }
  Cache cache;
  const std::size_t ts[1] = {t};
  const Tensor te = Graph(config_, params_, *layout_).time_embedding(ts, cache);
  return te.data;
}

}  // namespace metadiff
