#include "core/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "core/error.hpp"
#include "core/fileio.hpp"
#include "core/log.hpp"
#include "core/metrics.hpp"
#include "core/seed.hpp"

namespace rtf {

FrontEnd parse_front_end(std::string_view name) {
  if (name == "calls") return FrontEnd::calls;
  if (name == "chars") return FrontEnd::chars;
  throw std::invalid_argument("unknown front end '" + std::string(name) + "' (expected calls or chars)");
}

std::string_view front_end_name(FrontEnd front_end) { return front_end == FrontEnd::calls ? "calls" : "chars"; }

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw std::invalid_argument("d_model must be a positive multiple of heads");
  if (d_model % 2 != 0) throw std::invalid_argument("d_model must be even for sinusoidal encodings");
  if (d_ff == 0) throw std::invalid_argument("d_ff must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (max_len == 0) throw std::invalid_argument("max_len must be positive");
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be at least 2");
  if (classes < 2) throw std::invalid_argument("a classifier needs at least 2 classes");
  if (downsample_rate == 0) throw std::invalid_argument("downsample rate must be >= 1");
}

std::string ModelConfig::serialize() const {
  std::string out;
  out += "d_model = " + std::to_string(d_model) + "\n";
  out += "heads = " + std::to_string(heads) + "\n";
  out += "d_ff = " + std::to_string(d_ff) + "\n";
  out += "dropout = " + format_double(dropout) + "\n";
  out += "max_len = " + std::to_string(max_len) + "\n";
  out += "vocab_size = " + std::to_string(vocab_size) + "\n";
  out += "classes = " + std::to_string(classes) + "\n";
  out += "front_end = " + std::string(front_end_name(front_end)) + "\n";
  out += "downsample_rate = " + std::to_string(downsample_rate) + "\n";
  out += "seed = " + std::to_string(seed) + "\n";
  out += std::string("positional = ") + (positional ? "true" : "false") + "\n";
  out += std::string("zero_head = ") + (zero_head ? "true" : "false") + "\n";
  return out;
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("expected true/false, got '" + v + "'");
}

// Parses `key = value` lines into (key, value) pairs; '#' starts a comment.
std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& text, std::string_view what) {
  std::vector<std::pair<std::string, std::string>> out;
  auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto line = trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ParseError(std::string(what) + ": expected key = value at line " + std::to_string(n + 1));
    out.emplace_back(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

}  // namespace

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig c;
  for (const auto& [key, value] : parse_pairs(text, "model config")) {
    try {
      if (key == "d_model") c.d_model = std::stoul(value);
      else if (key == "heads") c.heads = std::stoul(value);
      else if (key == "d_ff") c.d_ff = std::stoul(value);
      else if (key == "dropout") c.dropout = std::stod(value);
      else if (key == "max_len") c.max_len = std::stoul(value);
      else if (key == "vocab_size") c.vocab_size = std::stoul(value);
      else if (key == "classes") c.classes = std::stoul(value);
      else if (key == "front_end") c.front_end = parse_front_end(value);
      else if (key == "downsample_rate") c.downsample_rate = std::stoul(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "positional") c.positional = parse_bool(value);
      else if (key == "zero_head") c.zero_head = parse_bool(value);
      else throw ParseError("model config: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ParseError("model config: bad value for '" + key + "'");
    }
  }
  return c;
}

Tensor positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model % 2 != 0) throw std::invalid_argument("positional encoding needs an even d_model");
  Tensor pe({max_len, d_model});
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

namespace {

enum Slot : std::size_t {
  kEmbedding,
  kDsW,
  kDsB,
  kWq,
  kBq,
  kWk,
  kWv,
  kBv,
  kWo,
  kBo,
  kLn1G,
  kLn1B,
  kW1,
  kB1,
  kW2,
  kB2,
  kLn2G,
  kLn2B,
  kHeadW,
  kHeadB,
  kSlotCount
};

constexpr std::array<const char*, kSlotCount> kSlotNames = {
    "embedding", "ds.weight", "ds.bias",   "attn.wq",  "attn.bq",   "attn.wk",   "attn.wv",
    "attn.bv",   "attn.wo",   "attn.bo",   "ln1.gamma", "ln1.beta", "ffn.w1",    "ffn.b1",
    "ffn.w2",    "ffn.b2",    "ln2.gamma", "ln2.beta", "head.weight", "head.bias"};

constexpr double kLayerNormEps = 1e-5;
constexpr double kMaskBias = -1e9;

struct Weights {
  std::array<const Tensor*, kSlotCount> v{};

  static Weights from(const ParamStore& store) {
    Weights w;
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (store.contains(kSlotNames[s])) w.v[s] = &store.get(kSlotNames[s]).value;
    }
    return w;
  }
  const Tensor& operator[](Slot s) const {
    if (!v[s]) throw std::invalid_argument(std::string("missing parameter '") + kSlotNames[s] + "'");
    return *v[s];
  }
};

struct Grads {
  std::array<Tensor*, kSlotCount> g{};

  static Grads from(ParamStore& store) {
    Grads out;
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (store.contains(kSlotNames[s])) out.g[s] = &store.get(kSlotNames[s]).grad;
    }
    return out;
  }
  Tensor& operator[](Slot s) const { return *g[s]; }
};

// y (n x out) = x (n x in) W (in x out) + b
void linear(const Tensor& x, const Tensor& w, const Tensor* b, Tensor& y) {
  const std::size_t n = x.dims[0];
  const std::size_t in = x.dims[1];
  const std::size_t out = w.dims[1];
  if (w.dims[0] != in) throw std::invalid_argument("linear: shape mismatch");
  y = Tensor({n, out});
  for (std::size_t i = 0; i < n; ++i) {
    double* yr = y.data() + i * out;
    if (b) std::copy(b->data(), b->data() + out, yr);
    const double* xr = x.data() + i * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      const double* wr = w.data() + k * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
}

// Accumulates dW += x^T dy, db += colsum(dy), dx += dy W^T (dx may be null).
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor* db, Tensor* dx) {
  const std::size_t n = x.dims[0];
  const std::size_t in = x.dims[1];
  const std::size_t out = w.dims[1];
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * in;
    const double* dyr = dy.data() + i * out;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xr[k];
      double* dwr = dw.data() + k * out;
      for (std::size_t j = 0; j < out; ++j) dwr[j] += xv * dyr[j];
    }
    if (db) {
      for (std::size_t j = 0; j < out; ++j) (*db)[j] += dyr[j];
    }
    if (dx) {
      double* dxr = dx->data() + i * in;
      for (std::size_t k = 0; k < in; ++k) {
        const double* wr = w.data() + k * out;
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += dyr[j] * wr[j];
        dxr[k] += acc;
      }
    }
  }
}

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> rstd;
};

void layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& y, LayerNormCache& cache) {
  const std::size_t n = x.dims[0];
  const std::size_t d = x.dims[1];
  y = Tensor({n, d});
  cache.xhat = Tensor({n, d});
  cache.rstd.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xr = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd[i] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * rstd;
      cache.xhat.at(i, j) = xh;
      y.at(i, j) = gamma[j] * xh + beta[j];
    }
  }
}

// dx = LN'(dy); accumulates dgamma, dbeta.
void layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dgamma,
                         Tensor& dbeta, Tensor& dx) {
  const std::size_t n = dy.dims[0];
  const std::size_t d = dy.dims[1];
  dx = Tensor({n, d});
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = dy.at(i, j);
      const double xh = cache.xhat.at(i, j);
      dgamma[j] += g * xh;
      dbeta[j] += g;
      dxhat[j] = g * gamma[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xh;
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx.at(i, j) = cache.rstd[i] * (dxhat[j] - mean_dxhat - cache.xhat.at(i, j) * mean_dxhat_xhat);
    }
  }
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::mt19937_64* rng) {
  Tensor m({rows, cols}, 1.0);
  if (!rng || rate <= 0.0) return m;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : m.values) v = (u(*rng) < rate) ? 0.0 : keep_scale;
  return m;
}

struct BlockCache {
  std::vector<std::uint8_t> mask;
  Tensor x;
  Tensor q, k, v;
  Tensor attn;  // heads x L x L
  Tensor o, z, drop1;
  LayerNormCache ln1;
  Tensor y1;
  Tensor hpre, h, f, drop2;
  LayerNormCache ln2;
  Tensor y2;
};

void attention_forward(const Weights& w, const Tensor& x, std::span<const std::uint8_t> mask, std::size_t heads,
                       double dropout, std::mt19937_64* rng, BlockCache& c) {
  const std::size_t len = x.dims[0];
  const std::size_t d = x.dims[1];
  if (mask.size() != len) throw std::invalid_argument("attention: mask length mismatch");
  if (d % heads != 0) throw std::invalid_argument("attention: d_model not divisible by heads");
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }))
    throw std::invalid_argument("empty sequence in batch");
  c.mask.assign(mask.begin(), mask.end());
  c.x = x;
  linear(x, w[kWq], &w[kBq], c.q);
  linear(x, w[kWk], nullptr, c.k);
  linear(x, w[kWv], &w[kBv], c.v);
  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  c.attn = Tensor({heads, len, len});
  c.o = Tensor({len, d});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < len; ++i) {
      double* row = c.attn.data() + (h * len + i) * len;
      const double* qi = c.q.data() + i * d + off;
      for (std::size_t j = 0; j < len; ++j) {
        const double* kj = c.k.data() + j * d + off;
        double s = 0.0;
        for (std::size_t t = 0; t < dk; ++t) s += qi[t] * kj[t];
        row[j] = s * scale + (mask[j] ? 0.0 : kMaskBias);
      }
      softmax_inplace(std::span<double>(row, len));
      double* oi = c.o.data() + i * d + off;
      for (std::size_t j = 0; j < len; ++j) {
        const double a = row[j];
        if (a == 0.0) continue;
        const double* vj = c.v.data() + j * d + off;
        for (std::size_t t = 0; t < dk; ++t) oi[t] += a * vj[t];
      }
    }
  }
  linear(c.o, w[kWo], &w[kBo], c.z);
  c.drop1 = dropout_mask(len, d, dropout, rng);
  Tensor r1({len, d});
  for (std::size_t i = 0; i < r1.size(); ++i) r1[i] = x[i] + c.z[i] * c.drop1[i];
  layer_norm(r1, w[kLn1G], w[kLn1B], c.y1, c.ln1);
}

void ffn_forward(const Weights& w, double dropout, std::mt19937_64* rng, BlockCache& c) {
  linear(c.y1, w[kW1], &w[kB1], c.hpre);
  c.h = c.hpre;
  for (auto& v : c.h.values) v = v > 0.0 ? v : 0.0;
  linear(c.h, w[kW2], &w[kB2], c.f);
  const std::size_t len = c.y1.dims[0];
  const std::size_t d = c.y1.dims[1];
  c.drop2 = dropout_mask(len, d, dropout, rng);
  Tensor r2({len, d});
  for (std::size_t i = 0; i < r2.size(); ++i) r2[i] = c.y1[i] + c.f[i] * c.drop2[i];
  layer_norm(r2, w[kLn2G], w[kLn2B], c.y2, c.ln2);
}

void block_forward(const Weights& w, const Tensor& x, std::span<const std::uint8_t> mask, std::size_t heads,
                   double dropout, std::mt19937_64* rng, BlockCache& c) {
  attention_forward(w, x, mask, heads, dropout, rng, c);
  ffn_forward(w, dropout, rng, c);
}

// Given dL/dy2, accumulates parameter gradients and returns dL/dx.
Tensor block_backward(const Weights& w, const Grads& g, std::size_t heads, const BlockCache& c, const Tensor& dy2) {
  const std::size_t len = c.x.dims[0];
  const std::size_t d = c.x.dims[1];

  Tensor dr2;
  layer_norm_backward(dy2, w[kLn2G], c.ln2, g[kLn2G], g[kLn2B], dr2);
  Tensor dy1 = dr2;
  Tensor df({len, d});
  for (std::size_t i = 0; i < df.size(); ++i) df[i] = dr2[i] * c.drop2[i];
  Tensor dh({len, w[kW2].dims[0]});
  linear_backward(c.h, w[kW2], df, g[kW2], &g[kB2], &dh);
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (c.hpre[i] <= 0.0) dh[i] = 0.0;
  }
  linear_backward(c.y1, w[kW1], dh, g[kW1], &g[kB1], &dy1);

  Tensor dr1;
  layer_norm_backward(dy1, w[kLn1G], c.ln1, g[kLn1G], g[kLn1B], dr1);
  Tensor dx = dr1;
  Tensor dz({len, d});
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = dr1[i] * c.drop1[i];
  Tensor dout({len, d});
  linear_backward(c.o, w[kWo], dz, g[kWo], &g[kBo], &dout);

  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor dq({len, d});
  Tensor dkey({len, d});
  Tensor dv({len, d});
  std::vector<double> da(len);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dk;
    for (std::size_t i = 0; i < len; ++i) {
      const double* a = c.attn.data() + (h * len + i) * len;
      const double* doi = dout.data() + i * d + off;
      double weighted = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double* vj = c.v.data() + j * d + off;
        double s = 0.0;
        for (std::size_t t = 0; t < dk; ++t) s += doi[t] * vj[t];
        da[j] = s;
        weighted += a[j] * s;
        if (a[j] != 0.0) {
          double* dvj = dv.data() + j * d + off;
          for (std::size_t t = 0; t < dk; ++t) dvj[t] += a[j] * doi[t];
        }
      }
      const double* qi = c.q.data() + i * d + off;
      double* dqi = dq.data() + i * d + off;
      for (std::size_t j = 0; j < len; ++j) {
        const double ds = a[j] * (da[j] - weighted) * scale;
        if (ds == 0.0) continue;
        const double* kj = c.k.data() + j * d + off;
        double* dkj = dkey.data() + j * d + off;
        for (std::size_t t = 0; t < dk; ++t) {
          dqi[t] += ds * kj[t];
          dkj[t] += ds * qi[t];
        }
      }
    }
  }
  linear_backward(c.x, w[kWq], dq, g[kWq], &g[kBq], &dx);
  linear_backward(c.x, w[kWk], dkey, g[kWk], nullptr, &dx);
  linear_backward(c.x, w[kWv], dv, g[kWv], &g[kBv], &dx);
  return dx;
}

struct DownsampleCache {
  Tensor pooled;
  std::vector<double> counts;
  std::vector<std::uint8_t> in_mask;
};

Downsampled downsample_forward(const Weights& w, const Tensor& x, std::span<const std::uint8_t> mask,
                               std::size_t rate, DownsampleCache& c) {
  if (rate == 0) throw std::invalid_argument("downsample rate must be >= 1");
  const std::size_t len = x.dims[0];
  const std::size_t d = x.dims[1];
  if (mask.size() != len) throw std::invalid_argument("downsample: mask length mismatch");
  const std::size_t windows = (len + rate - 1) / rate;
  c.pooled = Tensor({windows, d});
  c.counts.assign(windows, 0.0);
  c.in_mask.assign(mask.begin(), mask.end());
  Downsampled out;
  out.mask.assign(windows, 0);
  for (std::size_t wi = 0; wi < windows; ++wi) {
    for (std::size_t t = wi * rate; t < std::min(len, (wi + 1) * rate); ++t) {
      if (!mask[t]) continue;
      c.counts[wi] += 1.0;
      for (std::size_t j = 0; j < d; ++j) c.pooled.at(wi, j) += x.at(t, j);
    }
    if (c.counts[wi] > 0.0) {
      out.mask[wi] = 1;
      for (std::size_t j = 0; j < d; ++j) c.pooled.at(wi, j) /= c.counts[wi];
    }
  }
  linear(c.pooled, w[kDsW], &w[kDsB], out.x);
  return out;
}

Tensor downsample_backward(const Weights& w, const Grads& g, std::size_t rate, const DownsampleCache& c,
                           const Tensor& dy) {
  const std::size_t windows = c.pooled.dims[0];
  const std::size_t d = c.pooled.dims[1];
  Tensor dpooled({windows, d});
  linear_backward(c.pooled, w[kDsW], dy, g[kDsW], &g[kDsB], &dpooled);
  const std::size_t len = c.in_mask.size();
  Tensor dx({len, d});
  for (std::size_t t = 0; t < len; ++t) {
    if (!c.in_mask[t]) continue;
    const std::size_t wi = t / rate;
    for (std::size_t j = 0; j < d; ++j) dx.at(t, j) = dpooled.at(wi, j) / c.counts[wi];
  }
  return dx;
}

void uniform_fill(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values) v = u(rng);
}

}  // namespace

ParamStore init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(derive_seed(config.seed, "init"));
  const std::size_t d = config.d_model;
  ParamStore store;
  auto add_linear = [&](Slot w_slot, Slot b_slot, std::size_t in, std::size_t out, bool with_bias) {
    Tensor w({in, out});
    uniform_fill(w, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    store.add(kSlotNames[w_slot], std::move(w));
    if (with_bias) store.add(kSlotNames[b_slot], Tensor({out}));
  };

  Tensor emb({config.vocab_size, d});
  uniform_fill(emb, 0.05, rng);
  for (std::size_t j = 0; j < d; ++j) emb.at(static_cast<std::size_t>(kPadId), j) = 0.0;
  store.add(kSlotNames[kEmbedding], std::move(emb)).frozen_rows = {static_cast<std::size_t>(kPadId)};

  if (config.front_end == FrontEnd::chars) add_linear(kDsW, kDsB, d, d, true);
  add_linear(kWq, kBq, d, d, true);
  add_linear(kWk, kBq, d, d, false);
  add_linear(kWv, kBv, d, d, true);
  add_linear(kWo, kBo, d, d, true);
  store.add(kSlotNames[kLn1G], Tensor({d}, 1.0));
  store.add(kSlotNames[kLn1B], Tensor({d}));
  add_linear(kW1, kB1, d, config.d_ff, true);
  add_linear(kW2, kB2, config.d_ff, d, true);
  store.add(kSlotNames[kLn2G], Tensor({d}, 1.0));
  store.add(kSlotNames[kLn2B], Tensor({d}));
  if (config.zero_head) {
    store.add(kSlotNames[kHeadW], Tensor({d, config.classes}));
    store.add(kSlotNames[kHeadB], Tensor({config.classes}));
  } else {
    add_linear(kHeadW, kHeadB, d, config.classes, true);
  }
  return store;
}

AttentionOutput multi_head_attention(const Tensor& x, std::span<const std::uint8_t> mask, const ParamStore& params,
                                     std::size_t heads) {
  BlockCache c;
  attention_forward(Weights::from(params), x, mask, heads, 0.0, nullptr, c);
  return {std::move(c.y1), std::move(c.attn)};
}

Tensor transformer_block(const Tensor& x, std::span<const std::uint8_t> mask, const ParamStore& params,
                         std::size_t heads) {
  BlockCache c;
  block_forward(Weights::from(params), x, mask, heads, 0.0, nullptr, c);
  return std::move(c.y2);
}

Downsampled downsample_chars(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t rate,
                             const ParamStore& params) {
  DownsampleCache c;
  return downsample_forward(Weights::from(params), x, mask, rate, c);
}

namespace {

struct SampleTrace {
  std::size_t in_len = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> in_mask;
  DownsampleCache down;
  BlockCache block;
  std::vector<double> pooled;
  double active = 0.0;
  std::vector<double> logits;
};

void forward_sample(const ModelConfig& cfg, const Weights& w, const Tensor& pe, std::span<const std::int32_t> ids,
                    std::span<const std::uint8_t> mask, std::mt19937_64* rng, SampleTrace& tr) {
  // Trailing padding never influences unmasked positions, so it is trimmed.
  std::size_t in_len = 0;
  for (std::size_t t = 0; t < mask.size(); ++t) {
    if (mask[t]) in_len = t + 1;
  }
  if (in_len == 0) throw std::invalid_argument("empty sequence in batch");
  if (in_len > pe.dims[0])
    throw std::invalid_argument("sequence of " + std::to_string(in_len) + " positions exceeds model max_len " +
                                std::to_string(pe.dims[0]));
  const std::size_t d = cfg.d_model;
  tr.in_len = in_len;
  tr.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(in_len));
  tr.in_mask.assign(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(in_len));

  const Tensor& emb = w[kEmbedding];
  Tensor x({in_len, d});
  for (std::size_t t = 0; t < in_len; ++t) {
    const auto id = tr.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary of size " +
                                  std::to_string(cfg.vocab_size));
    const double* e = emb.data() + static_cast<std::size_t>(id) * d;
    double* xr = x.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) xr[j] = e[j] + (cfg.positional ? pe.at(t, j) : 0.0);
  }

  if (cfg.front_end == FrontEnd::chars) {
    Downsampled ds = downsample_forward(w, x, tr.in_mask, cfg.downsample_rate, tr.down);
    block_forward(w, ds.x, ds.mask, cfg.heads, cfg.dropout, rng, tr.block);
  } else {
    block_forward(w, x, tr.in_mask, cfg.heads, cfg.dropout, rng, tr.block);
  }

  const auto& bm = tr.block.mask;
  const Tensor& y = tr.block.y2;
  tr.pooled.assign(d, 0.0);
  tr.active = 0.0;
  for (std::size_t t = 0; t < bm.size(); ++t) {
    if (!bm[t]) continue;
    tr.active += 1.0;
    for (std::size_t j = 0; j < d; ++j) tr.pooled[j] += y.at(t, j);
  }
  for (auto& v : tr.pooled) v /= tr.active;

  const Tensor& hw = w[kHeadW];
  const Tensor& hb = w[kHeadB];
  const std::size_t k = cfg.classes;
  tr.logits.assign(hb.values.begin(), hb.values.end());
  for (std::size_t j = 0; j < d; ++j) {
    const double p = tr.pooled[j];
    for (std::size_t c = 0; c < k; ++c) tr.logits[c] += p * hw.at(j, c);
  }
}

void backward_sample(const ModelConfig& cfg, const Weights& w, const Grads& g, const SampleTrace& tr,
                     std::span<const double> dlogits) {
  const std::size_t d = cfg.d_model;
  const std::size_t k = cfg.classes;
  const Tensor& hw = w[kHeadW];
  Tensor& dhw = g[kHeadW];
  Tensor& dhb = g[kHeadB];
  std::vector<double> dpooled(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t c = 0; c < k; ++c) {
      dhw.at(j, c) += tr.pooled[j] * dlogits[c];
      dpooled[j] += hw.at(j, c) * dlogits[c];
    }
  }
  for (std::size_t c = 0; c < k; ++c) dhb[c] += dlogits[c];

  const auto& bm = tr.block.mask;
  Tensor dy2({bm.size(), d});
  for (std::size_t t = 0; t < bm.size(); ++t) {
    if (!bm[t]) continue;
    for (std::size_t j = 0; j < d; ++j) dy2.at(t, j) = dpooled[j] / tr.active;
  }
  Tensor dx = block_backward(w, g, cfg.heads, tr.block, dy2);
  if (cfg.front_end == FrontEnd::chars) dx = downsample_backward(w, g, cfg.downsample_rate, tr.down, dx);

  Tensor& demb = g[kEmbedding];
  for (std::size_t t = 0; t < tr.in_len; ++t) {
    if (!tr.in_mask[t] || tr.ids[t] == kPadId) continue;
    double* row = demb.data() + static_cast<std::size_t>(tr.ids[t]) * d;
    const double* src = dx.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
  }
}

}  // namespace

TransformerClassifier::TransformerClassifier(ModelConfig config)
    : TransformerClassifier(config, init_params(config)) {}

TransformerClassifier::TransformerClassifier(ModelConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  pe_ = positional_encoding(config_.max_len, config_.d_model);
}

std::vector<double> TransformerClassifier::logits(const EncodedBatch& batch) const { return logits(batch, nullptr); }

std::vector<double> TransformerClassifier::logits(const EncodedBatch& batch, std::mt19937_64* dropout_rng) const {
  const Weights w = Weights::from(params_);
  std::vector<double> out;
  out.reserve(batch.rows * config_.classes);
  SampleTrace tr;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward_sample(config_, w, pe_, batch.row_ids(r), batch.row_mask(r), dropout_rng, tr);
    out.insert(out.end(), tr.logits.begin(), tr.logits.end());
  }
  return out;
}

std::vector<double> TransformerClassifier::predict_proba(const EncodedBatch& batch) const {
  auto out = logits(batch);
  const std::size_t k = config_.classes;
  for (std::size_t r = 0; r < batch.rows; ++r) softmax_inplace(std::span<double>(out.data() + r * k, k));
  return out;
}

double TransformerClassifier::loss_and_grad(const EncodedBatch& batch, std::span<const double> class_weights,
                                            std::mt19937_64* dropout_rng) {
  if (batch.rows == 0) throw std::invalid_argument("loss of an empty batch");
  params_.zero_grad();
  const Weights w = Weights::from(params_);
  const Grads g = Grads::from(params_);
  const std::size_t k = config_.classes;
  double total = 0.0;
  SampleTrace tr;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    forward_sample(config_, w, pe_, batch.row_ids(r), batch.row_mask(r), dropout_rng, tr);
    const std::int32_t label = batch.labels[r];
    auto one = weighted_cross_entropy(tr.logits, 1, k, std::span<const std::int32_t>(&label, 1), class_weights);
    const double inv_rows = 1.0 / static_cast<double>(batch.rows);
    total += one.loss * inv_rows;
    for (auto& v : one.grad) v *= inv_rows;
    backward_sample(config_, w, g, tr, one.grad);
  }
  return total;
}

double TransformerClassifier::loss(const EncodedBatch& batch, std::span<const double> class_weights) const {
  const auto z = logits(batch);
  return weighted_cross_entropy(z, batch.rows, config_.classes, batch.labels, class_weights).loss;
}

Tokenizer Tokenizer::for_calls(CallVocab vocab, std::size_t max_len) {
  Tokenizer t;
  t.front_end = FrontEnd::calls;
  t.vocab = std::move(vocab);
  t.max_len = max_len;
  return t;
}

Tokenizer Tokenizer::for_chars(CharEncoderConfig chars, std::size_t max_chars) {
  Tokenizer t;
  t.front_end = FrontEnd::chars;
  t.chars = chars;
  t.max_len = max_chars;
  return t;
}

std::size_t Tokenizer::vocab_size() const { return front_end == FrontEnd::calls ? vocab.size() : chars.buckets; }

EncodedBatch Tokenizer::encode(std::span<const Sample> samples, const LabelSpace& labels) const {
  if (front_end == FrontEnd::calls) return encode_calls(vocab, samples, labels, max_len);
  return encode_chars(chars, samples, labels, max_len);
}

bool EarlyStopping::update(std::size_t epoch, double auc) {
  if (epoch == 1 || auc > best_) {
    best_ = auc;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

std::string TrainedModel::history_csv() const {
  std::string out = "epoch,train_loss,val_auc\n";
  for (const auto& e : history)
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_auc) + "\n";
  return out;
}

TrainedModel train(ModelConfig config, const Tokenizer& tokenizer, const Dataset& train_ds, const Dataset& val_ds,
                   std::span<const double> class_weights, const TrainOptions& options, const EpochCallback& on_epoch) {
  if (!(train_ds.labels() == val_ds.labels()))
    throw std::invalid_argument("train and validation label spaces differ");
  if (train_ds.empty() || val_ds.empty()) throw std::invalid_argument("train and validation sets must be non-empty");
  {
    std::unordered_set<std::string> ids;
    for (const auto& s : train_ds.samples()) ids.insert(s.id);
    for (const auto& s : val_ds.samples()) {
      if (ids.count(s.id)) throw std::invalid_argument("sample '" + s.id + "' is in both train and validation sets");
    }
  }
  if (options.batch == 0 || options.max_epochs == 0) throw std::invalid_argument("batch and max_epochs must be positive");
  if (class_weights.size() != train_ds.labels().size()) throw std::invalid_argument("class weight count mismatch");

  const auto val_counts = val_ds.class_counts();
  for (std::size_t c = 0; c < val_counts.size(); ++c) {
    if (val_counts[c] == 0)
      log_warning("validation set has no samples of class '" + val_ds.labels().name(c) +
                  "'; its AUC is left out of early stopping");
  }

  config.vocab_size = tokenizer.vocab_size();
  config.classes = train_ds.labels().size();
  config.front_end = tokenizer.front_end;
  config.max_len = tokenizer.max_len;

  TrainedModel model;
  model.net = TransformerClassifier(config);
  model.labels = train_ds.labels();
  model.tokenizer = tokenizer;

  const EncodedBatch train_batch = tokenizer.encode(train_ds);
  const EncodedBatch val_batch = tokenizer.encode(val_ds);

  AdamState adam(model.net.params(), AdamConfig{options.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 dropout_rng(derive_seed(config.seed, "dropout"));
  EarlyStopping stopper(options.patience);
  std::vector<Tensor> best_values;

  std::vector<std::size_t> order(train_batch.rows);
  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, derive_seed(config.seed, "shuffle", epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t count = std::min(options.batch, order.size() - start);
      const EncodedBatch mb = train_batch.gather(std::span<const std::size_t>(order.data() + start, count));
      const double loss = model.net.loss_and_grad(mb, class_weights, &dropout_rng);
      if (!std::isfinite(loss)) throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(model.net.params());
      epoch_loss += loss * static_cast<double>(count);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    const auto probs = model.net.predict_proba(val_batch);
    rec.val_auc = roc_auc_ovr(val_batch.labels, probs, config.classes, /*warn_on_skip=*/false).macro;
    model.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(epoch, rec.val_auc)) {
      best_values.clear();
      for (const auto& p : model.net.params().params()) best_values.push_back(p.value);
    }
    if (stopper.should_stop()) break;
  }
  auto& params = model.net.params().params();
  for (std::size_t k = 0; k < params.size(); ++k) params[k].value = best_values[k];
  model.net.params().zero_grad();
  model.best_epoch = stopper.best_epoch();
  return model;
}

std::vector<double> predict_proba(const TrainedModel& model, std::span<const Sample> samples) {
  return model.net.predict_proba(model.tokenizer.encode(samples, model.labels));
}

std::vector<double> predict_proba(const TrainedModel& model, const Dataset& ds) {
  return predict_proba(model, std::span<const Sample>(ds.samples()));
}

std::string serialize_labels(const LabelSpace& labels) {
  std::string out;
  for (const auto& n : labels.names()) out += n + "\n";
  return out;
}

LabelSpace parse_labels(const std::string& text) {
  std::vector<std::string> names;
  for (auto& line : split_lines(text)) {
    if (!line.empty()) names.push_back(line);
  }
  return LabelSpace(std::move(names));
}

std::string serialize_tokenizer(const Tokenizer& tokenizer) {
  std::string out = "front_end = " + std::string(front_end_name(tokenizer.front_end)) + "\n";
  out += "max_len = " + std::to_string(tokenizer.max_len) + "\n";
  if (tokenizer.front_end == FrontEnd::chars) {
    out += "buckets = " + std::to_string(tokenizer.chars.buckets) + "\n";
    out += "multiplier = " + std::to_string(tokenizer.chars.multiplier) + "\n";
  }
  return out;
}

Tokenizer parse_tokenizer(const std::string& text, const std::filesystem::path& vocab_path) {
  Tokenizer t;
  for (const auto& [key, value] : parse_pairs(text, "tokenizer")) {
    try {
      if (key == "front_end") t.front_end = parse_front_end(value);
      else if (key == "max_len") t.max_len = std::stoul(value);
      else if (key == "buckets") t.chars.buckets = std::stoul(value);
      else if (key == "multiplier") t.chars.multiplier = std::stoull(value);
      else throw ParseError("tokenizer: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ParseError("tokenizer: bad value for '" + key + "'");
    }
  }
  if (t.front_end == FrontEnd::calls) t.vocab = CallVocab::load(vocab_path);
  return t;
}

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "config.txt", model.config().serialize());
  write_file_atomic(dir / "labels.txt", serialize_labels(model.labels));
  write_file_atomic(dir / "tokenizer.txt", serialize_tokenizer(model.tokenizer));
  if (model.tokenizer.front_end == FrontEnd::calls) model.tokenizer.vocab.save(dir / "vocab.tsv");
  save_checkpoint(model.net.params(), dir / "model.rtf");
  write_file_atomic(dir / "history.csv", model.history_csv());
}

TrainedModel load_model(const std::filesystem::path& dir) {
  TrainedModel model;
  const ModelConfig config = ModelConfig::parse(read_text_file(dir / "config.txt"));
  model.labels = parse_labels(read_text_file(dir / "labels.txt"));
  model.tokenizer = parse_tokenizer(read_text_file(dir / "tokenizer.txt"), dir / "vocab.tsv");
  ParamStore params = init_params(config);
  load_checkpoint(dir / "model.rtf", params);
  model.net = TransformerClassifier(config, std::move(params));
  if (model.labels.size() != config.classes) throw ParseError("model: label count does not match config");
  if (model.tokenizer.vocab_size() != config.vocab_size) throw ParseError("model: vocabulary size does not match config");
  if (std::filesystem::exists(dir / "history.csv")) {
    auto lines = split_lines(read_text_file(dir / "history.csv"));
    for (std::size_t n = 1; n < lines.size(); ++n) {
      auto f = split(lines[n], ',');
      if (f.size() != 3) continue;
      model.history.push_back({std::stoul(f[0]), std::stod(f[1]), std::stod(f[2])});
    }
    if (!model.history.empty()) {
      auto best = std::max_element(model.history.begin(), model.history.end(),
                                   [](const EpochRecord& a, const EpochRecord& b) { return a.val_auc < b.val_auc; });
      model.best_epoch = best->epoch;
    }
  }
  return model;
}

GradCheckResult grad_check_transformer(FrontEnd front_end, double eps, std::size_t coordinates, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
  const std::vector<std::string> words{"NtOpenFile", "RegSetValue", "LdrLoadDll", "CreateMutex", "Sleep",
                                       "connect", "recv", "WriteFile", "GetProcAddress", "VirtualAlloc"};
  const LabelSpace labels({"a", "b", "c"});
  std::vector<Sample> samples;
  const std::size_t lengths[] = {9, 4, 7, 2, 6};
  for (std::size_t i = 0; i < std::size(lengths); ++i) {
    Sample s;
    s.id = "g" + std::to_string(i);
    s.label = labels.name(i % labels.size());
    for (std::size_t t = 0; t < lengths[i]; ++t) s.calls.push_back(words[rng() % words.size()]);
    samples.push_back(std::move(s));
  }
  const Dataset ds(samples, labels, "gradcheck");

  ModelConfig config;
  config.d_model = 8;
  config.heads = 2;
  config.d_ff = 12;
  config.dropout = 0.0;
  config.classes = labels.size();
  config.front_end = front_end;
  config.zero_head = false;
  config.seed = derive_seed(seed, "init");
  Tokenizer tokenizer;
  if (front_end == FrontEnd::calls) {
    tokenizer = Tokenizer::for_calls(CallVocab::build(ds, 1), 10);
  } else {
    CharEncoderConfig chars;
    chars.buckets = 37;
    tokenizer = Tokenizer::for_chars(chars, 48);
    config.downsample_rate = 3;
  }
  config.vocab_size = tokenizer.vocab_size();
  config.max_len = tokenizer.max_len;

  TransformerClassifier net(config);
  const EncodedBatch batch = tokenizer.encode(ds);
  const std::vector<double> weights{0.8, 1.3, 1.1};
  LossFn loss = [&](ParamStore& params, bool with_grad) {
    (void)params;
    return with_grad ? net.loss_and_grad(batch, weights, nullptr) : net.loss(batch, weights);
  };
  return grad_check(loss, net.params(), eps, coordinates, derive_seed(seed, "coordinates"));
}

}  // namespace rtf
