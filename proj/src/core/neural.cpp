#include "core/neural.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "core/error.hpp"
#include "core/fileio.hpp"

namespace rtf {

std::size_t shape_size(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
  std::string out = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(dims[i]);
  }
  return out + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill_value)
    : dims(std::move(shape)), values(shape_size(dims), fill_value) {}

void Tensor::fill(double v) { std::fill(values.begin(), values.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

Param& ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Param p;
  p.name = name;
  p.grad = Tensor(value.dims);
  p.value = std::move(value);
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParamStore::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) return;
  const double top = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (auto& v : values) {
    v = std::exp(v - top);
    sum += v;
  }
  for (auto& v : values) v /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
  for (double v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
  }
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

LossResult weighted_cross_entropy(std::span<const double> logits, std::size_t rows, std::size_t classes,
                                  std::span<const std::int32_t> labels, std::span<const double> weights) {
  if (logits.size() != rows * classes) throw std::invalid_argument("cross entropy: logits size mismatch");
  if (labels.size() != rows) throw std::invalid_argument("cross entropy: label count mismatch");
  if (weights.size() != classes) throw std::invalid_argument("cross entropy: weight count mismatch");
  if (rows == 0) throw std::invalid_argument("cross entropy: empty batch");
  LossResult result;
  result.grad.resize(logits.size());
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw std::invalid_argument("cross entropy: label out of range");
    auto row = logits.subspan(i * classes, classes);
    double top = -INFINITY;
    for (double v : row) {
      if (!std::isfinite(v)) throw NumericError("cross entropy: non-finite logit");
      top = std::max(top, v);
    }
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - top);
    const double log_norm = top + std::log(sum);
    const double w = weights[static_cast<std::size_t>(y)];
    result.loss += w * (log_norm - row[static_cast<std::size_t>(y)]) * inv_rows;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - log_norm);
      const double target = (static_cast<std::int32_t>(c) == y) ? 1.0 : 0.0;
      result.grad[i * classes + c] = w * (p - target) * inv_rows;
    }
  }
  return result;
}

AdamState::AdamState(const ParamStore& params, AdamConfig config) : config_(config) {
  for (const auto& p : params.params()) {
    m_.emplace_back(p.value.dims);
    v_.emplace_back(p.value.dims);
  }
}

void AdamState::step(ParamStore& params) {
  if (params.size() != m_.size()) throw std::invalid_argument("Adam state does not match parameter store");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params.params()[k];
    auto& m = m_[k].values;
    auto& v = v_[k].values;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p.value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    if (!p.frozen_rows.empty()) {
      const std::size_t width = p.value.dims.at(1);
      for (auto r : p.frozen_rows) {
        for (std::size_t c = 0; c < width; ++c) {
          m[r * width + c] = 0.0;
          v[r * width + c] = 0.0;
        }
      }
    }
  }
}

namespace {

bool is_frozen(const Param& p, std::size_t flat) {
  if (p.frozen_rows.empty()) return false;
  const std::size_t row = flat / p.value.dims.at(1);
  return std::find(p.frozen_rows.begin(), p.frozen_rows.end(), row) != p.frozen_rows.end();
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss, ParamStore& params, double eps, std::size_t coordinates,
                           std::uint64_t seed) {
  if (!(eps > 0.0)) throw std::invalid_argument("grad_check: eps must be positive");
  if (params.size() == 0) throw std::invalid_argument("grad_check: no parameters");
  const double base = loss(params, true);
  if (!std::isfinite(base)) throw NumericError("grad_check: non-finite loss");

  std::vector<Tensor> analytic;
  for (const auto& p : params.params()) analytic.push_back(p.grad);

  // Candidate coordinates per tensor, shuffled, then dealt round-robin.
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> pools(params.size());
  std::size_t available = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params.params()[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (!is_frozen(p, i)) pools[k].push_back(i);
    }
    std::shuffle(pools[k].begin(), pools[k].end(), rng);
    available += pools[k].size();
  }
  const std::size_t wanted = std::min(coordinates, available);

  GradCheckResult result;
  std::vector<std::size_t> cursor(params.size(), 0);
  while (result.coordinates < wanted) {
    for (std::size_t k = 0; k < params.size() && result.coordinates < wanted; ++k) {
      if (cursor[k] >= pools[k].size()) continue;
      const std::size_t i = pools[k][cursor[k]++];
      auto& p = params.params()[k];
      const double saved = p.value[i];
      p.value[i] = saved + eps;
      const double up = loss(params, false);
      p.value[i] = saved - eps;
      const double down = loss(params, false);
      p.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  // Leave gradients as the analytic ones at the unperturbed point.
  for (std::size_t k = 0; k < params.size(); ++k) params.params()[k].grad = analytic[k];
  return result;
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw ParseError("checkpoint: truncated file");
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

constexpr std::string_view kMagic = "RTF1";

}  // namespace

std::string serialize_checkpoint(const ParamStore& params) {
  std::string out(kMagic);
  for (const auto& p : params.params()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.dims) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : p.value.values) put_le<double>(out, v);
  }
  return out;
}

void deserialize_checkpoint(std::string_view bytes, ParamStore& params) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw ParseError("checkpoint: bad magic");
  std::size_t pos = kMagic.size();
  std::vector<bool> seen(params.size(), false);
  while (pos < bytes.size()) {
    const auto name_len = get_le<std::uint32_t>(bytes, pos);
    if (pos + name_len > bytes.size()) throw ParseError("checkpoint: truncated name");
    std::string name(bytes.substr(pos, name_len));
    pos += name_len;
    const auto rank = get_le<std::uint32_t>(bytes, pos);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = get_le<std::uint32_t>(bytes, pos);
    if (!params.contains(name)) throw ParseError("checkpoint: unexpected tensor '" + name + "'");
    auto& p = params.get(name);
    if (p.value.dims != dims)
      throw ParseError("checkpoint: tensor '" + name + "' has shape " + shape_string(dims) + ", expected " +
                       shape_string(p.value.dims));
    for (auto& v : p.value.values) v = get_le<double>(bytes, pos);
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params.params()[k].name == name) seen[k] = true;
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!seen[k]) throw ParseError("checkpoint: missing tensor '" + params.params()[k].name + "'");
  }
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(params));
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& params) {
  deserialize_checkpoint(read_text_file(path), params);
}

}  // namespace rtf
