#ifndef RTF_CORE_NEURAL_HPP
#define RTF_CORE_NEURAL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace rtf {

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return dims.size(); }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  /// Element (r, c) of a rank-2 tensor.
  double& at(std::size_t r, std::size_t c) { return values[r * dims[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * dims[1] + c]; }

  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& dims);
std::string shape_string(const std::vector<std::size_t>& dims);

/// A named trainable tensor with its gradient. `frozen_rows` lists rows of a
/// rank-2 value that never receive updates (the PAD embedding row).
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  std::vector<std::size_t> frozen_rows;
};

/// Ordered name -> (value, gradient) store. Iteration order is insertion order.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t coordinate_count() const;

  void zero_grad();

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

void softmax_inplace(std::span<double> values);
std::vector<double> softmax(std::span<const double> logits);

struct LossResult {
  double loss = 0.0;
  /// Same layout as the logits (rows x classes).
  std::vector<double> grad;
};

/// loss = mean_i w[y_i] * -log softmax(logits_i)[y_i]
/// dloss/dlogits_i = w[y_i] * (p_i - onehot(y_i)) / rows
LossResult weighted_cross_entropy(std::span<const double> logits, std::size_t rows, std::size_t classes,
                                  std::span<const std::int32_t> labels, std::span<const double> weights);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamStore& params, AdamConfig config);

  /// Bias-corrected Adam update of every parameter from its gradient.
  void step(ParamStore& params);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

/// Evaluates the loss at the current parameter values. When `with_grad` is
/// set it must also overwrite every Param::grad with the analytic gradient.
using LossFn = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central differences on a sample of at least `coordinates` parameter
/// entries, spread round-robin across tensors. Frozen rows are skipped.
/// Relative error = |a - n| / max(1e-12, |a| + |n|).
GradCheckResult grad_check(const LossFn& loss, ParamStore& params, double eps, std::size_t coordinates,
                           std::uint64_t seed);

/// Binary checkpoint: "RTF1", then per tensor: u32 name length, name bytes,
/// u32 rank, u32 dims, f64 values; all little-endian.
std::string serialize_checkpoint(const ParamStore& params);
/// Replaces values of existing parameters by name; shapes must match and
/// every stored tensor must be present in the file.
void deserialize_checkpoint(std::string_view bytes, ParamStore& params);
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
void load_checkpoint(const std::filesystem::path& path, ParamStore& params);

}  // namespace rtf

#endif  // RTF_CORE_NEURAL_HPP
