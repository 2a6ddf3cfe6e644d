#ifndef RTF_CORE_MODEL_HPP
#define RTF_CORE_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/corpus.hpp"
#include "core/neural.hpp"
#include "core/tokenize.hpp"

namespace rtf {

enum class FrontEnd { calls, chars };

FrontEnd parse_front_end(std::string_view name);
std::string_view front_end_name(FrontEnd front_end);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  double dropout = 0.1;
  /// Input positions: calls for the call front end, characters for the char front end.
  std::size_t max_len = 256;
  std::size_t vocab_size = 0;
  std::size_t classes = 0;
  FrontEnd front_end = FrontEnd::calls;
  std::size_t downsample_rate = 4;
  std::uint64_t seed = 0;
  /// Diagnostic switch; off removes the sinusoidal encodings.
  bool positional = true;
  /// Zero-initialised output layer, so an untrained model predicts uniformly.
  bool zero_head = true;

  void validate() const;
  /// `key = value` lines.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

/// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t max_len, std::size_t d_model);

/// Randomly initialised parameters for `config`, seeded from config.seed.
ParamStore init_params(const ModelConfig& config);

struct AttentionOutput {
  /// LayerNorm(x + MultiHead(x)), L x d_model.
  Tensor out;
  /// heads x L x L attention weights.
  Tensor weights;
};

/// Evaluation-mode attention sublayer on one sequence `x` (L x d_model).
/// Masked keys receive a -1e9 additive bias before the softmax.
AttentionOutput multi_head_attention(const Tensor& x, std::span<const std::uint8_t> mask, const ParamStore& params,
                                     std::size_t heads);

/// Evaluation-mode block: attention sublayer, add & norm, ReLU feed-forward, add & norm.
Tensor transformer_block(const Tensor& x, std::span<const std::uint8_t> mask, const ParamStore& params,
                         std::size_t heads);

struct Downsampled {
  Tensor x;
  std::vector<std::uint8_t> mask;
};

/// Masked mean over non-overlapping windows of `rate` positions followed by
/// the "ds.weight"/"ds.bias" projection. A window is unmasked iff any member is.
Downsampled downsample_chars(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t rate,
                             const ParamStore& params);

/// One-block transformer sequence classifier with hand-written backward pass.
class TransformerClassifier {
 public:
  TransformerClassifier() = default;
  explicit TransformerClassifier(ModelConfig config);
  TransformerClassifier(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Evaluation-mode logits, rows x classes.
  std::vector<double> logits(const EncodedBatch& batch) const;
  /// Training-mode logits when `dropout_rng` is non-null.
  std::vector<double> logits(const EncodedBatch& batch, std::mt19937_64* dropout_rng) const;

  /// softmax of evaluation-mode logits.
  std::vector<double> predict_proba(const EncodedBatch& batch) const;

  /// Weighted cross-entropy of the batch. Overwrites every gradient in
  /// params(). Dropout is active iff `dropout_rng` is non-null.
  double loss_and_grad(const EncodedBatch& batch, std::span<const double> class_weights,
                       std::mt19937_64* dropout_rng);

  /// Evaluation-mode loss, no gradients.
  double loss(const EncodedBatch& batch, std::span<const double> class_weights) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  Tensor pe_;
};

/// Maps samples to the integer batch a model expects.
struct Tokenizer {
  FrontEnd front_end = FrontEnd::calls;
  CallVocab vocab;
  CharEncoderConfig chars;
  std::size_t max_len = 256;

  static Tokenizer for_calls(CallVocab vocab, std::size_t max_len);
  static Tokenizer for_chars(CharEncoderConfig chars, std::size_t max_chars);

  std::size_t vocab_size() const;
  EncodedBatch encode(std::span<const Sample> samples, const LabelSpace& labels) const;
  EncodedBatch encode(const Dataset& ds) const { return encode(ds.samples(), ds.labels()); }
};

struct TrainOptions {
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auc = 0.0;
};

/// Tracks the best validation AUC. Training stops once more than `patience`
/// consecutive epochs have failed to beat it.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `auc` is a new best.
  bool update(std::size_t epoch, double auc);
  bool should_stop() const { return bad_epochs_ > patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t bad_epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -1.0;
};

struct TrainedModel {
  TransformerClassifier net;
  LabelSpace labels;
  Tokenizer tokenizer;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;

  const ModelConfig& config() const { return net.config(); }
  /// `epoch,train_loss,val_auc` rows.
  std::string history_csv() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minimises class-weighted cross-entropy with Adam and early stopping on
/// validation macro one-vs-rest AUC. Returns the best epoch's parameters.
/// config.vocab_size and config.classes are filled from the tokenizer and data.
TrainedModel train(ModelConfig config, const Tokenizer& tokenizer, const Dataset& train_ds, const Dataset& val_ds,
                   std::span<const double> class_weights, const TrainOptions& options,
                   const EpochCallback& on_epoch = {});

/// rows x classes probabilities for `ds`. Labels of `ds` must exist in the model's label space.
std::vector<double> predict_proba(const TrainedModel& model, const Dataset& ds);
std::vector<double> predict_proba(const TrainedModel& model, std::span<const Sample> samples);

/// Directory layout: config.txt, labels.txt, tokenizer.txt, vocab.tsv (call
/// front end), model.rtf, history.csv.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

/// Central-difference check of the whole classifier, embedding to head, on a
/// small random batch of unequal lengths. Dropout is off and the head is
/// randomly initialised so every tensor receives gradient.
GradCheckResult grad_check_transformer(FrontEnd front_end, double eps, std::size_t coordinates, std::uint64_t seed);

std::string serialize_tokenizer(const Tokenizer& tokenizer);
Tokenizer parse_tokenizer(const std::string& text, const std::filesystem::path& vocab_path);
std::string serialize_labels(const LabelSpace& labels);
LabelSpace parse_labels(const std::string& text);

}  // namespace rtf

#endif  // RTF_CORE_MODEL_HPP
