#ifndef RTF_CORE_ENSEMBLE_HPP
#define RTF_CORE_ENSEMBLE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/model.hpp"

namespace rtf {

/// Random Transformer Forest: homogeneous estimators trained on stratified
/// bootstrap resamples of one training set, sharing tokenizer and label space.
struct Ensemble {
  std::vector<TrainedModel> estimators;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<std::size_t>> bootstrap_counts;

  std::size_t size() const { return estimators.size(); }
  const LabelSpace& labels() const { return estimators.at(0).labels; }
  const Tokenizer& tokenizer() const { return estimators.at(0).tokenizer; }
  const ModelConfig& config() const { return estimators.at(0).config(); }
};

enum class Aggregation {
  /// Mean of estimator probabilities.
  average,
  /// Diagnostic: fraction of estimators whose argmax is each class.
  vote
};

using EstimatorCallback = std::function<void(std::size_t index, const TrainedModel&)>;

/// Estimator i is trained on stratified_bootstrap(train, derive_seed(seed, "bootstrap", i))
/// with model seed derive_seed(seed, "estimator", i); the validation set is shared.
/// `threads` > 1 trains estimators concurrently; results do not depend on it.
Ensemble train_rtf(const ModelConfig& config, std::size_t n, const Tokenizer& tokenizer, const Dataset& train_ds,
                   const Dataset& val_ds, std::span<const double> class_weights, const TrainOptions& options,
                   std::uint64_t seed, std::size_t threads = 1, const EstimatorCallback& on_estimator = {});

/// Averaged (or voted) rows x classes probabilities.
std::vector<double> predict_rtf(const Ensemble& ens, const Dataset& ds, Aggregation mode = Aggregation::average);
std::vector<double> predict_rtf(const Ensemble& ens, std::span<const Sample> samples,
                                Aggregation mode = Aggregation::average);

/// Mean of row-stochastic matrices of equal shape.
std::vector<double> average_probabilities(const std::vector<std::vector<double>>& members);

/// Class with the highest probability; ties go to the lowest index.
/// `probs` must sum to 1 within 1e-9.
std::size_t predict_label_index(std::span<const double> probs);
const std::string& predict_label(std::span<const double> probs, const LabelSpace& labels);

/// manifest.txt (N, config hash, seeds, checkpoint names) plus one
/// estimator_XX.rtf checkpoint per estimator; config, labels and tokenizer are
/// stored once.
void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

/// Hex FNV-1a of the serialized model config.
std::string config_hash(const ModelConfig& config);

}  // namespace rtf

#endif  // RTF_CORE_ENSEMBLE_HPP
