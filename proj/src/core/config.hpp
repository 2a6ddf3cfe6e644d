#ifndef RTF_CORE_CONFIG_HPP
#define RTF_CORE_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>

#include "core/corpus.hpp"
#include "core/model.hpp"

namespace rtf {

enum class Validation { kfold, holdout };

/// Everything one experiment needs. Read from a flat `key = value` file;
/// unknown keys are rejected.
struct ExperimentConfig {
  std::filesystem::path dataset;
  DatasetFormat format = DatasetFormat::canonical;
  std::size_t min_count = 0;
  std::set<std::string> drop_labels;
  bool preprocess = false;

  FrontEnd front_end = FrontEnd::calls;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  double dropout = 0.1;
  std::size_t max_len = 256;
  std::size_t max_chars = 2048;
  std::size_t buckets = 1024;
  std::size_t downsample_rate = 4;
  std::size_t min_freq = 1;
  bool positional = true;

  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;

  double test_fraction = 0.2;
  Validation validation = Validation::holdout;
  std::size_t k = 10;
  double val_fraction = 0.2;
  std::size_t ensemble_n = 1;

  std::uint64_t seed = 1;
  std::filesystem::path output = "runs/experiment";
  std::size_t threads = 1;

  void validate() const;
  /// Canonical `key = value` text; parse(serialize()) round-trips.
  std::string serialize() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Applies one `key = value` assignment.
  void set(const std::string& key, const std::string& value);

  ModelConfig model_config() const;
  TrainOptions train_options() const;
  /// Tokenizer for this front end; the call vocabulary comes from `train`.
  Tokenizer make_tokenizer(const Dataset& train) const;
};

}  // namespace rtf

#endif  // RTF_CORE_CONFIG_HPP
