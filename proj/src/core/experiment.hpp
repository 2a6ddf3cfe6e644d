#ifndef RTF_CORE_EXPERIMENT_HPP
#define RTF_CORE_EXPERIMENT_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/corpus.hpp"
#include "core/ensemble.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"

namespace rtf {

/// Git-describe style tag baked in at build time.
const char* version_tag();

struct FoldResult {
  std::size_t fold = 0;
  double macro_f1 = 0.0;
  double macro_auc = 0.0;
  std::size_t best_epoch = 0;
  double train_seconds = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean and standard deviation.
MeanStd mean_std(std::span<const double> values);

struct RunSummary {
  std::filesystem::path directory;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  /// |train ids ∩ test ids|; a run aborts unless this is 0.
  std::size_t leakage = 0;
  double dummy_macro_f1 = 0.0;
  double dummy_macro_auc = 0.0;
  std::vector<FoldResult> folds;
  double test_macro_f1 = 0.0;
  double test_macro_auc = 0.0;
  double train_seconds = 0.0;
};

/// Full pipeline: load, filter, optional preprocess, stratified test split,
/// k-fold cross-validation of the base model or holdout training of the
/// ensemble, evaluation on the untouched test split, reports.
/// A stage failure is rethrown with the stage name prefixed.
RunSummary run_experiment(const ExperimentConfig& config);

/// Same, on an already loaded dataset (`config.dataset` is ignored).
RunSummary run_experiment(const ExperimentConfig& config, const Dataset& dataset);

/// Number of ids present in both datasets.
std::size_t id_overlap(const Dataset& a, const Dataset& b);

struct TimingRow {
  std::string model;
  std::size_t draws = 0;
  /// Mean wall-clock seconds to encode and predict one sample.
  double inference_seconds = 0.0;
  /// Training wall-clock; zero when not measured.
  double train_seconds_mean = 0.0;
  double train_seconds_std = 0.0;
};

struct TimingReport {
  std::vector<TimingRow> rows;

  /// `model,draws,inference_seconds,train_seconds_mean,train_seconds_std`.
  std::string to_csv() const;
};

/// Single-sample predictor under benchmark: returns class probabilities.
using SamplePredictor = std::function<std::vector<double>(const Sample&)>;

struct BenchTarget {
  std::string name;
  SamplePredictor predict;
  std::vector<double> train_seconds;
};

/// Times `draws` single-sample predictions per target; samples are drawn
/// uniformly from `pool` with a seeded generator shared by all targets.
TimingReport bench(const std::vector<BenchTarget>& targets, const Dataset& pool, std::size_t draws,
                   std::uint64_t seed);

BenchTarget bench_target(const std::string& name, const TrainedModel& model);
BenchTarget bench_target(const std::string& name, const Ensemble& ensemble);

}  // namespace rtf

#endif  // RTF_CORE_EXPERIMENT_HPP
