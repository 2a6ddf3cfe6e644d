#ifndef RTF_CORE_METRICS_HPP
#define RTF_CORE_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/corpus.hpp"

namespace rtf {

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

/// K x K counts; entry (t, p) = samples of true class t predicted as p.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(LabelSpace labels);

  void add(std::size_t truth, std::size_t predicted);

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::size_t classes() const { return k_; }
  std::size_t total() const;
  /// Row sums.
  std::vector<std::size_t> support() const;
  const LabelSpace& labels() const { return labels_; }

  /// Header row of predicted class names; each row starts with the true class name.
  std::string to_csv() const;

 private:
  LabelSpace labels_;
  std::size_t k_ = 0;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const std::int32_t> y_true, std::span<const std::int32_t> y_pred,
                                 const LabelSpace& labels);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct PrfScores {
  std::vector<ClassScores> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// recall = TP/(TP+FN), precision = TP/(TP+FP), F1 = 2TP/(2TP+FP+FN);
/// 0/0 counts as 0 and is reported through log_warning. Macro = unweighted mean.
PrfScores precision_recall_f1(const ConfusionMatrix& cm, bool warn_on_zero_division = true);

/// Binary ROC AUC by sorting scores and integrating the ROC curve with the
/// trapezoid rule; tied scores move along the diagonal together.
double binary_roc_auc(std::span<const std::uint8_t> is_positive, std::span<const double> scores);

/// Exhaustive pairwise AUC: (#{pos > neg} + 0.5 #{pos == neg}) / (P N).
double auc_pairwise_oracle(std::span<const std::uint8_t> is_positive, std::span<const double> scores);

struct AucResult {
  double macro = 0.0;
  /// NaN for classes without both positives and negatives.
  std::vector<double> per_class;
  std::vector<std::size_t> skipped;
};

/// One-vs-rest AUC for every class; macro = mean over scorable classes.
/// `probs` is rows x classes, each row summing to 1 within 1e-6.
AucResult roc_auc_ovr(std::span<const std::int32_t> y_true, std::span<const double> probs, std::size_t classes,
                      bool warn_on_skip = true);
double roc_auc_ovr_macro(std::span<const std::int32_t> y_true, std::span<const double> probs, std::size_t classes);

/// Always predicts the majority class of its training data (ties: lowest index).
class DummyMostFrequent {
 public:
  static DummyMostFrequent fit(const Dataset& train);

  std::size_t majority() const { return majority_; }
  std::size_t classes() const { return classes_; }
  std::vector<std::int32_t> predict(std::size_t rows) const;
  /// Constant one-hot rows on the majority class.
  std::vector<double> predict_proba(std::size_t rows) const;

 private:
  std::size_t majority_ = 0;
  std::size_t classes_ = 0;
};

struct EvalReport {
  LabelSpace labels;
  PrfScores prf;
  AucResult auc;
  ConfusionMatrix confusion;

  /// `class,precision,recall,f1,auc,support` rows plus a `macro` row.
  std::string per_class_csv() const;
  std::string to_json() const;
};

/// Predictions are argmax of each probability row.
EvalReport evaluate(std::span<const std::int32_t> y_true, std::span<const double> probs, const LabelSpace& labels);

/// Macro F1 of a constant majority predictor: 2p / (1 + p) / K.
double constant_predictor_macro_f1(double majority_share, std::size_t classes);

}  // namespace rtf

#endif  // RTF_CORE_METRICS_HPP
