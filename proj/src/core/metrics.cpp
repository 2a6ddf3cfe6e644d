#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "core/error.hpp"
#include "core/fileio.hpp"
#include "core/log.hpp"

namespace rtf {

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

ConfusionMatrix::ConfusionMatrix(LabelSpace labels)
    : labels_(std::move(labels)), k_(labels_.size()), counts_(k_ * k_, 0) {}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= k_ || predicted >= k_) throw std::invalid_argument("confusion matrix: class index out of range");
  ++counts_[truth * k_ + predicted];
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::vector<std::size_t> ConfusionMatrix::support() const {
  std::vector<std::size_t> rows(k_, 0);
  for (std::size_t t = 0; t < k_; ++t) {
    for (std::size_t p = 0; p < k_; ++p) rows[t] += at(t, p);
  }
  return rows;
}

std::string ConfusionMatrix::to_csv() const {
  std::string out = "true\\predicted";
  for (const auto& n : labels_.names()) out += "," + n;
  out += "\n";
  for (std::size_t t = 0; t < k_; ++t) {
    out += labels_.name(t);
    for (std::size_t p = 0; p < k_; ++p) out += "," + std::to_string(at(t, p));
    out += "\n";
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const std::int32_t> y_true, std::span<const std::int32_t> y_pred,
                                 const LabelSpace& labels) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("confusion matrix: length mismatch");
  ConfusionMatrix cm(labels);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0) throw std::invalid_argument("confusion matrix: negative class index");
    cm.add(static_cast<std::size_t>(y_true[i]), static_cast<std::size_t>(y_pred[i]));
  }
  return cm;
}

PrfScores precision_recall_f1(const ConfusionMatrix& cm, bool warn_on_zero_division) {
  const std::size_t k = cm.classes();
  PrfScores out;
  out.per_class.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    double fp = 0.0;
    double fn = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(cm.at(o, c));
      fn += static_cast<double>(cm.at(c, o));
    }
    auto& s = out.per_class[c];
    s.support = static_cast<std::size_t>(tp + fn);
    const auto& name = cm.labels().name(c);
    if (tp + fn > 0) {
      s.recall = tp / (tp + fn);
    } else if (warn_on_zero_division) {
      log_warning("recall of class '" + name + "' is 0/0; reported as 0");
    }
    if (tp + fp > 0) {
      s.precision = tp / (tp + fp);
    } else if (warn_on_zero_division) {
      log_warning("precision of class '" + name + "' is 0/0 (never predicted); reported as 0");
    }
    const double denom = 2.0 * tp + fp + fn;
    s.f1 = denom > 0 ? 2.0 * tp / denom : 0.0;
    out.macro_precision += s.precision;
    out.macro_recall += s.recall;
    out.macro_f1 += s.f1;
  }
  if (k > 0) {
    out.macro_precision /= static_cast<double>(k);
    out.macro_recall /= static_cast<double>(k);
    out.macro_f1 /= static_cast<double>(k);
  }
  return out;
}

namespace {

void check_binary(std::span<const std::uint8_t> is_positive, std::span<const double> scores, std::size_t& pos,
                  std::size_t& neg) {
  if (is_positive.size() != scores.size()) throw std::invalid_argument("AUC: label/score length mismatch");
  pos = 0;
  for (auto v : is_positive) pos += v ? 1 : 0;
  neg = is_positive.size() - pos;
  if (pos == 0 || neg == 0) throw NumericError("AUC undefined: need at least one positive and one negative");
}

}  // namespace

double binary_roc_auc(std::span<const std::uint8_t> is_positive, std::span<const double> scores) {
  std::size_t pos = 0;
  std::size_t neg = 0;
  check_binary(is_positive, scores, pos, neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0;
  double tp = 0.0;
  double fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    double group_tp = 0.0;
    double group_fp = 0.0;
    while (i < order.size() && scores[order[i]] == s) {
      if (is_positive[order[i]]) group_tp += 1.0;
      else group_fp += 1.0;
      ++i;
    }
    area += group_fp * (tp + tp + group_tp) / 2.0;
    tp += group_tp;
    fp += group_fp;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auc_pairwise_oracle(std::span<const std::uint8_t> is_positive, std::span<const double> scores) {
  std::size_t pos = 0;
  std::size_t neg = 0;
  check_binary(is_positive, scores, pos, neg);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (is_positive[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

AucResult roc_auc_ovr(std::span<const std::int32_t> y_true, std::span<const double> probs, std::size_t classes,
                      bool warn_on_skip) {
  const std::size_t rows = y_true.size();
  if (classes == 0 || probs.size() != rows * classes) throw std::invalid_argument("AUC: probability matrix shape mismatch");
  std::vector<std::size_t> present(classes, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (y_true[i] < 0 || static_cast<std::size_t>(y_true[i]) >= classes)
      throw std::invalid_argument("AUC: label out of range");
    ++present[static_cast<std::size_t>(y_true[i])];
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += probs[i * classes + c];
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("AUC: probability row " + std::to_string(i) + " does not sum to 1");
  }
  if (std::count_if(present.begin(), present.end(), [](std::size_t n) { return n > 0; }) < 2)
    throw NumericError("AUC undefined: fewer than two classes present in y_true");

  AucResult out;
  out.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> positive(rows);
  std::vector<double> column(rows);
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (present[c] == 0 || present[c] == rows) {
      out.skipped.push_back(c);
      if (warn_on_skip) log_warning("AUC skipped for class index " + std::to_string(c) + ": no positive or no negative samples");
      continue;
    }
    for (std::size_t i = 0; i < rows; ++i) {
      positive[i] = static_cast<std::size_t>(y_true[i]) == c ? 1 : 0;
      column[i] = probs[i * classes + c];
    }
    out.per_class[c] = binary_roc_auc(positive, column);
    sum += out.per_class[c];
    ++scored;
  }
  out.macro = sum / static_cast<double>(scored);
  return out;
}

double roc_auc_ovr_macro(std::span<const std::int32_t> y_true, std::span<const double> probs, std::size_t classes) {
  return roc_auc_ovr(y_true, probs, classes).macro;
}

DummyMostFrequent DummyMostFrequent::fit(const Dataset& train) {
  if (train.empty()) throw std::invalid_argument("dummy classifier: empty training set");
  DummyMostFrequent d;
  const auto counts = train.class_counts();
  d.classes_ = counts.size();
  d.majority_ = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (counts[c] > counts[d.majority_]) d.majority_ = c;
  }
  return d;
}

std::vector<std::int32_t> DummyMostFrequent::predict(std::size_t rows) const {
  return std::vector<std::int32_t>(rows, static_cast<std::int32_t>(majority_));
}

std::vector<double> DummyMostFrequent::predict_proba(std::size_t rows) const {
  std::vector<double> probs(rows * classes_, 0.0);
  for (std::size_t i = 0; i < rows; ++i) probs[i * classes_ + majority_] = 1.0;
  return probs;
}

std::string EvalReport::per_class_csv() const {
  std::string out = "class,precision,recall,f1,auc,support\n";
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto& s = prf.per_class[c];
    const double auc_c = auc.per_class[c];
    out += labels.name(c) + "," + format_double(s.precision) + "," + format_double(s.recall) + "," +
           format_double(s.f1) + "," + (std::isnan(auc_c) ? std::string("") : format_double(auc_c)) + "," +
           std::to_string(s.support) + "\n";
  }
  out += "macro," + format_double(prf.macro_precision) + "," + format_double(prf.macro_recall) + "," +
         format_double(prf.macro_f1) + "," + format_double(auc.macro) + "," + std::to_string(confusion.total()) + "\n";
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["macro_f1"] = prf.macro_f1;
  j["macro_precision"] = prf.macro_precision;
  j["macro_recall"] = prf.macro_recall;
  j["macro_auc_ovr"] = auc.macro;
  j["samples"] = confusion.total();
  auto& classes = j["classes"] = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < labels.size(); ++c) {
    const auto& s = prf.per_class[c];
    nlohmann::ordered_json row;
    row["name"] = labels.name(c);
    row["precision"] = s.precision;
    row["recall"] = s.recall;
    row["f1"] = s.f1;
    if (std::isnan(auc.per_class[c])) row["auc"] = nullptr;
    else row["auc"] = auc.per_class[c];
    row["support"] = s.support;
    classes.push_back(row);
  }
  auto& grid = j["confusion_matrix"] = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < confusion.classes(); ++t) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < confusion.classes(); ++p) row.push_back(confusion.at(t, p));
    grid.push_back(row);
  }
  return j.dump(2) + "\n";
}

EvalReport evaluate(std::span<const std::int32_t> y_true, std::span<const double> probs, const LabelSpace& labels) {
  const std::size_t k = labels.size();
  const std::size_t rows = y_true.size();
  if (probs.size() != rows * k) throw std::invalid_argument("evaluate: probability matrix shape mismatch");
  std::vector<std::int32_t> y_pred(rows);
  for (std::size_t i = 0; i < rows; ++i) y_pred[i] = static_cast<std::int32_t>(argmax(probs.subspan(i * k, k)));
  EvalReport report;
  report.labels = labels;
  report.confusion = confusion_matrix(y_true, y_pred, labels);
  report.prf = precision_recall_f1(report.confusion);
  report.auc = roc_auc_ovr(y_true, probs, k);
  return report;
}

double constant_predictor_macro_f1(double majority_share, std::size_t classes) {
  return 2.0 * majority_share / (1.0 + majority_share) / static_cast<double>(classes);
}

}  // namespace rtf
