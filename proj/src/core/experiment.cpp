#include "core/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <mutex>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include "core/error.hpp"
#include "core/fileio.hpp"
#include "core/log.hpp"
#include "core/prep.hpp"
#include "core/seed.hpp"

#ifndef RTF_VERSION_TAG
#define RTF_VERSION_TAG "v0.0.0-unknown"
#endif

namespace fs = std::filesystem;

namespace rtf {

const char* version_tag() { return RTF_VERSION_TAG; }

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

std::size_t id_overlap(const Dataset& a, const Dataset& b) {
  std::unordered_set<std::string> ids;
  for (const auto& s : a.samples()) ids.insert(s.id);
  std::size_t n = 0;
  for (const auto& s : b.samples()) n += ids.count(s.id);
  return n;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs `body`, prefixing any error with the stage name while keeping its type.
template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  const std::string prefix = std::string("stage '") + name + "': ";
  try {
    return body();
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

// Mirrors log lines into the run log while still forwarding them.
class RunLog {
 public:
  RunLog() {
    previous_ = set_log_sink([this](LogLevel level, std::string_view msg) {
      {
        std::lock_guard lock(mu_);
        text_ += level == LogLevel::warning ? "warning: " : "info: ";
        text_.append(msg);
        text_ += '\n';
      }
      if (previous_) previous_(level, msg);
      else std::fprintf(stderr, "%s%.*s\n", level == LogLevel::warning ? "warning: " : "", int(msg.size()), msg.data());
    });
  }
  ~RunLog() { set_log_sink(previous_); }
  RunLog(const RunLog&) = delete;
  RunLog& operator=(const RunLog&) = delete;

  std::string text() const {
    std::lock_guard lock(mu_);
    return text_;
  }

 private:
  mutable std::mutex mu_;
  std::string text_;
  LogSink previous_;
};

void write_report(const fs::path& dir, const std::string& stem, const EvalReport& report) {
  write_file_atomic(dir / (stem + "_report.json"), report.to_json());
  write_file_atomic(dir / (stem + "_per_class.csv"), report.per_class_csv());
  write_file_atomic(dir / (stem + "_confusion.csv"), report.confusion.to_csv());
}

std::string ids_text(const Dataset& ds) {
  std::string out;
  for (const auto& s : ds.samples()) out += s.id + "\n";
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Dataset raw = stage("load", [&] { return load_dataset(config.dataset, config.format); });
  return run_experiment(config, raw);
}

RunSummary run_experiment(const ExperimentConfig& config, const Dataset& raw) {
  config.validate();
  RunLog run_log;
  const auto t_run = Clock::now();
  RunSummary summary;
  const fs::path dir = config.output;
  summary.directory = dir;
  std::string timing = "stage,seconds\n";

  stage("setup", [&] {
    fs::create_directories(dir);
    write_file_atomic(dir / "config.conf", config.serialize());
    write_file_atomic(dir / "seed.txt", std::to_string(config.seed) + "\n");
    write_file_atomic(dir / "version.txt", std::string(version_tag()) + "\n");
    return 0;
  });
  log_info("dataset: " + raw.source() + " (" + std::to_string(raw.size()) + " samples, " +
           std::to_string(raw.labels().size()) + " classes)");

  Dataset data = stage("filter", [&] { return filter_classes(raw, config.min_count, config.drop_labels); });
  if (data.size() != raw.size())
    log_info("filter kept " + std::to_string(data.size()) + " of " + std::to_string(raw.size()) + " samples");

  if (config.preprocess) {
    data = stage("preprocess", [&] {
      auto [out, report] = preprocess_dataset(data);
      write_file_atomic(dir / "prep_histogram.csv", report.histogram_csv());
      write_file_atomic(dir / "prep_summary.csv", report.summary_csv());
      log_info("preprocess: " + std::to_string(report.unchanged) + " of " + std::to_string(report.total) +
               " sequences unchanged");
      return out;
    });
  }

  const auto [train_all, test] = stage("split", [&] {
    const auto plan = stratified_split(data, config.test_fraction, derive_seed(config.seed, "split"));
    return std::pair{data.subset(plan.train_indices), data.subset(plan.test_indices)};
  });
  summary.train_size = train_all.size();
  summary.test_size = test.size();
  summary.leakage = id_overlap(train_all, test);
  {
    const std::string line = "leakage check: train=" + std::to_string(train_all.size()) +
                             " test=" + std::to_string(test.size()) +
                             " shared_ids=" + std::to_string(summary.leakage);
    log_info(line);
    write_file_atomic(dir / "leakage.txt", line + "\n");
    write_file_atomic(dir / "train_ids.txt", ids_text(train_all));
    write_file_atomic(dir / "test_ids.txt", ids_text(test));
    if (summary.leakage != 0) throw std::logic_error("stage 'split': train and test share sample ids");
  }

  const auto y_test = [&] {
    std::vector<std::int32_t> y;
    for (auto v : test.label_indices()) y.push_back(static_cast<std::int32_t>(v));
    return y;
  }();

  stage("dummy", [&] {
    const auto dummy = DummyMostFrequent::fit(train_all);
    const auto report = evaluate(y_test, dummy.predict_proba(test.size()), test.labels());
    summary.dummy_macro_f1 = report.prf.macro_f1;
    summary.dummy_macro_auc = report.auc.macro;
    write_report(dir, "dummy", report);
    return 0;
  });

  const ModelConfig model_config = config.model_config();
  const TrainOptions options = config.train_options();
  std::vector<double> test_probs;

  if (config.validation == Validation::kfold) {
    stage("cross-validation", [&] {
      const auto folds = stratified_kfold(train_all, config.k, derive_seed(config.seed, "kfold"));
      std::string rows = "fold,macro_f1,macro_auc,best_epoch\n";
      TrainedModel best;
      double best_auc = -1.0;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const Dataset fold_train = train_all.subset(folds[f].train_indices);
        const Dataset fold_val = train_all.subset(folds[f].val_indices);
        const Tokenizer tokenizer = config.make_tokenizer(fold_train);
        ModelConfig mc = model_config;
        mc.seed = derive_seed(config.seed, "fold", f);
        const auto t0 = Clock::now();
        TrainedModel model = train(mc, tokenizer, fold_train, fold_val, class_weights(fold_train), options);
        FoldResult fr;
        fr.fold = f;
        fr.train_seconds = seconds_since(t0);
        fr.best_epoch = model.best_epoch;
        std::vector<std::int32_t> y_val;
        for (auto v : fold_val.label_indices()) y_val.push_back(static_cast<std::int32_t>(v));
        const auto report = evaluate(y_val, predict_proba(model, fold_val), fold_val.labels());
        fr.macro_f1 = report.prf.macro_f1;
        fr.macro_auc = report.auc.macro;
        summary.folds.push_back(fr);
        rows += std::to_string(f) + "," + fmt(fr.macro_f1) + "," + fmt(fr.macro_auc) + "," +
                std::to_string(fr.best_epoch) + "\n";
        timing += "fold_" + std::to_string(f) + "_train," + fmt(fr.train_seconds) + "\n";
        write_file_atomic(dir / ("fold_" + std::to_string(f) + "_history.csv"), model.history_csv());
        log_info("fold " + std::to_string(f) + ": macro F1 " + fmt(fr.macro_f1) + ", macro AUC " + fmt(fr.macro_auc));
        if (fr.macro_auc > best_auc) {
          best_auc = fr.macro_auc;
          best = std::move(model);
        }
      }
      std::vector<double> f1s, aucs, secs;
      for (const auto& fr : summary.folds) {
        f1s.push_back(fr.macro_f1);
        aucs.push_back(fr.macro_auc);
        secs.push_back(fr.train_seconds);
      }
      const auto f1 = mean_std(f1s);
      const auto auc = mean_std(aucs);
      const auto ts = mean_std(secs);
      summary.train_seconds = ts.mean;
      write_file_atomic(dir / "cv_folds.csv", rows);
      write_file_atomic(dir / "cv_summary.csv", "metric,mean,std\nmacro_f1," + fmt(f1.mean) + "," + fmt(f1.std) +
                                                    "\nmacro_auc," + fmt(auc.mean) + "," + fmt(auc.std) + "\n");
      timing += "fold_train_mean," + fmt(ts.mean) + "\nfold_train_std," + fmt(ts.std) + "\n";
      log_info("cross-validation: macro F1 " + fmt(f1.mean) + " +/- " + fmt(f1.std) + ", macro AUC " +
               fmt(auc.mean) + " +/- " + fmt(auc.std));
      save_model(best, dir / "model");
      test_probs = predict_proba(best, test);
      return 0;
    });
  } else {
    stage("train", [&] {
      const auto plan = stratified_split(train_all, config.val_fraction, derive_seed(config.seed, "validation"));
      const Dataset fit = train_all.subset(plan.train_indices);
      const Dataset val = train_all.subset(plan.test_indices);
      const Tokenizer tokenizer = config.make_tokenizer(fit);
      const auto t0 = Clock::now();
      const Ensemble ens = train_rtf(model_config, config.ensemble_n, tokenizer, fit, val, class_weights(fit), options,
                                     derive_seed(config.seed, "rtf"), config.threads);
      summary.train_seconds = seconds_since(t0);
      timing += "ensemble_train," + fmt(summary.train_seconds) + "\n";
      save_ensemble(ens, dir / "ensemble");
      test_probs = predict_rtf(ens, test);
      return 0;
    });
  }

  stage("evaluate", [&] {
    const auto report = evaluate(y_test, test_probs, test.labels());
    summary.test_macro_f1 = report.prf.macro_f1;
    summary.test_macro_auc = report.auc.macro;
    write_report(dir, "test", report);
    log_info("test: macro F1 " + fmt(summary.test_macro_f1) + ", macro AUC " + fmt(summary.test_macro_auc));
    return 0;
  });

  timing += "total," + fmt(seconds_since(t_run)) + "\n";
  write_file_atomic(dir / "timing.csv", timing);
  write_file_atomic(dir / "run.log", run_log.text());
  return summary;
}

std::string TimingReport::to_csv() const {
  std::string out = "model,draws,inference_seconds,train_seconds_mean,train_seconds_std\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%zu,%.9g,%.6g,%.6g\n", r.draws, r.inference_seconds, r.train_seconds_mean,
                  r.train_seconds_std);
    out += r.model + buf;
  }
  return out;
}

TimingReport bench(const std::vector<BenchTarget>& targets, const Dataset& pool, std::size_t draws,
                   std::uint64_t seed) {
  if (pool.empty()) throw std::invalid_argument("bench: empty sample pool");
  if (draws == 0) throw std::invalid_argument("bench: draws must be positive");
  std::mt19937_64 rng(derive_seed(seed, "bench"));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> order(draws);
  for (auto& i : order) i = pick(rng);

  TimingReport report;
  for (const auto& target : targets) {
    target.predict(pool[order[0]]);  // warm-up
    double total = 0.0;
    for (auto i : order) {
      const auto t0 = Clock::now();
      const auto probs = target.predict(pool[i]);
      total += seconds_since(t0);
      if (probs.empty()) throw std::logic_error("bench: predictor returned no probabilities");
    }
    TimingRow row;
    row.model = target.name;
    row.draws = draws;
    row.inference_seconds = std::max(total / static_cast<double>(draws), 1e-12);
    const auto ts = mean_std(target.train_seconds);
    row.train_seconds_mean = ts.mean;
    row.train_seconds_std = ts.std;
    report.rows.push_back(row);
  }
  return report;
}

BenchTarget bench_target(const std::string& name, const TrainedModel& model) {
  BenchTarget t;
  t.name = name;
  t.predict = [&model](const Sample& s) { return predict_proba(model, std::span<const Sample>(&s, 1)); };
  return t;
}

BenchTarget bench_target(const std::string& name, const Ensemble& ensemble) {
  BenchTarget t;
  t.name = name;
  t.predict = [&ensemble](const Sample& s) { return predict_rtf(ensemble, std::span<const Sample>(&s, 1)); };
  return t;
}

}  // namespace rtf
