#include "rtf/rtf.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <set>
#include <stdexcept>
#include <string>

#include "core/config.hpp"
#include "core/corpus.hpp"
#include "core/ensemble.hpp"
#include "core/error.hpp"
#include "core/experiment.hpp"
#include "core/fileio.hpp"
#include "core/log.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/prep.hpp"
#include "core/seed.hpp"
#include "core/synth.hpp"

struct rtf_dataset {
  rtf::Dataset ds;
};

struct rtf_config {
  rtf::ExperimentConfig cfg;
};

struct rtf_model {
  rtf::TrainedModel model;
};

struct rtf_ensemble {
  rtf::Ensemble ens;
};

namespace {

thread_local std::string last_error;

rtf_status fail(rtf_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
rtf_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return RTF_OK;
  } catch (const rtf::ParseError& e) {
    return fail(RTF_ERR_PARSE, e.what());
  } catch (const rtf::IoError& e) {
    return fail(RTF_ERR_IO, e.what());
  } catch (const rtf::NumericError& e) {
    return fail(RTF_ERR_NUMERIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RTF_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(RTF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(RTF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::logic_error& e) {
    return fail(RTF_ERR_STATE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RTF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RTF_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

char* copy_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

void fill_metrics(const rtf::EvalReport& report, std::size_t rows, rtf_metrics* out) {
  if (!out) return;
  out->rows = rows;
  out->classes = report.labels.size();
  out->macro_precision = report.prf.macro_precision;
  out->macro_recall = report.prf.macro_recall;
  out->macro_f1 = report.prf.macro_f1;
  out->macro_auc = report.auc.macro;
}

void write_eval(const rtf::EvalReport& report, const char* dir) {
  if (!dir) return;
  const std::filesystem::path d(dir);
  rtf::write_file_atomic(d / "eval_report.json", report.to_json());
  rtf::write_file_atomic(d / "eval_per_class.csv", report.per_class_csv());
  rtf::write_file_atomic(d / "eval_confusion.csv", report.confusion.to_csv());
}

std::vector<std::int32_t> truth(const rtf::Dataset& ds) {
  std::vector<std::int32_t> y;
  y.reserve(ds.size());
  for (auto v : ds.label_indices()) y.push_back(static_cast<std::int32_t>(v));
  return y;
}

// Labels of `ds` resolved against the model's label space.
rtf::Dataset aligned(const rtf::Dataset& ds, const rtf::LabelSpace& labels) {
  if (ds.labels() == labels) return ds;
  return rtf::relabel(ds, labels);
}

struct Prepared {
  rtf::Dataset fit;
  rtf::Dataset val;
  rtf::Tokenizer tokenizer;
  std::vector<double> weights;
};

Prepared prepare(const rtf::ExperimentConfig& cfg, const rtf::Dataset& train, const rtf_dataset* val) {
  Prepared p;
  if (val) {
    p.fit = train;
    p.val = aligned(val->ds, train.labels());
  } else {
    const auto plan = rtf::stratified_split(train, cfg.val_fraction, rtf::derive_seed(cfg.seed, "validation"));
    p.fit = train.subset(plan.train_indices);
    p.val = train.subset(plan.test_indices);
  }
  p.tokenizer = cfg.make_tokenizer(p.fit);
  p.weights = rtf::class_weights(p.fit);
  return p;
}

rtf::TrainedModel train_single(const rtf::ExperimentConfig& cfg, const rtf::Dataset& train, const rtf_dataset* val) {
  const auto p = prepare(cfg, train, val);
  return rtf::train(cfg.model_config(), p.tokenizer, p.fit, p.val, p.weights, cfg.train_options());
}

rtf::Ensemble train_ensemble(const rtf::ExperimentConfig& cfg, const rtf::Dataset& train, const rtf_dataset* val) {
  const auto p = prepare(cfg, train, val);
  return rtf::train_rtf(cfg.model_config(), cfg.ensemble_n, p.tokenizer, p.fit, p.val, p.weights,
                        cfg.train_options(), rtf::derive_seed(cfg.seed, "rtf"), cfg.threads);
}

void copy_probs(const std::vector<double>& probs, double* out, std::size_t capacity) {
  require(out != nullptr, "probability buffer is NULL");
  require(capacity >= probs.size(), "probability buffer too small");
  std::memcpy(out, probs.data(), probs.size() * sizeof(double));
}

}  // namespace

extern "C" {

const char* rtf_version(void) { return rtf::version_tag(); }

const char* rtf_last_error(void) { return last_error.c_str(); }

const char* rtf_status_name(rtf_status status) {
  switch (status) {
    case RTF_OK: return "ok";
    case RTF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case RTF_ERR_IO: return "i/o error";
    case RTF_ERR_PARSE: return "parse error";
    case RTF_ERR_STATE: return "invalid state";
    case RTF_ERR_NUMERIC: return "numeric error";
    case RTF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void rtf_string_free(char* text) { std::free(text); }

void rtf_set_verbose(int verbose) {
  if (verbose) rtf::set_log_sink({});
  else rtf::set_log_sink([](rtf::LogLevel, std::string_view) {});
}

rtf_status rtf_dataset_load(const char* path, const char* format, rtf_dataset** out) {
  return guard([&] {
    require(path && out, "path and out must not be NULL");
    const auto fmt = rtf::parse_format(format ? format : "canonical");
    *out = new rtf_dataset{rtf::load_dataset(path, fmt)};
  });
}

rtf_status rtf_dataset_save(const rtf_dataset* ds, const char* path, int with_ids) {
  return guard([&] {
    require(ds && path, "dataset and path must not be NULL");
    rtf::save_canonical(ds->ds, path, with_ids != 0);
  });
}

void rtf_dataset_free(rtf_dataset* ds) { delete ds; }

size_t rtf_dataset_size(const rtf_dataset* ds) { return ds ? ds->ds.size() : 0; }

size_t rtf_dataset_classes(const rtf_dataset* ds) { return ds ? ds->ds.labels().size() : 0; }

const char* rtf_dataset_label(const rtf_dataset* ds, size_t index) {
  if (!ds || index >= ds->ds.labels().size()) return nullptr;
  return ds->ds.labels().name(index).c_str();
}

rtf_status rtf_dataset_stats_csv(const rtf_dataset* ds, char** out) {
  return guard([&] {
    require(ds && out, "dataset and out must not be NULL");
    const auto& d = ds->ds;
    const auto counts = d.class_counts();
    std::vector<double> length_sum(counts.size(), 0.0);
    double total_len = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      length_sum[d.label_index(i)] += static_cast<double>(d[i].calls.size());
      total_len += static_cast<double>(d[i].calls.size());
    }
    char buf[128];
    std::string csv = "class,count,share,mean_length\n";
    for (std::size_t c = 0; c < counts.size(); ++c) {
      std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.2f\n", counts[c],
                    static_cast<double>(counts[c]) / static_cast<double>(d.size()),
                    length_sum[c] / static_cast<double>(counts[c]));
      csv += d.labels().name(c) + buf;
    }
    std::snprintf(buf, sizeof buf, "all,%zu,1.000000,%.2f\n", d.size(),
                  d.empty() ? 0.0 : total_len / static_cast<double>(d.size()));
    csv += buf;
    *out = copy_string(csv);
  });
}

rtf_status rtf_dataset_filter(const rtf_dataset* ds, size_t min_count, const char* drop_labels, rtf_dataset** out) {
  return guard([&] {
    require(ds && out, "dataset and out must not be NULL");
    std::set<std::string> drop;
    if (drop_labels) {
      for (const auto& part : rtf::split(drop_labels, ',')) {
        auto t = rtf::trim(part);
        if (!t.empty()) drop.emplace(t);
      }
    }
    *out = new rtf_dataset{rtf::filter_classes(ds->ds, min_count, drop)};
  });
}

rtf_status rtf_dataset_preprocess(const rtf_dataset* ds, const char* report_dir, rtf_dataset** out,
                                  rtf_prep_summary* summary) {
  return guard([&] {
    require(ds && out, "dataset and out must not be NULL");
    auto [result, report] = rtf::preprocess_dataset(ds->ds);
    if (report_dir) {
      const std::filesystem::path d(report_dir);
      rtf::write_file_atomic(d / "prep_histogram.csv", report.histogram_csv());
      rtf::write_file_atomic(d / "prep_summary.csv", report.summary_csv());
    }
    if (summary) {
      summary->total = report.total;
      summary->changed = report.changed;
      summary->unchanged = report.unchanged;
    }
    *out = new rtf_dataset{std::move(result)};
  });
}

rtf_status rtf_dataset_split(const rtf_dataset* ds, double test_fraction, uint64_t seed, rtf_dataset** train,
                             rtf_dataset** test) {
  return guard([&] {
    require(ds && train && test, "dataset, train and test must not be NULL");
    const auto plan = rtf::stratified_split(ds->ds, test_fraction, seed);
    auto tr = std::make_unique<rtf_dataset>(rtf_dataset{ds->ds.subset(plan.train_indices)});
    auto te = std::make_unique<rtf_dataset>(rtf_dataset{ds->ds.subset(plan.test_indices)});
    *train = tr.release();
    *test = te.release();
  });
}

rtf_status rtf_dataset_align(const rtf_dataset* ds, const rtf_dataset* reference, rtf_dataset** out) {
  return guard([&] {
    require(ds && reference && out, "arguments must not be NULL");
    *out = new rtf_dataset{rtf::relabel(ds->ds, reference->ds.labels())};
  });
}

void rtf_synth_options_default(rtf_synth_options* options) {
  if (!options) return;
  const rtf::SynthOptions d;
  *options = rtf_synth_options{};
  options->classes = d.class_counts.size();
  for (std::size_t c = 0; c < d.class_counts.size(); ++c) options->class_counts[c] = d.class_counts[c];
  options->tokens = d.tokens;
  options->min_len = d.min_len;
  options->max_len = d.max_len;
  options->fanout = d.fanout;
  options->noise = d.noise;
  options->seed = d.seed;
}

rtf_status rtf_dataset_synth(const rtf_synth_options* options, rtf_dataset** out) {
  return guard([&] {
    require(options && out, "options and out must not be NULL");
    require(options->classes <= RTF_SYNTH_MAX_CLASSES, "too many classes");
    rtf::SynthOptions o;
    o.class_counts.assign(options->class_counts, options->class_counts + options->classes);
    o.tokens = options->tokens;
    o.min_len = options->min_len;
    o.max_len = options->max_len;
    o.fanout = options->fanout;
    o.noise = options->noise;
    o.seed = options->seed;
    *out = new rtf_dataset{rtf::synthesize_markov_corpus(o)};
  });
}

rtf_status rtf_config_new(rtf_config** out) {
  return guard([&] {
    require(out != nullptr, "out must not be NULL");
    *out = new rtf_config{};
  });
}

rtf_status rtf_config_load(const char* path, rtf_config** out) {
  return guard([&] {
    require(path && out, "path and out must not be NULL");
    *out = new rtf_config{rtf::ExperimentConfig::load(path)};
  });
}

rtf_status rtf_config_set(rtf_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config && key && value, "config, key and value must not be NULL");
    auto next = config->cfg;
    next.set(key, value);
    config->cfg = std::move(next);
  });
}

rtf_status rtf_config_serialize(const rtf_config* config, char** out) {
  return guard([&] {
    require(config && out, "config and out must not be NULL");
    *out = copy_string(config->cfg.serialize());
  });
}

void rtf_config_free(rtf_config* config) { delete config; }

rtf_status rtf_model_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* val,
                           rtf_model** out) {
  return guard([&] {
    require(config && train && out, "config, train and out must not be NULL");
    config->cfg.validate();
    *out = new rtf_model{train_single(config->cfg, train->ds, val)};
  });
}

rtf_status rtf_model_save(const rtf_model* model, const char* dir) {
  return guard([&] {
    require(model && dir, "model and dir must not be NULL");
    rtf::save_model(model->model, dir);
  });
}

rtf_status rtf_model_load(const char* dir, rtf_model** out) {
  return guard([&] {
    require(dir && out, "dir and out must not be NULL");
    *out = new rtf_model{rtf::load_model(dir)};
  });
}

void rtf_model_free(rtf_model* model) { delete model; }

size_t rtf_model_classes(const rtf_model* model) { return model ? model->model.labels.size() : 0; }

rtf_status rtf_model_history_csv(const rtf_model* model, char** out) {
  return guard([&] {
    require(model && out, "model and out must not be NULL");
    *out = copy_string(model->model.history_csv());
  });
}

rtf_status rtf_model_predict_proba(const rtf_model* model, const rtf_dataset* ds, double* probs, size_t capacity) {
  return guard([&] {
    require(model && ds, "model and dataset must not be NULL");
    copy_probs(rtf::predict_proba(model->model, ds->ds.samples()), probs, capacity);
  });
}

rtf_status rtf_model_evaluate(const rtf_model* model, const rtf_dataset* ds, const char* report_dir,
                              rtf_metrics* out) {
  return guard([&] {
    require(model && ds, "model and dataset must not be NULL");
    const auto d = aligned(ds->ds, model->model.labels);
    const auto report = rtf::evaluate(truth(d), rtf::predict_proba(model->model, d), d.labels());
    write_eval(report, report_dir);
    fill_metrics(report, d.size(), out);
  });
}

rtf_status rtf_ensemble_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* val,
                              rtf_ensemble** out) {
  return guard([&] {
    require(config && train && out, "config, train and out must not be NULL");
    config->cfg.validate();
    *out = new rtf_ensemble{train_ensemble(config->cfg, train->ds, val)};
  });
}

rtf_status rtf_ensemble_save(const rtf_ensemble* ensemble, const char* dir) {
  return guard([&] {
    require(ensemble && dir, "ensemble and dir must not be NULL");
    rtf::save_ensemble(ensemble->ens, dir);
  });
}

rtf_status rtf_ensemble_load(const char* dir, rtf_ensemble** out) {
  return guard([&] {
    require(dir && out, "dir and out must not be NULL");
    *out = new rtf_ensemble{rtf::load_ensemble(dir)};
  });
}

void rtf_ensemble_free(rtf_ensemble* ensemble) { delete ensemble; }

size_t rtf_ensemble_size(const rtf_ensemble* ensemble) { return ensemble ? ensemble->ens.size() : 0; }

size_t rtf_ensemble_classes(const rtf_ensemble* ensemble) {
  return ensemble && ensemble->ens.size() ? ensemble->ens.labels().size() : 0;
}

rtf_status rtf_ensemble_predict_proba(const rtf_ensemble* ensemble, const rtf_dataset* ds, double* probs,
                                      size_t capacity) {
  return guard([&] {
    require(ensemble && ds, "ensemble and dataset must not be NULL");
    copy_probs(rtf::predict_rtf(ensemble->ens, ds->ds.samples()), probs, capacity);
  });
}

rtf_status rtf_ensemble_evaluate(const rtf_ensemble* ensemble, const rtf_dataset* ds, const char* report_dir,
                                 rtf_metrics* out) {
  return guard([&] {
    require(ensemble && ds, "ensemble and dataset must not be NULL");
    const auto d = aligned(ds->ds, ensemble->ens.labels());
    const auto report = rtf::evaluate(truth(d), rtf::predict_rtf(ensemble->ens, d), d.labels());
    write_eval(report, report_dir);
    fill_metrics(report, d.size(), out);
  });
}

rtf_status rtf_dummy_evaluate(const rtf_dataset* train, const rtf_dataset* test, const char* report_dir,
                              rtf_metrics* out) {
  return guard([&] {
    require(train && test, "train and test must not be NULL");
    const auto dummy = rtf::DummyMostFrequent::fit(train->ds);
    const auto d = aligned(test->ds, train->ds.labels());
    const auto report = rtf::evaluate(truth(d), dummy.predict_proba(d.size()), d.labels());
    write_eval(report, report_dir);
    fill_metrics(report, d.size(), out);
  });
}

rtf_status rtf_gradcheck(const char* front_end, double eps, size_t coordinates, uint64_t seed,
                         rtf_gradcheck_result* out) {
  return guard([&] {
    require(front_end && out, "front_end and out must not be NULL");
    const auto r = rtf::grad_check_transformer(rtf::parse_front_end(front_end), eps, coordinates, seed);
    out->coordinates = r.coordinates;
    out->max_rel_error = r.max_rel_error;
  });
}

rtf_status rtf_run(const rtf_config* config, rtf_run_summary* out) {
  return guard([&] {
    require(config != nullptr, "config must not be NULL");
    const auto s = rtf::run_experiment(config->cfg);
    if (out) {
      out->train_size = s.train_size;
      out->test_size = s.test_size;
      out->leakage = s.leakage;
      out->folds = s.folds.size();
      out->dummy_macro_f1 = s.dummy_macro_f1;
      out->test_macro_f1 = s.test_macro_f1;
      out->test_macro_auc = s.test_macro_auc;
      out->train_seconds = s.train_seconds;
    }
  });
}

rtf_status rtf_bench_artifacts(const char* const* dirs, size_t count, const rtf_dataset* pool, size_t draws,
                               uint64_t seed, char** csv) {
  return guard([&] {
    require(dirs && pool && csv, "dirs, pool and csv must not be NULL");
    std::vector<std::unique_ptr<rtf::TrainedModel>> models;
    std::vector<std::unique_ptr<rtf::Ensemble>> ensembles;
    std::vector<rtf::BenchTarget> targets;
    for (std::size_t i = 0; i < count; ++i) {
      const std::filesystem::path dir(dirs[i]);
      const std::string name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
      if (std::filesystem::exists(dir / "manifest.txt")) {
        ensembles.push_back(std::make_unique<rtf::Ensemble>(rtf::load_ensemble(dir)));
        targets.push_back(rtf::bench_target(name, *ensembles.back()));
      } else {
        models.push_back(std::make_unique<rtf::TrainedModel>(rtf::load_model(dir)));
        targets.push_back(rtf::bench_target(name, *models.back()));
      }
    }
    *csv = copy_string(rtf::bench(targets, pool->ds, draws, seed).to_csv());
  });
}

rtf_status rtf_bench_train(const rtf_config* config, const rtf_dataset* train, const rtf_dataset* pool,
                           size_t repeats, size_t draws, char** csv) {
  return guard([&] {
    require(config && train && pool && csv, "config, train, pool and csv must not be NULL");
    require(repeats >= 1, "repeats must be >= 1");
    const auto& cfg = config->cfg;
    cfg.validate();
    using Clock = std::chrono::steady_clock;
    std::vector<double> single_secs, ensemble_secs;
    rtf::TrainedModel single;
    rtf::Ensemble ensemble;
    for (std::size_t r = 0; r < repeats; ++r) {
      auto run_cfg = cfg;
      run_cfg.seed = rtf::derive_seed(cfg.seed, "repeat", r);
      auto t0 = Clock::now();
      single = train_single(run_cfg, train->ds, nullptr);
      single_secs.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      if (cfg.ensemble_n > 1) {
        t0 = Clock::now();
        ensemble = train_ensemble(run_cfg, train->ds, nullptr);
        ensemble_secs.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      }
    }
    std::vector<rtf::BenchTarget> targets;
    targets.push_back(rtf::bench_target("single", single));
    targets.back().train_seconds = single_secs;
    if (cfg.ensemble_n > 1) {
      targets.push_back(rtf::bench_target("rtf_n" + std::to_string(cfg.ensemble_n), ensemble));
      targets.back().train_seconds = ensemble_secs;
    }
    *csv = copy_string(rtf::bench(targets, pool->ds, draws, cfg.seed).to_csv());
  });
}

}  // extern "C"
