// Command-line front end. Talks to the library only through rtf/rtf.h.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtf/rtf.h"

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(rtf_status status, const std::string& what) {
  if (status != RTF_OK)
    throw Failure(what + ": " + rtf_status_name(status) + ": " + rtf_last_error());
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};

using Dataset = std::unique_ptr<rtf_dataset, Deleter<rtf_dataset, rtf_dataset_free>>;
using Config = std::unique_ptr<rtf_config, Deleter<rtf_config, rtf_config_free>>;
using Model = std::unique_ptr<rtf_model, Deleter<rtf_model, rtf_model_free>>;
using Ensemble = std::unique_ptr<rtf_ensemble, Deleter<rtf_ensemble, rtf_ensemble_free>>;

struct Text {
  char* p = nullptr;
  ~Text() { rtf_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

Dataset load(const std::string& path, const std::string& format) {
  rtf_dataset* ds = nullptr;
  check(rtf_dataset_load(path.c_str(), format.c_str(), &ds), "loading " + path);
  return Dataset(ds);
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  rtf_config* cfg = nullptr;
  if (path.empty()) check(rtf_config_new(&cfg), "creating config");
  else check(rtf_config_load(path.c_str(), &cfg), "loading config " + path);
  Config owned(cfg);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    check(rtf_config_set(owned.get(), trim(kv.substr(0, eq)).c_str(), trim(kv.substr(eq + 1)).c_str()),
          "config override '" + kv + "'");
  }
  return owned;
}

void print_metrics(const char* what, const rtf_metrics& m) {
  std::printf("%s: rows=%zu classes=%zu macro_precision=%.4f macro_recall=%.4f macro_f1=%.4f macro_auc=%.4f\n", what,
              m.rows, m.classes, m.macro_precision, m.macro_recall, m.macro_f1, m.macro_auc);
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    std::size_t used = 0;
    const auto v = std::stoull(part, &used);
    if (used != part.size()) throw Failure("bad class count '" + part + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malware API-call sequence classification with transformer forests"};
  app.set_version_flag("--version", std::string(rtf_version()));
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress log lines");

  std::string input, output, format = "canonical", report_dir, config_path, train_path, val_path, test_path,
                             model_dir, front_end = "calls", counts;
  std::vector<std::string> overrides, model_dirs;
  double fraction = 0.2, eps = 1e-5;
  std::uint64_t seed = 1;
  std::size_t coords = 200, draws = 100, repeats = 1;

  auto* prep = app.add_subcommand("prep", "Collapse repeated calls and n-grams to a fixpoint");
  prep->add_option("-i,--input", input, "Input dataset")->required();
  prep->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
  prep->add_option("-o,--output", output, "Output canonical file")->required();
  prep->add_option("-r,--report-dir", report_dir, "Directory for the histogram and summary CSVs");

  auto* stats = app.add_subcommand("stats", "Class distribution and sequence lengths");
  stats->add_option("-i,--input", input, "Input dataset")->required();
  stats->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");

  auto* split = app.add_subcommand("split", "Stratified train/test split");
  split->add_option("-i,--input", input, "Input dataset")->required();
  split->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
  split->add_option("--test-fraction", fraction, "Share of each class sent to test");
  split->add_option("--seed", seed, "Split seed");
  split->add_option("--train-out", train_path, "Train output file")->required();
  split->add_option("--test-out", test_path, "Test output file")->required();

  auto add_training = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Experiment config file");
    sub->add_option("--set", overrides, "Config override key=value (repeatable)");
    sub->add_option("--train", train_path, "Training dataset")->required();
    sub->add_option("--val", val_path, "Validation dataset (default: split from train)");
    sub->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
    sub->add_option("-o,--out", model_dir, "Output directory")->required();
  };
  auto* train = app.add_subcommand("train", "Train one transformer classifier");
  add_training(train);
  auto* rtf_train = app.add_subcommand("rtf-train", "Train a Random Transformer Forest");
  add_training(rtf_train);

  auto add_eval = [&](CLI::App* sub) {
    sub->add_option("-m,--model", model_dir, "Saved model directory")->required();
    sub->add_option("-d,--data", input, "Dataset to score")->required();
    sub->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
    sub->add_option("-r,--report-dir", report_dir, "Directory for JSON/CSV reports");
  };
  auto* eval = app.add_subcommand("eval", "Evaluate a trained classifier");
  add_eval(eval);
  auto* rtf_eval = app.add_subcommand("rtf-eval", "Evaluate a trained forest");
  add_eval(rtf_eval);

  auto* dummy = app.add_subcommand("dummy", "Most-frequent baseline");
  dummy->add_option("--train", train_path, "Training dataset")->required();
  dummy->add_option("--test", test_path, "Test dataset (default: stratified split of --train)");
  dummy->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
  dummy->add_option("--test-fraction", fraction, "Test share when splitting");
  dummy->add_option("--seed", seed, "Split seed");
  dummy->add_option("-r,--report-dir", report_dir, "Directory for JSON/CSV reports");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the transformer gradients");
  gradcheck->add_option("--front-end", front_end, "calls | chars");
  gradcheck->add_option("--eps", eps, "Central-difference step");
  gradcheck->add_option("--coords", coords, "Coordinates to sample");
  gradcheck->add_option("--seed", seed, "Sampling seed");

  auto* bench = app.add_subcommand("bench", "Single-sample inference and training timings");
  bench->add_option("-m,--model", model_dirs, "Saved model or forest directories");
  bench->add_option("-c,--config", config_path, "Config to train and time (instead of --model)");
  bench->add_option("--set", overrides, "Config override key=value (repeatable)");
  bench->add_option("--train", train_path, "Training dataset when timing training");
  bench->add_option("-d,--data", input, "Samples to draw from")->required();
  bench->add_option("-f,--format", format, "canonical | pair_csv | coded_csv");
  bench->add_option("--draws", draws, "Single-sample predictions per model (>= 100 recommended)");
  bench->add_option("--repeats", repeats, "Training repetitions when timing training");
  bench->add_option("--seed", seed, "Draw seed");
  bench->add_option("-o,--output", output, "Write the timing CSV here");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic Markov-chain corpus");
  synth->add_option("-o,--output", output, "Output canonical file")->required();
  rtf_synth_options synth_opts;
  rtf_synth_options_default(&synth_opts);
  synth->add_option("--seed", synth_opts.seed, "Generator seed")->capture_default_str();
  synth->add_option("--counts", counts, "Comma-separated class sizes (default 400,200,100,50)");
  synth->add_option("--tokens", synth_opts.tokens, "Call alphabet size")->capture_default_str();
  synth->add_option("--min-len", synth_opts.min_len, "Shortest sequence")->capture_default_str();
  synth->add_option("--max-len", synth_opts.max_len, "Longest sequence")->capture_default_str();
  synth->add_option("--fanout", synth_opts.fanout, "Preferred successors per state")->capture_default_str();
  synth->add_option("--noise", synth_opts.noise, "Transition mass spread over all calls")->capture_default_str();

  auto* run = app.add_subcommand("run", "Full experiment from a config file");
  run->add_option("-c,--config", config_path, "Experiment config file")->required();
  run->add_option("--set", overrides, "Config override key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);
  rtf_set_verbose(quiet ? 0 : 1);

  try {
    if (*prep) {
      auto ds = load(input, format);
      rtf_dataset* out = nullptr;
      rtf_prep_summary s{};
      check(rtf_dataset_preprocess(ds.get(), report_dir.empty() ? nullptr : report_dir.c_str(), &out, &s),
            "preprocess");
      Dataset owned(out);
      check(rtf_dataset_save(owned.get(), output.c_str(), 1), "writing " + output);
      std::printf("sequences=%zu changed=%zu unchanged=%zu\n", s.total, s.changed, s.unchanged);
    } else if (*stats) {
      auto ds = load(input, format);
      Text csv;
      check(rtf_dataset_stats_csv(ds.get(), &csv.p), "stats");
      std::fputs(csv.p, stdout);
    } else if (*split) {
      auto ds = load(input, format);
      rtf_dataset *tr = nullptr, *te = nullptr;
      check(rtf_dataset_split(ds.get(), fraction, seed, &tr, &te), "split");
      Dataset a(tr), b(te);
      check(rtf_dataset_save(a.get(), train_path.c_str(), 1), "writing " + train_path);
      check(rtf_dataset_save(b.get(), test_path.c_str(), 1), "writing " + test_path);
      std::printf("train=%zu test=%zu\n", rtf_dataset_size(a.get()), rtf_dataset_size(b.get()));
    } else if (*train || *rtf_train) {
      auto cfg = load_config(config_path, overrides);
      auto tr = load(train_path, format);
      Dataset va;
      if (!val_path.empty()) va = load(val_path, format);
      if (*train) {
        rtf_model* m = nullptr;
        check(rtf_model_train(cfg.get(), tr.get(), va.get(), &m), "train");
        Model owned(m);
        check(rtf_model_save(owned.get(), model_dir.c_str()), "saving model");
      } else {
        rtf_ensemble* e = nullptr;
        check(rtf_ensemble_train(cfg.get(), tr.get(), va.get(), &e), "rtf-train");
        Ensemble owned(e);
        check(rtf_ensemble_save(owned.get(), model_dir.c_str()), "saving forest");
      }
      std::printf("saved %s\n", model_dir.c_str());
    } else if (*eval || *rtf_eval) {
      auto ds = load(input, format);
      rtf_metrics m{};
      const char* rd = report_dir.empty() ? nullptr : report_dir.c_str();
      if (*eval) {
        rtf_model* raw = nullptr;
        check(rtf_model_load(model_dir.c_str(), &raw), "loading model");
        Model owned(raw);
        check(rtf_model_evaluate(owned.get(), ds.get(), rd, &m), "eval");
      } else {
        rtf_ensemble* raw = nullptr;
        check(rtf_ensemble_load(model_dir.c_str(), &raw), "loading forest");
        Ensemble owned(raw);
        check(rtf_ensemble_evaluate(owned.get(), ds.get(), rd, &m), "rtf-eval");
      }
      print_metrics("eval", m);
    } else if (*dummy) {
      auto tr = load(train_path, format);
      Dataset fit, te;
      if (test_path.empty()) {
        rtf_dataset *a = nullptr, *b = nullptr;
        check(rtf_dataset_split(tr.get(), fraction, seed, &a, &b), "split");
        fit.reset(a);
        te.reset(b);
      } else {
        te = load(test_path, format);
      }
      rtf_metrics m{};
      check(rtf_dummy_evaluate(fit ? fit.get() : tr.get(), te.get(), report_dir.empty() ? nullptr : report_dir.c_str(),
                               &m),
            "dummy");
      print_metrics("dummy", m);
    } else if (*gradcheck) {
      rtf_gradcheck_result r{};
      check(rtf_gradcheck(front_end.c_str(), eps, coords, seed, &r), "gradcheck");
      std::printf("front_end=%s coordinates=%zu max_rel_error=%.3e\n", front_end.c_str(), r.coordinates,
                  r.max_rel_error);
      return r.max_rel_error < 1e-4 ? 0 : 1;
    } else if (*bench) {
      auto pool = load(input, format);
      Text csv;
      if (!model_dirs.empty()) {
        std::vector<const char*> dirs;
        for (const auto& d : model_dirs) dirs.push_back(d.c_str());
        check(rtf_bench_artifacts(dirs.data(), dirs.size(), pool.get(), draws, seed, &csv.p), "bench");
      } else {
        if (train_path.empty()) throw Failure("bench: give --model directories or --config with --train");
        auto cfg = load_config(config_path, overrides);
        auto tr = load(train_path, format);
        check(rtf_bench_train(cfg.get(), tr.get(), pool.get(), repeats, draws, &csv.p), "bench");
      }
      std::fputs(csv.p, stdout);
      if (!output.empty()) {
        std::FILE* f = std::fopen(output.c_str(), "w");
        if (!f) throw Failure("cannot write " + output);
        std::fputs(csv.p, f);
        std::fclose(f);
      }
    } else if (*synth) {
      rtf_synth_options o = synth_opts;
      if (!counts.empty()) {
        const auto c = parse_counts(counts);
        if (c.size() > RTF_SYNTH_MAX_CLASSES) throw Failure("too many classes");
        o.classes = c.size();
        for (std::size_t i = 0; i < c.size(); ++i) o.class_counts[i] = c[i];
      }
      rtf_dataset* raw = nullptr;
      check(rtf_dataset_synth(&o, &raw), "synth");
      Dataset ds(raw);
      check(rtf_dataset_save(ds.get(), output.c_str(), 1), "writing " + output);
      std::printf("wrote %zu samples in %zu classes to %s\n", rtf_dataset_size(ds.get()), rtf_dataset_classes(ds.get()),
                  output.c_str());
    } else if (*run) {
      auto cfg = load_config(config_path, overrides);
      rtf_run_summary s{};
      check(rtf_run(cfg.get(), &s), "run");
      std::printf("train=%zu test=%zu shared_ids=%zu folds=%zu dummy_macro_f1=%.4f test_macro_f1=%.4f "
                  "test_macro_auc=%.4f\n",
                  s.train_size, s.test_size, s.leakage, s.folds, s.dummy_macro_f1, s.test_macro_f1,
                  s.test_macro_auc);
    }
  } catch (const Failure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
