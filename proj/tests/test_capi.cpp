#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "rtf/rtf.h"

namespace fs = std::filesystem;

namespace {

struct Tmp {
  fs::path path;
  Tmp() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("rtf_capi_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Tmp() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

rtf_dataset* synth(std::size_t scale, uint64_t seed = 7) {
  rtf_synth_options o;
  rtf_synth_options_default(&o);
  o.classes = 3;
  o.class_counts[0] = 4 * scale;
  o.class_counts[1] = 3 * scale;
  o.class_counts[2] = 2 * scale;
  o.min_len = 6;
  o.max_len = 12;
  o.seed = seed;
  rtf_dataset* ds = nullptr;
  REQUIRE(rtf_dataset_synth(&o, &ds) == RTF_OK);
  return ds;
}

rtf_config* tiny_config(const std::string& output) {
  rtf_config* c = nullptr;
  REQUIRE(rtf_config_new(&c) == RTF_OK);
  const char* kv[][2] = {{"d_model", "8"}, {"heads", "2"},  {"d_ff", "8"},   {"max_len", "12"},
                         {"max_epochs", "2"}, {"batch", "8"}, {"ensemble_n", "2"}};
  for (auto& p : kv) REQUIRE(rtf_config_set(c, p[0], p[1]) == RTF_OK);
  REQUIRE(rtf_config_set(c, "output", output.c_str()) == RTF_OK);
  rtf_set_verbose(0);
  return c;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::strlen(rtf_version()) > 0);
  CHECK(std::string(rtf_status_name(RTF_OK)) == "ok");
  CHECK(std::string(rtf_status_name(RTF_ERR_PARSE)) == "parse error");
  rtf_string_free(nullptr);
  rtf_dataset_free(nullptr);
  rtf_model_free(nullptr);
  rtf_ensemble_free(nullptr);
  rtf_config_free(nullptr);
}

TEST_CASE("errors map to status codes and messages") {
  Tmp tmp;
  rtf_dataset* ds = nullptr;
  CHECK(rtf_dataset_load((tmp / "missing.tsv").c_str(), "canonical", &ds) == RTF_ERR_IO);
  CHECK(ds == nullptr);
  CHECK(std::string(rtf_last_error()).find("missing.tsv") != std::string::npos);

  std::ofstream(tmp / "bad.csv") << "id,calls,label\nonly-two,fields\n";
  CHECK(rtf_dataset_load((tmp / "bad.csv").c_str(), "pair_csv", &ds) == RTF_ERR_PARSE);
  CHECK(rtf_dataset_load((tmp / "bad.csv").c_str(), "yaml", &ds) == RTF_ERR_INVALID_ARGUMENT);
  CHECK(rtf_dataset_load(nullptr, "canonical", &ds) == RTF_ERR_INVALID_ARGUMENT);

  rtf_config* c = nullptr;
  REQUIRE(rtf_config_new(&c) == RTF_OK);
  CHECK(rtf_config_set(c, "colour", "blue") == RTF_ERR_PARSE);
  CHECK(std::string(rtf_last_error()).find("unknown key 'colour'") != std::string::npos);
  CHECK(rtf_config_set(c, "ensemble_n", "0") == RTF_OK);
  rtf_run_summary s{};
  CHECK(rtf_run(c, &s) == RTF_ERR_INVALID_ARGUMENT);
  rtf_config_free(c);

  rtf_gradcheck_result g{};
  CHECK(rtf_gradcheck("bytes", 1e-5, 10, 1, &g) == RTF_ERR_INVALID_ARGUMENT);
  CHECK(rtf_gradcheck("calls", 0.0, 10, 1, &g) == RTF_ERR_INVALID_ARGUMENT);
}

TEST_CASE("dataset handles") {
  Tmp tmp;
  rtf_set_verbose(0);
  rtf_dataset* ds = synth(10);
  CHECK(rtf_dataset_size(ds) == 90);
  CHECK(rtf_dataset_classes(ds) == 3);
  CHECK(std::string(rtf_dataset_label(ds, 1)) == "family_1");
  CHECK(rtf_dataset_label(ds, 3) == nullptr);

  char* csv = nullptr;
  REQUIRE(rtf_dataset_stats_csv(ds, &csv) == RTF_OK);
  CHECK(std::string(csv).find("family_0,40,") != std::string::npos);
  rtf_string_free(csv);

  REQUIRE(rtf_dataset_save(ds, (tmp / "d.tsv").c_str(), 1) == RTF_OK);
  rtf_dataset* back = nullptr;
  REQUIRE(rtf_dataset_load((tmp / "d.tsv").c_str(), "canonical", &back) == RTF_OK);
  CHECK(rtf_dataset_size(back) == 90);
  rtf_dataset_free(back);

  rtf_dataset* filtered = nullptr;
  REQUIRE(rtf_dataset_filter(ds, 25, "family_0", &filtered) == RTF_OK);
  CHECK(rtf_dataset_size(filtered) == 30);
  rtf_dataset_free(filtered);

  rtf_dataset *tr = nullptr, *te = nullptr;
  REQUIRE(rtf_dataset_split(ds, 0.2, 3, &tr, &te) == RTF_OK);
  CHECK(rtf_dataset_size(te) == 8 + 6 + 4);
  CHECK(rtf_dataset_size(tr) == 72);

  rtf_dataset* prepped = nullptr;
  rtf_prep_summary ps{};
  REQUIRE(rtf_dataset_preprocess(ds, tmp.path.c_str(), &prepped, &ps) == RTF_OK);
  CHECK(ps.total == 90);
  CHECK(ps.changed + ps.unchanged == 90);
  CHECK(fs::exists(tmp / "prep_histogram.csv"));
  rtf_dataset_free(prepped);

  rtf_metrics m{};
  REQUIRE(rtf_dummy_evaluate(tr, te, nullptr, &m) == RTF_OK);
  CHECK(m.rows == 18);
  CHECK(m.macro_auc == 0.5);

  rtf_dataset_free(tr);
  rtf_dataset_free(te);
  rtf_dataset_free(ds);
}

TEST_CASE("models and forests through the C interface") {
  Tmp tmp;
  rtf_dataset* ds = synth(8);
  rtf_dataset *tr = nullptr, *te = nullptr;
  REQUIRE(rtf_dataset_split(ds, 0.25, 1, &tr, &te) == RTF_OK);
  rtf_config* c = tiny_config(tmp / "run");

  rtf_model* model = nullptr;
  REQUIRE(rtf_model_train(c, tr, nullptr, &model) == RTF_OK);
  CHECK(rtf_model_classes(model) == 3);
  const std::size_t n = rtf_dataset_size(te) * 3;
  std::vector<double> probs(n);
  REQUIRE(rtf_model_predict_proba(model, te, probs.data(), probs.size()) == RTF_OK);
  for (std::size_t r = 0; r < n / 3; ++r) CHECK(probs[3 * r] + probs[3 * r + 1] + probs[3 * r + 2] == doctest::Approx(1.0));
  CHECK(rtf_model_predict_proba(model, te, probs.data(), probs.size() - 1) == RTF_ERR_INVALID_ARGUMENT);

  char* history = nullptr;
  REQUIRE(rtf_model_history_csv(model, &history) == RTF_OK);
  CHECK(std::string(history).rfind("epoch,train_loss,val_auc\n", 0) == 0);
  rtf_string_free(history);

  REQUIRE(rtf_model_save(model, (tmp / "m").c_str()) == RTF_OK);
  rtf_model* loaded = nullptr;
  REQUIRE(rtf_model_load((tmp / "m").c_str(), &loaded) == RTF_OK);
  std::vector<double> again(n);
  REQUIRE(rtf_model_predict_proba(loaded, te, again.data(), again.size()) == RTF_OK);
  CHECK(again == probs);

  rtf_metrics m{};
  REQUIRE(rtf_model_evaluate(loaded, te, (tmp / "eval").c_str(), &m) == RTF_OK);
  CHECK(m.rows == rtf_dataset_size(te));
  CHECK(fs::exists(tmp / "eval/eval_report.json"));
  CHECK(rtf_model_load((tmp / "nowhere").c_str(), &loaded) != RTF_OK);

  rtf_ensemble* ens = nullptr;
  REQUIRE(rtf_ensemble_train(c, tr, nullptr, &ens) == RTF_OK);
  CHECK(rtf_ensemble_size(ens) == 2);
  CHECK(rtf_ensemble_classes(ens) == 3);
  REQUIRE(rtf_ensemble_save(ens, (tmp / "e").c_str()) == RTF_OK);
  rtf_ensemble* ens2 = nullptr;
  REQUIRE(rtf_ensemble_load((tmp / "e").c_str(), &ens2) == RTF_OK);
  std::vector<double> p1(n), p2(n);
  REQUIRE(rtf_ensemble_predict_proba(ens, te, p1.data(), n) == RTF_OK);
  REQUIRE(rtf_ensemble_predict_proba(ens2, te, p2.data(), n) == RTF_OK);
  CHECK(p1 == p2);
  REQUIRE(rtf_ensemble_evaluate(ens2, te, nullptr, &m) == RTF_OK);

  const std::string d0 = tmp / "m", d1 = tmp / "e";
  const char* dirs[] = {d0.c_str(), d1.c_str()};
  char* bench = nullptr;
  REQUIRE(rtf_bench_artifacts(dirs, 2, te, 20, 1, &bench) == RTF_OK);
  CHECK(std::string(bench).rfind("model,draws,inference_seconds", 0) == 0);
  rtf_string_free(bench);

  rtf_model_free(loaded);
  rtf_model_free(model);
  rtf_ensemble_free(ens);
  rtf_ensemble_free(ens2);
  rtf_config_free(c);
  rtf_dataset_free(tr);
  rtf_dataset_free(te);
  rtf_dataset_free(ds);
}

TEST_CASE("full run and gradient check") {
  Tmp tmp;
  rtf_dataset* ds = synth(8);
  REQUIRE(rtf_dataset_save(ds, (tmp / "d.tsv").c_str(), 1) == RTF_OK);
  rtf_config* c = tiny_config(tmp / "run");
  REQUIRE(rtf_config_set(c, "dataset", (tmp / "d.tsv").c_str()) == RTF_OK);
  rtf_run_summary s{};
  REQUIRE(rtf_run(c, &s) == RTF_OK);
  CHECK(s.leakage == 0);
  CHECK(s.train_size + s.test_size == 72);
  CHECK(fs::exists(tmp / "run/test_report.json"));

  char* text = nullptr;
  REQUIRE(rtf_config_serialize(c, &text) == RTF_OK);
  std::ofstream(tmp / "saved.conf") << text;
  rtf_string_free(text);
  rtf_config* loaded = nullptr;
  REQUIRE(rtf_config_load((tmp / "saved.conf").c_str(), &loaded) == RTF_OK);
  rtf_config_free(loaded);

  rtf_gradcheck_result g{};
  REQUIRE(rtf_gradcheck("calls", 1e-5, 50, 3, &g) == RTF_OK);
  CHECK(g.coordinates == 50);
  CHECK(g.max_rel_error < 1e-4);

  rtf_config_free(c);
  rtf_dataset_free(ds);
}
