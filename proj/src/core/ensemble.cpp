#include "core/ensemble.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "core/error.hpp"
#include "core/fileio.hpp"
#include "core/metrics.hpp"
#include "core/seed.hpp"

namespace rtf {

Ensemble train_rtf(const ModelConfig& config, std::size_t n, const Tokenizer& tokenizer, const Dataset& train_ds,
                   const Dataset& val_ds, std::span<const double> class_weights, const TrainOptions& options,
                   std::uint64_t seed, std::size_t threads, const EstimatorCallback& on_estimator) {
  if (n < 1) throw std::invalid_argument("an ensemble needs N >= 1 estimators");
  Ensemble ens;
  ens.estimators.resize(n);
  ens.seeds.resize(n);
  ens.bootstrap_counts.resize(n);

  std::mutex callback_mutex;
  auto build = [&](std::size_t i) {
    const Dataset subset = stratified_bootstrap(train_ds, derive_seed(seed, "bootstrap", i));
    ModelConfig member = config;
    member.seed = derive_seed(seed, "estimator", i);
    ens.seeds[i] = member.seed;
    ens.bootstrap_counts[i] = subset.class_counts();
    ens.estimators[i] = train(member, tokenizer, subset, val_ds, class_weights, options);
    if (on_estimator) {
      std::lock_guard<std::mutex> lock(callback_mutex);
      on_estimator(i, ens.estimators[i]);
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) build(i);
    return ens;
  }
  std::vector<std::exception_ptr> errors(n);
  std::size_t next = 0;
  std::mutex next_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i;
        {
          std::lock_guard<std::mutex> lock(next_mutex);
          if (next >= n) return;
          i = next++;
        }
        try {
          build(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return ens;
}

std::vector<double> average_probabilities(const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw std::invalid_argument("average of zero estimators");
  std::vector<double> out(members[0].size(), 0.0);
  for (const auto& m : members) {
    if (m.size() != out.size()) throw std::invalid_argument("estimator outputs differ in shape");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (auto& v : out) v *= inv;
  return out;
}

std::vector<double> predict_rtf(const Ensemble& ens, std::span<const Sample> samples, Aggregation mode) {
  if (ens.size() == 0) throw std::invalid_argument("empty ensemble");
  const EncodedBatch batch = ens.tokenizer().encode(samples, ens.labels());
  std::vector<std::vector<double>> member_probs;
  member_probs.reserve(ens.size());
  for (const auto& est : ens.estimators) member_probs.push_back(est.net.predict_proba(batch));
  if (ens.size() == 1) return std::move(member_probs[0]);
  if (mode == Aggregation::average) return average_probabilities(member_probs);

  const std::size_t k = ens.labels().size();
  std::vector<double> votes(batch.rows * k, 0.0);
  const double share = 1.0 / static_cast<double>(ens.size());
  for (const auto& probs : member_probs) {
    for (std::size_t r = 0; r < batch.rows; ++r) {
      votes[r * k + argmax(std::span<const double>(probs.data() + r * k, k))] += share;
    }
  }
  return votes;
}

std::vector<double> predict_rtf(const Ensemble& ens, const Dataset& ds, Aggregation mode) {
  return predict_rtf(ens, std::span<const Sample>(ds.samples()), mode);
}

std::size_t predict_label_index(std::span<const double> probs) {
  double sum = 0.0;
  for (double p : probs) sum += p;
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("probabilities do not sum to 1");
  return argmax(probs);
}

const std::string& predict_label(std::span<const double> probs, const LabelSpace& labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("probability vector does not match label space");
  return labels.name(predict_label_index(probs));
}

std::string config_hash(const ModelConfig& config) {
  ModelConfig shared = config;
  shared.seed = 0;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(shared.serialize())));
  return buf;
}

namespace {

std::string estimator_file(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "estimator_%02zu.rtf", i);
  return buf;
}

}  // namespace

void save_ensemble(const Ensemble& ens, const std::filesystem::path& dir) {
  if (ens.size() == 0) throw std::invalid_argument("cannot save an empty ensemble");
  std::filesystem::create_directories(dir);
  std::string manifest = "format = rtf-ensemble-1\n";
  manifest += "n = " + std::to_string(ens.size()) + "\n";
  manifest += "config_hash = " + config_hash(ens.config()) + "\n";
  for (std::size_t i = 0; i < ens.size(); ++i) {
    manifest += "estimator = " + std::to_string(ens.seeds[i]) + " " + estimator_file(i) + "\n";
    save_checkpoint(ens.estimators[i].net.params(), dir / estimator_file(i));
    write_file_atomic(dir / ("history_" + std::to_string(i) + ".csv"), ens.estimators[i].history_csv());
  }
  ModelConfig shared = ens.config();
  shared.seed = 0;
  write_file_atomic(dir / "config.txt", shared.serialize());
  write_file_atomic(dir / "labels.txt", serialize_labels(ens.labels()));
  write_file_atomic(dir / "tokenizer.txt", serialize_tokenizer(ens.tokenizer()));
  if (ens.tokenizer().front_end == FrontEnd::calls) ens.tokenizer().vocab.save(dir / "vocab.tsv");
  write_file_atomic(dir / "manifest.txt", manifest);
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
  const ModelConfig shared = ModelConfig::parse(read_text_file(dir / "config.txt"));
  const LabelSpace labels = parse_labels(read_text_file(dir / "labels.txt"));
  const Tokenizer tokenizer = parse_tokenizer(read_text_file(dir / "tokenizer.txt"), dir / "vocab.tsv");
  std::size_t declared = 0;
  std::string hash;
  Ensemble ens;
  for (auto& line : split_lines(read_text_file(dir / "manifest.txt"))) {
    auto t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ParseError("manifest: expected key = value");
    const std::string key(trim(t.substr(0, eq)));
    const std::string value(trim(t.substr(eq + 1)));
    if (key == "format") {
      if (value != "rtf-ensemble-1") throw ParseError("manifest: unsupported format '" + value + "'");
    } else if (key == "n") {
      declared = std::stoul(value);
    } else if (key == "config_hash") {
      hash = value;
    } else if (key == "estimator") {
      auto fields = split_whitespace(value);
      if (fields.size() != 2) throw ParseError("manifest: malformed estimator line");
      ModelConfig member = shared;
      member.seed = std::stoull(fields[0]);
      ParamStore params = init_params(member);
      load_checkpoint(dir / fields[1], params);
      TrainedModel est;
      est.net = TransformerClassifier(member, std::move(params));
      est.labels = labels;
      est.tokenizer = tokenizer;
      ens.seeds.push_back(member.seed);
      ens.estimators.push_back(std::move(est));
    } else {
      throw ParseError("manifest: unknown key '" + key + "'");
    }
  }
  if (ens.size() == 0 || ens.size() != declared) throw ParseError("manifest: estimator count does not match n");
  if (hash != config_hash(shared)) throw ParseError("manifest: config hash mismatch");
  ens.bootstrap_counts.resize(ens.size());
  return ens;
}

}  // namespace rtf
