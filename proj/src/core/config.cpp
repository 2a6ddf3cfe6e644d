#include "core/config.hpp"

#include <stdexcept>

#include "core/error.hpp"
#include "core/fileio.hpp"

namespace rtf {

namespace {

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || value.front() == '-')
    throw ParseError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != value.size() || value.empty()) throw ParseError("config: '" + key + "' expects a number, got '" + value + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ParseError("config: '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "dataset") dataset = value;
    else if (key == "format") format = parse_format(value);
    else if (key == "min_count") min_count = to_size(key, value);
    else if (key == "drop_labels") {
      drop_labels.clear();
      for (auto& part : split(value, ',')) {
        auto t = trim(part);
        if (!t.empty()) drop_labels.emplace(t);
      }
    } else if (key == "preprocess") preprocess = to_bool(key, value);
    else if (key == "front_end") front_end = parse_front_end(value);
    else if (key == "d_model") d_model = to_size(key, value);
    else if (key == "heads") heads = to_size(key, value);
    else if (key == "d_ff") d_ff = to_size(key, value);
    else if (key == "dropout") dropout = to_double(key, value);
    else if (key == "max_len") max_len = to_size(key, value);
    else if (key == "max_chars") max_chars = to_size(key, value);
    else if (key == "buckets") buckets = to_size(key, value);
    else if (key == "downsample_rate") downsample_rate = to_size(key, value);
    else if (key == "min_freq") min_freq = to_size(key, value);
    else if (key == "positional") positional = to_bool(key, value);
    else if (key == "lr") lr = to_double(key, value);
    else if (key == "batch") batch = to_size(key, value);
    else if (key == "max_epochs") max_epochs = to_size(key, value);
    else if (key == "patience") patience = to_size(key, value);
    else if (key == "test_fraction") test_fraction = to_double(key, value);
    else if (key == "validation") {
      if (value == "kfold") validation = Validation::kfold;
      else if (value == "holdout") validation = Validation::holdout;
      else throw ParseError("config: 'validation' expects kfold or holdout, got '" + value + "'");
    } else if (key == "k") k = to_size(key, value);
    else if (key == "val_fraction") val_fraction = to_double(key, value);
    else if (key == "ensemble_n") ensemble_n = to_size(key, value);
    else if (key == "seed") seed = to_size(key, value);
    else if (key == "output") output = value;
    else if (key == "threads") threads = to_size(key, value);
    else throw ParseError("config: unknown key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    auto line = trim(lines[n]);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("config: expected key = value at line " + std::to_string(n + 1));
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    try {
      cfg.set(key, value);
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (line " + std::to_string(n + 1) + ")");
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

void ExperimentConfig::validate() const {
  if (ensemble_n < 1) throw std::invalid_argument("config: ensemble_n must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("config: test_fraction must lie in (0, 1)");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("config: val_fraction must lie in (0, 1)");
  if (validation == Validation::kfold && k < 2) throw std::invalid_argument("config: k must be >= 2");
  if (batch == 0 || max_epochs == 0) throw std::invalid_argument("config: batch and max_epochs must be positive");
  if (d_model == 0 || heads == 0 || d_model % heads != 0 || d_model % 2 != 0)
    throw std::invalid_argument("config: d_model must be even and divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("config: dropout must lie in [0, 1)");
  if (buckets < 3) throw std::invalid_argument("config: buckets must be >= 3");
  if (downsample_rate == 0) throw std::invalid_argument("config: downsample_rate must be >= 1");
  if (max_len == 0 || max_chars == 0) throw std::invalid_argument("config: max_len and max_chars must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
}

std::string ExperimentConfig::serialize() const {
  std::string drop;
  for (const auto& l : drop_labels) {
    if (!drop.empty()) drop += ",";
    drop += l;
  }
  std::string out;
  auto put = [&](const char* key, const std::string& value) { out += std::string(key) + " = " + value + "\n"; };
  put("dataset", dataset.string());
  put("format", std::string(format_name(format)));
  put("min_count", std::to_string(min_count));
  put("drop_labels", drop);
  put("preprocess", preprocess ? "true" : "false");
  put("front_end", std::string(front_end_name(front_end)));
  put("d_model", std::to_string(d_model));
  put("heads", std::to_string(heads));
  put("d_ff", std::to_string(d_ff));
  put("dropout", format_double(dropout));
  put("max_len", std::to_string(max_len));
  put("max_chars", std::to_string(max_chars));
  put("buckets", std::to_string(buckets));
  put("downsample_rate", std::to_string(downsample_rate));
  put("min_freq", std::to_string(min_freq));
  put("positional", positional ? "true" : "false");
  put("lr", format_double(lr));
  put("batch", std::to_string(batch));
  put("max_epochs", std::to_string(max_epochs));
  put("patience", std::to_string(patience));
  put("test_fraction", format_double(test_fraction));
  put("validation", validation == Validation::kfold ? "kfold" : "holdout");
  put("k", std::to_string(k));
  put("val_fraction", format_double(val_fraction));
  put("ensemble_n", std::to_string(ensemble_n));
  put("seed", std::to_string(seed));
  put("output", output.string());
  put("threads", std::to_string(threads));
  return out;
}

ModelConfig ExperimentConfig::model_config() const {
  ModelConfig m;
  m.d_model = d_model;
  m.heads = heads;
  m.d_ff = d_ff;
  m.dropout = dropout;
  m.front_end = front_end;
  m.max_len = front_end == FrontEnd::calls ? max_len : max_chars;
  m.downsample_rate = downsample_rate;
  m.seed = seed;
  m.positional = positional;
  return m;
}

TrainOptions ExperimentConfig::train_options() const {
  TrainOptions o;
  o.lr = lr;
  o.batch = batch;
  o.max_epochs = max_epochs;
  o.patience = patience;
  return o;
}

Tokenizer ExperimentConfig::make_tokenizer(const Dataset& train) const {
  if (front_end == FrontEnd::calls) return Tokenizer::for_calls(CallVocab::build(train, min_freq), max_len);
  CharEncoderConfig chars;
  chars.buckets = buckets;
  return Tokenizer::for_chars(chars, max_chars);
}

}  // namespace rtf
