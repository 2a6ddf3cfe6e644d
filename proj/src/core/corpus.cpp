#include "core/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "core/error.hpp"
#include "core/fileio.hpp"
#include "core/seed.hpp"

namespace rtf {

LabelSpace::LabelSpace(std::vector<std::string> names) {
  for (auto& n : names) {
    if (index_.count(n)) throw std::invalid_argument("duplicate class name '" + n + "'");
    index_.emplace(n, names_.size());
    names_.push_back(std::move(n));
  }
}

std::size_t LabelSpace::intern(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  index_.emplace(name, names_.size());
  names_.push_back(name);
  return names_.size() - 1;
}

std::size_t LabelSpace::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown class '" + name + "'");
  return it->second;
}

Dataset::Dataset(std::vector<Sample> samples, std::string source)
    : samples_(std::move(samples)), source_(std::move(source)) {
  for (const auto& s : samples_) labels_.intern(s.label);
  validate_and_index();
}

Dataset::Dataset(std::vector<Sample> samples, LabelSpace labels, std::string source)
    : samples_(std::move(samples)), labels_(std::move(labels)), source_(std::move(source)) {
  validate_and_index();
}

void Dataset::validate_and_index() {
  std::unordered_set<std::string> seen;
  seen.reserve(samples_.size());
  label_index_.clear();
  label_index_.reserve(samples_.size());
  for (const auto& s : samples_) {
    if (s.calls.empty()) throw std::invalid_argument("sample '" + s.id + "' has an empty call sequence");
    if (!seen.insert(s.id).second) throw std::invalid_argument("duplicate sample id '" + s.id + "'");
    if (!labels_.contains(s.label))
      throw std::invalid_argument("sample '" + s.id + "' has label '" + s.label + "' outside the label space");
    label_index_.push_back(labels_.index_of(s.label));
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(labels_.size(), 0);
  for (auto c : label_index_) ++counts[c];
  return counts;
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
  std::vector<std::vector<std::size_t>> groups(labels_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) groups[label_index_[i]].push_back(i);
  return groups;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices, bool allow_repeats) const {
  std::vector<Sample> picked;
  picked.reserve(indices.size());
  std::unordered_map<std::size_t, std::size_t> times_drawn;
  for (auto i : indices) {
    if (i >= samples_.size()) throw std::out_of_range("subset index out of range");
    Sample s = samples_[i];
    std::size_t k = times_drawn[i]++;
    if (k > 0) {
      if (!allow_repeats) throw std::invalid_argument("subset repeats index " + std::to_string(i));
      s.id += "#" + std::to_string(k);
    }
    picked.push_back(std::move(s));
  }
  return Dataset(std::move(picked), labels_, source_);
}

DatasetFormat parse_format(std::string_view name) {
  if (name == "canonical") return DatasetFormat::canonical;
  if (name == "pair_csv") return DatasetFormat::pair_csv;
  if (name == "coded_csv") return DatasetFormat::coded_csv;
  throw std::invalid_argument("unknown dataset format '" + std::string(name) + "'");
}

std::string_view format_name(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::canonical: return "canonical";
    case DatasetFormat::pair_csv: return "pair_csv";
    case DatasetFormat::coded_csv: return "coded_csv";
  }
  return "canonical";
}

namespace {

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw ParseError(what + " at line " + std::to_string(line) + " of " + path.string());
}

bool valid_token(std::string_view t) {
  if (t.empty()) return false;
  return std::none_of(t.begin(), t.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::vector<Sample> parse_canonical(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::vector<Sample> samples;
  const std::string stem = path.stem().string();
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (trim(lines[n]).empty()) continue;
    auto fields = split(lines[n], '\t');
    Sample s;
    std::string calls;
    if (fields.size() == 2) {
      s.id = stem + ":" + std::to_string(line_no);
      s.label = std::string(trim(fields[0]));
      calls = fields[1];
    } else if (fields.size() == 3) {
      s.id = std::string(trim(fields[0]));
      s.label = std::string(trim(fields[1]));
      calls = fields[2];
    } else {
      fail_line(path, line_no, "malformed line (expected label<TAB>calls)");
    }
    if (s.id.empty()) fail_line(path, line_no, "empty id");
    if (s.label.empty()) fail_line(path, line_no, "empty label");
    s.calls = split_whitespace(calls);
    if (s.calls.empty()) fail_line(path, line_no, "empty sequence");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> parse_pair_csv(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (lines.empty()) throw ParseError("missing header in " + path.string());
  auto header = split(lines[0], ',');
  if (header.size() != 3 || trim(header[0]) != "id" || trim(header[1]) != "calls" || trim(header[2]) != "label")
    fail_line(path, 1, "expected header 'id,calls,label'");
  std::vector<Sample> samples;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (trim(lines[n]).empty()) continue;
    auto fields = split(lines[n], ',');
    if (fields.size() != 3) fail_line(path, line_no, "malformed line (expected 3 fields)");
    Sample s;
    s.id = std::string(trim(fields[0]));
    s.label = std::string(trim(fields[2]));
    if (s.id.empty()) fail_line(path, line_no, "empty id");
    if (s.label.empty()) fail_line(path, line_no, "empty label");
    for (auto& tok : split(fields[1], ';')) {
      auto t = trim(tok);
      if (t.empty()) continue;
      if (!valid_token(t)) fail_line(path, line_no, "call token contains whitespace");
      s.calls.emplace_back(t);
    }
    if (s.calls.empty()) fail_line(path, line_no, "empty sequence");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Sample> parse_coded_csv(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (lines.empty()) throw ParseError("missing header in " + path.string());
  auto header = split(lines[0], ',');
  if (header.size() < 3 || trim(header.front()) != "id" || trim(header.back()) != "label")
    fail_line(path, 1, "expected header 'id,t_0,...,label'");
  for (std::size_t c = 1; c + 1 < header.size(); ++c) {
    if (trim(header[c]) != "t_" + std::to_string(c - 1)) fail_line(path, 1, "unexpected column '" + header[c] + "'");
  }
  const std::size_t width = header.size();
  std::vector<Sample> samples;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (trim(lines[n]).empty()) continue;
    auto fields = split(lines[n], ',');
    if (fields.size() != width) fail_line(path, line_no, "malformed line (expected " + std::to_string(width) + " fields)");
    Sample s;
    s.id = std::string(trim(fields.front()));
    s.label = std::string(trim(fields.back()));
    if (s.id.empty()) fail_line(path, line_no, "empty id");
    if (s.label.empty()) fail_line(path, line_no, "empty label");
    for (std::size_t c = 1; c + 1 < width; ++c) {
      auto t = trim(fields[c]);
      if (t.empty()) continue;
      if (!std::all_of(t.begin(), t.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
        fail_line(path, line_no, "non-integer call code '" + std::string(t) + "'");
      s.calls.emplace_back(t);
    }
    if (s.calls.empty()) fail_line(path, line_no, "empty sequence");
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const auto lines = split_lines(read_text_file(path));
  std::vector<Sample> samples;
  switch (format) {
    case DatasetFormat::canonical: samples = parse_canonical(path, lines); break;
    case DatasetFormat::pair_csv: samples = parse_pair_csv(path, lines); break;
    case DatasetFormat::coded_csv: samples = parse_coded_csv(path, lines); break;
  }
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw ParseError("duplicate id '" + s.id + "' in " + path.string());
  }
  return Dataset(std::move(samples), path.filename().string());
}

std::string to_canonical(const Dataset& ds, bool with_ids) {
  std::string out;
  for (const auto& s : ds.samples()) {
    if (with_ids) {
      out += s.id;
      out += '\t';
    }
    out += s.label;
    out += '\t';
    for (std::size_t i = 0; i < s.calls.size(); ++i) {
      if (i) out += ' ';
      out += s.calls[i];
    }
    out += '\n';
  }
  return out;
}

void save_canonical(const Dataset& ds, const std::filesystem::path& path, bool with_ids) {
  write_file_atomic(path, to_canonical(ds, with_ids));
}

Dataset filter_classes(const Dataset& ds, std::size_t min_count, const std::set<std::string>& drop_labels) {
  const auto counts = ds.class_counts();
  std::vector<Sample> kept;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds[i];
    if (counts[ds.label_index(i)] < min_count) continue;
    if (drop_labels.count(s.label)) continue;
    kept.push_back(s);
  }
  if (kept.empty()) throw std::invalid_argument("no classes survive filter");
  return Dataset(std::move(kept), ds.source());
}

void seeded_shuffle(std::vector<std::size_t>& values, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(values.begin(), values.end(), rng);
}

SplitPlan stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test fraction must lie in (0, 1)");
  SplitPlan plan;
  plan.seed = seed;
  auto groups = ds.indices_by_class();
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& members = groups[c];
    const std::size_t n = members.size();
    if (n < 2)
      throw std::invalid_argument("class '" + ds.labels().name(c) + "' has fewer than 2 samples; cannot split");
    auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 0.5));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
    seeded_shuffle(members, derive_seed(seed, "class", c));
    plan.test_indices.insert(plan.test_indices.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.train_indices.insert(plan.train_indices.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(plan.train_indices.begin(), plan.train_indices.end());
  std::sort(plan.test_indices.begin(), plan.test_indices.end());
  return plan;
}

std::vector<Fold> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold needs k >= 2");
  auto groups = ds.indices_by_class();
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].size() < k)
      throw std::invalid_argument("class '" + ds.labels().name(c) + "' has " + std::to_string(groups[c].size()) +
                                  " samples, fewer than k=" + std::to_string(k));
  }
  std::vector<std::vector<std::size_t>> val(k);
  // Dealing continues where the previous class stopped so fold sizes stay
  // balanced overall, not only per class.
  std::size_t next = 0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto& members = groups[c];
    seeded_shuffle(members, derive_seed(seed, "class", c));
    for (auto idx : members) {
      val[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(val[f].begin(), val[f].end());
    folds[f].val_indices = val[f];
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      folds[f].train_indices.insert(folds[f].train_indices.end(), val[g].begin(), val[g].end());
    }
    std::sort(folds[f].train_indices.begin(), folds[f].train_indices.end());
  }
  return folds;
}

Dataset stratified_bootstrap(const Dataset& ds, std::uint64_t seed) {
  if (ds.empty()) throw std::invalid_argument("cannot bootstrap an empty dataset");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> drawn;
  drawn.reserve(ds.size());
  for (const auto& members : ds.indices_by_class()) {
    if (members.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t j = 0; j < members.size(); ++j) drawn.push_back(members[pick(rng)]);
  }
  return ds.subset(drawn, /*allow_repeats=*/true);
}

std::vector<double> class_weights(const Dataset& ds) {
  const auto counts = ds.class_counts();
  const double total = static_cast<double>(ds.size());
  const double k = static_cast<double>(counts.size());
  std::vector<double> w(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0)
      throw std::invalid_argument("class '" + ds.labels().name(c) + "' has no samples; weight undefined");
    w[c] = total / (k * static_cast<double>(counts[c]));
  }
  return w;
}

Dataset relabel(const Dataset& ds, const LabelSpace& labels) {
  return Dataset(ds.samples(), labels, ds.source());
}

}  // namespace rtf
