#ifndef RTF_CORE_CORPUS_HPP
#define RTF_CORE_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rtf {

/// One malware record: identifier, ordered API-call tokens, family name.
struct Sample {
  std::string id;
  std::vector<std::string> calls;
  std::string label;

  bool operator==(const Sample&) const = default;
};

/// Ordered, unique class names with a 0-based index.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> names);

  /// Returns the index of `name`, appending it if unseen.
  std::size_t intern(const std::string& name);

  std::size_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  bool operator==(const LabelSpace& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// An immutable collection of samples. Construction validates that ids are
/// unique, every sequence is non-empty and every label is in the label space.
class Dataset {
 public:
  Dataset() = default;
  /// Label space = distinct labels in order of first appearance.
  Dataset(std::vector<Sample> samples, std::string source);
  /// Explicit label space; every sample label must resolve in it.
  Dataset(std::vector<Sample> samples, LabelSpace labels, std::string source);

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const LabelSpace& labels() const { return labels_; }
  const std::string& source() const { return source_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  /// Class index of sample i.
  std::size_t label_index(std::size_t i) const { return label_index_[i]; }
  const std::vector<std::size_t>& label_indices() const { return label_index_; }

  /// Per-class sample counts, indexed like labels().
  std::vector<std::size_t> class_counts() const;

  /// Sample indices grouped by class, each group in dataset order.
  std::vector<std::vector<std::size_t>> indices_by_class() const;

  /// New dataset made of the given rows (repeats allowed only if
  /// `allow_repeats`; repeated rows get a "#k" id suffix). Keeps this label space.
  Dataset subset(const std::vector<std::size_t>& indices, bool allow_repeats = false) const;

 private:
  void validate_and_index();

  std::vector<Sample> samples_;
  LabelSpace labels_;
  std::string source_;
  std::vector<std::size_t> label_index_;
};

enum class DatasetFormat { canonical, pair_csv, coded_csv };

DatasetFormat parse_format(std::string_view name);
std::string_view format_name(DatasetFormat format);

/// canonical: `<label>\t<call> <call> ...` per line, optionally prefixed by
///            an `<id>\t` column. Lines without an id get "<file stem>:<line>".
/// pair_csv:  header `id,calls,label`, calls joined by ';'.
/// coded_csv: header `id,t_0,...,t_{L-1},label`, integer-coded calls.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Writes canonical format. With `with_ids` each line is `<id>\t<label>\t<calls>`.
void save_canonical(const Dataset& ds, const std::filesystem::path& path, bool with_ids);
std::string to_canonical(const Dataset& ds, bool with_ids);

/// Keeps samples whose class has at least `min_count` members in `ds` and
/// whose label is not in `drop_labels`. Label space is rebuilt in first-appearance order.
Dataset filter_classes(const Dataset& ds, std::size_t min_count,
                       const std::set<std::string>& drop_labels);

struct SplitPlan {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::uint64_t seed = 0;
};

struct Fold {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Per class c: round-half-up(test_fraction * n_c) clamped to [1, n_c - 1]
/// go to test. Index lists are sorted ascending.
SplitPlan stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Each class is shuffled and dealt round-robin over the k folds, so per-class
/// validation counts differ by at most one.
std::vector<Fold> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

/// Draws n_c samples with replacement inside every class c.
Dataset stratified_bootstrap(const Dataset& ds, std::uint64_t seed);

/// Same samples indexed against `labels`, e.g. to align a separately loaded
/// test file with a training label space. Unknown labels throw.
Dataset relabel(const Dataset& ds, const LabelSpace& labels);

/// w_c = N / (K * n_c).
std::vector<double> class_weights(const Dataset& ds);

/// Shuffles `values` in place with a seeded Fisher-Yates pass.
void seeded_shuffle(std::vector<std::size_t>& values, std::uint64_t seed);

}  // namespace rtf

#endif  // RTF_CORE_CORPUS_HPP
