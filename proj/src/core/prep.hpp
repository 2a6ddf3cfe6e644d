#ifndef RTF_CORE_PREP_HPP
#define RTF_CORE_PREP_HPP

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "core/corpus.hpp"

namespace rtf {

using CallSequence = std::vector<std::string>;

/// Replaces every maximal run of one repeated call by a single call.
CallSequence collapse_runs(const CallSequence& seq);

/// One left-to-right pass: wherever two or more copies of the same n-gram sit
/// back to back, keep one copy. Passes repeat until nothing changes.
/// Throws std::invalid_argument unless n is 2 or 3.
CallSequence collapse_ngram_repeats(const CallSequence& seq, std::size_t n);

/// collapse_runs, then 2-gram and 3-gram collapse, repeated to a fixpoint.
CallSequence preprocess(const CallSequence& seq);

inline constexpr std::size_t kHistogramBucketWidth = 100;

struct PrepReport {
  std::size_t total = 0;
  std::size_t changed = 0;
  std::size_t unchanged = 0;
  /// bucket i counts sequences with length in [100 i, 100 (i + 1)).
  std::vector<std::size_t> length_histogram_before;
  std::vector<std::size_t> length_histogram_after;

  /// `bucket_start,bucket_end,count_before,count_after` rows.
  std::string histogram_csv() const;
  /// `total,changed,unchanged` header plus one row.
  std::string summary_csv() const;
};

std::vector<std::size_t> length_histogram(const Dataset& ds, std::size_t bucket_width = kHistogramBucketWidth);

/// Runs preprocess over every sample; ids and labels are untouched.
std::pair<Dataset, PrepReport> preprocess_dataset(const Dataset& ds);

}  // namespace rtf

#endif  // RTF_CORE_PREP_HPP
