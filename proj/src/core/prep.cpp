#include "core/prep.hpp"

#include <algorithm>
#include <stdexcept>

namespace rtf {

CallSequence collapse_runs(const CallSequence& seq) {
  CallSequence out;
  out.reserve(seq.size());
  for (const auto& call : seq) {
    if (out.empty() || out.back() != call) out.push_back(call);
  }
  return out;
}

namespace {

bool same_block(const CallSequence& seq, std::size_t a, std::size_t b, std::size_t n) {
  return std::equal(seq.begin() + static_cast<std::ptrdiff_t>(a), seq.begin() + static_cast<std::ptrdiff_t>(a + n),
                    seq.begin() + static_cast<std::ptrdiff_t>(b));
}

// Returns true if anything collapsed.
bool ngram_pass(const CallSequence& seq, std::size_t n, CallSequence& out) {
  out.clear();
  out.reserve(seq.size());
  bool changed = false;
  std::size_t i = 0;
  while (i < seq.size()) {
    if (i + 2 * n <= seq.size() && same_block(seq, i, i + n, n)) {
      std::size_t copies = 2;
      while (i + (copies + 1) * n <= seq.size() && same_block(seq, i, i + copies * n, n)) ++copies;
      out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(i + n));
      i += copies * n;
      changed = true;
    } else {
      out.push_back(seq[i]);
      ++i;
    }
  }
  return changed;
}

}  // namespace

CallSequence collapse_ngram_repeats(const CallSequence& seq, std::size_t n) {
  if (n != 2 && n != 3) throw std::invalid_argument("n-gram collapse supports n = 2 or 3, got " + std::to_string(n));
  CallSequence current = seq;
  CallSequence next;
  while (ngram_pass(current, n, next)) std::swap(current, next);
  return current;
}

CallSequence preprocess(const CallSequence& seq) {
  CallSequence current = seq;
  while (true) {
    CallSequence next = collapse_ngram_repeats(collapse_ngram_repeats(collapse_runs(current), 2), 3);
    if (next == current) return current;
    current = std::move(next);
  }
}

std::vector<std::size_t> length_histogram(const Dataset& ds, std::size_t bucket_width) {
  std::vector<std::size_t> hist;
  for (const auto& s : ds.samples()) {
    std::size_t bucket = s.calls.size() / bucket_width;
    if (bucket >= hist.size()) hist.resize(bucket + 1, 0);
    ++hist[bucket];
  }
  return hist;
}

std::string PrepReport::histogram_csv() const {
  std::string out = "bucket_start,bucket_end,count_before,count_after\n";
  const std::size_t buckets = std::max(length_histogram_before.size(), length_histogram_after.size());
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t before = b < length_histogram_before.size() ? length_histogram_before[b] : 0;
    const std::size_t after = b < length_histogram_after.size() ? length_histogram_after[b] : 0;
    out += std::to_string(b * kHistogramBucketWidth) + "," + std::to_string((b + 1) * kHistogramBucketWidth) + "," +
           std::to_string(before) + "," + std::to_string(after) + "\n";
  }
  return out;
}

std::string PrepReport::summary_csv() const {
  return "total,changed,unchanged\n" + std::to_string(total) + "," + std::to_string(changed) + "," +
         std::to_string(unchanged) + "\n";
}

std::pair<Dataset, PrepReport> preprocess_dataset(const Dataset& ds) {
  PrepReport report;
  report.total = ds.size();
  std::vector<Sample> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples()) {
    Sample p = s;
    p.calls = preprocess(s.calls);
    if (p.calls == s.calls) {
      ++report.unchanged;
    } else {
      ++report.changed;
    }
    out.push_back(std::move(p));
  }
  Dataset result(std::move(out), ds.labels(), ds.source());
  report.length_histogram_before = length_histogram(ds);
  report.length_histogram_after = length_histogram(result);
  return {std::move(result), std::move(report)};
}

}  // namespace rtf
