#include <doctest.h>

#include <functional>
#include <random>
#include <set>

#include "core/prep.hpp"
#include "support.hpp"

using namespace rtf;

namespace {

CallSequence seq(std::initializer_list<const char*> items) { return CallSequence(items.begin(), items.end()); }

bool has_adjacent_repeat(const CallSequence& s, std::size_t n) {
  for (std::size_t i = 0; i + 2 * n <= s.size(); ++i) {
    if (std::equal(s.begin() + i, s.begin() + i + n, s.begin() + i + n)) return true;
  }
  return false;
}

bool is_clean(const CallSequence& s) {
  return !has_adjacent_repeat(s, 1) && !has_adjacent_repeat(s, 2) && !has_adjacent_repeat(s, 3);
}

bool is_subsequence(const CallSequence& small, const CallSequence& big) {
  std::size_t j = 0;
  for (const auto& t : big) {
    if (j < small.size() && small[j] == t) ++j;
  }
  return j == small.size();
}

// Every sequence reachable by deleting one copy of any adjacent duplicated
// block of width 1, 2 or 3, anywhere, in any order. Returns the irreducible ones.
std::set<CallSequence> oracle_normal_forms(const CallSequence& start) {
  std::set<CallSequence> visited{start};
  std::set<CallSequence> normal;
  std::vector<CallSequence> stack{start};
  while (!stack.empty()) {
    const auto cur = stack.back();
    stack.pop_back();
    bool reducible = false;
    for (std::size_t n = 1; n <= 3; ++n) {
      for (std::size_t i = 0; i + 2 * n <= cur.size(); ++i) {
        if (!std::equal(cur.begin() + i, cur.begin() + i + n, cur.begin() + i + n)) continue;
        reducible = true;
        CallSequence next(cur.begin(), cur.begin() + i);
        next.insert(next.end(), cur.begin() + i + n, cur.end());
        if (visited.insert(next).second) stack.push_back(next);
      }
    }
    if (!reducible) normal.insert(cur);
  }
  return normal;
}

}  // namespace

TEST_CASE("collapse_runs") {
  CHECK(collapse_runs(seq({"a", "a", "a", "b", "b", "c"})) == seq({"a", "b", "c"}));
  CHECK(collapse_runs(seq({"a", "b", "c"})) == seq({"a", "b", "c"}));
  CHECK(collapse_runs(seq({"a", "b", "a"})) == seq({"a", "b", "a"}));
  CHECK(collapse_runs(seq({"a"})) == seq({"a"}));
}

TEST_CASE("collapse_ngram_repeats") {
  CHECK(collapse_ngram_repeats(seq({"x", "a", "b", "a", "b", "y"}), 2) == seq({"x", "a", "b", "y"}));
  CHECK(collapse_ngram_repeats(seq({"q", "r", "s", "q", "r", "s", "q", "r", "s"}), 3) == seq({"q", "r", "s"}));
  CHECK(collapse_ngram_repeats(seq({"a", "b", "c", "d"}), 2) == seq({"a", "b", "c", "d"}));
  CHECK(collapse_ngram_repeats(seq({"a", "b", "a", "b", "a", "b", "a"}), 2) == seq({"a", "b", "a"}));
  CHECK_THROWS_AS(collapse_ngram_repeats(seq({"a"}), 1), std::invalid_argument);
  CHECK_THROWS_AS(collapse_ngram_repeats(seq({"a"}), 4), std::invalid_argument);
}

TEST_CASE("four-gram repeats are left alone") {
  const auto s = seq({"a", "b", "c", "d", "a", "b", "c", "d"});
  CHECK(preprocess(s) == s);
}

TEST_CASE("preprocess pipeline") {
  CHECK(preprocess(seq({"a", "a", "b", "b", "a", "b"})) == seq({"a", "b"}));
  CHECK(preprocess(seq({"a"})) == seq({"a"}));
  CHECK(preprocess(seq({"a", "b", "c", "a", "b", "c", "c"})) == seq({"a", "b", "c"}));
}

TEST_CASE("preprocess properties on random sequences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t alphabet = 2 + rng() % 19;
    const std::size_t len = 1 + rng() % 200;
    CallSequence s;
    for (std::size_t i = 0; i < len; ++i) s.push_back("t" + std::to_string(rng() % alphabet));
    const auto p = preprocess(s);
    REQUIRE(!p.empty());
    CHECK(preprocess(p) == p);
    CHECK(is_subsequence(p, s));
    CHECK(is_clean(p));
  }
}

TEST_CASE("preprocess reaches an oracle normal form for every short sequence over three tokens") {
  std::size_t checked = 0;
  for (std::size_t len = 1; len <= 8; ++len) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      CallSequence s;
      std::size_t c = code;
      for (std::size_t i = 0; i < len; ++i, c /= 3) s.push_back(std::string(1, static_cast<char>('a' + c % 3)));
      const auto p = preprocess(s);
      REQUIRE(is_clean(p));
      const auto forms = oracle_normal_forms(s);
      for (const auto& f : forms) REQUIRE(is_clean(f));
      REQUIRE(forms.count(p) == 1);
      ++checked;
    }
  }
  CHECK(checked == 9840);
}

TEST_CASE("preprocess_dataset report") {
  using testing::sample;
  const Dataset ds({sample("a", {"x", "y", "z"}, "A"), sample("b", {"x", "x", "y"}, "B"),
                    sample("c", {"p", "q", "p", "q"}, "A")},
                   "t");
  const auto [out, report] = preprocess_dataset(ds);
  CHECK(report.total == 3);
  CHECK(report.changed == 2);
  CHECK(report.unchanged == 1);
  CHECK(report.changed + report.unchanged == report.total);
  CHECK(out[1].calls == seq({"x", "y"}));
  CHECK(out[0].id == "a");
  CHECK(out.labels() == ds.labels());
  std::size_t mass = 0;
  for (auto n : report.length_histogram_after) mass += n;
  CHECK(mass == 3);
  CHECK(report.summary_csv() == "total,changed,unchanged\n3,2,1\n");
  CHECK(report.histogram_csv() == "bucket_start,bucket_end,count_before,count_after\n0,100,3,3\n");
}

TEST_CASE("strictly increasing sequences are unchanged") {
  using testing::sample;
  std::vector<Sample> samples;
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> calls;
    for (int t = 0; t <= i; ++t) calls.push_back("c" + std::to_string(100 + t));
    samples.push_back(sample("s" + std::to_string(i), calls, "A"));
  }
  const auto [out, report] = preprocess_dataset(Dataset(samples, "t"));
  CHECK(report.changed == 0);
  CHECK(out.samples() == samples);
}

TEST_CASE("length histogram buckets by hundreds") {
  using testing::sample;
  const Dataset ds({sample("a", std::vector<std::string>(99, "x"), "A"),
                    sample("b", std::vector<std::string>(100, "x"), "A"),
                    sample("c", std::vector<std::string>(250, "x"), "A")},
                   "t");
  CHECK(length_histogram(ds) == std::vector<std::size_t>{1, 1, 1});
}
