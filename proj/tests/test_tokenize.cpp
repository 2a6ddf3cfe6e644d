#include <doctest.h>

#include <set>

#include "core/error.hpp"
#include "core/tokenize.hpp"
#include "support.hpp"

using namespace rtf;
using testing::sample;

namespace {

Dataset abc() {
  return Dataset({sample("1", {"a", "b", "a"}, "X"), sample("2", {"a", "c"}, "Y")}, "t");
}

std::int32_t oracle_bucket(std::uint32_t u, std::size_t buckets) {
  const unsigned __int128 product = static_cast<unsigned __int128>(u) * 0x9E3779B97F4A7C15ULL;
  const auto low = static_cast<std::uint64_t>(product);  // mod 2^64
  return static_cast<std::int32_t>(2 + (low >> 54) % (buckets - 2));
}

}  // namespace

TEST_CASE("vocab ids follow frequency, then first appearance") {
  const Dataset ds({sample("1", {"a", "a", "a", "b"}, "X")}, "t");
  const auto v = CallVocab::build(ds, 1);
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);
  CHECK(v.size() == 4);

  const auto v2 = CallVocab::build(ds, 2);
  CHECK(v2.id("b") == kUnkId);

  const Dataset tie({sample("1", {"q", "p", "p", "q"}, "X")}, "t");
  const auto vt = CallVocab::build(tie, 1);
  CHECK(vt.id("q") == 2);
  CHECK(vt.id("p") == 3);
}

TEST_CASE("encode_calls pads, masks and truncates") {
  const auto vocab = CallVocab::build(abc(), 1);  // a:2 b:3 c:4
  const std::vector<Sample> in{sample("x", {"a", "b"}, "X")};
  const auto batch = encode_calls(vocab, in, abc().labels(), 4);
  CHECK(batch.ids == std::vector<std::int32_t>{2, 3, 0, 0});
  CHECK(batch.mask == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(batch.lengths[0] == 2);
  CHECK(batch.labels[0] == 0);

  const std::vector<Sample> unseen{sample("z", {"z"}, "Y")};
  CHECK(encode_calls(vocab, unseen, abc().labels(), 2).ids[0] == kUnkId);

  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(i % 2 ? "b" : "c");
  const std::vector<Sample> long_in{sample("l", ten, "X")};
  const auto t = encode_calls(vocab, long_in, abc().labels(), 4);
  CHECK(t.ids == std::vector<std::int32_t>{4, 3, 4, 3});
  CHECK(t.lengths[0] == 4);
  CHECK_THROWS_AS(encode_calls(vocab, in, abc().labels(), 0), std::invalid_argument);
}

TEST_CASE("mask and PAD agree in every row") {
  const auto ds = testing::dataset_with_counts({20, 20}, 3);
  const auto vocab = CallVocab::build(ds, 1);
  const auto batch = encode_calls(vocab, ds.samples(), ds.labels(), 5);
  for (std::size_t i = 0; i < batch.ids.size(); ++i) CHECK((batch.ids[i] == kPadId) == (batch.mask[i] == 0));
}

TEST_CASE("decode inverts encode for in-vocabulary sequences") {
  const auto ds = testing::dataset_with_counts({15, 15}, 4);
  const auto vocab = CallVocab::build(ds, 1);
  const auto batch = encode_calls(vocab, ds.samples(), ds.labels(), 8);
  for (std::size_t r = 0; r < ds.size(); ++r) CHECK(decode_calls(vocab, batch.row_ids(r)) == ds[r].calls);
}

TEST_CASE("vocab text round trip and header checks") {
  const auto vocab = CallVocab::build(abc(), 1);
  const auto text = vocab.serialize();
  CHECK(text.rfind("# V=5 min_freq=1\n", 0) == 0);
  CHECK(text.find("a\t2\n") != std::string::npos);
  CHECK(CallVocab::parse(text) == vocab);
  CHECK_THROWS_AS(CallVocab::parse("# V=9 min_freq=1\na\t2\n"), ParseError);
  CHECK_THROWS_AS(CallVocab::parse("a\t2\n"), ParseError);
  CHECK_THROWS_AS(CallVocab::parse("# V=4 min_freq=1\na\t3\n"), ParseError);
}

TEST_CASE("character buckets match the hashing formula") {
  CharEncoderConfig cfg;
  for (std::uint32_t u : {0u, 1u, 32u, 65u, 97u, 127u, 0x4E2Du, 0x10FFFFu}) {
    CHECK(cfg.bucket(u) == oracle_bucket(u, 1024));
    CHECK(cfg.bucket(u) >= 2);
    CHECK(cfg.bucket(u) < 1024);
  }
  cfg.buckets = 3;
  CHECK(cfg.bucket(65) == 2);
  cfg.buckets = 2;
  CHECK_THROWS_AS(cfg.bucket(65), std::invalid_argument);
}

TEST_CASE("character collisions occur at roughly 1/(B-2)") {
  // Over all code points below 2048 and a small table, pair collisions should
  // sit near the uniform rate.
  for (std::size_t buckets : {18u, 66u}) {
    CharEncoderConfig cfg;
    cfg.buckets = buckets;
    std::vector<std::int32_t> b;
    for (std::uint32_t u = 0; u < 2048; ++u) b.push_back(cfg.bucket(u));
    double pairs = 0, same = 0;
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = i + 1; j < b.size(); ++j) {
        ++pairs;
        same += b[i] == b[j];
      }
    const double expected = 1.0 / static_cast<double>(buckets - 2);
    CHECK(same / pairs == doctest::Approx(expected).epsilon(0.25));
  }
  CharEncoderConfig big;
  std::set<std::int32_t> ascii;
  for (std::uint32_t u = 0; u < 128; ++u) ascii.insert(big.bucket(u));
  CHECK(ascii.size() >= 120);
}

TEST_CASE("encode_chars joins calls with a space") {
  CharEncoderConfig cfg;
  const std::vector<Sample> in{sample("1", {"ab", "c"}, "X"), sample("2", {"ab", "c"}, "X")};
  const LabelSpace labels({"X"});
  const auto batch = encode_chars(cfg, in, labels, 8);
  const std::vector<std::int32_t> expected{cfg.bucket('a'), cfg.bucket('b'), cfg.bucket(' '), cfg.bucket('c'), 0, 0, 0,
                                           0};
  CHECK(std::vector<std::int32_t>(batch.row_ids(0).begin(), batch.row_ids(0).end()) == expected);
  CHECK(std::vector<std::int32_t>(batch.row_ids(1).begin(), batch.row_ids(1).end()) == expected);
  CHECK(batch.lengths[0] == 4);
  const auto one = encode_chars(cfg, in, labels, 1);
  CHECK(one.lengths[0] == 1);
  CHECK(one.mask[0] == 1);
}

TEST_CASE("utf8 decoding") {
  CHECK(utf8_codepoints("A\xC3\xA9") == std::vector<std::uint32_t>{0x41, 0xE9});
  CHECK(utf8_codepoints("\xE4\xB8\xAD") == std::vector<std::uint32_t>{0x4E2D});
  CHECK(utf8_codepoints("\xF0\x9F\x98\x80") == std::vector<std::uint32_t>{0x1F600});
  CHECK(utf8_codepoints("\xC3") == std::vector<std::uint32_t>{0xFFFD});
  CHECK(utf8_codepoints("\xE4\xB8") == std::vector<std::uint32_t>{0xFFFD, 0xFFFD});
  CHECK(utf8_codepoints("\x80z") == std::vector<std::uint32_t>{0xFFFD, 'z'});
}

TEST_CASE("batch gather and slice keep rows intact") {
  const auto ds = testing::dataset_with_counts({3, 3}, 5);
  const auto vocab = CallVocab::build(ds, 1);
  const auto batch = encode_calls(vocab, ds.samples(), ds.labels(), 6);
  const std::vector<std::size_t> pick{4, 1};
  const auto g = batch.gather(pick);
  CHECK(g.rows == 2);
  CHECK(std::equal(g.row_ids(0).begin(), g.row_ids(0).end(), batch.row_ids(4).begin()));
  CHECK(g.labels[1] == batch.labels[1]);
  const auto s = batch.slice(2, 3);
  CHECK(s.rows == 3);
  CHECK(s.lengths[0] == batch.lengths[2]);
}
