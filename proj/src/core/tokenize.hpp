#ifndef RTF_CORE_TOKENIZE_HPP
#define RTF_CORE_TOKENIZE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/corpus.hpp"

namespace rtf {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

/// Padded integer batch. Row-major `ids` and `mask` of shape rows x max_len.
struct EncodedBatch {
  std::size_t rows = 0;
  std::size_t max_len = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  std::vector<std::int32_t> labels;
  std::vector<std::size_t> lengths;

  std::span<const std::int32_t> row_ids(std::size_t r) const { return {ids.data() + r * max_len, max_len}; }
  std::span<const std::uint8_t> row_mask(std::size_t r) const { return {mask.data() + r * max_len, max_len}; }

  /// Rows [first, first + count) as their own batch.
  EncodedBatch slice(std::size_t first, std::size_t count) const;
  /// Rows picked by index, in the given order.
  EncodedBatch gather(std::span<const std::size_t> rows) const;
};

/// Whole-call vocabulary. Ids 0 and 1 are PAD and UNK; real calls start at 2.
class CallVocab {
 public:
  CallVocab() = default;

  /// Calls with frequency >= min_freq, ordered by frequency descending then
  /// first appearance.
  static CallVocab build(const Dataset& train, std::size_t min_freq);

  std::int32_t id(const std::string& call) const;
  /// Token for an id; PAD and UNK map to "<pad>" / "<unk>".
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return tokens_.size() + 2; }
  std::size_t min_freq() const { return min_freq_; }

  /// Header `# V=<size> min_freq=<m>` then `token<TAB>id` lines.
  std::string serialize() const;
  static CallVocab parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CallVocab load(const std::filesystem::path& path);

  bool operator==(const CallVocab& other) const { return tokens_ == other.tokens_ && min_freq_ == other.min_freq_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;  // tokens_[i] has id i + 2
  std::unordered_map<std::string, std::int32_t> ids_;
  std::size_t min_freq_ = 1;
};

/// Unknown calls become UNK; long sequences keep their first max_len calls.
EncodedBatch encode_calls(const CallVocab& vocab, std::span<const Sample> samples, const LabelSpace& labels,
                          std::size_t max_len);

std::vector<std::string> decode_calls(const CallVocab& vocab, std::span<const std::int32_t> ids);

/// Tokenizer-free character hashing. A codepoint u maps to
///   2 + ((u * multiplier mod 2^64) >> 54) mod (buckets - 2).
struct CharEncoderConfig {
  std::size_t buckets = 1024;
  std::uint64_t multiplier = 0x9E3779B97F4A7C15ULL;

  std::int32_t bucket(std::uint32_t codepoint) const;
};

/// Decodes UTF-8; malformed bytes decode as U+FFFD.
std::vector<std::uint32_t> utf8_codepoints(std::string_view text);

/// Calls joined by U+0020, hashed per codepoint, truncated/padded to max_chars.
EncodedBatch encode_chars(const CharEncoderConfig& cfg, std::span<const Sample> samples, const LabelSpace& labels,
                          std::size_t max_chars);

}  // namespace rtf

#endif  // RTF_CORE_TOKENIZE_HPP
