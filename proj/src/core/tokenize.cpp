#include "core/tokenize.hpp"

#include <algorithm>
#include <stdexcept>

#include "core/error.hpp"
#include "core/fileio.hpp"

namespace rtf {

EncodedBatch EncodedBatch::slice(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> rows_wanted(count);
  for (std::size_t i = 0; i < count; ++i) rows_wanted[i] = first + i;
  return gather(rows_wanted);
}

EncodedBatch EncodedBatch::gather(std::span<const std::size_t> wanted) const {
  EncodedBatch out;
  out.rows = wanted.size();
  out.max_len = max_len;
  out.ids.reserve(out.rows * max_len);
  out.mask.reserve(out.rows * max_len);
  for (auto r : wanted) {
    if (r >= rows) throw std::out_of_range("batch row out of range");
    out.ids.insert(out.ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(r * max_len),
                   ids.begin() + static_cast<std::ptrdiff_t>((r + 1) * max_len));
    out.mask.insert(out.mask.end(), mask.begin() + static_cast<std::ptrdiff_t>(r * max_len),
                    mask.begin() + static_cast<std::ptrdiff_t>((r + 1) * max_len));
    out.labels.push_back(labels[r]);
    out.lengths.push_back(lengths[r]);
  }
  return out;
}

void CallVocab::add(std::string token) {
  ids_.emplace(token, static_cast<std::int32_t>(tokens_.size() + 2));
  tokens_.push_back(std::move(token));
}

CallVocab CallVocab::build(const Dataset& train, std::size_t min_freq) {
  if (train.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty dataset");
  struct Stat {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<std::string> order;
  std::size_t position = 0;
  for (const auto& s : train.samples()) {
    for (const auto& call : s.calls) {
      auto [it, inserted] = stats.try_emplace(call, Stat{0, position});
      if (inserted) order.push_back(call);
      ++it->second.count;
      ++position;
    }
  }
  std::vector<std::string> kept;
  for (auto& call : order) {
    if (stats[call].count >= min_freq) kept.push_back(call);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
    const auto& sa = stats[a];
    const auto& sb = stats[b];
    if (sa.count != sb.count) return sa.count > sb.count;
    return sa.first < sb.first;
  });
  CallVocab vocab;
  vocab.min_freq_ = min_freq;
  for (auto& call : kept) vocab.add(std::move(call));
  return vocab;
}

std::int32_t CallVocab::id(const std::string& call) const {
  auto it = ids_.find(call);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& CallVocab::token(std::int32_t id) const {
  static const std::string pad = "<pad>";
  static const std::string unk = "<unk>";
  if (id == kPadId) return pad;
  if (id == kUnkId) return unk;
  if (id < 0 || static_cast<std::size_t>(id) >= size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id) - 2];
}

std::string CallVocab::serialize() const {
  std::string out = "# V=" + std::to_string(size()) + " min_freq=" + std::to_string(min_freq_) + "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += tokens_[i] + "\t" + std::to_string(i + 2) + "\n";
  return out;
}

CallVocab CallVocab::parse(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("vocabulary: missing header");
  std::size_t declared = 0;
  CallVocab vocab;
  {
    auto fields = split_whitespace(lines[0]);
    if (fields.size() != 3 || fields[0] != "#" || fields[1].rfind("V=", 0) != 0 || fields[2].rfind("min_freq=", 0) != 0)
      throw ParseError("vocabulary: malformed header at line 1");
    try {
      declared = std::stoul(fields[1].substr(2));
      vocab.min_freq_ = std::stoul(fields[2].substr(9));
    } catch (const std::exception&) {
      throw ParseError("vocabulary: malformed header at line 1");
    }
  }
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (lines[n].empty()) continue;
    auto fields = split(lines[n], '\t');
    if (fields.size() != 2) throw ParseError("vocabulary: malformed line " + std::to_string(n + 1));
    std::size_t id = 0;
    try {
      id = std::stoul(fields[1]);
    } catch (const std::exception&) {
      throw ParseError("vocabulary: bad id at line " + std::to_string(n + 1));
    }
    if (id != vocab.tokens_.size() + 2) throw ParseError("vocabulary: non-contiguous id at line " + std::to_string(n + 1));
    vocab.add(fields[0]);
  }
  if (vocab.size() != declared) throw ParseError("vocabulary: header V does not match entry count");
  return vocab;
}

void CallVocab::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

CallVocab CallVocab::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

namespace {

EncodedBatch make_batch(std::size_t rows, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max length must be >= 1");
  EncodedBatch batch;
  batch.rows = rows;
  batch.max_len = max_len;
  batch.ids.assign(rows * max_len, kPadId);
  batch.mask.assign(rows * max_len, 0);
  batch.labels.resize(rows);
  batch.lengths.resize(rows);
  return batch;
}

}  // namespace

EncodedBatch encode_calls(const CallVocab& vocab, std::span<const Sample> samples, const LabelSpace& labels,
                          std::size_t max_len) {
  EncodedBatch batch = make_batch(samples.size(), max_len);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& calls = samples[r].calls;
    const std::size_t n = std::min(calls.size(), max_len);
    for (std::size_t t = 0; t < n; ++t) {
      batch.ids[r * max_len + t] = vocab.id(calls[t]);
      batch.mask[r * max_len + t] = 1;
    }
    batch.lengths[r] = n;
    batch.labels[r] = static_cast<std::int32_t>(labels.index_of(samples[r].label));
  }
  return batch;
}

std::vector<std::string> decode_calls(const CallVocab& vocab, std::span<const std::int32_t> ids) {
  std::vector<std::string> out;
  for (auto id : ids) {
    if (id == kPadId) break;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::int32_t CharEncoderConfig::bucket(std::uint32_t codepoint) const {
  if (buckets < 3) throw std::invalid_argument("character encoder needs at least 3 buckets");
  const std::uint64_t hashed = (static_cast<std::uint64_t>(codepoint) * multiplier) >> 54;
  return static_cast<std::int32_t>(2 + hashed % (buckets - 2));
}

std::vector<std::uint32_t> utf8_codepoints(std::string_view text) {
  std::vector<std::uint32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + extra >= text.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool ok = true;
    for (std::size_t k = 1; ok && k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      else cp = (cp << 6) | (b & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

EncodedBatch encode_chars(const CharEncoderConfig& cfg, std::span<const Sample> samples, const LabelSpace& labels,
                          std::size_t max_chars) {
  if (cfg.buckets < 3) throw std::invalid_argument("character encoder needs at least 3 buckets");
  EncodedBatch batch = make_batch(samples.size(), max_chars);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    std::string joined;
    for (std::size_t c = 0; c < samples[r].calls.size(); ++c) {
      if (c) joined += ' ';
      joined += samples[r].calls[c];
    }
    const auto cps = utf8_codepoints(joined);
    const std::size_t n = std::min(cps.size(), max_chars);
    for (std::size_t t = 0; t < n; ++t) {
      batch.ids[r * max_chars + t] = cfg.bucket(cps[t]);
      batch.mask[r * max_chars + t] = 1;
    }
    batch.lengths[r] = n;
    batch.labels[r] = static_cast<std::int32_t>(labels.index_of(samples[r].label));
  }
  return batch;
}

}  // namespace rtf
