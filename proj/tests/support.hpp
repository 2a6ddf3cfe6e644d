#ifndef RTF_TESTS_SUPPORT_HPP
#define RTF_TESTS_SUPPORT_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/fileio.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("rtf_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline rtf::Sample sample(std::string id, std::vector<std::string> calls, std::string label) {
  return rtf::Sample{std::move(id), std::move(calls), std::move(label)};
}

// `counts[c]` samples of class "c<c>", each a short random sequence.
inline rtf::Dataset dataset_with_counts(const std::vector<std::size_t>& counts, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<rtf::Sample> out;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      std::vector<std::string> calls;
      const std::size_t len = 1 + rng() % 6;
      for (std::size_t t = 0; t < len; ++t) calls.push_back("k" + std::to_string(rng() % 5));
      out.push_back(sample("s" + std::to_string(c) + "_" + std::to_string(i), calls, "c" + std::to_string(c)));
    }
  }
  return rtf::Dataset(std::move(out), "test");
}

}  // namespace testing

#endif  // RTF_TESTS_SUPPORT_HPP
