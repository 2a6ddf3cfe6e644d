#ifndef RTF_CORE_SYNTH_HPP
#define RTF_CORE_SYNTH_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/corpus.hpp"

namespace rtf {

/// Class-conditional first-order Markov chains over a shared call alphabet.
struct SynthOptions {
  std::vector<std::size_t> class_counts{400, 200, 100, 50};
  std::size_t tokens = 30;
  std::size_t min_len = 40;
  std::size_t max_len = 80;
  /// Preferred successors per state in each class's transition matrix.
  std::size_t fanout = 3;
  /// Probability mass spread uniformly over all successors.
  double noise = 0.1;
  std::uint64_t seed = 7;
};

/// Ids are "syn-<class>-<n>", labels "family_<class>". Classes appear in
/// order so the label space is family_0, family_1, ...
Dataset synthesize_markov_corpus(const SynthOptions& options);

/// Call names used by the generator (first `tokens` of them).
std::vector<std::string> synth_alphabet(std::size_t tokens);

using ClassDistribution = std::vector<std::pair<std::string, std::size_t>>;

/// Family counts of the four public corpora, rows in table order.
/// Names: "catak", "oliveira", "virussample", "virusshare".
ClassDistribution published_distribution(const std::string& corpus);

/// A dataset with exactly the given class counts and short random sequences.
Dataset dataset_with_distribution(const ClassDistribution& dist, std::uint64_t seed);

}  // namespace rtf

#endif  // RTF_CORE_SYNTH_HPP
