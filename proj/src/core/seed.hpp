#ifndef RTF_CORE_SEED_HPP
#define RTF_CORE_SEED_HPP

#include <cstdint>
#include <string_view>

namespace rtf {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

/// Child seed for one stage of an experiment:
///   mix64(seed ^ fnv1a64(tag))
/// Every consumer of randomness (split, fold, bootstrap, init, dropout,
/// shuffling) draws from its own child seed so stages never share a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Same as derive_seed with an integer index appended to the tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

}  // namespace rtf

#endif  // RTF_CORE_SEED_HPP
