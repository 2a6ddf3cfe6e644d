#ifndef RTF_CORE_ERROR_HPP
#define RTF_CORE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace rtf {

/// Malformed input file or config text. Carries the offending line when known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation met a non-finite value or an undefined quantity.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rtf

#endif  // RTF_CORE_ERROR_HPP
