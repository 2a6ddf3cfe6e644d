#ifndef RTF_CORE_FILEIO_HPP
#define RTF_CORE_FILEIO_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rtf {

std::string read_text_file(const std::filesystem::path& path);

/// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Splits on '\n', dropping a trailing '\r' per line. A final empty line is not returned.
std::vector<std::string> split_lines(std::string_view text);

std::vector<std::string> split(std::string_view text, char delimiter);

/// Splits on runs of ASCII whitespace; no empty fields.
std::vector<std::string> split_whitespace(std::string_view text);

std::string_view trim(std::string_view text);

/// Shortest round-trip representation of a double.
std::string format_double(double value);

}  // namespace rtf

#endif  // RTF_CORE_FILEIO_HPP
