#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iaf {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; the message carries path and line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file then renames over `path`; creates parent
/// directories as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// Strict full-string parsers; nullopt-free: they throw std::invalid_argument.
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

/// Whitespace-separated tokens.
std::vector<std::string_view> split_ws(std::string_view line);

/// Lines split on '\n' (no trailing empty line); rejects '\r'.
std::vector<std::string_view> split_lines(std::string_view text, const std::string& source);

std::string_view trim(std::string_view s);

}  // namespace iaf
