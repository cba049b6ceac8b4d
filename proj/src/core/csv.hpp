#pragma once

#include <charconv>
#include <string>
#include <vector>

namespace nlelab {

/// Shortest decimal representation that round-trips to the same double.
/// Used for every numeric CSV cell so emitted files are byte-stable.
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_long(long v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join_csv(const std::vector<std::string>& cells);

/// Split a CSV line on commas (no quoting; the formats emitted here never
/// contain embedded commas).
std::vector<std::string> split_csv(const std::string& line);

double parse_double(const std::string& s);
long parse_long(const std::string& s);

/// Write a whole file with '\n' line endings; throws Errc::io on failure.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

} // namespace nlelab
