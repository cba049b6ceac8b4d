#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nlelab {

/// Flat key = value configuration text: one pair per line, '#' starts a
/// comment anywhere, blank lines are skipped, and repeating a key appends to
/// its list. Scalar reads insist the key appears exactly once; list reads
/// return every occurrence in file order.
class Config {
public:
  static Config parse_string(std::string_view text);
  static Config parse_file(const std::string& path);

  bool has(std::string_view key) const;
  long count(std::string_view key) const;
  /// Distinct keys in first-appearance order.
  std::vector<std::string> keys() const;

  std::string get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key) const;
  double get_double_or(std::string_view key, double fallback) const;
  long get_long(std::string_view key) const;
  long get_long_or(std::string_view key, long fallback) const;

  std::vector<std::string> list(std::string_view key) const;
  std::vector<double> double_list(std::string_view key) const;

private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

} // namespace nlelab
