#include "core/config.hpp"

#include <charconv>
#include <string>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace nlelab {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool has_inner_space(std::string_view s) {
  for (char c : s) {
    if (is_space(c)) return true;
  }
  return false;
}

double to_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    fail(Errc::invalid_parameter,
         "key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as a number");
  }
  return v;
}

long to_long(std::string_view key, std::string_view value) {
  long v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    fail(Errc::invalid_parameter,
         "key '" + std::string(key) + "': cannot parse '" + std::string(value) + "' as an integer");
  }
  return v;
}

} // namespace

Config Config::parse_string(std::string_view text) {
  Config cfg;
  long line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(Errc::parse, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) fail(Errc::parse, "config line " + std::to_string(line_no) + ": empty key");
    if (has_inner_space(key)) {
      fail(Errc::parse, "config line " + std::to_string(line_no) + ": key '" + std::string(key) +
                            "' contains whitespace");
    }
    if (value.empty()) {
      fail(Errc::parse,
           "config line " + std::to_string(line_no) + ": empty value for key '" + std::string(key) + "'");
    }
    cfg.entries_.emplace_back(std::string(key), std::string(value));
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) { return parse_string(read_text_file(path)); }

bool Config::has(std::string_view key) const { return count(key) > 0; }

long Config::count(std::string_view key) const {
  long n = 0;
  for (const auto& [k, v] : entries_) {
    if (k == key) ++n;
  }
  return n;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    bool seen = false;
    for (const auto& s : out) {
      if (s == k) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(k);
  }
  return out;
}

std::string Config::get(std::string_view key) const {
  const std::string* found = nullptr;
  for (const auto& [k, v] : entries_) {
    if (k != key) continue;
    if (found) fail(Errc::parse, "key '" + std::string(key) + "' is repeated; read it as a list");
    found = &v;
  }
  if (!found) fail(Errc::parse, "missing key '" + std::string(key) + "'");
  return *found;
}

std::string Config::get_or(std::string_view key, std::string_view fallback) const {
  return has(key) ? get(key) : std::string(fallback);
}

double Config::get_double(std::string_view key) const { return to_double(key, get(key)); }

double Config::get_double_or(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long Config::get_long(std::string_view key) const { return to_long(key, get(key)); }

long Config::get_long_or(std::string_view key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

std::vector<std::string> Config::list(std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

std::vector<double> Config::double_list(std::string_view key) const {
  std::vector<double> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(to_double(key, v));
  }
  return out;
}

} // namespace nlelab
