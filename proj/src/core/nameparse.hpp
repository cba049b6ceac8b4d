#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "core/error.hpp"

namespace nlelab::detail {

/// Parsed "name(arg1,arg2,...)" expression with numeric arguments. Used by
/// the named kernel and named field registries so both accept the same
/// spelling in configuration files.
struct ParsedCall {
  std::string name;
  std::vector<double> args;
};

inline ParsedCall parse_call(std::string_view expr) {
  std::string s(expr);
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; }), s.end());
  ParsedCall out;
  const auto open = s.find('(');
  if (open == std::string::npos) {
    out.name = s;
    return out;
  }
  if (s.back() != ')') fail(Errc::parse, "malformed name expression: " + s);
  out.name = s.substr(0, open);
  std::string inner = s.substr(open + 1, s.size() - open - 2);
  if (!inner.empty()) {
    std::size_t pos = 0;
    while (pos <= inner.size()) {
      const auto comma = inner.find(',', pos);
      const std::string tok = inner.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        out.args.push_back(std::stod(tok));
      } catch (...) {
        fail(Errc::parse, "bad numeric argument '" + tok + "' in " + s);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return out;
}

} // namespace nlelab::detail
