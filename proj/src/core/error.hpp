#pragma once

#include <stdexcept>
#include <string>

namespace nlelab {

/// Error categories surfaced through the C API as status codes.
enum class Errc {
  ok = 0,
  invalid_parameter,
  parse,
  io,
  precondition,
  kernel_singularity,
  resolution,
  no_convergence,
  stiffness,
  unknown_recipe,
  invalid_family,
  internal,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

} // namespace nlelab
