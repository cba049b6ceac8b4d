#include "core/fields.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/nameparse.hpp"

namespace nlelab::fields {

namespace {

using detail::ParsedCall;
using detail::parse_call;

double norm_of(std::span<const double> x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

/// Profiles that grow with |x| are clamped at this radius so every field and
/// tail stays globally bounded, as the operators require.
constexpr double kClampRadius = 100.0;

void expect_args(const ParsedCall& c, std::size_t lo, std::size_t hi) {
  if (c.args.size() < lo || c.args.size() > hi)
    fail(Errc::parse, "profile '" + c.name + "' got " + std::to_string(c.args.size()) + " arguments");
}

std::function<double(std::span<const double>)> compile(std::string_view expr) {
  const ParsedCall call = parse_call(expr);

  if (call.name == "const") {
    expect_args(call, 1, 1);
    const double c = call.args[0];
    return [c](std::span<const double>) { return c; };
  }

  if (call.name == "gaussian") {
    expect_args(call, 1, 1);
    const double a = call.args[0];
    if (!(a > 0)) fail(Errc::invalid_parameter, "gaussian width must be positive");
    return [a](std::span<const double> x) {
      const double r = norm_of(x);
      return std::exp(-a * r * r);
    };
  }

  if (call.name == "bump") {
    expect_args(call, 0, 1);
    const double w = call.args.empty() ? 1.0 : call.args[0];
    if (!(w > 0)) fail(Errc::invalid_parameter, "bump width must be positive");
    return [w](std::span<const double> x) {
      const double t = norm_of(x) / w;
      if (t >= 1.0) return 0.0;
      return std::exp(-1.0 / (1.0 - t * t));
    };
  }

  if (call.name == "cusp") {
    expect_args(call, 1, 1);
    const double p = call.args[0];
    if (!(p > 0)) fail(Errc::invalid_parameter, "cusp exponent must be positive");
    return [p](std::span<const double> x) { return std::pow(std::min(norm_of(x), kClampRadius), p); };
  }

  if (call.name == "linear") {
    expect_args(call, 1, 1);
    const double a = call.args[0];
    return [a](std::span<const double> x) { return a * std::clamp(x[0], -kClampRadius, kClampRadius); };
  }

  if (call.name == "dip") {
    expect_args(call, 0, 4);
    const double d = call.args.size() > 0 ? call.args[0] : 1.0;
    const double w = call.args.size() > 1 ? call.args[1] : 0.5;
    const double c0 = call.args.size() > 2 ? call.args[2] : 0.0;
    const double c1 = call.args.size() > 3 ? call.args[3] : 0.0;
    if (!(d > 0) || !(w > 0)) fail(Errc::invalid_parameter, "dip depth and width must be positive");
    return [d, w, c0, c1](std::span<const double> x) {
      double s = (x[0] - c0) * (x[0] - c0);
      if (x.size() > 1) s += (x[1] - c1) * (x[1] - c1);
      return std::min(d, d * (s / (w * w) - 1.0));
    };
  }

  if (call.name == "invcap") {
    expect_args(call, 1, 1);
    const double cap = call.args[0];
    if (!(cap > 0)) fail(Errc::invalid_parameter, "invcap level must be positive");
    return [cap](std::span<const double> x) {
      const double r = norm_of(x);
      return r == 0.0 ? cap : std::min(cap, 1.0 / r);
    };
  }

  if (call.name == "roughsign") {
    expect_args(call, 1, 1);
    const double f = call.args[0];
    if (!(f > 0)) fail(Errc::invalid_parameter, "roughsign frequency must be positive");
    return [f](std::span<const double> x) {
      double s = std::sin(f * x[0] + 1.3);
      if (x.size() > 1) s += 0.8 * std::sin(0.81 * f * x[1] - 0.4);
      return s >= 0.0 ? 1.0 : -1.0;
    };
  }

  if (call.name == "phi") {
    expect_args(call, 1, 1);
    const double p = call.args[0];
    if (!(p > 0)) fail(Errc::invalid_parameter, "phi exponent must be positive");
    // Capped radial power: plateau of radius s, support radius 2 sqrt(n),
    // amplitude normalized so the value at the corners of the cube of side 3
    // is -2.25 (strictly below the required -2 level). The cap radius keeps
    // the plateau roughly four times deeper than the value on the sphere of
    // radius 1/4, so crossing the well from just outside that sphere pushes
    // the centered second difference down, not up.
    const double s = 0.25 * std::pow(4.0, -1.0 / p);
    return [p, s](std::span<const double> x) {
      const double n = static_cast<double>(x.size());
      const double rsup = 2.0 * std::sqrt(n);
      const double r = norm_of(x);
      if (r >= rsup) return 0.0;
      const double corner = 1.5 * std::sqrt(n);
      const double c = 2.25 / (std::pow(corner, -p) - std::pow(rsup, -p));
      const double base = std::min(std::pow(s, -p), std::pow(r, -p)) - std::pow(rsup, -p);
      return -c * base;
    };
  }

  fail(Errc::parse, "unknown profile name '" + call.name + "'");
}

std::string canonical(std::string_view expr) {
  std::string s(expr);
  std::erase_if(s, [](char c) { return c == ' ' || c == '\t'; });
  return s;
}

} // namespace

double eval_named(std::string_view expr, std::span<const double> x) { return compile(expr)(x); }

Tail named_tail(std::string_view expr) {
  const ParsedCall call = parse_call(expr);
  if (call.name == "const") {
    expect_args(call, 1, 1);
    return Tail::constant(call.args[0]);
  }
  return Tail::callable(compile(expr), canonical(expr));
}

GridField make_named_field(std::string_view expr, int dim, double box_radius, double spacing) {
  const ParsedCall call = parse_call(expr);
  auto f = compile(expr);
  Tail tail = named_tail(expr);

  // Demote tails that are exactly constant beyond the box; constant tails
  // close analytically in the quadrature and serialize without a resolver.
  if (call.name == "bump") {
    const double w = call.args.empty() ? 1.0 : call.args[0];
    if (box_radius >= w) tail = Tail::constant(0.0);
  } else if (call.name == "dip") {
    const double d = call.args.size() > 0 ? call.args[0] : 1.0;
    const double w = call.args.size() > 1 ? call.args[1] : 0.5;
    const double c0 = call.args.size() > 2 ? call.args[2] : 0.0;
    const double c1 = call.args.size() > 3 ? call.args[3] : 0.0;
    if (box_radius >= std::sqrt(c0 * c0 + c1 * c1) + w * std::sqrt(2.0)) tail = Tail::constant(d);
  } else if (call.name == "phi") {
    if (box_radius >= 2.0 * std::sqrt(static_cast<double>(dim))) tail = Tail::constant(0.0);
  }

  return GridField::from_function(dim, box_radius, spacing, f, std::move(tail));
}

std::function<Tail(const std::string&)> tail_resolver() {
  return [](const std::string& name) { return named_tail(name); };
}

} // namespace nlelab::fields
