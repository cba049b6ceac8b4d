#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "core/gridfield.hpp"

namespace nlelab::fields {

/// Pointwise evaluation of a named profile "name(args...)". Known names:
///   const(c)          constant c
///   gaussian(a)       exp(-a |x|^2)
///   bump(w)           exp(-1/(1 - (|x|/w)^2)) inside |x| < w, 0 outside
///   cusp(p)           min(|x|, 100)^p  (clamped so the profile stays bounded)
///   linear(a)         a * clamp(x0, -100, 100)
///   dip(d,w[,c0,c1])  min(d, d ((|x-c|/w)^2 - 1)): paraboloid dip of depth d,
///                     zero level at |x-c| = w, capped at d
///   invcap(c)         min(c, 1/|x|)
///   roughsign(f)      deterministic sign-oscillating data with frequency f
///   phi(p)            capped radial power -c min(s^-p, |x|^-p) + offset,
///                     continuous, supported in the closed ball of radius
///                     2 sqrt(n), below -2 on the cube of side 3, plateau
///                     radius s = 4^(-1/p)/4; c is normalized per dimension
double eval_named(std::string_view expr, std::span<const double> x);

/// Tail carrying the same profile (callable, serialized by name), except for
/// profiles that are exactly constant far out, which yield constant tails.
Tail named_tail(std::string_view expr);

/// Sample a named profile on a grid. The tail is demoted to an exact constant
/// when the profile provably equals that constant outside the box.
GridField make_named_field(std::string_view expr, int dim, double box_radius, double spacing);

/// Resolver mapping saved tail names back to tails, for load_field_csv.
std::function<Tail(const std::string&)> tail_resolver();

} // namespace nlelab::fields
