#pragma once

#include <string>

namespace nlelab {

/// Universal constants fixed before any estimate: lower bounds on the orders,
/// the order gap, and the drift-size budget entering H3.
struct UniversalConstants {
  double sigma0 = 0.5;
  double tau0 = 0.1;
  double m = 0.1;
  double A0 = 1.0;
};

/// Ellipticity data for one operator class: orders (sigma, tau), even-kernel
/// band [lambda_lo, lambda_hi], odd-kernel amplitude b, and the dimension.
struct EllipticityParams {
  double sigma = 1.5;
  double tau = 0.5;
  double lambda_lo = 1.0;
  double lambda_hi = 1.0;
  double b = 0.0;
  int dim = 1;
  UniversalConstants universal{};
};

/// Outcome of the structural hypothesis check. margins are signed distances
/// to the constraint boundary (positive = satisfied strictly).
struct HypothesisReport {
  bool params_ok = false; // finite, 0 < lambda_lo <= lambda_hi, b >= 0, dim in {1,2}
  bool h1 = false;        // 2 > sigma >= sigma0 > 0 and min(1, sigma) > tau >= tau0 > 0
  bool h2 = false;        // sigma - tau >= m
  bool h3 = false;        // lambda_lo * A0 * (2 - sigma) >= b * (1 - tau)
  double margin_h1 = 0.0;
  double margin_h2 = 0.0;
  double margin_h3 = 0.0;
  bool all() const { return params_ok && h1 && h2 && h3; }
};

/// Validate params and evaluate H1-H3. Throws Errc::invalid_parameter if any
/// entry is non-finite; structural violations are reported, not thrown.
HypothesisReport check_hypotheses(const EllipticityParams& p);

std::string describe(const HypothesisReport& r);

} // namespace nlelab
