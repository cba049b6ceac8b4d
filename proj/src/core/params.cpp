#include "core/params.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/error.hpp"

namespace nlelab {

HypothesisReport check_hypotheses(const EllipticityParams& p) {
  const double entries[] = {p.sigma,        p.tau,         p.lambda_lo,   p.lambda_hi,  p.b,
                            p.universal.m,  p.universal.A0, p.universal.sigma0, p.universal.tau0};
  for (double v : entries) {
    if (!std::isfinite(v)) fail(Errc::invalid_parameter, "non-finite ellipticity parameter");
  }

  HypothesisReport r;
  r.params_ok = p.lambda_lo > 0 && p.lambda_lo <= p.lambda_hi && p.b >= 0 && (p.dim == 1 || p.dim == 2);

  const auto& u = p.universal;
  // H1: 2 > sigma >= sigma0 > 0 and min(1, sigma) > tau >= tau0 > 0.
  r.margin_h1 = std::min({2.0 - p.sigma, p.sigma - u.sigma0, u.sigma0,
                          std::min(1.0, p.sigma) - p.tau, p.tau - u.tau0, u.tau0});
  r.h1 = 2.0 > p.sigma && p.sigma >= u.sigma0 && u.sigma0 > 0 &&
         std::min(1.0, p.sigma) > p.tau && p.tau >= u.tau0 && u.tau0 > 0;

  // H2: the order gap sigma - tau stays above m.
  r.margin_h2 = (p.sigma - p.tau) - u.m;
  r.h2 = u.m > 0 && r.margin_h2 >= 0;

  // H3: drift budget, lambda * A0 * (2 - sigma) >= b * (1 - tau).
  r.margin_h3 = p.lambda_lo * u.A0 * (2.0 - p.sigma) - p.b * (1.0 - p.tau);
  r.h3 = u.A0 > 0 && r.margin_h3 >= 0;

  return r;
}

std::string describe(const HypothesisReport& r) {
  std::ostringstream ss;
  ss << "params_ok=" << (r.params_ok ? 1 : 0) << " H1=" << (r.h1 ? 1 : 0) << " (margin " << r.margin_h1
     << ") H2=" << (r.h2 ? 1 : 0) << " (margin " << r.margin_h2 << ") H3=" << (r.h3 ? 1 : 0) << " (margin "
     << r.margin_h3 << ")";
  return ss.str();
}

} // namespace nlelab
