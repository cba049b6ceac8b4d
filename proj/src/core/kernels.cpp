#include "core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/error.hpp"
#include "core/nameparse.hpp"

namespace nlelab {

using detail::ParsedCall;
using detail::parse_call;

namespace {

double surface_factor(int dim) { return dim == 1 ? 2.0 : 2.0 * M_PI; }

std::string point_str(std::span<const double> y) {
  std::ostringstream ss;
  ss << '(';
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i) ss << ',';
    ss << y[i];
  }
  ss << ')';
  return ss.str();
}

double norm_of(std::span<const double> y) {
  double s = 0;
  for (double v : y) s += v * v;
  return std::sqrt(s);
}

} // namespace

KernelSpec::KernelSpec(KernelFn even, KernelFn odd, EllipticityParams params, double rho0, double lip_const)
    : even_(std::move(even)), odd_(std::move(odd)), params_(params), rho0_(rho0), lip_const_(lip_const) {
  if (!(rho0_ > 0)) fail(Errc::invalid_parameter, "rho0 must be positive");
}

double KernelSpec::even(std::span<const double> y) const {
  const double v = even_ ? even_(y) : 0.0;
  if (!std::isfinite(v)) fail(Errc::kernel_singularity, "even kernel non-finite at y=" + point_str(y));
  return v;
}

double KernelSpec::odd(std::span<const double> y) const {
  const double v = odd_ ? odd_(y) : 0.0;
  if (!std::isfinite(v)) fail(Errc::kernel_singularity, "odd kernel non-finite at y=" + point_str(y));
  return v;
}

KernelSpec make_named_kernel(std::string_view expr, const EllipticityParams& params, double rho0,
                             double lip_const) {
  const ParsedCall call = parse_call(expr);
  const int dim = params.dim;
  const double sigma = params.sigma;
  const double tau = params.tau;

  if (call.name == "frac-laplace") {
    if (call.args.size() != 1) fail(Errc::parse, "frac-laplace expects one argument");
    const double c = call.args[0];
    KernelSpec k(
        [c, sigma, dim](std::span<const double> y) {
          const double r = norm_of(y);
          return c * (2.0 - sigma) * std::pow(r, -(dim + sigma));
        },
        KernelFn{}, params, rho0, lip_const);
    k.set_even_tail_mass([c, sigma, dim](double r) {
      return c * (2.0 - sigma) * surface_factor(dim) / (sigma * std::pow(r, sigma));
    });
    k.set_name(std::string(expr));
    return k;
  }

  if (call.name == "odd-power") {
    if (call.args.empty() || call.args.size() > 2) fail(Errc::parse, "odd-power expects one or two arguments");
    const double amp = call.args[0];
    const double t = call.args.size() == 2 ? call.args[1] : tau;
    KernelSpec k(KernelFn{},
                 [amp, t, dim](std::span<const double> y) {
                   const double r = norm_of(y);
                   return amp * (1.0 - t) * (y[0] / r) * std::pow(r, -(dim + t));
                 },
                 params, rho0, lip_const);
    k.set_name(std::string(expr));
    return k;
  }

  if (call.name == "mixed") {
    if (call.args.size() != 2) fail(Errc::parse, "mixed expects two arguments");
    const double c = call.args[0];
    const double amp = call.args[1];
    auto even = [c, sigma, dim](std::span<const double> y) {
      const double r = norm_of(y);
      return c * (2.0 - sigma) * std::pow(r, -(dim + sigma));
    };
    // Odd part truncated against the even part so the full kernel stays
    // nonnegative; keeps the kernel inside the nonnegative class exactly.
    auto odd = [even, amp, tau, dim](std::span<const double> y) {
      const double r = norm_of(y);
      const double raw = amp * (1.0 - tau) * (y[0] / r) * std::pow(r, -(dim + tau));
      const double cap = even(y);
      return std::clamp(raw, -cap, cap);
    };
    KernelSpec k(even, odd, params, rho0, lip_const);
    k.set_even_tail_mass([c, sigma, dim](double r) {
      return c * (2.0 - sigma) * surface_factor(dim) / (sigma * std::pow(r, sigma));
    });
    k.set_name(std::string(expr));
    return k;
  }

  fail(Errc::parse, "unknown kernel name '" + call.name + "'");
}

std::vector<double> audit_radii(double r_lo, double r_hi, int count) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    out.push_back(r_lo * std::pow(r_hi / r_lo, t));
  }
  return out;
}

namespace {

/// Measured translate integral sup_h (1/|h|) int_{|y|>rho0} |K(y) - K(y-h)| dy,
/// integrated decade by decade until contributions become negligible.
double translate_integral_for_shift(const KernelSpec& k, const std::array<double, 2>& h, int dim,
                                    int angular_samples) {
  const double habs = std::sqrt(h[0] * h[0] + h[1] * h[1]);
  auto total_kernel = [&](double y0, double y1) {
    const std::array<double, 2> y = {y0, y1};
    const auto sp = std::span<const double>(y.data(), dim);
    return k.even(sp) + k.odd(sp);
  };
  double acc = 0.0;
  const double rho0 = k.rho0();
  for (int decade = 0; decade < 8; ++decade) {
    const double a = rho0 * std::pow(10.0, decade);
    const double b = rho0 * std::pow(10.0, decade + 1);
    double part = 0.0;
    const int nr = 96;
    const double lw = std::log(b / a) / nr;
    for (int i = 0; i < nr; ++i) {
      const double r = a * std::exp((i + 0.5) * lw);
      if (dim == 1)
        for (double s : {-1.0, 1.0}) {
          const double y0 = s * r;
          part += std::abs(total_kernel(y0, 0) - total_kernel(y0 - h[0], 0)) * r * lw;
        }
      else {
        const int na = std::max(16, 4 * angular_samples);
        for (int j = 0; j < na; ++j) {
          const double th = 2.0 * M_PI * (j + 0.5) / na;
          const double y0 = r * std::cos(th), y1 = r * std::sin(th);
          part += std::abs(total_kernel(y0, y1) - total_kernel(y0 - h[0], y1 - h[1])) * r * r * lw *
                  (2.0 * M_PI / na);
        }
      }
    }
    acc += part;
    if (decade >= 2 && part < 1e-10 * std::max(acc, 1e-300)) break;
  }
  return acc / habs;
}

} // namespace

KernelClassReport verify_kernel_class(const KernelSpec& k, std::span<const double> radii, int angular_samples) {
  const auto& p = k.params();
  const int dim = p.dim;
  KernelClassReport rep;
  rep.declared_lip_const = k.lip_const();
  rep.symmetry_ok = true;
  double worst_lower = -1e300, worst_upper = -1e300, worst_odd = -1e300, min_total = 1e300;

  const int ndir = dim == 1 ? 2 : angular_samples;
  for (double r : radii) {
    for (int d = 0; d < ndir; ++d) {
      std::array<double, 2> y;
      if (dim == 1) {
        y = {d == 0 ? r : -r, 0.0};
      } else {
        const double th = 2.0 * M_PI * (d + 0.37) / ndir;
        y = {r * std::cos(th), r * std::sin(th)};
      }
      const std::array<double, 2> yneg = {-y[0], -y[1]};
      const auto sp = std::span<const double>(y.data(), dim);
      const auto spn = std::span<const double>(yneg.data(), dim);
      const double ke = k.even(sp);
      const double ko = k.odd(sp);
      const double scale = (2.0 - p.sigma) * p.lambda_hi * std::pow(r, -(dim + p.sigma));
      if (std::abs(ke - k.even(spn)) > 1e-9 * std::max(scale, std::abs(ke))) rep.symmetry_ok = false;
      if (std::abs(ko + k.odd(spn)) > 1e-9 * std::max(scale, std::abs(ko))) rep.symmetry_ok = false;

      const double lower = (2.0 - p.sigma) * p.lambda_lo * std::pow(r, -(dim + p.sigma));
      const double upper = scale;
      const double odd_bound = (1.0 - p.tau) * p.b * std::pow(r, -(dim + p.tau));
      worst_lower = std::max(worst_lower, (lower - ke) / upper);
      worst_upper = std::max(worst_upper, (ke - upper) / upper);
      worst_odd = std::max(worst_odd, (std::abs(ko) - odd_bound) / upper);
      min_total = std::min(min_total, (ke + ko) / upper);
    }
  }
  rep.worst_lower_violation = worst_lower;
  rep.worst_upper_violation = worst_upper;
  rep.worst_odd_violation = worst_odd;
  rep.min_total_kernel = min_total;

  const double slack = 1e-9;
  rep.l0 = rep.symmetry_ok && worst_lower <= slack && worst_upper <= slack && worst_odd <= slack;
  rep.l0_tilde = rep.l0 && min_total >= -slack;

  double ti = 0.0;
  const double rho0 = k.rho0();
  std::vector<std::array<double, 2>> shifts;
  for (double mag : {rho0 / 2.0, rho0 / 4.0}) {
    shifts.push_back({mag, 0.0});
    shifts.push_back({-mag, 0.0});
    if (dim == 2) {
      shifts.push_back({0.0, mag});
      shifts.push_back({0.0, -mag});
    }
  }
  for (const auto& h : shifts) ti = std::max(ti, translate_integral_for_shift(k, h, dim, angular_samples));
  rep.translate_integral = ti;
  rep.l1 = rep.l0_tilde && k.lip_const() > 0 && ti <= k.lip_const() * (1.0 + 1e-9);
  return rep;
}

} // namespace nlelab
