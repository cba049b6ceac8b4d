#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/params.hpp"

namespace nlelab {

using KernelFn = std::function<double(std::span<const double>)>;

/// One translation-invariant kernel split into even and odd parts,
/// K(y) = K_even(y) + K_odd(y), together with the ellipticity data its class
/// membership is judged against. even_tail_mass, when set, returns the exact
/// integral of K_even over {|y| > r} and lets evaluations close constant
/// tails analytically.
class KernelSpec {
public:
  KernelSpec() = default;
  KernelSpec(KernelFn even, KernelFn odd, EllipticityParams params, double rho0 = 1.0 / 16.0,
             double lip_const = 0.0);

  double even(std::span<const double> y) const;
  double odd(std::span<const double> y) const;
  const EllipticityParams& params() const { return params_; }
  double rho0() const { return rho0_; }
  double lip_const() const { return lip_const_; }

  const std::function<double(double)>& even_tail_mass() const { return even_tail_mass_; }
  void set_even_tail_mass(std::function<double(double)> f) { even_tail_mass_ = std::move(f); }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

private:
  KernelFn even_;
  KernelFn odd_;
  EllipticityParams params_{};
  double rho0_ = 1.0 / 16.0;
  double lip_const_ = 0.0;
  std::function<double(double)> even_tail_mass_;
  std::string name_;
};

/// Groups of kernels for inf-sup operators: value = min over groups of the
/// max over that group's members.
struct KernelFamily {
  std::vector<std::vector<KernelSpec>> groups;
};

/// Parse "frac-laplace(c)", "odd-power(b)", "odd-power(b,tau)" or
/// "mixed(c,b)" into a kernel tied to the given ellipticity data.
KernelSpec make_named_kernel(std::string_view expr, const EllipticityParams& params, double rho0 = 1.0 / 16.0,
                             double lip_const = 0.0);

/// Sampled class-membership audit. radii/angles form the sample set; bounds
/// are checked with a small relative slack to absorb roundoff. Class chain
/// L1 subset L0~ subset L0 is enforced on the reported booleans.
struct KernelClassReport {
  bool symmetry_ok = false;
  bool l0 = false;
  bool l0_tilde = false;
  bool l1 = false;
  double worst_lower_violation = 0.0; // max over samples of (lambda bound - K_even), positive = violated
  double worst_upper_violation = 0.0; // max over samples of (K_even - Lambda bound)
  double worst_odd_violation = 0.0;   // max over samples of (|K_odd| - odd bound)
  double min_total_kernel = 0.0;      // min over samples of K_even + K_odd
  double translate_integral = 0.0;    // measured sup over tested shifts of the L1 translate integral
  double declared_lip_const = 0.0;
};

KernelClassReport verify_kernel_class(const KernelSpec& k, std::span<const double> radii, int angular_samples = 16);

/// Convenience log-spaced radii for class audits.
std::vector<double> audit_radii(double r_lo, double r_hi, int count);

} // namespace nlelab
