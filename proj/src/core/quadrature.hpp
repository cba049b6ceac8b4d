#pragma once

#include <span>

#include "core/gridfield.hpp"
#include "core/kernels.hpp"
#include "core/params.hpp"

namespace nlelab {

/// Log-radial ring quadrature layout. r_inner/r_outer <= 0 pick the defaults
/// 2h and 4R. Rings always extend far enough that both u(x+y) and u(x-y) sit
/// in the tail region at the last ring; constant tails are then closed
/// analytically beyond that, callable tails contribute a rigorous truncation
/// bound instead.
struct QuadratureConfig {
  double r_inner = 0.0;
  double r_outer = 0.0;
  int rings_per_decade = 16;
  int angular_points = 32;
  bool taylor_inner = true;
};

/// One operator evaluation. value = even_contribution + odd_contribution;
/// the even/odd parts already contain their shares of the inner-ball model
/// (reported separately as inner_estimate) and any analytic tail closure.
/// truncation_bound is a rigorous bound on everything discarded beyond the
/// covered annulus; quad_error is an a-posteriori ring-refinement estimate.
struct OperatorValue {
  double value = 0.0;
  double even_contribution = 0.0;
  double odd_contribution = 0.0;
  double inner_estimate = 0.0;
  double truncation_bound = 0.0;
  double quad_error = 0.0;
};

enum class Sign { plus, minus };

/// L u(x) = int delta_even K_even + int delta_odd K_odd.
OperatorValue eval_linear(const KernelSpec& k, const GridField& u, std::span<const double> x,
                          const QuadratureConfig& cfg = {});

/// Extremal even operators: plus = (2-sigma) int (Lam de+ - lam de-) / |y|^{n+sigma},
/// minus swaps lam and Lam.
OperatorValue eval_extremal_even(const GridField& u, std::span<const double> x, const EllipticityParams& p,
                                 Sign sign, const QuadratureConfig& cfg = {});

/// |D_tau| u(x) = (1-tau) int |delta_odd| / |y|^{n+tau}.
OperatorValue eval_dtau(const GridField& u, std::span<const double> x, const EllipticityParams& p,
                        const QuadratureConfig& cfg = {});

/// M_{L0}^± = extremal even part ± b |D_tau|, accumulated on matched nodes.
OperatorValue eval_m_l0(const GridField& u, std::span<const double> x, const EllipticityParams& p, Sign sign,
                        const QuadratureConfig& cfg = {});

/// min over groups of max over members of eval_linear(...).value.
double eval_inf_sup(const KernelFamily& family, const GridField& u, std::span<const double> x,
                    const QuadratureConfig& cfg = {});

} // namespace nlelab
