#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "core/gridfield.hpp"
#include "core/kernels.hpp"
#include "core/params.hpp"
#include "core/quadrature.hpp"

namespace nlelab {

enum class OperatorKind {
  linear_kernel,
  family_inf_sup,
  m_sigma_plus,
  m_sigma_minus,
  m_l0_plus,
  m_l0_minus,
};

/// Dirichlet problem "operator(u) = f in Omega, u = g outside Omega".
/// Omega is an origin-centered ball (box with domain_is_box) strictly inside
/// the shared grid box of rhs and exterior. exterior supplies the values on
/// every node outside Omega and the far-field tail; rhs is read on interior
/// nodes only. kernel/family back the linear operator kinds.
struct DirichletProblem {
  DirichletProblem(OperatorKind op_, EllipticityParams params_, GridField rhs_, GridField exterior_,
                   double domain_radius_, bool domain_is_box_ = false);

  OperatorKind op;
  EllipticityParams params;
  GridField rhs;
  GridField exterior;
  double domain_radius;
  bool domain_is_box = false;
  KernelSpec kernel{};
  KernelFamily family{};
  QuadratureConfig quad{};
};

struct SolveReport {
  long iterations = 0;
  std::vector<double> residual_history;
  double dt_used = 0.0;
  bool converged = false;
  double final_residual = 0.0;
  double max_row_sum = 0.0;
  /// Odd-kernel truncation radius of the scheme for the m_l0 kinds (the
  /// drift is integrated over B_r0 only, keeping every node update monotone);
  /// +inf when no truncation applies.
  double odd_truncation_radius = 0.0;
};

struct SolveResult {
  GridField u;
  SolveReport report;
};

/// Precomputed monotone discretization of the problem operator on the
/// interior nodes. apply() reproduces the point evaluations of the eval_*
/// operators (same ring layout, inner model, and constant-tail closure);
/// callable exterior tails contribute only inside the covered annulus.
/// Construction audits discrete degenerate ellipticity: every linear member
/// must dominate its odd part by its even part at each quadrature point.
class DiscreteScheme {
public:
  explicit DiscreteScheme(const DirichletProblem& p);
  ~DiscreteScheme();
  DiscreteScheme(DiscreteScheme&&) noexcept;
  DiscreteScheme& operator=(DiscreteScheme&&) noexcept;

  /// Flat node indices of the interior (unknown) nodes, in grid order.
  const std::vector<long>& interior() const;
  /// Operator values at the interior nodes of u (same grid as the problem).
  std::vector<double> apply(const GridField& u, int threads = 1) const;
  /// Worst-case Lipschitz bound of the update with respect to the center
  /// value, maximized over interior nodes; dt() = 0.9 / max_row_sum().
  double max_row_sum() const;
  double dt() const;
  double odd_truncation_radius() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Monotone pseudo-time iteration u <- u + dt (I_h u - f) on interior nodes,
/// exterior nodes pinned to g. Stops when the sup-norm residual reaches tol;
/// exceeding max_iter returns converged = false with the field as-is.
SolveResult solve(const DirichletProblem& p, double tol, long max_iter, int threads = 1);

struct BarrierInteriorReport {
  bool found = false;
  double s_star = 0.0;
  double delta_star = 0.0;
  std::vector<double> s_values;
  std::vector<double> min_values; // certified minima (value - quad error), per s
};

/// Interior barrier sweep: for each s, evaluates the minimum of
/// M^-_{L0} phi_s over node samples of B_1 with phi_s(x) = min(1, |sx|^2/4),
/// and returns the largest s whose certified minimum is positive. The field
/// spans exactly B_{2/s}, where phi_s reaches its plateau, so the constant
/// far tail is exact.
BarrierInteriorReport barrier_interior(const EllipticityParams& p, std::span<const double> s_grid,
                                       const QuadratureConfig& q = {});

struct BarrierExteriorReport {
  bool found = false;
  double c = 0.0;
  double alpha_b = 0.0;
  double max_ring = 0.0; // certified max of M^+_{L0} phi over B_2 minus B_1 samples
  double max_far = 0.0;  // certified max over samples beyond B_2
  double delta = 0.0;    // -max_ring when the ring condition holds
  bool holds_ring = false;
  bool holds_far = false;
  std::array<double, 2> argmax_ring{0.0, 0.0};
};

/// Exterior barrier check for phi(x) = min(1, C (|x| - 1)_+^alpha_b):
/// M^+_{L0} phi must stay negative on B_2 minus B_1 and nonpositive beyond.
/// Sample nodes closer than four spacings to the unit sphere are excluded
/// (the cusp there is below grid resolution). Report-only, never throws on a
/// sign failure.
BarrierExteriorReport barrier_exterior(const EllipticityParams& p, double C, double alpha_b,
                                       const QuadratureConfig& q = {});

/// Grid search over (C, alpha_b) pairs; returns the verified pair with the
/// largest margin, or the closest miss with found = false.
BarrierExteriorReport barrier_exterior_search(const EllipticityParams& p, std::span<const double> c_grid,
                                              std::span<const double> alpha_grid,
                                              const QuadratureConfig& q = {});

struct ComparisonReport {
  bool ok = false;
  double worst_gap = 0.0; // max over interior nodes of u - v
  long worst_node = -1;
  long checked_nodes = 0;
};

/// Verifies u <= v + tol on the interior nodes of the origin-centered domain.
/// The ordering u <= v outside the domain is a precondition and throws when
/// violated (constant tails are compared too; callable tails are skipped).
ComparisonReport comparison_check(const GridField& u, const GridField& v, double domain_radius,
                                  bool domain_is_box, double tol);

} // namespace nlelab
