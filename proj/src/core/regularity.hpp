#pragma once

#include <array>
#include <span>
#include <vector>

#include "core/gridfield.hpp"
#include "core/params.hpp"
#include "core/quadrature.hpp"

namespace nlelab {

/// Oscillation of a field over the dyadic balls B_{r0 4^{-k}} about one
/// center, with the log-log least-squares fit of oscillation against radius.
/// Radii the grid cannot resolve (fewer than 3 nodes per radius) are dropped;
/// the fitted exponent is reported only when at least 4 radii survive with
/// oscillation above the 1e-12 floor.
struct OscillationTrace {
  std::array<double, 2> center = {0.0, 0.0};
  std::vector<double> radii;      ///< resolved radii, decreasing
  std::vector<double> osc_values; ///< oscillation over each ball, nonincreasing
  double fitted_alpha = 0.0;
  double fit_r2 = 0.0;
  bool alpha_valid = false;
};

/// Super-level-set decay of the dilated field x -> u(kappa x) over the unit
/// ball: Lebesgue-normalized node-count measures of { > t } on a geometric
/// threshold ladder, with the power-law fit measure <= envelope_c * t^-eps.
struct TailFit {
  double kappa = 0.0;
  std::vector<double> thresholds;
  std::vector<double> measures;
  double fitted_eps = 0.0;
  double envelope_c = 0.0; ///< max over the ladder of measure * t^fitted_eps
  double fit_r2 = 0.0;
  int nodes_in_ball = 0;
  bool degenerate = false; ///< fewer than two informative thresholds
};

/// Interior Hoelder measurement over a set of centers: per-center oscillation
/// traces plus the aggregate exponent statistics and the empirical modulus
/// constant c_emp = max osc(B_r) / ((sup|u| + c0) r^alpha). The two-sided
/// extremal inequalities (plus-operator above -c0, minus-operator below c0)
/// are probed on a small node sample and reported, not enforced, so that
/// negative controls can run through the same pipeline.
struct HolderReport {
  std::vector<OscillationTrace> traces;
  std::vector<long> centers;
  double alpha_min = 0.0;
  double alpha_median = 0.0;
  double c_emp = 0.0;
  int centers_used = 0;
  int centers_valid = 0;
  bool inequalities_hold = false;
  double inequality_margin = 0.0; ///< max certified excess; <= 0 means verified
};

/// One stage of the incremental-quotient bootstrap: quotient exponent, the
/// ball it is measured on, its sup norm there (the norm-chain constant is
/// quotient_sup / sup|u|), and the Hoelder measurement of the quotient.
struct C1AlphaStage {
  int k = 0;
  double exponent = 0.0;
  double ball_radius = 0.0;
  double quotient_sup = 0.0;
  double norm_const = 0.0;
  HolderReport holder;
};

/// Incremental-quotient pipeline report. completed is false when the
/// shrinking ball fell under the grid resolution before the final stage;
/// k_reached then records how far the chain got.
struct C1AlphaReport {
  double abar = 0.0;
  double delta = 0.0;
  std::vector<C1AlphaStage> stages;
  bool completed = false;
  int k_reached = 0;
  double final_alpha = 0.0;  ///< min fitted exponent of the Lipschitz quotients
  double final_alpha_median = 0.0;
  double final_r2 = 0.0; ///< fit quality at the argmin center
  double c1alpha_modulus = 0.0;
};

/// Sign audit of a special-function candidate: the plus-extremal operator
/// must be nonpositive (within tol) outside B_{1/4}; its positive part inside
/// closed B_{1/4} is the measured psi bound.
struct SpecialFunctionReport {
  bool ok = false;
  double tol = 0.0;
  double max_outside = 0.0; ///< certified max of the operator off B_{1/4}
  std::array<double, 2> argmax_outside = {0.0, 0.0};
  double psi_bound = 0.0; ///< measured sup of the positive part on B_{1/4}
  int outside_samples = 0;
};

/// Dilation factor eps0 / (1 + sup_norm)^{1/(sigma-tau)}. Requires eps0 > 0
/// and the order gap sigma - tau >= m > 0.
double kappa(const EllipticityParams& params, double sup_norm, double eps0);

/// Node ids of u at distance <= radius from the origin (Euclidean), strided
/// deterministically down to at most cap entries.
std::vector<long> nodes_in_ball(const GridField& u, double radius, std::size_t cap);

/// Level-set decay measurement behind the point estimate: dilates u by kappa,
/// measures super-level node fractions of the dilated field in the unit ball
/// over a geometric threshold ladder, and fits the power-law tail. Requires
/// u >= 0 on all nodes and tail samples and the minus-operator bounded by c0
/// on a node sample of the dilated ball; violations throw with the location.
TailFit point_estimate(const GridField& u, const EllipticityParams& params, double c0, double eps0,
                       const QuadratureConfig& quad = {});

/// Oscillation of u over dyadic balls r0 * 4^{-k}, k = 0..k_max, about the
/// given center, each measured on a dense interpolated sample (32 samples per
/// radius per axis) so small balls are not under-resolved by node spacing.
OscillationTrace oscillation_decay(const GridField& u, std::span<const double> center, double r0, int k_max);

/// Hoelder certificate over a center set (defaults to nodes in B_{1/2}):
/// oscillation decay at every center plus the aggregate statistics. r0 <= 0
/// picks the smallest dyadic start radius that leaves 4 resolved scales.
HolderReport holder_certificate(const GridField& u, const EllipticityParams& params, double c0,
                                std::span<const long> centers = {}, double r0 = 0.0, int k_max = 8,
                                const QuadratureConfig& quad = {});

/// Incremental-quotient bootstrap: for k = 0..floor(1/abar)-1 forms the
/// quotient at exponent k*abar along each coordinate direction, measures it
/// on the shrinking ball B_{3/4-(k+1)delta}, then fits the Hoelder exponent
/// of the exponent-1 (Lipschitz) quotients. delta <= 0 picks the proof
/// default 1/(4 floor(1/abar)).
C1AlphaReport c1alpha_pipeline(const GridField& u, const EllipticityParams& params, double abar,
                               double delta = 0.0, const QuadratureConfig& quad = {});

/// Checks a special-function candidate: support and level preconditions are
/// enforced (compact support outside B_{2 sqrt n}, value < -2 on the cube of
/// side 3), then the plus-extremal operator is evaluated on node samples and
/// certified nonpositive outside B_{1/4} up to tol.
SpecialFunctionReport special_function_check(const GridField& phi, const EllipticityParams& params,
                                             const QuadratureConfig& quad = {}, double tol = 1e-6);

} // namespace nlelab
