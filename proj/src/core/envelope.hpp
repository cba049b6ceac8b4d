#pragma once

#include <array>
#include <vector>

#include "core/gridfield.hpp"
#include "core/params.hpp"

namespace nlelab {

/// Convex envelope of min(u, 0) over the ball of radius 3, with the selected
/// supporting-plane data. gamma lives on the same grid as u, is zero at nodes
/// outside B3 (support convention) and carries a constant zero tail.
struct EnvelopeResult {
  GridField gamma;
  /// One selected element of the subdifferential per node (second component
  /// unused in 1D). Each plane gamma(x) + g.(z - x) minorizes gamma at every
  /// node z.
  std::vector<std::array<double, 2>> subgradient;
  /// Flat node indices inside B3 where u agrees with gamma within contact_tol.
  std::vector<long> contact_nodes;
  double contact_tol = 0.0;
  double support_radius = 3.0;
};

/// Largest function below min(u, 0) on B3 nodes that is a supremum of affine
/// minorants (the lower convex hull of the epigraph points). contact_tol = 0
/// selects the default 4 h^2 max(1, measured curvature scale).
/// Preconditions: box radius >= 3 and u >= 0 outside B1 (nodes and tail).
/// check_exterior = false skips the positivity precondition; that path exists
/// for the idempotence certificate (gamma itself is negative beyond B1).
EnvelopeResult convex_envelope(const GridField& u, double contact_tol = 0.0, bool check_exterior = true);

/// ((1 - alpha) lambda (2 - sigma) / (b (1 - tau)))^(1/(sigma - tau)).
/// Returns +infinity when b = 0. alpha must lie in (0, 1).
double interpolation_radius(const EllipticityParams& params, double alpha);

/// Shell R_k = B_{r_k} \ B_{r_{k+1}} of the dyadic schedule
/// r_k = rho0 2^(-1/(2-sigma)-k).
struct DyadicRing {
  double r = 0.0;
  double r_next = 0.0;
};

std::vector<DyadicRing> dyadic_rings(double sigma, double rho0, int k_max);

/// Outcome of the ring-opening scan at a contact node: the first dyadic ring
/// where the fraction of nodes rising above the tangent plane by more than
/// M r_k^2 stays within c0 F / M.
struct RingOpeningResult {
  bool found = false;
  int k = -1;
  double fraction = 0.0;
  double f_value = 0.0;
  double bound = 0.0;
  std::vector<double> fractions;
  std::vector<long> ring_node_counts;
};

RingOpeningResult ring_opening_test(const GridField& u, const EnvelopeResult& env, long node, double m_opening,
                                    const EllipticityParams& params, double f_at_x, double c0, double rho0,
                                    int k_max);

/// Knobs for the cube cover. Zeros select the defaults: rho0 = 1/(128 sqrt n),
/// dilation = 32 sqrt n, minimum cube diameter 4 h (cubes that would have to
/// split below it are retained and flagged).
struct AbpConfig {
  double rho0 = 0.0;
  double dilation = 0.0;
  double big_c = 16.0;
  double mu = 0.05;
  double min_diameter = 0.0;
  double c_refine = 0.0; ///< 0 keeps big_c for the good-set opening constant
};

struct AbpCube {
  std::array<double, 2> center{};
  double side = 0.0;
  double diameter = 0.0;
  int depth = 0;
  double max_f = 0.0;          ///< max of F = f + b sup|u| over contact nodes in the closure
  double grad_image = 0.0;     ///< bounding-box volume of subgradients over closure nodes
  double good_fraction = 0.0;  ///< |good set in dilation Q| / |Q| (node measure)
  double good_fraction_alt = 0.0; ///< same at the alternate dilation 8 sqrt n
  bool crit_good = false;
  bool crit_grad = false;
  bool resolution_limited = false;
};

struct CubeCover {
  std::vector<AbpCube> cubes;
  double grad_image_total = 0.0; ///< sum of per-cube gradient-image measures
  double grad_image_hull = 0.0;  ///< bounding-box volume over all covered nodes
  double max_u_minus = 0.0;
  double rho0 = 0.0;
  double d0 = 0.0;
  double dilation = 0.0;
  long contact_count = 0;
  long uncovered_contact = 0; ///< contact nodes in the unit box missed by the cover
};

/// Recursive tiling of the unit box into cubes of diameter at most
/// rho0 2^(-1/(2-sigma)); cubes not touching the contact set are discarded,
/// cubes failing the good-measure or gradient-image criteria split into 2^n
/// congruent halves until they pass or hit the resolution floor.
CubeCover abp_cover(const GridField& u, const EnvelopeResult& env, const GridField& f,
                    const EllipticityParams& params, const AbpConfig& cfg = {});

} // namespace nlelab
