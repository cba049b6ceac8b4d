#include "core/regularity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/fit.hpp"

namespace nlelab {

namespace {

constexpr double kOscFloor = 1e-12;
constexpr int kSamplesPerRadius = 32;

std::string point_str(double x0, double x1, int dim) {
  std::string s = "(" + std::to_string(x0);
  if (dim == 2) s += ", " + std::to_string(x1);
  return s + ")";
}

double radial(const GridField& u, long id) {
  const auto c = u.node_coords(id);
  const double y = u.dim() == 2 ? c[1] : 0.0;
  return std::sqrt(c[0] * c[0] + y * y);
}

/// Min/max of u over the dense interpolated sample of the ball B_r(center):
/// 32 samples per radius per axis, restricted to the Euclidean ball in 2d.
void ball_extremes(const GridField& u, double c0, double c1, double r, double& mn, double& mx) {
  const int n = kSamplesPerRadius;
  if (u.dim() == 1) {
    for (int i = -n; i <= n; ++i) {
      const double v = u.eval(c0 + r * i / n, 0.0);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    return;
  }
  for (int i = -n; i <= n; ++i) {
    for (int j = -n; j <= n; ++j) {
      if (i * i + j * j > n * n) continue;
      const double v = u.eval(c0 + r * i / n, c1 + r * j / n);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
  }
}

/// Snap a coordinate to the nearest grid node inside the box.
double snap_node(double x, double h, double box) {
  const double s = std::round(x / h) * h;
  return std::clamp(s, -box + h, box - h);
}

/// Certified error bar of one operator evaluation for pre/post checks.
double eval_error(const OperatorValue& v, double scale) {
  return v.quad_error + v.truncation_bound + 1e-9 * (1.0 + std::abs(scale));
}

/// Probe points for the extremal inequality checks: origin plus one snapped
/// point per axis direction at 0.55 of the probe radius.
std::vector<std::array<double, 2>> probe_points(const GridField& u, double probe_r) {
  const double h = u.spacing();
  const double box = u.box_radius();
  std::vector<std::array<double, 2>> pts;
  auto push = [&](double a, double b) {
    const std::array<double, 2> q = {snap_node(a, h, box), u.dim() == 2 ? snap_node(b, h, box) : 0.0};
    for (const auto& e : pts) {
      if (e[0] == q[0] && e[1] == q[1]) return;
    }
    pts.push_back(q);
  };
  push(0.0, 0.0);
  push(0.55 * probe_r, 0.0);
  push(-0.55 * probe_r, 0.0);
  if (u.dim() == 2) {
    push(0.0, 0.55 * probe_r);
    push(0.0, -0.55 * probe_r);
  }
  return pts;
}

} // namespace

double kappa(const EllipticityParams& p, double sup_norm, double eps0) {
  if (!(eps0 > 0.0) || !std::isfinite(eps0)) fail(Errc::invalid_parameter, "kappa requires eps0 > 0");
  if (!(sup_norm >= 0.0) || !std::isfinite(sup_norm)) {
    fail(Errc::invalid_parameter, "kappa requires a nonnegative finite sup norm");
  }
  const auto hyp = check_hypotheses(p);
  if (!hyp.params_ok || !hyp.h2 || !(p.sigma > p.tau)) {
    fail(Errc::precondition, "kappa requires the order gap sigma - tau >= m > 0");
  }
  return eps0 / std::pow(1.0 + sup_norm, 1.0 / (p.sigma - p.tau));
}

std::vector<long> nodes_in_ball(const GridField& u, double radius, std::size_t cap) {
  if (!(radius > 0.0) || !std::isfinite(radius)) fail(Errc::invalid_parameter, "ball radius must be positive");
  if (cap == 0) fail(Errc::invalid_parameter, "node cap must be positive");
  std::vector<long> ids;
  const double lim = radius * (1.0 + 1e-12);
  for (long i = 0; i < u.node_count(); ++i) {
    if (radial(u, i) <= lim) ids.push_back(i);
  }
  if (ids.size() <= cap) return ids;
  const std::size_t stride = (ids.size() + cap - 1) / cap;
  std::vector<long> out;
  for (std::size_t k = 0; k < ids.size(); k += stride) out.push_back(ids[k]);
  return out;
}

OscillationTrace oscillation_decay(const GridField& u, std::span<const double> center, double r0, int k_max) {
  if (!(r0 > 0.0) || !std::isfinite(r0)) fail(Errc::invalid_parameter, "oscillation_decay requires r0 > 0");
  if (k_max < 0) fail(Errc::invalid_parameter, "oscillation_decay requires k_max >= 0");
  if (center.size() < static_cast<std::size_t>(u.dim())) {
    fail(Errc::invalid_parameter, "center has fewer coordinates than the field dimension");
  }
  const double c0 = center[0];
  const double c1 = u.dim() == 2 ? center[1] : 0.0;
  const double box = u.box_radius() * (1.0 + 1e-12);
  if (std::abs(c0) > box || std::abs(c1) > box) {
    fail(Errc::invalid_parameter, "oscillation center " + point_str(c0, c1, u.dim()) + " lies outside the grid box");
  }

  OscillationTrace tr;
  tr.center = {c0, c1};
  const double rmin = 2.0 * u.spacing();
  for (int k = 0; k <= k_max; ++k) {
    const double r = r0 * std::pow(4.0, -k);
    if (r < rmin) break;
    tr.radii.push_back(r);
  }
  const std::size_t n = tr.radii.size();
  tr.osc_values.assign(n, 0.0);

  // Accumulate from the smallest ball outward so that each oscillation uses
  // the union of all finer samples; this keeps the sequence nonincreasing.
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = n; k-- > 0;) {
    ball_extremes(u, c0, c1, tr.radii[k], mn, mx);
    tr.osc_values[k] = mx - mn;
  }

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < n; ++k) {
    if (tr.osc_values[k] >= kOscFloor) {
      xs.push_back(std::log(tr.radii[k]));
      ys.push_back(std::log(tr.osc_values[k]));
    }
  }
  if (xs.size() >= 4) {
    const LineFit f = fit_line(xs, ys);
    tr.fitted_alpha = f.slope;
    tr.fit_r2 = f.r2;
    tr.alpha_valid = true;
  }
  return tr;
}

TailFit point_estimate(const GridField& u, const EllipticityParams& p, double c0, double eps0,
                       const QuadratureConfig& quad) {
  if (!std::isfinite(c0)) fail(Errc::invalid_parameter, "point_estimate requires a finite bound c0");
  const double sup = u.sup_norm();
  const double kap = kappa(p, sup, eps0);

  // u >= 0 everywhere: every node, then the tail (exactly for constant tails,
  // on deterministic radial shell samples for callable ones).
  for (long i = 0; i < u.node_count(); ++i) {
    if (u.value(i) < 0.0) {
      const auto c = u.node_coords(i);
      fail(Errc::precondition, "point_estimate requires u >= 0; value " + std::to_string(u.value(i)) +
                                   " at node x = " + point_str(c[0], c[1], u.dim()));
    }
  }
  if (u.tail().is_const) {
    if (u.tail().value < 0.0) {
      fail(Errc::precondition, "point_estimate requires u >= 0; the constant tail is negative");
    }
  } else {
    const double R = u.box_radius();
    for (int ir = 1; ir <= 16; ++ir) {
      const double r = R * std::pow(1000.0, ir / 16.0);
      if (u.dim() == 1) {
        for (double s : {-1.0, 1.0}) {
          if (u.eval(s * r, 0.0) < -1e-12) {
            fail(Errc::precondition, "point_estimate requires u >= 0; tail sample at x = " + point_str(s * r, 0.0, 1));
          }
        }
      } else {
        for (int ia = 0; ia < 16; ++ia) {
          const double th = 2.0 * std::numbers::pi * (ia + 0.5) / 16.0;
          const double x0 = r * std::cos(th), x1 = r * std::sin(th);
          if (u.eval(x0, x1) < -1e-12) {
            fail(Errc::precondition, "point_estimate requires u >= 0; tail sample at x = " + point_str(x0, x1, 2));
          }
        }
      }
    }
  }

  if (kap > u.box_radius() * (1.0 + 1e-12)) {
    fail(Errc::precondition, "dilated unit ball exceeds the grid box: kappa = " + std::to_string(kap));
  }

  // Minus-extremal bound on a node sample of the dilated ball B_{2 kappa}.
  const double reach = std::min(2.0 * kap, u.box_radius() - u.spacing());
  for (const auto& q : probe_points(u, reach / 0.55 * 0.5)) {
    const double x[2] = {q[0], q[1]};
    const auto v = eval_m_l0(u, std::span<const double>(x, u.dim()), p, Sign::minus, quad);
    if (v.value - eval_error(v, c0) > c0) {
      fail(Errc::precondition, "minus-extremal bound fails at x = " + point_str(q[0], q[1], u.dim()) +
                                   ": value " + std::to_string(v.value) + " exceeds " + std::to_string(c0));
    }
  }

  // Super-level measures of the dilated field over B_1: its nodes inside the
  // unit ball are exactly the nodes of u inside B_kappa.
  TailFit tf;
  tf.kappa = kap;
  std::vector<double> vals;
  const double lim = kap * (1.0 + 1e-12);
  for (long i = 0; i < u.node_count(); ++i) {
    if (radial(u, i) <= lim) vals.push_back(u.value(i));
  }
  tf.nodes_in_ball = static_cast<int>(vals.size());
  if (vals.empty()) {
    tf.degenerate = true;
    return tf;
  }
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  const double vmax = sorted.back();
  if (!(vmax > 0.0)) {
    tf.degenerate = true;
    return tf;
  }

  // Geometric ladder between the lower quartile and just under the max; when
  // the values are near constant, straddle the level instead.
  double tlo = sorted[sorted.size() / 4];
  double thi = 0.995 * vmax;
  if (!(tlo > 0.0)) tlo = vmax * 1e-3;
  if (!(tlo < 0.999 * thi)) {
    tlo = 0.5 * vmax;
    thi = 2.0 * vmax;
  }
  const double vol = u.dim() == 1 ? 2.0 : std::numbers::pi;
  const int nt = 16;
  int informative = 0;
  for (int i = 0; i < nt; ++i) {
    const double t = tlo * std::pow(thi / tlo, i / (nt - 1.0));
    long cnt = 0;
    for (double v : vals) cnt += v > t ? 1 : 0;
    const double measure = vol * static_cast<double>(cnt) / static_cast<double>(vals.size());
    tf.thresholds.push_back(t);
    tf.measures.push_back(measure);
    if (measure > 0.0 && measure < vol * (1.0 - 1e-15)) ++informative;
  }
  tf.degenerate = informative < 2;

  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < tf.thresholds.size(); ++i) {
    if (tf.measures[i] > 0.0) {
      xs.push_back(std::log(tf.thresholds[i]));
      ys.push_back(std::log(tf.measures[i]));
    }
  }
  if (xs.size() >= 2) {
    const LineFit f = fit_line(xs, ys);
    tf.fitted_eps = std::max(0.0, -f.slope);
    tf.fit_r2 = f.r2;
  }
  for (std::size_t i = 0; i < tf.thresholds.size(); ++i) {
    if (tf.measures[i] > 0.0) {
      tf.envelope_c = std::max(tf.envelope_c, tf.measures[i] * std::pow(tf.thresholds[i], tf.fitted_eps));
    }
  }
  return tf;
}

HolderReport holder_certificate(const GridField& u, const EllipticityParams& p, double c0,
                                std::span<const long> centers, double r0, int k_max,
                                const QuadratureConfig& quad) {
  if (!std::isfinite(c0)) fail(Errc::invalid_parameter, "holder_certificate requires a finite c0");
  if (k_max < 0) fail(Errc::invalid_parameter, "holder_certificate requires k_max >= 0");

  HolderReport rep;
  if (centers.empty()) {
    rep.centers = nodes_in_ball(u, 0.5, 257);
  } else {
    for (long id : centers) {
      if (id < 0 || id >= u.node_count()) fail(Errc::invalid_parameter, "center node id out of range");
    }
    rep.centers.assign(centers.begin(), centers.end());
  }
  if (rep.centers.empty()) fail(Errc::precondition, "no centers available inside B_{1/2}");

  // Smallest dyadic start radius that leaves four resolved scales.
  const double r0e = r0 > 0.0 ? r0 : std::max(0.25, 128.0 * u.spacing());
  const double sup = u.sup_norm();
  const double denom = std::max(sup + std::max(c0, 0.0), 1e-300);

  std::vector<double> alphas;
  for (long id : rep.centers) {
    const auto c = u.node_coords(id);
    const double cc[2] = {c[0], c[1]};
    OscillationTrace tr = oscillation_decay(u, std::span<const double>(cc, u.dim()), r0e, k_max);
    if (tr.alpha_valid) {
      alphas.push_back(tr.fitted_alpha);
      for (std::size_t k = 0; k < tr.radii.size(); ++k) {
        if (tr.osc_values[k] >= kOscFloor) {
          rep.c_emp = std::max(rep.c_emp, tr.osc_values[k] / (denom * std::pow(tr.radii[k], tr.fitted_alpha)));
        }
      }
    }
    rep.traces.push_back(std::move(tr));
  }
  rep.centers_used = static_cast<int>(rep.centers.size());
  rep.centers_valid = static_cast<int>(alphas.size());
  if (!alphas.empty()) {
    std::sort(alphas.begin(), alphas.end());
    rep.alpha_min = alphas.front();
    rep.alpha_median = alphas[alphas.size() / 2];
  }

  // Two-sided extremal probe: plus-operator above -c0 and minus-operator
  // below c0, certified against the evaluation error bars. Reported, not
  // enforced, so negative controls can flow through the same pipeline.
  const double probe_r = std::min(0.75, u.box_radius() - u.spacing());
  double margin = -std::numeric_limits<double>::infinity();
  for (const auto& q : probe_points(u, probe_r)) {
    const double x[2] = {q[0], q[1]};
    const auto vp = eval_m_l0(u, std::span<const double>(x, u.dim()), p, Sign::plus, quad);
    const auto vm = eval_m_l0(u, std::span<const double>(x, u.dim()), p, Sign::minus, quad);
    margin = std::max(margin, (-c0) - (vp.value + eval_error(vp, c0)));
    margin = std::max(margin, (vm.value - eval_error(vm, c0)) - c0);
  }
  rep.inequality_margin = margin;
  rep.inequalities_hold = margin <= 0.0;
  return rep;
}

C1AlphaReport c1alpha_pipeline(const GridField& u, const EllipticityParams& p, double abar, double delta,
                               const QuadratureConfig& quad) {
  if (!(abar > 0.0 && abar <= 1.0) || !std::isfinite(abar)) {
    fail(Errc::invalid_parameter, "c1alpha_pipeline requires abar in (0, 1]");
  }
  const int kcount = static_cast<int>(std::floor(1.0 / abar));
  C1AlphaReport rep;
  rep.abar = abar;
  rep.delta = delta > 0.0 ? delta : 1.0 / (4.0 * kcount);
  if (!(rep.delta > 0.0 && rep.delta <= 0.25)) {
    fail(Errc::invalid_parameter, "c1alpha_pipeline requires delta in (0, 1/4]");
  }

  const double h = u.spacing();
  const double supu = std::max(u.sup_norm(), 1e-300);
  const int dirs = u.dim();
  static constexpr double kAxes[2][2] = {{1.0, 0.0}, {0.0, 1.0}};

  for (int k = 0; k < kcount; ++k) {
    const double ball = 0.75 - (k + 1) * rep.delta;
    if (ball < 8.0 * h) {
      rep.completed = false;
      rep.k_reached = k;
      return rep;
    }
    C1AlphaStage st;
    st.k = k;
    st.exponent = std::min(k * abar, 1.0);
    st.ball_radius = ball;
    const double supball = 0.75 - k * rep.delta;
    for (int d = 0; d < dirs; ++d) {
      const std::span<const double> e(kAxes[d], static_cast<std::size_t>(u.dim()));
      GridField w = incremental_quotient(u, h, e, st.exponent);
      for (long id : nodes_in_ball(w, std::min(supball, w.box_radius()), std::size_t(1) << 40)) {
        st.quotient_sup = std::max(st.quotient_sup, std::abs(w.value(id)));
      }
      // The recorded Hoelder measurement follows the first axis; additional
      // directions contribute to the sup norm chain only.
      if (d == 0) {
        const auto centers = nodes_in_ball(w, ball / 2.0, 33);
        st.holder = holder_certificate(w, p, supu, centers, 0.0, 8, quad);
      }
    }
    st.norm_const = st.quotient_sup / supu;
    rep.stages.push_back(std::move(st));
  }
  rep.k_reached = kcount;
  rep.completed = true;

  // Final step: Hoelder exponent of the Lipschitz (exponent-1) quotients.
  double amin = std::numeric_limits<double>::infinity();
  double r2min = 0.0;
  std::vector<double> all_alpha;
  std::vector<const OscillationTrace*> final_traces;
  std::vector<HolderReport> finals;
  for (int d = 0; d < dirs; ++d) {
    const std::span<const double> e(kAxes[d], static_cast<std::size_t>(u.dim()));
    GridField w = incremental_quotient(u, h, e, 1.0);
    const auto centers = nodes_in_ball(w, 0.25, 65);
    finals.push_back(holder_certificate(w, p, supu, centers, 0.0, 8, quad));
  }
  for (const auto& hr : finals) {
    for (const auto& tr : hr.traces) {
      if (!tr.alpha_valid) continue;
      all_alpha.push_back(tr.fitted_alpha);
      if (tr.fitted_alpha < amin) {
        amin = tr.fitted_alpha;
        r2min = tr.fit_r2;
      }
    }
  }
  if (!all_alpha.empty()) {
    std::sort(all_alpha.begin(), all_alpha.end());
    rep.final_alpha = amin;
    rep.final_alpha_median = all_alpha[all_alpha.size() / 2];
    rep.final_r2 = r2min;
    for (const auto& hr : finals) {
      for (const auto& tr : hr.traces) {
        for (std::size_t i = 0; i < tr.radii.size(); ++i) {
          if (tr.osc_values[i] >= kOscFloor) {
            rep.c1alpha_modulus =
                std::max(rep.c1alpha_modulus, tr.osc_values[i] / std::pow(tr.radii[i], rep.final_alpha));
          }
        }
      }
    }
  }
  return rep;
}

SpecialFunctionReport special_function_check(const GridField& phi, const EllipticityParams& p,
                                             const QuadratureConfig& quad, double tol) {
  if (!(tol >= 0.0) || !std::isfinite(tol)) fail(Errc::invalid_parameter, "tol must be nonnegative");
  const int dim = phi.dim();
  const double rsup = 2.0 * std::sqrt(static_cast<double>(dim));
  if (phi.box_radius() < rsup - 1e-12) {
    fail(Errc::precondition, "grid box must cover the support radius 2 sqrt(n)");
  }
  if (!phi.tail().is_const || std::abs(phi.tail().value) > 1e-15) {
    fail(Errc::precondition, "candidate must vanish outside its support: constant zero tail required");
  }
  for (long i = 0; i < phi.node_count(); ++i) {
    const auto c = phi.node_coords(i);
    const double y = dim == 2 ? c[1] : 0.0;
    const double r = std::sqrt(c[0] * c[0] + y * y);
    const double v = phi.value(i);
    if (r >= rsup - 1e-12 && std::abs(v) > 1e-12) {
      fail(Errc::precondition, "support violation: value " + std::to_string(v) + " at x = " + point_str(c[0], y, dim));
    }
    const double linf = std::max(std::abs(c[0]), std::abs(y));
    if (linf <= 1.5 + 1e-12 && !(v < -2.0)) {
      fail(Errc::precondition,
           "level violation on the cube of side 3: value " + std::to_string(v) + " at x = " + point_str(c[0], y, dim));
    }
  }

  SpecialFunctionReport rep;
  rep.tol = tol;
  rep.max_outside = -std::numeric_limits<double>::infinity();

  // Sample nodes outside B_{1/4} up to one cell from the box edge.
  std::vector<long> outside;
  const double edge = phi.box_radius() - phi.spacing();
  for (long i = 0; i < phi.node_count(); ++i) {
    const auto c = phi.node_coords(i);
    const double y = dim == 2 ? c[1] : 0.0;
    const double r = std::sqrt(c[0] * c[0] + y * y);
    if (r > 0.25 && std::abs(c[0]) <= edge && std::abs(y) <= edge) outside.push_back(i);
  }
  if (outside.size() > 257) {
    const std::size_t stride = (outside.size() + 256) / 257;
    std::vector<long> strided;
    for (std::size_t k = 0; k < outside.size(); k += stride) strided.push_back(outside[k]);
    outside.swap(strided);
  }
  for (long id : outside) {
    const auto c = phi.node_coords(id);
    const double x[2] = {c[0], dim == 2 ? c[1] : 0.0};
    const auto v = eval_extremal_even(phi, std::span<const double>(x, dim), p, Sign::plus, quad);
    const double certified = v.value + v.quad_error + v.truncation_bound;
    if (certified > rep.max_outside) {
      rep.max_outside = certified;
      rep.argmax_outside = {x[0], x[1]};
    }
  }
  rep.outside_samples = static_cast<int>(outside.size());

  // Measured psi bound: positive part of the operator on closed B_{1/4}.
  for (long id : nodes_in_ball(phi, 0.25, 65)) {
    const auto c = phi.node_coords(id);
    const double x[2] = {c[0], dim == 2 ? c[1] : 0.0};
    const auto v = eval_extremal_even(phi, std::span<const double>(x, dim), p, Sign::plus, quad);
    rep.psi_bound = std::max(rep.psi_bound, std::max(v.value, 0.0));
  }

  rep.ok = rep.outside_samples > 0 && rep.max_outside <= tol;
  return rep;
}

} // namespace nlelab
