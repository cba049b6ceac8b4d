#include "core/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "core/envelope.hpp"
#include "core/error.hpp"
#include "core/parallel.hpp"

namespace nlelab {

namespace {

constexpr double kNodeSnap = 1e-9; // matches the grid interpolation snapping
constexpr int kInnerDecades = 6;
constexpr int kInnerAngles = 512;

double surface_factor(int dim) { return dim == 1 ? 2.0 : 2.0 * M_PI; }

struct QuadPt {
  double y0, y1, rho, w;
};

/// Ring layout identical to the point-evaluation quadrature: midpoint-in-log
/// rings, radial weight rho_mid^dim * ln(ratio), uniform directions.
std::vector<QuadPt> build_rings(int dim, double r_lo, double r_hi, int rpd, int angular) {
  std::vector<QuadPt> pts;
  if (!(r_hi > r_lo) || !(r_lo > 0)) return pts;
  const int nrings = std::max(1, static_cast<int>(std::ceil(rpd * std::log10(r_hi / r_lo))));
  const double lstep = std::log(r_hi / r_lo) / nrings;
  pts.reserve(static_cast<std::size_t>(nrings) * (dim == 1 ? 2 : angular));
  for (int k = 0; k < nrings; ++k) {
    const double rho = r_lo * std::exp((k + 0.5) * lstep);
    if (dim == 1) {
      const double w = rho * lstep;
      pts.push_back({rho, 0.0, rho, w});
      pts.push_back({-rho, 0.0, rho, w});
    } else {
      const double w = rho * rho * lstep * (2.0 * M_PI / angular);
      for (int j = 0; j < angular; ++j) {
        const double th = 2.0 * M_PI * (j + 0.5) / angular;
        pts.push_back({rho * std::cos(th), rho * std::sin(th), rho, w});
      }
    }
  }
  return pts;
}

/// One interpolated field read, frozen to node indices and weights. Points
/// outside the grid box resolve against the tail: constant tails are read
/// from the applied field at apply time (tail_marker), callable tails are
/// frozen to their construction-time value.
struct Read {
  int n = 0;
  bool tail_marker = false;
  double fixed = 0.0;
  long idx[4] = {0, 0, 0, 0};
  double wt[4] = {0, 0, 0, 0};
};

void locate_axis(const GridField& g, double c, long& i, double& f) {
  const long naxis = g.nodes_per_axis();
  double t = (c + g.box_radius()) / g.spacing();
  t = std::clamp(t, 0.0, static_cast<double>(naxis - 1));
  i = static_cast<long>(std::floor(t));
  f = t - static_cast<double>(i);
  if (f < kNodeSnap) f = 0.0;
  if (f > 1.0 - kNodeSnap && i + 1 < naxis) {
    f = 0.0;
    ++i;
  }
  if (i >= naxis - 1) {
    i = naxis - 1;
    f = 0.0;
  }
}

Read make_read(const GridField& g, double x0, double x1) {
  Read r;
  const double pad = g.box_radius() * (1.0 + 1e-12);
  const int dim = g.dim();
  if (x0 < -pad || x0 > pad || (dim == 2 && (x1 < -pad || x1 > pad))) {
    r.n = 0;
    if (g.tail().is_const) {
      r.tail_marker = true;
    } else {
      r.fixed = g.eval(x0, x1); // outside the box this is the tail value
    }
    return r;
  }
  long i0, i1 = 0;
  double f0, f1 = 0.0;
  locate_axis(g, x0, i0, f0);
  if (dim == 2) locate_axis(g, x1, i1, f1);
  const long i0p = f0 > 0 ? i0 + 1 : i0;
  const long i1p = f1 > 0 ? i1 + 1 : i1;
  const double w00 = (1 - f1) * (1 - f0);
  const double w10 = (1 - f1) * f0;
  const double w01 = f1 * (1 - f0);
  const double w11 = f1 * f0;
  const long c00 = g.flat_index(i0, i1), c10 = g.flat_index(i0p, i1);
  const long c01 = g.flat_index(i0, i1p), c11 = g.flat_index(i0p, i1p);
  const long cand_idx[4] = {c00, c10, c01, c11};
  const double cand_wt[4] = {w00, w10, w01, w11};
  for (int k = 0; k < 4; ++k) {
    if (cand_wt[k] == 0.0) continue;
    r.idx[r.n] = cand_idx[k];
    r.wt[r.n] = cand_wt[k];
    ++r.n;
  }
  if (r.n == 0) { // all weights zero can only mean the exact node c00
    r.idx[0] = c00;
    r.wt[0] = 1.0;
    r.n = 1;
  }
  return r;
}

inline double apply_read(const Read& r, const GridField& u, double tail_c) {
  if (r.n == 0) return r.tail_marker ? tail_c : r.fixed;
  double s = 0.0;
  for (int k = 0; k < r.n; ++k) s += r.wt[k] * u.value(r.idx[k]);
  return s;
}

/// Geometric-decay extrapolation of a decade series, identical to the inner
/// model used by the point evaluations.
double extrapolate_series(const double* dec) {
  const double last = dec[kInnerDecades - 1], prev = dec[kInnerDecades - 2];
  if (prev == 0.0 || last == 0.0) return 0.0;
  const double q = last / prev;
  if (!(q > 0.0) || q > 0.995) return 0.0;
  return last * q / (1.0 - q);
}

/// Decade-resolved inner-ball coefficients of a linear kernel: the model
/// contribution is cxx*hxx + cxy*hxy + cyy*hyy (even) and cgx*gx + cgy*gy
/// (odd), accumulated per decade so the decay extrapolation can run on the
/// combined series at apply time.
struct MemberInner {
  double cxx[kInnerDecades] = {};
  double cxy[kInnerDecades] = {};
  double cyy[kInnerDecades] = {};
  double cgx[kInnerDecades] = {};
  double cgy[kInnerDecades] = {};
};

MemberInner build_member_inner(const KernelSpec& k, int dim, double r_inner) {
  MemberInner mi;
  for (int d = 0; d < kInnerDecades; ++d) {
    const double hi = r_inner * std::pow(10.0, -d);
    const double lo = hi / 10.0;
    const auto pts = build_rings(dim, lo, hi, 16, 64);
    for (const auto& q : pts) {
      const std::array<double, 2> y = {q.y0, q.y1};
      const auto sp = std::span<const double>(y.data(), static_cast<std::size_t>(dim));
      const double ke = k.even(sp);
      const double ko = k.odd(sp);
      mi.cxx[d] += q.w * q.y0 * q.y0 * ke;
      mi.cxy[d] += q.w * 2.0 * q.y0 * q.y1 * ke;
      mi.cyy[d] += q.w * q.y1 * q.y1 * ke;
      mi.cgx[d] += q.w * 2.0 * q.y0 * ko;
      mi.cgy[d] += q.w * 2.0 * q.y1 * ko;
    }
  }
  return mi;
}

double member_inner_value(const MemberInner& mi, double hxx, double hxy, double hyy, double gx, double gy) {
  double even_dec[kInnerDecades], odd_dec[kInnerDecades];
  double even = 0.0, odd = 0.0;
  for (int d = 0; d < kInnerDecades; ++d) {
    even_dec[d] = mi.cxx[d] * hxx + mi.cxy[d] * hxy + mi.cyy[d] * hyy;
    odd_dec[d] = mi.cgx[d] * gx + mi.cgy[d] * gy;
    even += even_dec[d];
    odd += odd_dec[d];
  }
  return even + extrapolate_series(even_dec) + odd + extrapolate_series(odd_dec);
}

struct AngleTables {
  double cc[kInnerAngles];
  double cs[kInnerAngles];
  double ss[kInnerAngles];
  AngleTables() {
    for (int j = 0; j < kInnerAngles; ++j) {
      const double th = 2.0 * M_PI * (j + 0.5) / kInnerAngles;
      const double c = std::cos(th), s = std::sin(th);
      cc[j] = c * c;
      cs[j] = c * s;
      ss[j] = s * s;
    }
  }
};

const AngleTables& angle_tables() {
  static const AngleTables t;
  return t;
}

/// Numeric even tail mass beyond r for kernels without an analytic closure,
/// mirroring the ring extension of the point evaluations (unit tail jump).
double numeric_even_tail_mass(const KernelSpec& k, int dim, double r_cov) {
  double r_lo = r_cov;
  double acc = 0.0;
  const auto& kp = k.params();
  for (int d = 0; d < 10; ++d) {
    const double r_hi = r_lo * 10.0;
    const auto pts = build_rings(dim, r_lo, r_hi, 16, 64);
    double part = 0.0;
    for (const auto& q : pts) {
      const std::array<double, 2> y = {q.y0, q.y1};
      part += q.w * k.even(std::span<const double>(y.data(), static_cast<std::size_t>(dim)));
    }
    acc += part;
    r_lo = r_hi;
    const double rem = (2.0 - kp.sigma) * kp.lambda_hi * surface_factor(dim) /
                       (kp.sigma * std::pow(r_lo, kp.sigma));
    if (rem < 1e-13 * std::max(1.0, std::abs(acc)) && d >= 2) break;
  }
  return acc;
}

struct NodeSten {
  double x0 = 0.0, x1 = 0.0;
  std::vector<Read> up, um;              // per kept quadrature point
  std::vector<double> ke, ko;            // extremal weights per point
  std::vector<std::vector<double>> we;   // per member per point
  std::vector<std::vector<double>> wo;   // per member per point
  double far_extremal = 0.0;             // collapsed const-tail even mass (class kernels)
  std::vector<double> far_member;        // collapsed const-tail even mass per member
  long nb[9] = {};                       // 3^dim inner-model stencil, row-major
  double row_sum = 0.0;
};

} // namespace

DirichletProblem::DirichletProblem(OperatorKind op_, EllipticityParams params_, GridField rhs_,
                                   GridField exterior_, double domain_radius_, bool domain_is_box_)
    : op(op_),
      params(std::move(params_)),
      rhs(std::move(rhs_)),
      exterior(std::move(exterior_)),
      domain_radius(domain_radius_),
      domain_is_box(domain_is_box_) {
  if (rhs.dim() != exterior.dim() || rhs.nodes_per_axis() != exterior.nodes_per_axis() ||
      std::abs(rhs.box_radius() - exterior.box_radius()) > 1e-12 * (1.0 + exterior.box_radius())) {
    fail(Errc::invalid_parameter, "rhs and exterior data must share one grid");
  }
  if (params.dim != exterior.dim()) fail(Errc::invalid_parameter, "params dimension differs from the grid");
  if (!(domain_radius > 0)) fail(Errc::invalid_parameter, "domain radius must be positive");
  if (domain_radius + exterior.spacing() > exterior.box_radius() + 1e-12) {
    fail(Errc::precondition, "domain must sit strictly inside the grid box (one node layer at least)");
  }
}

struct DiscreteScheme::Impl {
  int dim = 1;
  long naxis = 0;
  double h = 0.0, box_r = 0.0;
  OperatorKind op{};
  EllipticityParams prm{};
  bool tail_const = true;
  bool plus_sign = true;
  bool has_drift = false;     // m_l0 kinds with b > 0
  double r0 = std::numeric_limits<double>::infinity();
  double r_inner = 0.0;
  bool taylor = true;
  double f_in_even = 0.0;     // pow(r_inner, 2 - sigma), extremal inner factor
  double f_in_odd = 0.0;      // pow(r_inner, 1 - tau)
  std::vector<std::pair<int, int>> groups; // member index ranges per group
  std::vector<MemberInner> member_inner;
  std::vector<long> interior;
  std::vector<NodeSten> nodes;
  double max_row = 0.0;
  double dt = 0.0;

  bool extremal_kind() const {
    return op == OperatorKind::m_sigma_plus || op == OperatorKind::m_sigma_minus ||
           op == OperatorKind::m_l0_plus || op == OperatorKind::m_l0_minus;
  }

  double node_value(const NodeSten& ns, const GridField& u, std::vector<double>& de_buf,
                    std::vector<double>& do_buf) const;
};

DiscreteScheme::DiscreteScheme(const DirichletProblem& p) : impl_(new Impl) {
  Impl& im = *impl_;
  const GridField& g = p.exterior;
  im.dim = g.dim();
  im.naxis = g.nodes_per_axis();
  im.h = g.spacing();
  im.box_r = g.box_radius();
  im.op = p.op;
  im.prm = p.params;
  im.tail_const = g.tail().is_const;

  // Operator wiring and hypothesis gate.
  std::vector<const KernelSpec*> members;
  switch (p.op) {
    case OperatorKind::m_sigma_plus:
    case OperatorKind::m_sigma_minus:
    case OperatorKind::m_l0_plus:
    case OperatorKind::m_l0_minus: {
      const auto hr = check_hypotheses(p.params);
      if (!hr.all()) fail(Errc::precondition, "hypotheses fail for the extremal operator: " + describe(hr));
      im.plus_sign = p.op == OperatorKind::m_sigma_plus || p.op == OperatorKind::m_l0_plus;
      im.has_drift =
          (p.op == OperatorKind::m_l0_plus || p.op == OperatorKind::m_l0_minus) && p.params.b > 0.0;
      break;
    }
    case OperatorKind::linear_kernel:
      if (p.kernel.params().dim != im.dim) fail(Errc::invalid_parameter, "kernel dimension differs");
      members.push_back(&p.kernel);
      im.groups.push_back({0, 1});
      break;
    case OperatorKind::family_inf_sup: {
      if (p.family.groups.empty()) fail(Errc::invalid_family, "empty kernel family");
      int next = 0;
      for (const auto& grp : p.family.groups) {
        if (grp.empty()) fail(Errc::invalid_family, "empty group in kernel family");
        const int start = next;
        for (const auto& k : grp) {
          if (k.params().dim != im.dim) fail(Errc::invalid_parameter, "family member dimension differs");
          members.push_back(&k);
          ++next;
        }
        im.groups.push_back({start, next});
      }
      break;
    }
  }

  // Quadrature resolution, mirroring the point evaluations.
  const int rpd = p.quad.rings_per_decade > 0 ? p.quad.rings_per_decade : 16;
  const int angular = p.quad.angular_points > 0 ? p.quad.angular_points : 32;
  im.taylor = p.quad.taylor_inner;
  im.r_inner = p.quad.r_inner > 0 ? p.quad.r_inner : 2.0 * im.h;
  const double r_outer = p.quad.r_outer > 0 ? p.quad.r_outer : 4.0 * im.box_r;
  if (!im.taylor && im.r_inner < 0.5 * im.h) {
    fail(Errc::resolution, "r_inner below grid resolution with the inner model disabled");
  }
  im.f_in_even = std::pow(im.r_inner, 2.0 - im.prm.sigma);
  im.f_in_odd = std::pow(im.r_inner, 1.0 - im.prm.tau);

  if (im.has_drift) {
    im.r0 = interpolation_radius(p.params, 0.5);
    if (!(im.r0 >= im.r_inner)) {
      std::ostringstream os;
      os << "odd truncation radius " << im.r0 << " is below the inner quadrature radius " << im.r_inner
         << "; refine the grid or reduce b";
      fail(Errc::resolution, os.str());
    }
  }

  // Inner-model coefficients per member (node independent).
  if (im.taylor) {
    for (const auto* k : members) im.member_inner.push_back(build_member_inner(*k, im.dim, im.r_inner));
  }

  // Interior node set.
  const double snap = 1e-12 * (1.0 + p.domain_radius);
  for (long i = 0; i < g.node_count(); ++i) {
    const auto xy = g.node_coords(i);
    const double r = p.domain_is_box ? std::max(std::abs(xy[0]), im.dim == 2 ? std::abs(xy[1]) : 0.0)
                                     : std::sqrt(xy[0] * xy[0] + (im.dim == 2 ? xy[1] * xy[1] : 0.0));
    if (r < p.domain_radius - snap) im.interior.push_back(i);
  }
  if (im.interior.empty()) fail(Errc::precondition, "domain contains no grid nodes");

  // Per-node stencils.
  const double sqrtn = im.dim == 1 ? 1.0 : std::sqrt(2.0);
  const double sigma = im.prm.sigma, tau = im.prm.tau;
  const bool extremal = im.extremal_kind();
  im.nodes.resize(im.interior.size());

  for (std::size_t k = 0; k < im.interior.size(); ++k) {
    NodeSten& ns = im.nodes[k];
    const auto xy = g.node_coords(im.interior[k]);
    ns.x0 = xy[0];
    ns.x1 = im.dim == 2 ? xy[1] : 0.0;
    const double xnorm = std::sqrt(ns.x0 * ns.x0 + ns.x1 * ns.x1);
    const double r_cov = std::max(r_outer, sqrtn * im.box_r + xnorm + im.h);
    if (!(im.r_inner < r_cov)) fail(Errc::resolution, "quadrature annulus is empty (r_inner too large)");

    const auto pts = build_rings(im.dim, im.r_inner, r_cov, rpd, angular);
    ns.we.assign(members.size(), {});
    ns.wo.assign(members.size(), {});
    ns.far_member.assign(members.size(), 0.0);
    double row_ring_extremal = 0.0;
    std::vector<double> row_ring_member(members.size(), 0.0);

    for (const auto& q : pts) {
      Read rup = make_read(g, ns.x0 + q.y0, ns.x1 + q.y1);
      Read rum = make_read(g, ns.x0 - q.y0, ns.x1 - q.y1);
      const bool both_tail = rup.n == 0 && rum.n == 0;
      if (extremal) {
        const double kew = q.w * (2.0 - sigma) * std::pow(q.rho, -(im.dim + sigma));
        if (both_tail && im.tail_const) {
          ns.far_extremal += kew;
          row_ring_extremal += kew;
          continue;
        }
        ns.up.push_back(rup);
        ns.um.push_back(rum);
        ns.ke.push_back(kew);
        row_ring_extremal += kew;
        if (im.has_drift) {
          ns.ko.push_back(q.rho <= im.r0 ? q.w * (1.0 - tau) * std::pow(q.rho, -(im.dim + tau)) : 0.0);
        }
      } else {
        const std::array<double, 2> y = {q.y0, q.y1};
        const auto sp = std::span<const double>(y.data(), static_cast<std::size_t>(im.dim));
        bool keep = !(both_tail && im.tail_const);
        if (keep) {
          ns.up.push_back(rup);
          ns.um.push_back(rum);
        }
        for (std::size_t m = 0; m < members.size(); ++m) {
          const double wev = q.w * members[m]->even(sp);
          const double wod = q.w * members[m]->odd(sp);
          // Discrete degenerate ellipticity: the even part must dominate the
          // odd part at every quadrature point, or node updates lose
          // monotonicity.
          if (std::abs(wod) > wev + 1e-12 * (std::abs(wev) + std::abs(wod) + 1e-300)) {
            std::ostringstream os;
            os << "kernel member " << m << " is not degenerate elliptic at |y| = " << q.rho
               << " (odd part exceeds even part)";
            fail(Errc::precondition, os.str());
          }
          row_ring_member[m] += wev;
          if (keep) {
            ns.we[m].push_back(wev);
            ns.wo[m].push_back(wod);
          } else {
            ns.far_member[m] += wev;
          }
        }
      }
    }

    // Constant-tail closure beyond the covered annulus.
    if (im.tail_const) {
      if (extremal) {
        const double closure =
            (2.0 - sigma) * surface_factor(im.dim) / (sigma * std::pow(r_cov, sigma));
        ns.far_extremal += closure;
        row_ring_extremal += closure;
      } else {
        for (std::size_t m = 0; m < members.size(); ++m) {
          const double mass = members[m]->even_tail_mass()
                                  ? members[m]->even_tail_mass()(r_cov)
                                  : numeric_even_tail_mass(*members[m], im.dim, r_cov);
          ns.far_member[m] += mass;
          row_ring_member[m] += mass;
        }
      }
    }

    // Inner-model stencil (3^dim nodes around the center).
    const long ix = std::clamp(static_cast<long>(std::llround((ns.x0 + im.box_r) / im.h)), 1L, im.naxis - 2);
    if (im.dim == 1) {
      ns.nb[0] = ix - 1;
      ns.nb[1] = ix;
      ns.nb[2] = ix + 1;
    } else {
      const long iy = std::clamp(static_cast<long>(std::llround((ns.x1 + im.box_r) / im.h)), 1L, im.naxis - 2);
      int c = 0;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) ns.nb[c++] = g.flat_index(ix + dx, iy + dy);
    }

    // Row sum: worst-case slope of the update with respect to the center.
    if (extremal) {
      const double Lam = im.prm.lambda_hi;
      double row = 2.0 * Lam * row_ring_extremal;
      if (im.taylor) row += (im.dim == 1 ? 4.0 : 4.0 * M_PI) * Lam * im.f_in_even / (im.h * im.h);
      ns.row_sum = row;
    } else {
      double worst = 0.0;
      for (std::size_t m = 0; m < members.size(); ++m) {
        double row = 2.0 * row_ring_member[m];
        if (im.taylor) {
          const auto& mi = im.member_inner[m];
          double cxx_eff = 0.0, cyy_eff = 0.0;
          for (int d = 0; d < kInnerDecades; ++d) {
            cxx_eff += std::abs(mi.cxx[d]);
            cyy_eff += std::abs(mi.cyy[d]);
          }
          cxx_eff += 2.0 * std::abs(mi.cxx[kInnerDecades - 1]);
          cyy_eff += 2.0 * std::abs(mi.cyy[kInnerDecades - 1]);
          row += 2.0 * (cxx_eff + cyy_eff) / (im.h * im.h);
        }
        worst = std::max(worst, row);
      }
      ns.row_sum = worst;
    }
    im.max_row = std::max(im.max_row, ns.row_sum);
  }

  if (!(im.max_row > 0.0) || !std::isfinite(im.max_row)) {
    fail(Errc::stiffness, "update row sums are degenerate (zero or non-finite)");
  }
  im.dt = 0.9 / im.max_row;
  if (!(im.dt > 0.0) || !std::isfinite(im.dt)) fail(Errc::stiffness, "pseudo-time step underflow");
}

DiscreteScheme::~DiscreteScheme() = default;
DiscreteScheme::DiscreteScheme(DiscreteScheme&&) noexcept = default;
DiscreteScheme& DiscreteScheme::operator=(DiscreteScheme&&) noexcept = default;

const std::vector<long>& DiscreteScheme::interior() const { return impl_->interior; }
double DiscreteScheme::max_row_sum() const { return impl_->max_row; }
double DiscreteScheme::dt() const { return impl_->dt; }
double DiscreteScheme::odd_truncation_radius() const { return impl_->r0; }

double DiscreteScheme::Impl::node_value(const NodeSten& ns, const GridField& u, std::vector<double>& de_buf,
                                        std::vector<double>& do_buf) const {
  const long center = dim == 1 ? ns.nb[1] : ns.nb[4];
  const double ux = u.value(center);
  const double lam = prm.lambda_lo, Lam = prm.lambda_hi;
  const double Lp = plus_sign ? Lam : lam; // multiplies positive even increments
  const double Lm = plus_sign ? lam : Lam;
  const double tail_c = tail_const ? u.tail().value : 0.0;
  const double dconst = 2.0 * (tail_c - ux);

  // Inner quadratic model from the 3^dim stencil (exact at a node center).
  double hxx = 0, hyy = 0, hxy = 0, gx = 0, gy = 0;
  if (taylor) {
    if (dim == 1) {
      const double vm = u.value(ns.nb[0]), v0 = u.value(ns.nb[1]), vp = u.value(ns.nb[2]);
      hxx = (vp + vm - 2 * v0) / (h * h);
      gx = (vp - vm) / (2 * h);
    } else {
      const double v00 = u.value(ns.nb[4]);
      const double vxm = u.value(ns.nb[3]), vxp = u.value(ns.nb[5]);
      const double vym = u.value(ns.nb[1]), vyp = u.value(ns.nb[7]);
      hxx = (vxp + vxm - 2 * v00) / (h * h);
      hyy = (vyp + vym - 2 * v00) / (h * h);
      hxy = (u.value(ns.nb[8]) + u.value(ns.nb[0]) - u.value(ns.nb[2]) - u.value(ns.nb[6])) / (4 * h * h);
      gx = (vxp - vxm) / (2 * h);
      gy = (vyp - vym) / (2 * h);
    }
  }

  if (extremal_kind()) {
    double even = 0.0, odd = 0.0;
    const std::size_t npt = ns.up.size();
    for (std::size_t i = 0; i < npt; ++i) {
      const double up = apply_read(ns.up[i], u, tail_c);
      const double um = apply_read(ns.um[i], u, tail_c);
      const double de = up + um - 2.0 * ux;
      even += ns.ke[i] * (Lp * std::max(de, 0.0) - Lm * std::max(-de, 0.0));
      if (has_drift) odd += ns.ko[i] * std::abs(up - um);
    }
    if (has_drift) odd *= (plus_sign ? prm.b : -prm.b);
    if (taylor) {
      if (dim == 1) {
        even += 2.0 * f_in_even * (Lp * std::max(hxx, 0.0) - Lm * std::max(-hxx, 0.0));
      } else {
        const auto& at = angle_tables();
        double acc = 0.0;
        for (int j = 0; j < kInnerAngles; ++j) {
          const double q = hxx * at.cc[j] + 2.0 * hxy * at.cs[j] + hyy * at.ss[j];
          acc += Lp * std::max(q, 0.0) - Lm * std::max(-q, 0.0);
        }
        even += f_in_even * acc * (2.0 * M_PI / kInnerAngles);
      }
      if (has_drift) {
        const double gn = dim == 1 ? std::abs(gx) : std::sqrt(gx * gx + gy * gy);
        odd += (plus_sign ? prm.b : -prm.b) * (dim == 1 ? 4.0 : 8.0) * gn * f_in_odd;
      }
    }
    if (tail_const && ns.far_extremal != 0.0) {
      even += ns.far_extremal * (Lp * std::max(dconst, 0.0) - Lm * std::max(-dconst, 0.0));
    }
    return even + odd;
  }

  // Linear members: share the per-point increments across the family.
  const std::size_t npt = ns.up.size();
  de_buf.resize(npt);
  do_buf.resize(npt);
  for (std::size_t i = 0; i < npt; ++i) {
    const double up = apply_read(ns.up[i], u, tail_c);
    const double um = apply_read(ns.um[i], u, tail_c);
    de_buf[i] = up + um - 2.0 * ux;
    do_buf[i] = up - um;
  }
  double out = 0.0;
  bool first_group = true;
  for (const auto& grp : groups) {
    double gmax = 0.0;
    bool first = true;
    for (int m = grp.first; m < grp.second; ++m) {
      double v = 0.0;
      const auto& wem = ns.we[static_cast<std::size_t>(m)];
      const auto& wom = ns.wo[static_cast<std::size_t>(m)];
      for (std::size_t i = 0; i < npt; ++i) v += wem[i] * de_buf[i] + wom[i] * do_buf[i];
      if (taylor) v += member_inner_value(member_inner[static_cast<std::size_t>(m)], hxx, hxy, hyy, gx, gy);
      if (tail_const) v += ns.far_member[static_cast<std::size_t>(m)] * dconst;
      if (first || v > gmax) gmax = v;
      first = false;
    }
    if (first_group || gmax < out) out = gmax;
    first_group = false;
  }
  return out;
}

std::vector<double> DiscreteScheme::apply(const GridField& u, int threads) const {
  const Impl& im = *impl_;
  if (u.dim() != im.dim || u.nodes_per_axis() != im.naxis ||
      std::abs(u.spacing() - im.h) > 1e-12 * (1.0 + im.h)) {
    fail(Errc::invalid_parameter, "field grid differs from the scheme grid");
  }
  if (u.tail().is_const != im.tail_const) {
    fail(Errc::invalid_parameter, "field tail kind differs from the scheme tail");
  }
  std::vector<double> out(im.interior.size(), 0.0);
  parallel_for(static_cast<long>(im.interior.size()), threads, [&](long lo, long hi) {
    std::vector<double> de_buf, do_buf;
    for (long k = lo; k < hi; ++k) {
      out[static_cast<std::size_t>(k)] = im.node_value(im.nodes[static_cast<std::size_t>(k)], u, de_buf, do_buf);
    }
  });
  return out;
}

SolveResult solve(const DirichletProblem& p, double tol, long max_iter, int threads) {
  if (!(tol > 0)) fail(Errc::invalid_parameter, "solver tolerance must be positive");
  if (max_iter < 1) fail(Errc::invalid_parameter, "max_iter must be at least 1");
  DiscreteScheme scheme(p);
  const auto& interior = scheme.interior();

  GridField u = p.exterior;
  std::vector<double> f(interior.size());
  for (std::size_t k = 0; k < interior.size(); ++k) f[k] = p.rhs.value(interior[k]);

  SolveReport rep;
  rep.dt_used = scheme.dt();
  rep.max_row_sum = scheme.max_row_sum();
  rep.odd_truncation_radius = scheme.odd_truncation_radius();
  const long stride = std::max(1L, max_iter / 512);

  double res = std::numeric_limits<double>::infinity();
  long it = 0;
  while (true) {
    const auto vals = scheme.apply(u, threads);
    res = 0.0;
    for (std::size_t k = 0; k < interior.size(); ++k) res = std::max(res, std::abs(vals[k] - f[k]));
    if (it % stride == 0) rep.residual_history.push_back(res);
    if (res <= tol) {
      rep.converged = true;
      break;
    }
    if (it >= max_iter) break;
    for (std::size_t k = 0; k < interior.size(); ++k) {
      u.set_value(interior[k], u.value(interior[k]) + rep.dt_used * (vals[k] - f[k]));
    }
    ++it;
  }
  if (rep.residual_history.empty() || rep.residual_history.back() != res) rep.residual_history.push_back(res);
  rep.iterations = it;
  rep.final_residual = res;
  return {std::move(u), rep};
}

namespace {

/// Deterministic sample of at most cap nodes with |x| in [r_lo, r_hi].
std::vector<long> ball_samples(const GridField& g, double r_lo, double r_hi, long cap) {
  std::vector<long> all;
  for (long i = 0; i < g.node_count(); ++i) {
    const auto xy = g.node_coords(i);
    const double r = std::sqrt(xy[0] * xy[0] + (g.dim() == 2 ? xy[1] * xy[1] : 0.0));
    if (r >= r_lo && r <= r_hi) all.push_back(i);
  }
  if (static_cast<long>(all.size()) <= cap) return all;
  std::vector<long> out;
  const long stride = (static_cast<long>(all.size()) + cap - 1) / cap;
  for (std::size_t k = 0; k < all.size(); k += static_cast<std::size_t>(stride)) out.push_back(all[k]);
  return out;
}

} // namespace

BarrierInteriorReport barrier_interior(const EllipticityParams& p, std::span<const double> s_grid,
                                       const QuadratureConfig& q) {
  const auto hr = check_hypotheses(p);
  if (!hr.all()) fail(Errc::precondition, "interior barrier requires H1-H3: " + describe(hr));
  if (s_grid.empty()) fail(Errc::invalid_parameter, "empty s grid");

  BarrierInteriorReport rep;
  for (double s : s_grid) {
    if (!(s > 0.0) || s > 1.0) fail(Errc::invalid_parameter, "barrier scale s must lie in (0, 1]");
    const double box = 2.0 / s;
    const long naxis = p.dim == 1 ? 513 : 129;
    const double h = 2.0 * box / static_cast<double>(naxis - 1);
    auto phi = GridField::from_function(
        p.dim, box, h,
        [s](std::span<const double> x) {
          double r2 = 0.0;
          for (double c : x) r2 += c * c;
          return std::min(1.0, s * s * r2 / 4.0);
        },
        Tail::constant(1.0));
    const auto samples = ball_samples(phi, 0.0, 1.0, p.dim == 1 ? 257 : 225);
    double mn = std::numeric_limits<double>::infinity();
    for (long i : samples) {
      const auto xy = phi.node_coords(i);
      const auto v = eval_m_l0(phi, std::span<const double>(xy.data(), static_cast<std::size_t>(p.dim)), p,
                               Sign::minus, q);
      mn = std::min(mn, v.value - v.quad_error - v.truncation_bound);
    }
    rep.s_values.push_back(s);
    rep.min_values.push_back(mn);
    if (mn > 0.0 && (!rep.found || s > rep.s_star)) {
      rep.found = true;
      rep.s_star = s;
      rep.delta_star = mn;
    }
  }
  return rep;
}

BarrierExteriorReport barrier_exterior(const EllipticityParams& p, double C, double alpha_b,
                                       const QuadratureConfig& q) {
  const auto hr = check_hypotheses(p);
  if (!hr.params_ok || !hr.h1) fail(Errc::precondition, "exterior barrier requires H1: " + describe(hr));
  if (!(C > 0.0) || !(alpha_b > 0.0) || alpha_b > 1.0) {
    fail(Errc::invalid_parameter, "exterior barrier needs C > 0 and alpha_b in (0, 1]");
  }

  BarrierExteriorReport rep;
  rep.c = C;
  rep.alpha_b = alpha_b;
  const double plateau = 1.0 + std::pow(C, -1.0 / alpha_b);
  const double box = std::max(3.0, plateau + 1.0);
  const long naxis = p.dim == 1 ? 513 : 129;
  const double h = 2.0 * box / static_cast<double>(naxis - 1);
  auto phi = GridField::from_function(
      p.dim, box, h,
      [C, alpha_b](std::span<const double> x) {
        double r2 = 0.0;
        for (double c : x) r2 += c * c;
        const double t = std::sqrt(r2) - 1.0;
        return t <= 0.0 ? 0.0 : std::min(1.0, C * std::pow(t, alpha_b));
      },
      Tail::constant(1.0));

  // The cusp at the unit sphere is below grid resolution; start four spacings out.
  const auto ring = ball_samples(phi, 1.0 + 4.0 * h, 2.0, p.dim == 1 ? 257 : 129);
  if (ring.empty()) fail(Errc::resolution, "no ring samples between B_1 and B_2 at this resolution");
  bool first = true;
  for (long i : ring) {
    const auto xy = phi.node_coords(i);
    const auto v = eval_m_l0(phi, std::span<const double>(xy.data(), static_cast<std::size_t>(p.dim)), p,
                             Sign::plus, q);
    const double upper = v.value + v.quad_error + v.truncation_bound;
    if (first || upper > rep.max_ring) {
      rep.max_ring = upper;
      rep.argmax_ring = xy;
    }
    first = false;
  }
  rep.holds_ring = rep.max_ring < 0.0;
  rep.delta = -rep.max_ring;

  const auto far = ball_samples(phi, 2.0 + h, box, 65);
  double mf = -std::numeric_limits<double>::infinity();
  for (long i : far) {
    const auto xy = phi.node_coords(i);
    const auto v = eval_m_l0(phi, std::span<const double>(xy.data(), static_cast<std::size_t>(p.dim)), p,
                             Sign::plus, q);
    mf = std::max(mf, v.value + v.quad_error + v.truncation_bound);
  }
  rep.max_far = far.empty() ? 0.0 : mf;
  rep.holds_far = rep.max_far <= 2e-9;
  rep.found = rep.holds_ring && rep.holds_far;
  return rep;
}

BarrierExteriorReport barrier_exterior_search(const EllipticityParams& p, std::span<const double> c_grid,
                                              std::span<const double> alpha_grid,
                                              const QuadratureConfig& q) {
  if (c_grid.empty() || alpha_grid.empty()) fail(Errc::invalid_parameter, "empty exterior barrier grid");
  bool have_pass = false, have_any = false;
  BarrierExteriorReport best{};
  for (double C : c_grid) {
    for (double a : alpha_grid) {
      const auto rep = barrier_exterior(p, C, a, q);
      if (rep.found) {
        if (!have_pass || rep.delta > best.delta) best = rep;
        have_pass = true;
      } else if (!have_pass) {
        if (!have_any || rep.max_ring < best.max_ring) best = rep;
      }
      have_any = true;
    }
  }
  return best;
}

ComparisonReport comparison_check(const GridField& u, const GridField& v, double domain_radius,
                                  bool domain_is_box, double tol) {
  if (u.dim() != v.dim() || u.nodes_per_axis() != v.nodes_per_axis() ||
      std::abs(u.box_radius() - v.box_radius()) > 1e-12 * (1.0 + v.box_radius())) {
    fail(Errc::invalid_parameter, "fields must share one grid");
  }
  if (!(domain_radius > 0) || domain_radius >= u.box_radius()) {
    fail(Errc::invalid_parameter, "domain radius must lie inside the grid box");
  }
  const double scale = 1.0 + std::max(u.sup_norm(), v.sup_norm());
  const double slack = 1e-12 * scale;
  if (u.tail().is_const && v.tail().is_const && u.tail().value > v.tail().value + slack) {
    fail(Errc::precondition, "exterior ordering violated in the far tail");
  }
  ComparisonReport rep;
  rep.ok = true;
  const double snap = 1e-12 * (1.0 + domain_radius);
  for (long i = 0; i < u.node_count(); ++i) {
    const auto xy = u.node_coords(i);
    const double r = domain_is_box ? std::max(std::abs(xy[0]), u.dim() == 2 ? std::abs(xy[1]) : 0.0)
                                   : std::sqrt(xy[0] * xy[0] + (u.dim() == 2 ? xy[1] * xy[1] : 0.0));
    const double gap = u.value(i) - v.value(i);
    if (r < domain_radius - snap) {
      ++rep.checked_nodes;
      if (gap > rep.worst_gap || rep.worst_node < 0) {
        rep.worst_gap = gap;
        rep.worst_node = i;
      }
      if (gap > tol) rep.ok = false;
    } else if (gap > slack) {
      fail(Errc::precondition, "exterior ordering violated at a grid node");
    }
  }
  return rep;
}

} // namespace nlelab
