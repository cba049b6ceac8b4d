#include "core/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace nlelab {

namespace {

constexpr double kSnap = 1e-9;

double norm2(double x0, double x1) { return std::sqrt(x0 * x0 + x1 * x1); }

/// ---- small dense LP (Seidel), used for the 2D envelope ----
///
/// maximize c.x subject to a_i.x <= b_i and lo <= x <= hi, for up to three
/// active variables. Constraints are processed in a caller-shuffled order;
/// when the running optimum violates one, the problem is re-solved on that
/// constraint's hyperplane with one variable eliminated.

struct LinCon {
  std::array<double, 3> a{};
  double b = 0.0;
};

struct LpOut {
  bool feasible = false;
  std::array<double, 3> x{};
};

double lp_scale(const LinCon& c, int d, const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
  double s = std::abs(c.b);
  for (int k = 0; k < d; ++k) s += std::abs(c.a[k]) * std::max(std::abs(lo[k]), std::abs(hi[k]));
  return std::max(1.0, s);
}

LpOut lp_solve(int d, const std::vector<LinCon>& cons, const std::vector<int>& order,
               const std::array<double, 3>& c, const std::array<double, 3>& lo,
               const std::array<double, 3>& hi) {
  if (d == 1) {
    double l = lo[0], h = hi[0];
    for (int idx : order) {
      const LinCon& con = cons[static_cast<std::size_t>(idx)];
      const double a = con.a[0];
      if (std::abs(a) < 1e-13 * std::max(1.0, std::abs(con.b))) {
        if (con.b < -1e-10 * std::max(1.0, std::abs(a) * std::max(std::abs(l), std::abs(h)))) return {};
        continue;
      }
      if (a > 0)
        h = std::min(h, con.b / a);
      else
        l = std::max(l, con.b / a);
    }
    if (l > h + 1e-9 * std::max(1.0, std::abs(l) + std::abs(h))) return {};
    if (l > h) l = h = 0.5 * (l + h);
    LpOut out;
    out.feasible = true;
    out.x[0] = c[0] >= 0 ? h : l;
    return out;
  }

  std::array<double, 3> x{};
  for (int k = 0; k < d; ++k) x[k] = c[k] >= 0 ? hi[k] : lo[k];

  for (std::size_t t = 0; t < order.size(); ++t) {
    const LinCon& ci = cons[static_cast<std::size_t>(order[t])];
    double ax = 0;
    for (int k = 0; k < d; ++k) ax += ci.a[k] * x[k];
    if (ax <= ci.b + 1e-10 * lp_scale(ci, d, lo, hi)) continue;

    // The optimum of the first t+1 constraints sits on this hyperplane.
    int piv = 0;
    for (int k = 1; k < d; ++k)
      if (std::abs(ci.a[k]) > std::abs(ci.a[piv])) piv = k;
    if (std::abs(ci.a[piv]) < 1e-13 * std::max(1.0, std::abs(ci.b))) return {};
    const double apiv = ci.a[piv];

    auto project = [&](const std::array<double, 3>& a, double b) {
      LinCon out;
      int j = 0;
      for (int k = 0; k < d; ++k) {
        if (k == piv) continue;
        out.a[j++] = a[k] - a[piv] * ci.a[k] / apiv;
      }
      out.b = b - a[piv] * ci.b / apiv;
      return out;
    };

    std::vector<LinCon> sub;
    sub.reserve(t + 2);
    for (std::size_t m = 0; m < t; ++m) sub.push_back(project(cons[static_cast<std::size_t>(order[m])].a,
                                                              cons[static_cast<std::size_t>(order[m])].b));
    {
      std::array<double, 3> e{};
      e[piv] = 1.0;
      sub.push_back(project(e, hi[piv]));
      e[piv] = -1.0;
      sub.push_back(project(e, -lo[piv]));
    }

    std::array<double, 3> sc{}, slo{}, shi{};
    {
      int j = 0;
      for (int k = 0; k < d; ++k) {
        if (k == piv) continue;
        sc[j] = c[k] - c[piv] * ci.a[k] / apiv;
        slo[j] = lo[k];
        shi[j] = hi[k];
        ++j;
      }
    }

    std::vector<int> sorder(sub.size());
    std::iota(sorder.begin(), sorder.end(), 0);
    const LpOut rec = lp_solve(d - 1, sub, sorder, sc, slo, shi);
    if (!rec.feasible) return {};

    double s = ci.b;
    int j = 0;
    for (int k = 0; k < d; ++k) {
      if (k == piv) continue;
      x[k] = rec.x[j];
      s -= ci.a[k] * rec.x[j];
      ++j;
    }
    x[piv] = s / apiv;
  }

  LpOut out;
  out.feasible = true;
  out.x = x;
  return out;
}

/// ---- 1D lower hull ----

struct Hull1d {
  std::vector<double> vx, vy; ///< hull vertices, x increasing, slopes increasing
};

Hull1d lower_hull(const std::vector<double>& xs, const std::vector<double>& ys) {
  Hull1d h;
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    while (h.vx.size() >= 2) {
      const std::size_t m = h.vx.size();
      const double cross = (h.vx[m - 1] - h.vx[m - 2]) * (ys[i] - h.vy[m - 2]) -
                           (h.vy[m - 1] - h.vy[m - 2]) * (xs[i] - h.vx[m - 2]);
      if (cross <= 0)
        h.vx.pop_back(), h.vy.pop_back();
      else
        break;
    }
    h.vx.push_back(xs[i]);
    h.vy.push_back(ys[i]);
  }
  return h;
}

/// Inclusive node index range [lo, hi] covering [a, b] on one axis.
std::pair<long, long> index_range(const GridField& u, double a, double b) {
  const double r = u.box_radius(), h = u.spacing();
  long lo = static_cast<long>(std::ceil((a + r) / h - kSnap));
  long hi = static_cast<long>(std::floor((b + r) / h + kSnap));
  lo = std::max<long>(lo, 0);
  hi = std::min<long>(hi, u.nodes_per_axis() - 1);
  return {lo, hi};
}

} // namespace

EnvelopeResult convex_envelope(const GridField& u, double contact_tol, bool check_exterior) {
  const int dim = u.dim();
  const double h = u.spacing();
  const double support = 3.0;
  if (u.box_radius() + kSnap < support)
    fail(Errc::precondition, "convex envelope needs a grid box of radius at least 3");

  // Precondition: u >= 0 outside the unit ball, on nodes and tail.
  if (check_exterior) {
    std::ostringstream bad;
    int nbad = 0;
    for (long i = 0; i < u.node_count(); ++i) {
      const auto xy = u.node_coords(i);
      if (norm2(xy[0], dim == 2 ? xy[1] : 0.0) <= 1.0 + kSnap) continue;
      if (u.value(i) < -1e-12) {
        if (nbad < 4) bad << " (" << xy[0] << (dim == 2 ? "," : "") << (dim == 2 ? std::to_string(xy[1]) : "") << ")";
        ++nbad;
      }
    }
    if (nbad > 0)
      fail(Errc::precondition,
           "u must be nonnegative outside B1; " + std::to_string(nbad) + " negative nodes, first:" + bad.str());
    if (u.tail_min() < -1e-12) fail(Errc::precondition, "u must be nonnegative outside B1 (tail goes negative)");
  }

  // f = min(u, 0) restricted to the B3 node set.
  const long naxis = u.nodes_per_axis();
  std::vector<char> in_b3(static_cast<std::size_t>(u.node_count()), 0);
  std::vector<double> f(static_cast<std::size_t>(u.node_count()), 0.0);
  double curv = 1.0;
  for (long i = 0; i < u.node_count(); ++i) {
    const auto xy = u.node_coords(i);
    if (norm2(xy[0], dim == 2 ? xy[1] : 0.0) <= support + kSnap) {
      in_b3[static_cast<std::size_t>(i)] = 1;
      f[static_cast<std::size_t>(i)] = std::min(u.value(i), 0.0);
    }
  }
  // Curvature scale for the default contact tolerance. Only stencils that are
  // strictly negative throughout contribute: contact lives in the interior of
  // the negativity set, and the kink where f meets zero would otherwise feed a
  // slope-jump scale (~|f'|/h) into what should be a curvature scale.
  const auto neg3 = [&](long i0, long i1, long i2) {
    return in_b3[static_cast<std::size_t>(i0)] && in_b3[static_cast<std::size_t>(i1)] &&
           in_b3[static_cast<std::size_t>(i2)] && f[static_cast<std::size_t>(i0)] < 0.0 &&
           f[static_cast<std::size_t>(i1)] < 0.0 && f[static_cast<std::size_t>(i2)] < 0.0;
  };
  const auto second_diff = [&](long lo, long mid, long hi) {
    return std::abs(f[static_cast<std::size_t>(hi)] + f[static_cast<std::size_t>(lo)] -
                    2 * f[static_cast<std::size_t>(mid)]) /
           (h * h);
  };
  if (dim == 1) {
    for (long i = 1; i + 1 < naxis; ++i)
      if (neg3(i - 1, i, i + 1)) curv = std::max(curv, second_diff(i - 1, i, i + 1));
  } else {
    for (long iy = 0; iy < naxis; ++iy)
      for (long ix = 0; ix < naxis; ++ix) {
        const long c = u.flat_index(ix, iy);
        if (ix > 0 && ix + 1 < naxis) {
          const long l = u.flat_index(ix - 1, iy), r = u.flat_index(ix + 1, iy);
          if (neg3(l, c, r)) curv = std::max(curv, second_diff(l, c, r));
        }
        if (iy > 0 && iy + 1 < naxis) {
          const long d = u.flat_index(ix, iy - 1), t = u.flat_index(ix, iy + 1);
          if (neg3(d, c, t)) curv = std::max(curv, second_diff(d, c, t));
        }
      }
  }
  const double tol = contact_tol > 0 ? contact_tol : 4.0 * h * h * curv;

  std::vector<double> gvals(static_cast<std::size_t>(u.node_count()), 0.0);
  std::vector<std::array<double, 2>> grad(static_cast<std::size_t>(u.node_count()), {0.0, 0.0});

  if (dim == 1) {
    std::vector<double> xs, ys;
    std::vector<long> idx;
    for (long i = 0; i < naxis; ++i)
      if (in_b3[static_cast<std::size_t>(i)]) {
        xs.push_back(u.axis_coord(i));
        ys.push_back(f[static_cast<std::size_t>(i)]);
        idx.push_back(i);
      }
    const Hull1d hull = lower_hull(xs, ys);
    const std::size_t m = hull.vx.size();
    std::size_t seg = 0;
    for (std::size_t q = 0; q < xs.size(); ++q) {
      const double x = xs[q];
      while (seg + 2 < m && x > hull.vx[seg + 1] + kSnap * h) ++seg;
      double val, g;
      if (m == 1) {
        val = hull.vy[0];
        g = 0.0;
      } else {
        const double s = (hull.vy[seg + 1] - hull.vy[seg]) / (hull.vx[seg + 1] - hull.vx[seg]);
        val = hull.vy[seg] + s * (x - hull.vx[seg]);
        g = s;
        // A node scanned as the right endpoint of its segment sits on a hull
        // vertex; at interior vertices select the subdifferential midpoint.
        if (seg + 2 < m && std::abs(x - hull.vx[seg + 1]) <= kSnap * h) {
          const double snext = (hull.vy[seg + 2] - hull.vy[seg + 1]) / (hull.vx[seg + 2] - hull.vx[seg + 1]);
          g = 0.5 * (s + snext);
        }
      }
      gvals[static_cast<std::size_t>(idx[q])] = val;
      grad[static_cast<std::size_t>(idx[q])] = {g, 0.0};
    }
  } else {
    // Constraint reduction: all strictly negative nodes, plus the convex hull
    // vertices of the zero-level nodes (a plane is below zero on the whole
    // hull iff it is below zero at the hull's extreme points).
    struct Pt {
      double x, y, v;
    };
    std::vector<Pt> neg;
    std::vector<std::array<double, 2>> zeros;
    for (long iy = 0; iy < naxis; ++iy)
      for (long ix = 0; ix < naxis; ++ix) {
        const long c = u.flat_index(ix, iy);
        if (!in_b3[static_cast<std::size_t>(c)]) continue;
        const double v = f[static_cast<std::size_t>(c)];
        if (v < 0)
          neg.push_back({u.axis_coord(ix), u.axis_coord(iy), v});
        else
          zeros.push_back({u.axis_coord(ix), u.axis_coord(iy)});
      }
    // 2D convex hull (monotone chain) of the zero nodes.
    std::sort(zeros.begin(), zeros.end());
    zeros.erase(std::unique(zeros.begin(), zeros.end()), zeros.end());
    std::vector<std::array<double, 2>> ring;
    if (zeros.size() <= 2) {
      ring = zeros;
    } else {
      auto cross = [](const std::array<double, 2>& o, const std::array<double, 2>& a,
                      const std::array<double, 2>& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
      };
      std::vector<std::array<double, 2>> hull(2 * zeros.size());
      std::size_t k = 0;
      for (const auto& p : zeros) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
      }
      for (std::size_t i = zeros.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], zeros[i]) <= 0) --k;
        hull[k++] = zeros[i];
      }
      hull.resize(k > 1 ? k - 1 : k);
      ring = std::move(hull);
    }

    std::vector<Pt> cons_pts;
    cons_pts.reserve(neg.size() + ring.size());
    for (const auto& p : neg) cons_pts.push_back(p);
    for (const auto& z : ring) cons_pts.push_back({z[0], z[1], 0.0});

    double fmin = 0.0, fmax = 0.0;
    for (const auto& p : cons_pts) fmin = std::min(fmin, p.v);
    const double abox = std::abs(fmin) + std::abs(fmax) + 1.0;
    const double gbox = 2.0 * (std::abs(fmin) + 1.0) / h;

    std::vector<LinCon> cons(cons_pts.size());
    std::vector<int> order(cons.size());

    for (long iy = 0; iy < naxis; ++iy)
      for (long ix = 0; ix < naxis; ++ix) {
        const long cfl = u.flat_index(ix, iy);
        if (!in_b3[static_cast<std::size_t>(cfl)]) continue;
        const double x0 = u.axis_coord(ix), x1 = u.axis_coord(iy);
        // Variables (a, g0, g1): maximize a with a + g.(z - x0) <= f(z).
        for (std::size_t i = 0; i < cons_pts.size(); ++i) {
          cons[i].a = {1.0, cons_pts[i].x - x0, cons_pts[i].y - x1};
          cons[i].b = cons_pts[i].v;
        }
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(0x656e76656c6f7065ull, static_cast<std::uint64_t>(cfl) + 1));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        const std::array<double, 3> c = {1.0, 0.0, 0.0};
        const std::array<double, 3> lo = {-abox, -gbox, -gbox};
        const std::array<double, 3> hi = {abox, gbox, gbox};
        LpOut sol = lp_solve(3, cons, order, c, lo, hi);
        if (!sol.feasible) {
          // Numerically safe fallback: the flat plane at the global minimum.
          sol.feasible = true;
          sol.x = {fmin, 0.0, 0.0};
        }
        gvals[static_cast<std::size_t>(cfl)] = std::min(sol.x[0], f[static_cast<std::size_t>(cfl)]);
        grad[static_cast<std::size_t>(cfl)] = {sol.x[1], sol.x[2]};
      }
  }

  GridField gamma(dim, u.box_radius(), h, gvals, Tail::constant(0.0));

  EnvelopeResult out{std::move(gamma), std::move(grad), {}, tol, support};
  for (long i = 0; i < u.node_count(); ++i)
    if (in_b3[static_cast<std::size_t>(i)] && u.value(i) - out.gamma.value(i) <= tol)
      out.contact_nodes.push_back(i);
  return out;
}

double interpolation_radius(const EllipticityParams& params, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(Errc::invalid_parameter, "alpha must lie in (0,1)");
  if (params.b == 0.0) return std::numeric_limits<double>::infinity();
  const double num = (1.0 - alpha) * params.lambda_lo * (2.0 - params.sigma);
  const double den = params.b * (1.0 - params.tau);
  return std::pow(num / den, 1.0 / (params.sigma - params.tau));
}

std::vector<DyadicRing> dyadic_rings(double sigma, double rho0, int k_max) {
  if (k_max < 1) fail(Errc::invalid_parameter, "k_max must be at least 1");
  if (!(rho0 > 0) || !(sigma > 0) || !(sigma < 2)) fail(Errc::invalid_parameter, "need rho0 > 0, sigma in (0,2)");
  std::vector<DyadicRing> out;
  out.reserve(static_cast<std::size_t>(k_max));
  const double r0 = rho0 * std::pow(2.0, -1.0 / (2.0 - sigma));
  for (int k = 0; k < k_max; ++k) {
    DyadicRing ring;
    ring.r = r0 * std::pow(2.0, -k);
    ring.r_next = 0.5 * ring.r;
    out.push_back(ring);
  }
  return out;
}

RingOpeningResult ring_opening_test(const GridField& u, const EnvelopeResult& env, long node, double m_opening,
                                    const EllipticityParams& params, double f_at_x, double c0, double rho0,
                                    int k_max) {
  if (!(m_opening > 0)) fail(Errc::invalid_parameter, "opening constant M must be positive");
  const int dim = u.dim();
  const double h = u.spacing();
  const auto x = u.node_coords(node);
  const double ux = u.value(node);
  const auto g = env.subgradient[static_cast<std::size_t>(node)];

  RingOpeningResult out;
  out.f_value = f_at_x + params.b * u.sup_norm();
  out.bound = c0 * out.f_value / m_opening;

  const auto rings = dyadic_rings(params.sigma, rho0, k_max);
  bool any_resolved = false;
  for (int k = 0; k < k_max; ++k) {
    const double rk = rings[static_cast<std::size_t>(k)].r;
    const double rin = rings[static_cast<std::size_t>(k)].r_next;
    if (rk < 2.0 * h) {
      out.fractions.push_back(-1.0);
      out.ring_node_counts.push_back(0);
      continue;
    }
    long total = 0, above = 0;
    const auto [lo0, hi0] = index_range(u, x[0] - rk, x[0] + rk);
    if (dim == 1) {
      for (long i = lo0; i <= hi0; ++i) {
        const double y = u.axis_coord(i) - x[0];
        const double r = std::abs(y);
        if (r <= rin || r > rk + kSnap * h) continue;
        ++total;
        const double plane = ux + y * g[0] + m_opening * rk * rk;
        if (u.value(i) > plane) ++above;
      }
    } else {
      const auto [lo1, hi1] = index_range(u, x[1] - rk, x[1] + rk);
      for (long j = lo1; j <= hi1; ++j)
        for (long i = lo0; i <= hi0; ++i) {
          const double y0 = u.axis_coord(i) - x[0];
          const double y1 = u.axis_coord(j) - x[1];
          const double r = norm2(y0, y1);
          if (r <= rin || r > rk + kSnap * h) continue;
          ++total;
          const double plane = ux + y0 * g[0] + y1 * g[1] + m_opening * rk * rk;
          if (u.value(u.flat_index(i, j)) > plane) ++above;
        }
    }
    if (total == 0) {
      out.fractions.push_back(-1.0);
      out.ring_node_counts.push_back(0);
      continue;
    }
    any_resolved = true;
    const double frac = static_cast<double>(above) / static_cast<double>(total);
    out.fractions.push_back(frac);
    out.ring_node_counts.push_back(total);
    if (!out.found && frac <= out.bound) {
      out.found = true;
      out.k = k;
      out.fraction = frac;
    }
  }
  if (!any_resolved) fail(Errc::resolution, "no dyadic ring is resolved by the grid (all r_k < 2h)");
  return out;
}

namespace {

struct CubeTask {
  std::array<double, 2> center;
  double side;
  int depth;
};

} // namespace

CubeCover abp_cover(const GridField& u, const EnvelopeResult& env, const GridField& f,
                    const EllipticityParams& params, const AbpConfig& cfg) {
  const int dim = u.dim();
  const double h = u.spacing();
  const double sqn = std::sqrt(static_cast<double>(dim));
  const double rho0 = cfg.rho0 > 0 ? cfg.rho0 : 1.0 / (128.0 * sqn);
  const double dil = cfg.dilation > 0 ? cfg.dilation : 32.0 * sqn;
  const double dil_alt = 8.0 * sqn;
  const double min_d = cfg.min_diameter > 0 ? cfg.min_diameter : 4.0 * h;
  const double cref = cfg.c_refine > 0 ? cfg.c_refine : cfg.big_c;

  if (f.dim() != dim) fail(Errc::invalid_parameter, "right-hand side and field dimensions differ");
  // Smallness condition of the covering lemma: 2b <= lambda (2 - sigma)/(1 - tau).
  if (2.0 * params.b > params.lambda_lo * (2.0 - params.sigma) / (1.0 - params.tau) + 1e-12)
    fail(Errc::precondition, "cube cover requires 2b <= lambda (2 - sigma)/(1 - tau)");

  std::vector<char> contact(static_cast<std::size_t>(u.node_count()), 0);
  for (long i : env.contact_nodes) contact[static_cast<std::size_t>(i)] = 1;

  const double bnorm = params.b * u.sup_norm();

  CubeCover cover;
  cover.rho0 = rho0;
  cover.dilation = dil;
  cover.d0 = rho0 * std::pow(2.0, -1.0 / (2.0 - params.sigma));
  cover.max_u_minus = std::max(0.0, -u.node_min());
  cover.contact_count = static_cast<long>(env.contact_nodes.size());

  const double s0_target = cover.d0 / sqn;
  const long tiles = std::max<long>(1, static_cast<long>(std::ceil(2.0 / s0_target - kSnap)));
  const double side0 = 2.0 / static_cast<double>(tiles);

  // Tiles that cannot touch a contact node would be discarded immediately;
  // pruning them against the contact bounding box keeps the initial tiling
  // small when d0 is far below the grid spacing.
  std::array<double, 2> cmin = {2.0, 2.0}, cmax = {-2.0, -2.0};
  for (long fl : env.contact_nodes) {
    const auto xy = u.node_coords(fl);
    if (std::abs(xy[0]) > 1.0 + kSnap || (dim == 2 && std::abs(xy[1]) > 1.0 + kSnap)) continue;
    for (int k = 0; k < dim; ++k) {
      cmin[static_cast<std::size_t>(k)] = std::min(cmin[static_cast<std::size_t>(k)], xy[static_cast<std::size_t>(k)]);
      cmax[static_cast<std::size_t>(k)] = std::max(cmax[static_cast<std::size_t>(k)], xy[static_cast<std::size_t>(k)]);
    }
  }
  auto axis_tiles = [&](int k) {
    std::pair<long, long> r{0, -1};
    if (cmin[static_cast<std::size_t>(k)] > cmax[static_cast<std::size_t>(k)]) return r;
    r.first = std::max<long>(0, static_cast<long>(std::floor((cmin[static_cast<std::size_t>(k)] + 1.0) / side0 - kSnap)));
    r.second = std::min<long>(tiles - 1, static_cast<long>(std::floor((cmax[static_cast<std::size_t>(k)] + 1.0) / side0 + kSnap)));
    return r;
  };

  const auto [ta, tb] = axis_tiles(0);
  const auto [sa, sb] = dim == 2 ? axis_tiles(1) : std::pair<long, long>{0, 0};

  // Depth-0 tiles are enumerated lazily; the queue holds split children only.
  std::deque<CubeTask> queue;
  long cur_i = ta, cur_j = sa;
  auto next_task = [&, ta = ta, tb = tb, sb = sb](CubeTask& task) {
    if (!queue.empty()) {
      task = queue.front();
      queue.pop_front();
      return true;
    }
    if (cur_j > sb || cur_i > tb) return false;
    task.center = {-1.0 + side0 * (0.5 + static_cast<double>(cur_i)),
                   dim == 2 ? -1.0 + side0 * (0.5 + static_cast<double>(cur_j)) : 0.0};
    task.side = side0;
    task.depth = 0;
    if (++cur_i > tb) {
      cur_i = ta;
      if (dim == 1 || ++cur_j > sb) cur_j = sb + 1;
    }
    return true;
  };

  std::array<double, 2> gmin = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  std::array<double, 2> gmax = {-gmin[0], -gmin[1]};
  bool any_node = false;

  CubeTask task;
  while (next_task(task)) {
    const double half = 0.5 * task.side;
    const double snap = kSnap * h;

    const auto [lo0, hi0] = index_range(u, task.center[0] - half - snap, task.center[0] + half + snap);
    long lo1 = 0, hi1 = 0;
    if (dim == 2) std::tie(lo1, hi1) = index_range(u, task.center[1] - half - snap, task.center[1] + half + snap);

    bool has_contact = false;
    double max_f = 0.0;
    std::array<double, 2> cg_min = gmin, cg_max = gmax;
    bool has_node = false;
    for (long j = lo1; j <= hi1; ++j)
      for (long i = lo0; i <= hi0; ++i) {
        const long fl = dim == 1 ? i : u.flat_index(i, j);
        has_node = true;
        const auto& g = env.subgradient[static_cast<std::size_t>(fl)];
        for (int k = 0; k < dim; ++k) {
          cg_min[static_cast<std::size_t>(k)] = std::min(cg_min[static_cast<std::size_t>(k)], g[static_cast<std::size_t>(k)]);
          cg_max[static_cast<std::size_t>(k)] = std::max(cg_max[static_cast<std::size_t>(k)], g[static_cast<std::size_t>(k)]);
        }
        if (contact[static_cast<std::size_t>(fl)]) {
          has_contact = true;
          const auto xy = u.node_coords(fl);
          const double fv = dim == 1 ? f.eval(xy[0]) : f.eval(xy[0], xy[1]);
          max_f = std::max(max_f, fv + bnorm);
        }
      }
    if (!has_contact) continue;

    AbpCube cube;
    cube.center = task.center;
    cube.side = task.side;
    cube.diameter = task.side * sqn;
    cube.depth = task.depth;
    cube.max_f = max_f;
    cube.grad_image = has_node ? (dim == 1 ? cg_max[0] - cg_min[0]
                                           : (cg_max[0] - cg_min[0]) * (cg_max[1] - cg_min[1]))
                               : 0.0;

    const double volume = dim == 1 ? task.side : task.side * task.side;
    auto good_fraction = [&](double factor) {
      const double dh = 0.5 * factor * task.side;
      const auto [a0, b0] = index_range(u, task.center[0] - dh, task.center[0] + dh);
      long a1 = 0, b1 = 0;
      if (dim == 2) std::tie(a1, b1) = index_range(u, task.center[1] - dh, task.center[1] + dh);
      const double open = cref * max_f * cube.diameter * cube.diameter + 1e-14;
      long cnt = 0;
      for (long j = a1; j <= b1; ++j)
        for (long i = a0; i <= b0; ++i) {
          const long fl = dim == 1 ? i : u.flat_index(i, j);
          if (u.value(fl) <= env.gamma.value(fl) + open) ++cnt;
        }
      const double measure = static_cast<double>(cnt) * (dim == 1 ? h : h * h);
      return measure / volume;
    };
    cube.good_fraction = good_fraction(dil);
    cube.good_fraction_alt = good_fraction(dil_alt);
    cube.crit_good = cube.good_fraction >= cfg.mu;
    cube.crit_grad = cube.grad_image <= cfg.big_c * std::pow(max_f, dim) * volume + 1e-14;

    if (cube.crit_good && cube.crit_grad) {
      // retained
    } else if (0.5 * cube.diameter >= min_d) {
      const double hside = 0.5 * task.side;
      const double q = 0.25 * task.side;
      if (dim == 1) {
        queue.push_back({{task.center[0] - q, 0.0}, hside, task.depth + 1});
        queue.push_back({{task.center[0] + q, 0.0}, hside, task.depth + 1});
      } else {
        for (double sy : {-q, q})
          for (double sx : {-q, q}) queue.push_back({{task.center[0] + sx, task.center[1] + sy}, hside, task.depth + 1});
      }
      continue;
    } else {
      cube.resolution_limited = true;
    }

    cover.grad_image_total += cube.grad_image;
    for (int k = 0; k < dim; ++k) {
      if (cg_min[static_cast<std::size_t>(k)] <= cg_max[static_cast<std::size_t>(k)]) {
        gmin[static_cast<std::size_t>(k)] = std::min(gmin[static_cast<std::size_t>(k)], cg_min[static_cast<std::size_t>(k)]);
        gmax[static_cast<std::size_t>(k)] = std::max(gmax[static_cast<std::size_t>(k)], cg_max[static_cast<std::size_t>(k)]);
        any_node = true;
      }
    }
    cover.cubes.push_back(cube);
  }

  if (any_node)
    cover.grad_image_hull = dim == 1 ? gmax[0] - gmin[0] : (gmax[0] - gmin[0]) * (gmax[1] - gmin[1]);

  // Coverage audit: every contact node inside the unit box must sit in the
  // closure of some retained cube.
  for (long fl : env.contact_nodes) {
    const auto xy = u.node_coords(fl);
    if (std::abs(xy[0]) > 1.0 + kSnap || (dim == 2 && std::abs(xy[1]) > 1.0 + kSnap)) continue;
    bool covered = false;
    for (const auto& c : cover.cubes) {
      const double half = 0.5 * c.side + kSnap * h;
      if (std::abs(xy[0] - c.center[0]) <= half && (dim == 1 || std::abs(xy[1] - c.center[1]) <= half)) {
        covered = true;
        break;
      }
    }
    if (!covered) ++cover.uncovered_contact;
  }

  return cover;
}

} // namespace nlelab
