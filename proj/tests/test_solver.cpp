#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "core/envelope.hpp"
#include "core/error.hpp"
#include "core/kernels.hpp"
#include "core/rng.hpp"
#include "core/solver.hpp"
#include "oracles.hpp"

using namespace nlelab;

namespace {

EllipticityParams base_params(int dim = 1, double b = 0.0) {
  EllipticityParams p;
  p.sigma = 1.5;
  p.tau = 0.5;
  p.lambda_lo = 1.0;
  p.lambda_hi = 2.0;
  p.b = b;
  p.dim = dim;
  return p;
}

GridField random_field(std::uint64_t seed, int dim, double R, double h, double lo, double hi,
                       double tail) {
  Rng rng(seed);
  GridField f = GridField::constant(dim, R, h, 0.0);
  for (long i = 0; i < f.node_count(); ++i) f.set_value(i, rng.uniform(lo, hi));
  f.set_tail(Tail::constant(tail));
  return f;
}

DirichletProblem make_problem(OperatorKind op, const EllipticityParams& p, const GridField& exterior,
                              double f_value, double domain_radius) {
  GridField rhs = GridField::constant(exterior.dim(), exterior.box_radius(), exterior.spacing(), f_value);
  return DirichletProblem(op, p, std::move(rhs), exterior, domain_radius);
}

double rel_scale(double a, double b) { return std::max({1.0, std::abs(a), std::abs(b)}); }

std::array<double, 2> coords_of(const GridField& g, long flat) { return g.node_coords(flat); }

} // namespace

TEST_CASE("constant exterior data solves immediately") {
  const double h = 1.0 / 16.0;
  GridField g = GridField::constant(1, 2.0, h, 0.7);
  auto p = make_problem(OperatorKind::m_sigma_plus, base_params(), g, 0.0, 1.0);
  const auto res = solve(p, 1e-9, 1000);
  CHECK(res.report.converged);
  CHECK(res.report.iterations == 0);
  CHECK(res.report.final_residual == 0.0);
  CHECK(res.report.dt_used > 0.0);
  CHECK(std::isinf(res.report.odd_truncation_radius));
  for (long i = 0; i < res.u.node_count(); ++i) CHECK(res.u.value(i) == 0.7);

  GridField g2 = GridField::constant(2, 1.5, 1.0 / 8.0, -0.3);
  auto p2 = make_problem(OperatorKind::m_sigma_minus, base_params(2), g2, 0.0, 0.75);
  const auto res2 = solve(p2, 1e-9, 1000);
  CHECK(res2.report.converged);
  CHECK(res2.report.iterations == 0);
}

TEST_CASE("scheme apply reproduces extremal point evaluations") {
  const double h = 1.0 / 16.0;
  const GridField u = random_field(771, 1, 2.0, h, -1.0, 1.0, 0.3);

  for (OperatorKind op : {OperatorKind::m_sigma_plus, OperatorKind::m_sigma_minus}) {
    auto p = make_problem(op, base_params(), u, 0.0, 1.0);
    DiscreteScheme scheme(p);
    const auto vals = scheme.apply(u);
    const auto& in = scheme.interior();
    REQUIRE(vals.size() == in.size());
    const Sign sign = op == OperatorKind::m_sigma_plus ? Sign::plus : Sign::minus;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto xy = coords_of(u, in[k]);
      const auto ev = eval_extremal_even(u, std::span<const double>(xy.data(), 1), p.params, sign);
      CHECK(std::abs(vals[k] - ev.value) <= 1e-9 * rel_scale(vals[k], ev.value));
    }
  }

  // 2d, strided samples.
  const GridField u2 = random_field(772, 2, 1.5, 1.0 / 8.0, -1.0, 1.0, -0.2);
  auto p2 = make_problem(OperatorKind::m_sigma_minus, base_params(2), u2, 0.0, 0.75);
  DiscreteScheme scheme2(p2);
  const auto vals2 = scheme2.apply(u2);
  const auto& in2 = scheme2.interior();
  for (std::size_t k = 0; k < in2.size(); k += 3) {
    const auto xy = coords_of(u2, in2[k]);
    const auto ev = eval_extremal_even(u2, std::span<const double>(xy.data(), 2), p2.params, Sign::minus);
    CHECK(std::abs(vals2[k] - ev.value) <= 1e-9 * rel_scale(vals2[k], ev.value));
  }
}

TEST_CASE("scheme apply reproduces linear kernel evaluations") {
  const double h = 1.0 / 16.0;
  const GridField u = random_field(773, 1, 2.0, h, -1.0, 1.0, 0.1);
  const auto prm = base_params();

  auto check_kernel = [&](const char* expr) {
    const KernelSpec k = make_named_kernel(expr, prm);
    auto p = make_problem(OperatorKind::linear_kernel, prm, u, 0.0, 1.0);
    p.kernel = k;
    DiscreteScheme scheme(p);
    const auto vals = scheme.apply(u);
    const auto& in = scheme.interior();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const auto xy = coords_of(u, in[j]);
      const auto ev = eval_linear(k, u, std::span<const double>(xy.data(), 1));
      CHECK(std::abs(vals[j] - ev.value) <= 1e-9 * rel_scale(vals[j], ev.value));
    }
  };
  check_kernel("frac-laplace(1.3)");
  check_kernel("mixed(1.2,0.5)");

  // inf-sup family: min over groups of max over members.
  KernelFamily fam;
  fam.groups.push_back({make_named_kernel("frac-laplace(1)", prm), make_named_kernel("mixed(1.5,0.3)", prm)});
  fam.groups.push_back({make_named_kernel("frac-laplace(2)", prm)});
  auto pf = make_problem(OperatorKind::family_inf_sup, prm, u, 0.0, 1.0);
  pf.family = fam;
  DiscreteScheme fscheme(pf);
  const auto fvals = fscheme.apply(u);
  const auto& fin = fscheme.interior();
  for (std::size_t j = 0; j < fin.size(); ++j) {
    const auto xy = coords_of(u, fin[j]);
    const double ev = eval_inf_sup(fam, u, std::span<const double>(xy.data(), 1));
    CHECK(std::abs(fvals[j] - ev) <= 1e-9 * rel_scale(fvals[j], ev));
  }
}

TEST_CASE("drift truncation stays within its closure bound") {
  const double h = 1.0 / 16.0;
  const GridField u = random_field(774, 1, 2.0, h, -1.0, 1.0, 0.3);

  // Small drift: the truncation radius exceeds the covered annulus, so the
  // scheme and the point evaluation agree exactly.
  {
    const auto prm = base_params(1, 0.05);
    auto p = make_problem(OperatorKind::m_l0_plus, prm, u, 0.0, 1.0);
    DiscreteScheme scheme(p);
    CHECK(scheme.odd_truncation_radius() == doctest::Approx(10.0).epsilon(1e-12));
    const auto vals = scheme.apply(u);
    const auto& in = scheme.interior();
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto xy = coords_of(u, in[k]);
      const auto ev = eval_m_l0(u, std::span<const double>(xy.data(), 1), prm, Sign::plus);
      CHECK(std::abs(vals[k] - ev.value) <= 1e-9 * rel_scale(vals[k], ev.value));
    }
  }

  // Large drift: the scheme integrates the odd part over B_r0 only; the
  // omitted annulus is nonnegative for the plus sign and bounded by the
  // closure of the odd kernel beyond r0.
  {
    const auto prm = base_params(1, 0.2);
    auto p = make_problem(OperatorKind::m_l0_plus, prm, u, 0.0, 1.0);
    DiscreteScheme scheme(p);
    const double r0 = scheme.odd_truncation_radius();
    CHECK(r0 == doctest::Approx(2.5).epsilon(1e-12));
    const double bound =
        prm.b * (1.0 - prm.tau) * 2.0 * u.sup_norm() * 2.0 / (prm.tau * std::pow(r0, prm.tau));
    const auto vals = scheme.apply(u);
    const auto& in = scheme.interior();
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto xy = coords_of(u, in[k]);
      const auto ev = eval_m_l0(u, std::span<const double>(xy.data(), 1), prm, Sign::plus);
      const double diff = ev.value - vals[k];
      CHECK(diff >= -1e-12 * rel_scale(vals[k], ev.value));
      CHECK(diff <= bound + 1e-9);
    }

    // Minus sign: the omitted drift flips sign.
    auto pm = make_problem(OperatorKind::m_l0_minus, prm, u, 0.0, 1.0);
    DiscreteScheme mscheme(pm);
    const auto mvals = mscheme.apply(u);
    const auto& min_ = mscheme.interior();
    for (std::size_t k = 0; k < min_.size(); ++k) {
      const auto xy = coords_of(u, min_[k]);
      const auto ev = eval_m_l0(u, std::span<const double>(xy.data(), 1), prm, Sign::minus);
      const double diff = mvals[k] - ev.value;
      CHECK(diff >= -1e-12 * rel_scale(mvals[k], ev.value));
      CHECK(diff <= bound + 1e-9);
    }
  }
}

TEST_CASE("updates are monotone on ordered fields") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  const auto prm_b = base_params(1, 0.2);

  auto problems = [&](const GridField& ext) {
    std::vector<DirichletProblem> out;
    out.push_back(make_problem(OperatorKind::m_sigma_plus, prm, ext, 0.0, 1.0));
    out.push_back(make_problem(OperatorKind::m_l0_plus, prm_b, ext, 0.0, 1.0));
    auto lin = make_problem(OperatorKind::linear_kernel, prm, ext, 0.0, 1.0);
    lin.kernel = make_named_kernel("mixed(1.5,0.4)", prm);
    out.push_back(std::move(lin));
    return out;
  };

  const GridField ext = GridField::constant(1, 2.0, h, 0.0);
  for (auto& p : problems(ext)) {
    DiscreteScheme scheme(p);
    const double dt = scheme.dt();
    CHECK(dt == doctest::Approx(0.9 / scheme.max_row_sum()).epsilon(1e-15));
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
      Rng rng(derive_seed(2024081201, trial));
      GridField u = GridField::constant(1, 2.0, h, 0.0);
      GridField v = u;
      for (long i = 0; i < u.node_count(); ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        u.set_value(i, a);
        v.set_value(i, a + rng.uniform(0.0, 0.8));
      }
      const double tail_u = rng.uniform(-0.3, 0.3);
      u.set_tail(Tail::constant(tail_u));
      v.set_tail(Tail::constant(tail_u + rng.uniform(0.0, 0.4)));
      const auto au = scheme.apply(u);
      const auto av = scheme.apply(v);
      const auto& in = scheme.interior();
      for (std::size_t k = 0; k < in.size(); ++k) {
        const double tu = u.value(in[k]) + dt * au[k];
        const double tv = v.value(in[k]) + dt * av[k];
        CHECK(tu <= tv + 1e-10 * rel_scale(tu, tv));
      }
    }
  }
}

TEST_CASE("solve matches a dense oracle") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  GridField g = GridField::constant(1, 2.0, h, 0.0);
  auto p = make_problem(OperatorKind::linear_kernel, prm, g, -1.0, 1.0);
  p.kernel = make_named_kernel("frac-laplace(1)", prm);

  const auto res = solve(p, 1e-10, 300000);
  CHECK(res.report.converged);
  CHECK(res.report.final_residual <= 1e-10);
  REQUIRE(!res.report.residual_history.empty());
  CHECK(res.report.residual_history.back() == res.report.final_residual);
  CHECK(res.report.residual_history.front() >= res.report.residual_history.back());

  DiscreteScheme scheme(p);
  const auto& in = scheme.interior();

  // Positivity and symmetry of the solution of "operator u = -1, u = 0 outside".
  const long naxis = g.nodes_per_axis();
  for (std::size_t k = 0; k < in.size(); ++k) {
    CHECK(res.u.value(in[k]) > 0.0);
    const long mirror = naxis - 1 - in[k];
    CHECK(std::abs(res.u.value(in[k]) - res.u.value(mirror)) <= 1e-9);
  }

  // Dense affine oracle on the interior unknowns.
  auto apply_fn = [&](const std::vector<double>& v) {
    GridField w = g;
    for (std::size_t k = 0; k < in.size(); ++k) w.set_value(in[k], v[k]);
    return scheme.apply(w);
  };
  const std::vector<double> rhs(in.size(), -1.0);
  const auto dense = oracles::dense_affine_solve(apply_fn, rhs);
  for (std::size_t k = 0; k < in.size(); ++k) {
    CHECK(std::abs(res.u.value(in[k]) - dense[k]) <= 1e-7);
  }
}

TEST_CASE("solve matches a dense oracle in 2d") {
  const double h = 1.0 / 8.0;
  const auto prm = base_params(2);
  GridField g = GridField::constant(2, 1.5, h, 0.0);
  auto p = make_problem(OperatorKind::linear_kernel, prm, g, -1.0, 0.75);
  p.kernel = make_named_kernel("frac-laplace(1.5)", prm);

  const auto res = solve(p, 1e-8, 200000, 4);
  CHECK(res.report.converged);

  DiscreteScheme scheme(p);
  const auto& in = scheme.interior();
  auto apply_fn = [&](const std::vector<double>& v) {
    GridField w = g;
    for (std::size_t k = 0; k < in.size(); ++k) w.set_value(in[k], v[k]);
    return scheme.apply(w);
  };
  const std::vector<double> rhs(in.size(), -1.0);
  const auto dense = oracles::dense_affine_solve(apply_fn, rhs);
  double worst = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) {
    worst = std::max(worst, std::abs(res.u.value(in[k]) - dense[k]));
    CHECK(res.u.value(in[k]) > 0.0);
  }
  CHECK(worst <= 1e-5);

  // x <-> y and sign symmetries of the radially symmetric problem.
  const long naxis = g.nodes_per_axis();
  for (std::size_t k = 0; k < in.size(); ++k) {
    const long ix = in[k] % naxis, iy = in[k] / naxis;
    CHECK(std::abs(res.u.value(in[k]) - res.u.value(g.flat_index(iy, ix))) <= 1e-9);
    CHECK(std::abs(res.u.value(in[k]) - res.u.value(g.flat_index(naxis - 1 - ix, iy))) <= 1e-9);
  }
}

TEST_CASE("solve respects ordered data") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();

  GridField g1 = GridField::constant(1, 2.0, h, 0.0);
  GridField g2 = GridField::constant(1, 2.0, h, 0.2);
  auto p1 = make_problem(OperatorKind::m_sigma_plus, prm, g1, -0.4, 1.0);
  auto p2 = make_problem(OperatorKind::m_sigma_plus, prm, g2, -0.6, 1.0);
  // f1 >= f2 and g1 <= g2, so u1 <= u2.
  const auto r1 = solve(p1, 1e-8, 200000);
  const auto r2 = solve(p2, 1e-8, 200000);
  REQUIRE(r1.report.converged);
  REQUIRE(r2.report.converged);
  const auto cmp = comparison_check(r1.u, r2.u, 1.0, false, 1e-6);
  CHECK(cmp.ok);
  CHECK(cmp.checked_nodes > 0);
}

TEST_CASE("discrete maximum principle") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  GridField g = random_field(775, 1, 2.0, h, -0.5, 0.9, 0.2);
  auto p = make_problem(OperatorKind::m_sigma_minus, prm, g, 0.0, 1.0);
  const auto res = solve(p, 1e-8, 200000);
  REQUIRE(res.report.converged);

  double lo = g.tail().value, hi = g.tail().value;
  for (long i = 0; i < g.node_count(); ++i) {
    const auto xy = coords_of(g, i);
    if (std::abs(xy[0]) < 1.0) continue; // exterior data only
    lo = std::min(lo, g.value(i));
    hi = std::max(hi, g.value(i));
  }
  for (long i = 0; i < res.u.node_count(); ++i) {
    CHECK(res.u.value(i) >= lo - 1e-7);
    CHECK(res.u.value(i) <= hi + 1e-7);
  }
}

TEST_CASE("solution persists under finer quadrature") {
  // Manufactured smooth fixed point: rhs is the scheme applied to a globally
  // smooth bump, so the discrete solution is that bump and the residual under
  // a twice-finer quadrature measures pure quadrature drift on smooth data.
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  GridField w = GridField::from_function(
      1, 2.0, h,
      [](std::span<const double> x) {
        const double r2 = (x[0] / 1.9) * (x[0] / 1.9);
        return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
      },
      Tail::constant(0.0));
  GridField rhs = GridField::constant(1, 2.0, h, 0.0);
  DirichletProblem probe(OperatorKind::m_sigma_plus, prm, rhs, w, 1.0);
  DiscreteScheme scheme(probe);
  const auto& in = scheme.interior();
  const auto fw = scheme.apply(w);
  for (std::size_t k = 0; k < in.size(); ++k) rhs.set_value(in[k], fw[k]);

  GridField g = w;
  for (long i : in) g.set_value(i, 0.0); // start away from the fixed point
  DirichletProblem p(OperatorKind::m_sigma_plus, prm, rhs, g, 1.0);
  const double tol = 1e-4;
  const auto res = solve(p, tol, 300000);
  REQUIRE(res.report.converged);
  for (long i : in) CHECK(std::abs(res.u.value(i) - w.value(i)) <= 10.0 * tol);

  auto fine = p;
  fine.quad.rings_per_decade = 32;
  DiscreteScheme fine_scheme(fine);
  const auto vals = fine_scheme.apply(res.u);
  double worst = 0.0;
  for (std::size_t k = 0; k < in.size(); ++k) worst = std::max(worst, std::abs(vals[k] - fw[k]));
  CHECK(worst < 10.0 * tol);
}

TEST_CASE("interior barrier certifies positive minima") {
  const std::array<double, 3> s_grid = {0.25, 0.5, 1.0};

  const auto rep0 = barrier_interior(base_params(), s_grid);
  CHECK(rep0.found);
  CHECK(rep0.s_star == 1.0);
  REQUIRE(rep0.min_values.size() == 3);
  for (double m : rep0.min_values) CHECK(m > 0.0);
  CHECK(rep0.delta_star == rep0.min_values[2]);

  // The drift lowers M^- pointwise, so certified minima fall as b grows.
  const auto rep_b = barrier_interior(base_params(1, 0.3), s_grid);
  for (std::size_t i = 0; i < 3; ++i) CHECK(rep_b.min_values[i] <= rep0.min_values[i] + 1e-12);

  CHECK_THROWS_AS(barrier_interior(base_params(1, 10.0), s_grid), Error);
  try {
    barrier_interior(base_params(1, 10.0), s_grid);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::precondition);
  }
  const std::array<double, 1> bad_s = {0.0};
  CHECK_THROWS_AS(barrier_interior(base_params(), bad_s), Error);
  const std::array<double, 1> big_s = {1.25};
  CHECK_THROWS_AS(barrier_interior(base_params(), big_s), Error);

  const std::array<double, 1> s2 = {0.5};
  const auto rep2 = barrier_interior(base_params(2, 0.1), s2);
  CHECK(rep2.found);
  CHECK(rep2.min_values[0] > 0.0);
}

TEST_CASE("exterior barrier reports signs") {
  EllipticityParams p;
  p.sigma = 0.5;
  p.tau = 0.1;
  p.lambda_lo = 1.0;
  p.lambda_hi = 2.0;
  p.b = 0.0;
  p.dim = 1;

  // At small sigma the profile must rise quickly to its plateau (large slope
  // constant) so the even difference stays small near the cusp; a flat rise
  // or the Lipschitz cone (alpha_b = 1) leaves the ring positive.
  const auto good = barrier_exterior(p, 2.0, 0.25);
  CHECK(good.holds_ring);
  CHECK(good.holds_far);
  CHECK(good.found);
  CHECK(good.delta == -good.max_ring);
  CHECK(good.delta > 0.0);
  CHECK(std::abs(good.argmax_ring[0]) >= 1.0);
  CHECK(std::abs(good.argmax_ring[0]) <= 2.0 + 1e-12);

  const auto cone = barrier_exterior(p, 2.0, 1.0);
  CHECK(!cone.holds_ring);
  CHECK(!cone.found);
  CHECK(cone.max_ring > 0.0);

  const auto shallow = barrier_exterior(p, 1.0, 0.25);
  CHECK(!shallow.found);

  const std::array<double, 3> c_grid = {0.5, 1.0, 2.0};
  const std::array<double, 2> a_grid = {0.2, 0.25};
  const auto best = barrier_exterior_search(p, c_grid, a_grid);
  CHECK(best.found);
  CHECK(best.c == 2.0);
  CHECK(best.delta >= good.delta - 1e-12);

  CHECK_THROWS_AS(barrier_exterior(p, 0.0, 0.5), Error);
  CHECK_THROWS_AS(barrier_exterior(p, 1.0, 0.0), Error);
  CHECK_THROWS_AS(barrier_exterior(p, 1.0, 1.2), Error);
  EllipticityParams bad = p;
  bad.sigma = 2.5;
  CHECK_THROWS_AS(barrier_exterior(bad, 1.0, 0.5), Error);

  // 2d: the same fast-rising profile certifies.
  EllipticityParams p2 = p;
  p2.dim = 2;
  const auto rep2 = barrier_exterior(p2, 2.0, 0.5);
  CHECK(rep2.found);
  CHECK(rep2.max_ring < 0.0);
  CHECK(rep2.max_far < 0.0);
  CHECK(rep2.delta == -rep2.max_ring);
}

TEST_CASE("comparison check verifies ordering") {
  const double h = 1.0 / 16.0;
  GridField u = random_field(776, 1, 2.0, h, -0.5, 0.5, 0.1);

  GridField v = u;
  for (long i = 0; i < v.node_count(); ++i) v.set_value(i, u.value(i) + 1.0);
  v.set_tail(Tail::constant(1.1));
  const auto rep = comparison_check(u, v, 1.0, false, 1e-9);
  CHECK(rep.ok);
  CHECK(rep.worst_gap == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(rep.checked_nodes == 31);

  // An interior dip of v below u is reported, not thrown.
  GridField v2 = v;
  const long mid = v2.node_count() / 2;
  v2.set_value(mid, u.value(mid) - 0.25);
  const auto rep2 = comparison_check(u, v2, 1.0, false, 1e-9);
  CHECK(!rep2.ok);
  CHECK(rep2.worst_node == mid);
  CHECK(rep2.worst_gap == doctest::Approx(0.25).epsilon(1e-12));

  // Exterior ordering violations are preconditions.
  GridField v3 = v;
  v3.set_value(2, u.value(2) - 0.5); // node near the box edge, outside B_1
  CHECK_THROWS_AS(comparison_check(u, v3, 1.0, false, 1e-9), Error);
  try {
    comparison_check(u, v3, 1.0, false, 1e-9);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::precondition);
  }

  GridField v4 = v;
  v4.set_tail(Tail::constant(u.tail().value - 1.0));
  CHECK_THROWS_AS(comparison_check(u, v4, 1.0, false, 1e-9), Error);

  CHECK_THROWS_AS(comparison_check(u, v, 2.5, false, 1e-9), Error);
}

TEST_CASE("solver guards") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  GridField g = GridField::constant(1, 2.0, h, 0.0);

  auto p = make_problem(OperatorKind::m_sigma_plus, prm, g, 0.0, 1.0);
  CHECK_THROWS_AS(solve(p, 0.0, 100), Error);
  CHECK_THROWS_AS(solve(p, 1e-8, 0), Error);

  // rhs and exterior must share one grid.
  GridField coarse_rhs = GridField::constant(1, 2.0, 1.0 / 8.0, 0.0);
  CHECK_THROWS_AS(DirichletProblem(OperatorKind::m_sigma_plus, prm, coarse_rhs, g, 1.0), Error);

  // The domain must leave at least one exterior node layer inside the box.
  GridField f0 = GridField::constant(1, 2.0, h, 0.0);
  CHECK_THROWS_AS(DirichletProblem(OperatorKind::m_sigma_plus, prm, f0, g, 1.999), Error);

  // Parameter dimension has to match the grid.
  CHECK_THROWS_AS(DirichletProblem(OperatorKind::m_sigma_plus, base_params(2), f0, g, 1.0), Error);

  // Hypothesis violations are rejected for the extremal kinds.
  auto p_h3 = make_problem(OperatorKind::m_l0_plus, base_params(1, 10.0), g, 0.0, 1.0);
  CHECK_THROWS_AS(DiscreteScheme{p_h3}, Error);

  // An empty family cannot back the inf-sup operator.
  auto p_fam = make_problem(OperatorKind::family_inf_sup, prm, g, 0.0, 1.0);
  CHECK_THROWS_AS(DiscreteScheme{p_fam}, Error);
  try {
    DiscreteScheme s{p_fam};
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_family);
  }

  // A kernel whose odd part exceeds its even part is not degenerate elliptic.
  auto p_bad = make_problem(OperatorKind::linear_kernel, prm, g, 0.0, 1.0);
  p_bad.kernel = KernelSpec(
      [](std::span<const double> y) { return 0.5 * std::pow(std::abs(y[0]), -2.5); },
      [](std::span<const double> y) { return 1.5 * (y[0] > 0 ? 1.0 : -1.0) * std::pow(std::abs(y[0]), -2.5); },
      prm);
  CHECK_THROWS_AS(DiscreteScheme{p_bad}, Error);
  try {
    DiscreteScheme s{p_bad};
  } catch (const Error& e) {
    CHECK(e.code() == Errc::precondition);
  }

  // A drift truncation radius below the quadrature inner radius is a
  // resolution failure, not a silent loss of monotonicity.
  GridField coarse = GridField::constant(1, 2.0, 0.5, 0.0);
  auto p_res = make_problem(OperatorKind::m_l0_plus, base_params(1, 0.9), coarse, 0.0, 1.0);
  CHECK_THROWS_AS(DiscreteScheme{p_res}, Error);
  try {
    DiscreteScheme s{p_res};
  } catch (const Error& e) {
    CHECK(e.code() == Errc::resolution);
  }

  // Exhausting max_iter reports failure instead of throwing.
  auto p_slow = make_problem(OperatorKind::m_sigma_plus, prm, g, -1.0, 1.0);
  const auto res = solve(p_slow, 1e-16, 3);
  CHECK(!res.report.converged);
  CHECK(res.report.iterations == 3);
  CHECK(res.report.final_residual > 1e-16);
}

TEST_CASE("apply and solve are thread deterministic") {
  const double h = 1.0 / 16.0;
  const auto prm = base_params();
  const GridField u = random_field(777, 1, 2.0, h, -1.0, 1.0, 0.0);
  auto p = make_problem(OperatorKind::m_sigma_plus, prm, u, -0.5, 1.0);

  DiscreteScheme scheme(p);
  const auto v1 = scheme.apply(u, 1);
  const auto v3 = scheme.apply(u, 3);
  REQUIRE(v1.size() == v3.size());
  for (std::size_t k = 0; k < v1.size(); ++k) CHECK(v1[k] == v3[k]);

  const auto r1 = solve(p, 1e-7, 100000, 1);
  const auto r3 = solve(p, 1e-7, 100000, 3);
  REQUIRE(r1.report.converged);
  CHECK(r1.report.iterations == r3.report.iterations);
  for (long i = 0; i < r1.u.node_count(); ++i) CHECK(r1.u.value(i) == r3.u.value(i));
}

TEST_CASE("translated barrier dominates continuous data") {
  // w(y) = 2 sup|g| phi((y - (x + r eta)) / r) + g(x) + eps with eps the
  // oscillation of g near x: w >= g everywhere, which is what lets the
  // exterior barrier pin boundary values of solutions with continuous data.
  const double C = 1.0, alpha = 0.5;
  auto phi = [&](double z) {
    const double t = std::abs(z) - 1.0;
    return t <= 0.0 ? 0.0 : std::min(1.0, C * std::pow(t, alpha));
  };
  auto gfun = [](double y) { return 0.3 * std::cos(3.0 * y); };
  const double gnorm = 0.3;
  const double x = 1.0, eta = 1.0, r = 0.25;
  const double center = x + r * eta;

  double eps = 0.0;
  for (double y = x - 3.0 * r; y <= x + 3.0 * r; y += 1e-3) {
    eps = std::max(eps, gfun(y) - gfun(x));
  }
  for (double y = -4.0; y <= 4.0; y += 1e-3) {
    const double w = 2.0 * gnorm * phi((y - center) / r) + gfun(x) + eps;
    CHECK(w >= gfun(y) - 1e-12);
  }
}
