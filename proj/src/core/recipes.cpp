#include "core/recipes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/csv.hpp"
#include "core/envelope.hpp"
#include "core/error.hpp"
#include "core/fields.hpp"
#include "core/gridfield.hpp"
#include "core/parallel.hpp"
#include "core/regularity.hpp"
#include "core/rng.hpp"
#include "core/solver.hpp"

namespace nlelab {

namespace {

enum class RecipeKind { eval, barrier, abp, solve_suite, regularity };

RecipeKind recipe_kind(const std::string& name) {
  if (name == "eval-suite") return RecipeKind::eval;
  if (name == "barrier-suite") return RecipeKind::barrier;
  if (name == "abp-suite") return RecipeKind::abp;
  if (name == "solve-suite") return RecipeKind::solve_suite;
  if (name == "regularity-sweep") return RecipeKind::regularity;
  fail(Errc::unknown_recipe, "unknown recipe '" + name + "'");
}

void require_list_shape(const char* key, std::size_t got, std::size_t points) {
  if (got != 1 && got != points) {
    fail(Errc::invalid_parameter, std::string("list '") + key + "' has " + std::to_string(got) +
                                      " entries; expected 1 or " + std::to_string(points));
  }
}

double pick(const std::vector<double>& v, std::size_t i) { return v.size() == 1 ? v[0] : v[i]; }

/// While a point runs its status lives in this slot; the coordinator folds
/// the slots into the summary in index order.
struct PointSlot {
  std::string status = "ok";
  std::string detail = "ok";
  std::vector<std::vector<std::string>> rows; ///< one bucket per output file
};

std::string sanitize_detail(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::string hypothesis_reason(const HypothesisReport& rep) {
  std::string why;
  if (!rep.params_ok) why += "params;";
  if (!rep.h1) why += "h1;";
  if (!rep.h2) why += "h2;";
  if (!rep.h3) why += "h3;";
  if (!why.empty()) why.pop_back();
  return why;
}

std::string point_prefix(const EllipticityParams& p) {
  return fmt_double(p.sigma) + "," + fmt_double(p.tau) + "," + fmt_double(p.b);
}

/// Deterministic dip expressions for the synthetic ABP fields.
std::string dip_expr(std::uint64_t seed, int index, int dim) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  const double d = rng.uniform(0.75, 1.5);
  const double w = rng.uniform(0.3, 0.6);
  const double c0 = rng.uniform(-0.25, 0.25);
  std::string expr = "dip(" + fmt_double(d) + "," + fmt_double(w) + "," + fmt_double(c0);
  if (dim == 2) expr += "," + fmt_double(rng.uniform(-0.25, 0.25));
  return expr + ")";
}

struct FileSpec {
  std::string name;
  std::string header;
};

/// Shared driver: builds one slot per grid point (optionally in parallel),
/// then writes every declared file and the summary in deterministic order.
template <typename PointFn>
RecipeResult drive(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid,
                   const std::vector<FileSpec>& specs, std::vector<std::string> pre_files, PointFn&& body) {
  std::vector<PointSlot> slots(grid.size());
  for (auto& s : slots) s.rows.resize(specs.size());

  parallel_for(static_cast<long>(grid.size()), cfg.threads, [&](long lo, long hi) {
    for (long i = lo; i < hi; ++i) {
      PointSlot& slot = slots[static_cast<std::size_t>(i)];
      const EllipticityParams& p = grid[static_cast<std::size_t>(i)];
      const auto hyp = check_hypotheses(p);
      if (!hyp.all()) {
        slot.status = "skipped";
        slot.detail = "hypotheses: " + hypothesis_reason(hyp);
        continue;
      }
      try {
        body(static_cast<int>(i), p, slot);
      } catch (const Error& e) {
        slot.status = "failed";
        slot.detail = sanitize_detail(e.what());
        for (auto& bucket : slot.rows) bucket.clear();
      } catch (const std::exception& e) {
        slot.status = "failed";
        slot.detail = sanitize_detail(e.what());
        for (auto& bucket : slot.rows) bucket.clear();
      }
    }
  });

  RecipeResult res;
  res.files = std::move(pre_files);
  for (std::size_t f = 0; f < specs.size(); ++f) {
    std::string text = specs[f].header + "\n";
    for (const auto& slot : slots) {
      for (const auto& row : slot.rows[f]) text += row + "\n";
    }
    const std::string path = cfg.out_dir + "/" + specs[f].name;
    write_text_file(path, text);
    res.files.push_back(path);
  }

  std::string summary = "recipe,point,sigma,tau,b,status,detail\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& slot = slots[i];
    summary += cfg.recipe + "," + fmt_long(static_cast<long>(i)) + "," + point_prefix(grid[i]) + "," + slot.status +
               "," + slot.detail + "\n";
    RecipePoint pt;
    pt.index = static_cast<int>(i);
    pt.params = grid[i];
    pt.status = slot.status;
    pt.detail = slot.detail;
    res.points.push_back(std::move(pt));
    if (slot.status == "ok") ++res.points_ok;
    if (slot.status == "skipped") ++res.points_skipped;
    if (slot.status == "failed") ++res.points_failed;
  }
  const std::string sum_path = cfg.out_dir + "/summary.csv";
  write_text_file(sum_path, summary);
  res.files.push_back(sum_path);

  res.exit_code = (res.points_failed > 0 && res.points_ok == 0) ? 2 : 0;
  return res;
}

std::string op_row_tail(const OperatorValue& v) {
  return fmt_double(v.value) + "," + fmt_double(v.even_contribution) + "," + fmt_double(v.odd_contribution) + "," +
         fmt_double(v.truncation_bound) + "," + fmt_double(v.quad_error);
}

RecipeResult run_eval_suite(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid) {
  // Field expressions double as CSV cells, so they must stay comma free.
  const std::vector<std::string> field_exprs = {"bump(1.9)", "gaussian(1.0)", "cusp(0.5)", "invcap(10)"};
  std::vector<GridField> fields;
  for (const auto& expr : field_exprs) {
    fields.push_back(fields::make_named_field(expr, cfg.dim, cfg.box_radius, cfg.spacing));
  }
  std::vector<std::array<double, 2>> pts;
  if (cfg.dim == 1) {
    pts = {{-0.5, 0.0}, {0.0, 0.0}, {0.25, 0.0}};
  } else {
    pts = {{-0.5, 0.0}, {0.0, 0.0}, {0.25, -0.25}};
  }

  const std::vector<FileSpec> specs = {
      {"eval.csv", "sigma,tau,b,field,op,x0,x1,value,even_contribution,odd_contribution,truncation_bound,quad_error"}};
  return drive(cfg, grid, specs, {}, [&](int, const EllipticityParams& p, PointSlot& slot) {
    for (std::size_t fi = 0; fi < fields.size(); ++fi) {
      for (const auto& pt : pts) {
        const std::span<const double> x(pt.data(), static_cast<std::size_t>(cfg.dim));
        const std::string coords = fmt_double(pt[0]) + "," + fmt_double(pt[1]);
        const auto emit = [&](const char* op, const OperatorValue& v) {
          slot.rows[0].push_back(point_prefix(p) + "," + field_exprs[fi] + "," + op + "," + coords + "," +
                                 op_row_tail(v));
        };
        emit("m_sigma_plus", eval_extremal_even(fields[fi], x, p, Sign::plus, cfg.quad));
        emit("m_sigma_minus", eval_extremal_even(fields[fi], x, p, Sign::minus, cfg.quad));
        emit("dtau_abs", eval_dtau(fields[fi], x, p, cfg.quad));
        emit("m_l0_plus", eval_m_l0(fields[fi], x, p, Sign::plus, cfg.quad));
        emit("m_l0_minus", eval_m_l0(fields[fi], x, p, Sign::minus, cfg.quad));
      }
    }
  });
}

RecipeResult run_barrier_suite(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid) {
  const std::vector<double> s_grid = {0.25, 0.5, 0.75, 1.0};
  const std::vector<double> c_grid = {0.5, 1.0, 2.0, 4.0};
  const std::vector<double> a_grid = {0.2, 0.25, 0.4};
  const std::vector<FileSpec> specs = {
      {"barriers.csv",
       "sigma,tau,b,interior_found,s_star,delta_star,exterior_found,c,alpha_b,ring_margin,far_margin"}};
  return drive(cfg, grid, specs, {}, [&](int, const EllipticityParams& p, PointSlot& slot) {
    const auto inner = barrier_interior(p, s_grid, cfg.quad);
    const auto outer = barrier_exterior_search(p, c_grid, a_grid, cfg.quad);
    slot.rows[0].push_back(point_prefix(p) + "," + (inner.found ? "1" : "0") + "," + fmt_double(inner.s_star) + "," +
                           fmt_double(inner.delta_star) + "," + (outer.found ? "1" : "0") + "," +
                           fmt_double(outer.c) + "," + fmt_double(outer.alpha_b) + "," + fmt_double(outer.max_ring) +
                           "," + fmt_double(outer.max_far));
  });
}

RecipeResult run_abp_suite(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid) {
  constexpr int kFields = 5;
  // The envelope machinery works on the ball of radius 3, so the grid must
  // cover it regardless of the configured box.
  const double radius = std::max(cfg.box_radius, 3.0);

  std::vector<std::string> exprs;
  std::vector<GridField> dips;
  std::vector<EnvelopeResult> envs;
  std::vector<std::string> pre_files;
  for (int i = 0; i < kFields; ++i) {
    exprs.push_back(dip_expr(cfg.seed, i, cfg.dim));
    dips.push_back(fields::make_named_field(exprs.back(), cfg.dim, radius, cfg.spacing));
    envs.push_back(convex_envelope(dips.back()));
    const std::string path = cfg.out_dir + "/envelope_f" + fmt_long(i) + ".csv";
    save_field_csv(envs.back().gamma, path);
    pre_files.push_back(path);
  }
  const GridField f_const = GridField::constant(cfg.dim, radius, cfg.spacing, 1.0);

  const std::vector<FileSpec> specs = {
      {"abp_cubes.csv",
       "sigma,tau,b,field,cube,depth,diameter,max_f,grad_image,good_fraction,crit_good,crit_grad,resolution_limited"},
      {"abp_summary.csv",
       "sigma,tau,b,field,cubes,contact_count,uncovered_contact,max_u_minus,grad_image_total,grad_image_hull,ratio"}};
  return drive(cfg, grid, specs, std::move(pre_files), [&](int, const EllipticityParams& p, PointSlot& slot) {
    for (int i = 0; i < kFields; ++i) {
      const CubeCover cover = abp_cover(dips[static_cast<std::size_t>(i)], envs[static_cast<std::size_t>(i)],
                                        f_const, p);
      for (std::size_t q = 0; q < cover.cubes.size(); ++q) {
        const AbpCube& c = cover.cubes[q];
        slot.rows[0].push_back(point_prefix(p) + "," + fmt_long(i) + "," + fmt_long(static_cast<long>(q)) + "," +
                               fmt_long(c.depth) + "," + fmt_double(c.diameter) + "," + fmt_double(c.max_f) + "," +
                               fmt_double(c.grad_image) + "," + fmt_double(c.good_fraction) + "," +
                               (c.crit_good ? "1" : "0") + "," + (c.crit_grad ? "1" : "0") + "," +
                               (c.resolution_limited ? "1" : "0"));
      }
      const double denom = std::pow(std::max(cover.grad_image_total, 1e-300), 1.0 / cfg.dim);
      const double ratio = cover.grad_image_total > 0.0 ? cover.max_u_minus / denom : 0.0;
      slot.rows[1].push_back(point_prefix(p) + "," + fmt_long(i) + "," +
                             fmt_long(static_cast<long>(cover.cubes.size())) + "," + fmt_long(cover.contact_count) +
                             "," + fmt_long(cover.uncovered_contact) + "," + fmt_double(cover.max_u_minus) + "," +
                             fmt_double(cover.grad_image_total) + "," + fmt_double(cover.grad_image_hull) + "," +
                             fmt_double(ratio));
    }
  });
}

struct SolveCase {
  const char* name;
  OperatorKind op;
  const char* exterior;
  double rhs_value;
};

RecipeResult run_solve_suite(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid) {
  const std::vector<SolveCase> cases = {
      {"smooth", OperatorKind::m_l0_plus, "gaussian(1.0)", -1.0},
      {"rough", OperatorKind::m_l0_minus, "roughsign(9)", 0.0},
  };
  const std::vector<FileSpec> specs = {
      {"solves.csv", "sigma,tau,b,problem,converged,iterations,final_residual,dt,odd_truncation_radius,sup_u"}};
  return drive(cfg, grid, specs, {}, [&](int, const EllipticityParams& p, PointSlot& slot) {
    bool any_converged = false;
    for (const auto& sc : cases) {
      GridField g = fields::make_named_field(sc.exterior, cfg.dim, cfg.box_radius, cfg.spacing);
      GridField f = GridField::constant(cfg.dim, cfg.box_radius, cfg.spacing, sc.rhs_value);
      DirichletProblem prob(sc.op, p, f, g, cfg.box_radius / 2.0);
      prob.quad = cfg.quad;
      const SolveResult res = solve(prob, 1e-8, 300000, 1);
      any_converged = any_converged || res.report.converged;
      slot.rows[0].push_back(point_prefix(p) + "," + sc.name + "," + (res.report.converged ? "1" : "0") + "," +
                             fmt_long(res.report.iterations) + "," + fmt_double(res.report.final_residual) + "," +
                             fmt_double(res.report.dt_used) + "," + fmt_double(res.report.odd_truncation_radius) +
                             "," + fmt_double(res.u.sup_norm()));
    }
    if (!any_converged) fail(Errc::no_convergence, "no problem in the suite converged at this point");
  });
}

RecipeResult run_regularity_sweep(const ExperimentConfig& cfg, const std::vector<EllipticityParams>& grid) {
  const std::vector<FileSpec> specs = {
      {"regularity.csv",
       "sigma,tau,b,converged,final_residual,alpha_min,alpha_median,c_emp,centers_valid,centers_used,"
       "inequality_margin"}};
  return drive(cfg, grid, specs, {}, [&](int, const EllipticityParams& p, PointSlot& slot) {
    GridField g = fields::make_named_field("roughsign(9)", cfg.dim, cfg.box_radius, cfg.spacing);
    GridField f = GridField::constant(cfg.dim, cfg.box_radius, cfg.spacing, 0.0);
    DirichletProblem prob(OperatorKind::m_l0_minus, p, f, g, cfg.box_radius / 2.0);
    prob.quad = cfg.quad;
    const SolveResult res = solve(prob, 1e-7, 300000, 1);
    if (!res.report.converged) fail(Errc::no_convergence, "sweep solve did not converge");
    const HolderReport hol = holder_certificate(res.u, p, 0.0, {}, 0.0, 8, cfg.quad);
    slot.rows[0].push_back(point_prefix(p) + ",1," + fmt_double(res.report.final_residual) + "," +
                           fmt_double(hol.alpha_min) + "," + fmt_double(hol.alpha_median) + "," +
                           fmt_double(hol.c_emp) + "," + fmt_long(hol.centers_valid) + "," +
                           fmt_long(hol.centers_used) + "," + fmt_double(hol.inequality_margin));
  });
}

} // namespace

ExperimentConfig experiment_from_config(const Config& c) {
  static const std::vector<std::string> kKnown = {
      "recipe",      "sigma",   "tau",     "b",       "b_rule",           "lambda_lo",
      "lambda_hi",   "dim",     "box_radius", "spacing", "rings_per_decade", "angular_points",
      "out_dir",     "seed",    "threads"};
  for (const auto& key : c.keys()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      fail(Errc::invalid_parameter, "unknown configuration key '" + key + "'");
    }
  }

  ExperimentConfig cfg;
  cfg.recipe = c.get("recipe");
  cfg.sigma = c.double_list("sigma");
  cfg.tau = c.double_list("tau");
  if (cfg.sigma.empty()) fail(Errc::invalid_parameter, "configuration needs at least one sigma");
  if (cfg.tau.empty()) fail(Errc::invalid_parameter, "configuration needs at least one tau");
  if (c.has("b")) cfg.b = c.double_list("b");
  cfg.b_rule = c.get_or("b_rule", "fixed");
  cfg.lambda_lo = c.get_double_or("lambda_lo", cfg.lambda_lo);
  cfg.lambda_hi = c.get_double_or("lambda_hi", cfg.lambda_hi);
  cfg.dim = static_cast<int>(c.get_long_or("dim", 1));
  cfg.box_radius = c.get_double_or("box_radius", cfg.box_radius);
  cfg.spacing = c.get_double_or("spacing", cfg.spacing);
  cfg.quad.rings_per_decade = static_cast<int>(c.get_long_or("rings_per_decade", cfg.quad.rings_per_decade));
  cfg.quad.angular_points = static_cast<int>(c.get_long_or("angular_points", cfg.quad.angular_points));
  cfg.out_dir = c.get_or("out_dir", ".");
  cfg.seed = static_cast<std::uint64_t>(c.get_long_or("seed", 0));
  cfg.threads = static_cast<int>(c.get_long_or("threads", 1));

  if (cfg.dim != 1 && cfg.dim != 2) fail(Errc::invalid_parameter, "dim must be 1 or 2");
  if (!(cfg.spacing > 0.0)) fail(Errc::invalid_parameter, "spacing must be positive");
  if (!(cfg.box_radius > 0.0)) fail(Errc::invalid_parameter, "box_radius must be positive");
  if (cfg.threads < 1) fail(Errc::invalid_parameter, "threads must be at least 1");
  return cfg;
}

EllipticityParams params_from_config(const Config& c) {
  static const std::vector<std::string> kKnown = {"sigma", "tau", "lambda_lo", "lambda_hi", "b", "dim"};
  for (const auto& key : c.keys()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      fail(Errc::invalid_parameter, "unknown parameter key '" + key + "'");
    }
  }
  EllipticityParams p;
  p.sigma = c.get_double("sigma");
  p.tau = c.get_double("tau");
  p.lambda_lo = c.get_double_or("lambda_lo", p.lambda_lo);
  p.lambda_hi = c.get_double_or("lambda_hi", p.lambda_hi);
  p.b = c.get_double_or("b", p.b);
  p.dim = static_cast<int>(c.get_long_or("dim", p.dim));
  return p;
}

std::vector<EllipticityParams> expand_grid(const ExperimentConfig& cfg) {
  if (cfg.b_rule != "fixed" && cfg.b_rule != "h3max") {
    fail(Errc::invalid_parameter, "b_rule must be 'fixed' or 'h3max', got '" + cfg.b_rule + "'");
  }
  if (cfg.sigma.empty() || cfg.tau.empty() || cfg.b.empty()) {
    fail(Errc::invalid_parameter, "sigma, tau, and b lists must be nonempty");
  }
  const std::size_t points = std::max({cfg.sigma.size(), cfg.tau.size(), cfg.b.size()});
  require_list_shape("sigma", cfg.sigma.size(), points);
  require_list_shape("tau", cfg.tau.size(), points);
  require_list_shape("b", cfg.b.size(), points);

  std::vector<EllipticityParams> grid;
  for (std::size_t i = 0; i < points; ++i) {
    EllipticityParams p;
    p.sigma = pick(cfg.sigma, i);
    p.tau = pick(cfg.tau, i);
    p.lambda_lo = cfg.lambda_lo;
    p.lambda_hi = cfg.lambda_hi;
    p.dim = cfg.dim;
    if (cfg.b_rule == "h3max") {
      p.b = 0.99 * p.lambda_lo * p.universal.A0 * (2.0 - p.sigma) / (1.0 - p.tau);
    } else {
      p.b = pick(cfg.b, i);
    }
    grid.push_back(p);
  }
  return grid;
}

RecipeResult run_recipe(const ExperimentConfig& cfg) {
  const RecipeKind kind = recipe_kind(cfg.recipe);
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec || !std::filesystem::is_directory(cfg.out_dir)) {
    fail(Errc::io, "cannot create output directory: " + cfg.out_dir);
  }
  const auto grid = expand_grid(cfg);
  switch (kind) {
    case RecipeKind::eval: return run_eval_suite(cfg, grid);
    case RecipeKind::barrier: return run_barrier_suite(cfg, grid);
    case RecipeKind::abp: return run_abp_suite(cfg, grid);
    case RecipeKind::solve_suite: return run_solve_suite(cfg, grid);
    case RecipeKind::regularity: return run_regularity_sweep(cfg, grid);
  }
  fail(Errc::internal, "unhandled recipe kind");
}

} // namespace nlelab
