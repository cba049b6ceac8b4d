#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/csv.hpp"
#include "core/error.hpp"
#include "core/fields.hpp"
#include "core/gridfield.hpp"
#include "core/params.hpp"
#include "core/quadrature.hpp"
#include "core/recipes.hpp"

using namespace nlelab;

namespace {

std::string fresh_dir(const std::string& name) {
  const std::string path = "/tmp/nlelab_recipes/" + name;
  std::filesystem::remove_all(path);
  return path;
}

std::vector<std::string> lines_of(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : read_text_file(path)) {
    if (c == '\n') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool wrote_file(const RecipeResult& res, const std::string& basename) {
  for (const auto& f : res.files) {
    if (std::filesystem::path(f).filename() == basename) return true;
  }
  return false;
}

ExperimentConfig tiny_barrier_config(const std::string& dir) {
  ExperimentConfig cfg;
  cfg.recipe = "barrier-suite";
  cfg.sigma = {1.5, 1.9};
  cfg.tau = {0.5};
  cfg.b = {0.0};
  cfg.out_dir = dir;
  return cfg;
}

} // namespace

TEST_CASE("experiment config maps keys and expands the grid") {
  const Config c = Config::parse_string(
      "recipe = barrier-suite\n"
      "sigma = 1.5\n"
      "sigma = 1.9\n"
      "tau = 0.5\n"
      "b = 0.1\n"
      "lambda_lo = 1\n"
      "lambda_hi = 2\n"
      "dim = 1\n"
      "box_radius = 2\n"
      "spacing = 0.0625\n"
      "rings_per_decade = 24\n"
      "angular_points = 16\n"
      "out_dir = /tmp/nlelab_recipes/map\n"
      "seed = 11\n"
      "threads = 2\n");
  const ExperimentConfig cfg = experiment_from_config(c);
  CHECK(cfg.recipe == "barrier-suite");
  CHECK(cfg.sigma == std::vector<double>{1.5, 1.9});
  CHECK(cfg.tau == std::vector<double>{0.5});
  CHECK(cfg.b == std::vector<double>{0.1});
  CHECK(cfg.lambda_lo == 1.0);
  CHECK(cfg.lambda_hi == 2.0);
  CHECK(cfg.dim == 1);
  CHECK(cfg.box_radius == 2.0);
  CHECK(cfg.spacing == 0.0625);
  CHECK(cfg.quad.rings_per_decade == 24);
  CHECK(cfg.quad.angular_points == 16);
  CHECK(cfg.out_dir == "/tmp/nlelab_recipes/map");
  CHECK(cfg.seed == 11);
  CHECK(cfg.threads == 2);

  // Zip semantics: singletons broadcast across the longest list.
  const auto grid = expand_grid(cfg);
  REQUIRE(grid.size() == 2);
  CHECK(grid[0].sigma == 1.5);
  CHECK(grid[0].tau == 0.5);
  CHECK(grid[1].sigma == 1.9);
  CHECK(grid[1].tau == 0.5);
  CHECK(grid[0].b == 0.1);
  CHECK(grid[0].lambda_hi == 2.0);

  // b_rule = h3max derives b from the drift cap with a 1 percent margin.
  ExperimentConfig hm = cfg;
  hm.b_rule = "h3max";
  const auto grid2 = expand_grid(hm);
  CHECK(grid2[0].b == doctest::Approx(0.99 * 1.0 * (2.0 - 1.5) / (1.0 - 0.5)).epsilon(1e-12));
  CHECK(grid2[1].b == doctest::Approx(0.99 * 1.0 * (2.0 - 1.9) / (1.0 - 0.5)).epsilon(1e-12));

  // Mismatched list lengths and unknown keys are rejected.
  ExperimentConfig bad = cfg;
  bad.sigma = {1.5, 1.7, 1.9};
  bad.tau = {0.5, 0.6};
  CHECK_THROWS_AS(expand_grid(bad), Error);

  CHECK_THROWS_AS(experiment_from_config(Config::parse_string("recipe = eval-suite\nsigma = 1.5\ntau = 0.5\ntypo_key = 3\n")),
                  Error);
  CHECK_THROWS_AS(experiment_from_config(Config::parse_string("sigma = 1.5\ntau = 0.5\n")), Error);

  ExperimentConfig badrule = cfg;
  badrule.b_rule = "whatever";
  CHECK_THROWS_AS(expand_grid(badrule), Error);
}

TEST_CASE("scalar params read from config with exact field names") {
  const Config c = Config::parse_string("sigma = 1.25\ntau = 0.25\nlambda_lo = 1\nlambda_hi = 3\nb = 0.2\ndim = 2\n");
  const EllipticityParams p = params_from_config(c);
  CHECK(p.sigma == 1.25);
  CHECK(p.tau == 0.25);
  CHECK(p.lambda_lo == 1.0);
  CHECK(p.lambda_hi == 3.0);
  CHECK(p.b == 0.2);
  CHECK(p.dim == 2);

  CHECK_THROWS_AS(params_from_config(Config::parse_string("tau = 0.5\n")), Error);
  CHECK_THROWS_AS(params_from_config(Config::parse_string("sigma = 1.5\ntau = 0.5\nwhat = 1\n")), Error);
}

TEST_CASE("barrier suite writes documented rows, skips bad points, repeats bytes") {
  const std::string dir = fresh_dir("barrier");
  ExperimentConfig cfg = tiny_barrier_config(dir);
  const RecipeResult res = run_recipe(cfg);

  CHECK(res.exit_code == 0);
  CHECK(res.points_ok == 2);
  CHECK(res.points_skipped == 0);
  CHECK(res.points_failed == 0);
  CHECK(wrote_file(res, "barriers.csv"));
  CHECK(wrote_file(res, "summary.csv"));

  const auto rows = lines_of(dir + "/barriers.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "sigma,tau,b,interior_found,s_star,delta_star,exterior_found,c,alpha_b,ring_margin,far_margin");
  const auto cells = split_csv(rows[1]);
  REQUIRE(cells.size() == 11);
  CHECK(cells[0] == "1.5");
  CHECK(cells[1] == "0.5");
  CHECK(cells[3] == "1");               // interior certificate found
  CHECK(parse_double(cells[5]) > 0.0);  // delta_star

  const auto sum = lines_of(dir + "/summary.csv");
  REQUIRE(sum.size() == 3);
  CHECK(sum[0] == "recipe,point,sigma,tau,b,status,detail");
  CHECK(split_csv(sum[1])[5] == "ok");

  // Byte-identical re-run.
  const std::string dir2 = fresh_dir("barrier2");
  cfg.out_dir = dir2;
  run_recipe(cfg);
  CHECK(read_text_file(dir + "/barriers.csv") == read_text_file(dir2 + "/barriers.csv"));
  CHECK(read_text_file(dir + "/summary.csv") == read_text_file(dir2 + "/summary.csv"));

  // A point violating the drift cap is skipped with a reason, exit still 0.
  const std::string dir3 = fresh_dir("barrier3");
  ExperimentConfig skip = tiny_barrier_config(dir3);
  skip.sigma = {1.5};
  skip.b = {50.0};
  const RecipeResult res3 = run_recipe(skip);
  CHECK(res3.exit_code == 0);
  CHECK(res3.points_skipped == 1);
  CHECK(res3.points_ok == 0);
  const auto sum3 = lines_of(dir3 + "/summary.csv");
  REQUIRE(sum3.size() == 2);
  const auto c3 = split_csv(sum3[1]);
  CHECK(c3[5] == "skipped");
  CHECK(c3[6].find("h3") != std::string::npos);
  CHECK(lines_of(dir3 + "/barriers.csv").size() == 1); // header only
}

TEST_CASE("eval suite emits one row per field, operator, and point") {
  const std::string dir = fresh_dir("eval");
  ExperimentConfig cfg;
  cfg.recipe = "eval-suite";
  cfg.sigma = {1.5};
  cfg.tau = {0.5};
  cfg.b = {0.1};
  cfg.box_radius = 2.0;
  cfg.spacing = 1.0 / 16.0;
  cfg.out_dir = dir;
  const RecipeResult res = run_recipe(cfg);
  CHECK(res.exit_code == 0);
  CHECK(wrote_file(res, "eval.csv"));

  const auto rows = lines_of(dir + "/eval.csv");
  CHECK(rows[0] == "sigma,tau,b,field,op,x0,x1,value,even_contribution,odd_contribution,truncation_bound,quad_error");
  // 1 grid point x 4 fields x 5 operators x 3 sample points.
  REQUIRE(rows.size() == 1 + 4 * 5 * 3);

  // Cross-check one row against a direct evaluation (same code path, so the
  // formatted cells must match exactly).
  GridField bump = fields::make_named_field("bump(1.9)", 1, 2.0, 1.0 / 16.0);
  EllipticityParams p;
  p.sigma = 1.5;
  p.tau = 0.5;
  p.b = 0.1;
  const double x0[1] = {0.0};
  const auto direct = eval_extremal_even(bump, std::span<const double>(x0, 1), p, Sign::plus, {});
  bool matched = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split_csv(rows[i]);
    REQUIRE(cells.size() == 12);
    if (cells[3] == "bump(1.9)" && cells[4] == "m_sigma_plus" && cells[5] == "0") {
      CHECK(cells[7] == fmt_double(direct.value));
      CHECK(cells[8] == fmt_double(direct.even_contribution));
      matched = true;
    }
  }
  CHECK(matched);
}

TEST_CASE("solve suite reports converged problems and hard failures") {
  const std::string dir = fresh_dir("solve");
  ExperimentConfig cfg;
  cfg.recipe = "solve-suite";
  cfg.sigma = {1.5};
  cfg.tau = {0.5};
  cfg.b = {0.0};
  cfg.box_radius = 2.0;
  cfg.spacing = 1.0 / 16.0;
  cfg.out_dir = dir;
  const RecipeResult res = run_recipe(cfg);
  CHECK(res.exit_code == 0);
  CHECK(res.points_ok == 1);

  const auto rows = lines_of(dir + "/solves.csv");
  CHECK(rows[0] == "sigma,tau,b,problem,converged,iterations,final_residual,dt,odd_truncation_radius,sup_u");
  REQUIRE(rows.size() == 3); // smooth + rough
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = split_csv(rows[i]);
    REQUIRE(cells.size() == 10);
    CHECK(cells[4] == "1");
    CHECK(parse_double(cells[6]) <= 1e-7);
    CHECK(parse_double(cells[9]) > 0.0);
  }

  // A drift-dominated point whose truncation radius falls under the grid
  // resolution is a hard numerical failure: logged, and with no surviving
  // points the recipe exits 2.
  const std::string dir2 = fresh_dir("solve_fail");
  ExperimentConfig hard = cfg;
  hard.out_dir = dir2;
  hard.sigma = {1.05};
  hard.tau = {0.9};
  hard.b_rule = "h3max";
  hard.spacing = 1.0 / 8.0;
  const RecipeResult res2 = run_recipe(hard);
  CHECK(res2.exit_code == 2);
  CHECK(res2.points_failed == 1);
  const auto sum2 = lines_of(dir2 + "/summary.csv");
  REQUIRE(sum2.size() == 2);
  CHECK(split_csv(sum2[1])[5] == "failed");
}

TEST_CASE("abp suite emits cube rows, summaries, and envelope dumps") {
  const std::string dir = fresh_dir("abp");
  ExperimentConfig cfg;
  cfg.recipe = "abp-suite";
  cfg.sigma = {1.5};
  cfg.tau = {0.5};
  cfg.b = {0.0};
  cfg.dim = 1;
  cfg.box_radius = 3.0;
  cfg.spacing = 1.0 / 16.0;
  cfg.seed = 7;
  cfg.out_dir = dir;
  const RecipeResult res = run_recipe(cfg);
  CHECK(res.exit_code == 0);
  CHECK(wrote_file(res, "abp_cubes.csv"));
  CHECK(wrote_file(res, "abp_summary.csv"));
  CHECK(wrote_file(res, "envelope_f0.csv"));
  CHECK(wrote_file(res, "envelope_f4.csv"));

  const auto cubes = lines_of(dir + "/abp_cubes.csv");
  CHECK(cubes[0] ==
        "sigma,tau,b,field,cube,depth,diameter,max_f,grad_image,good_fraction,crit_good,crit_grad,resolution_limited");
  CHECK(cubes.size() >= 1 + 5);
  for (std::size_t i = 1; i < cubes.size(); ++i) {
    const auto cc = split_csv(cubes[i]);
    REQUIRE(cc.size() == 13);
    // Retained cubes satisfy the good-measure criterion unless the splitter
    // hit the resolution floor.
    CHECK((cc[10] == "1" || cc[12] == "1"));
    CHECK(parse_double(cc[6]) > 0.0);
  }

  const auto summary = lines_of(dir + "/abp_summary.csv");
  CHECK(summary[0] ==
        "sigma,tau,b,field,cubes,contact_count,uncovered_contact,max_u_minus,grad_image_total,grad_image_hull,ratio");
  REQUIRE(summary.size() == 1 + 5);
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto sc = split_csv(summary[i]);
    REQUIRE(sc.size() == 11);
    CHECK(parse_double(sc[7]) > 0.0);   // max_u_minus
    CHECK(parse_double(sc[10]) > 0.0);  // ratio
  }

  // Envelope dumps reload as fields with the zero tail.
  const GridField gamma = load_field_csv(dir + "/envelope_f0.csv");
  CHECK(gamma.dim() == 1);
  CHECK(gamma.box_radius() == 3.0);
  CHECK(gamma.tail().is_const);
  CHECK(gamma.tail().value == 0.0);
  CHECK(gamma.node_min() < 0.0);

  // Same seed: identical bytes. Different seed: different dip geometry.
  const std::string dir2 = fresh_dir("abp_same");
  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = dir2;
  run_recipe(cfg2);
  CHECK(read_text_file(dir + "/abp_cubes.csv") == read_text_file(dir2 + "/abp_cubes.csv"));
  CHECK(read_text_file(dir + "/abp_summary.csv") == read_text_file(dir2 + "/abp_summary.csv"));

  const std::string dir3 = fresh_dir("abp_seed");
  ExperimentConfig cfg3 = cfg;
  cfg3.out_dir = dir3;
  cfg3.seed = 8;
  run_recipe(cfg3);
  CHECK(read_text_file(dir + "/abp_summary.csv") != read_text_file(dir3 + "/abp_summary.csv"));
}

TEST_CASE("regularity sweep emits the per-sigma summary table") {
  const std::string dir = fresh_dir("reg");
  ExperimentConfig cfg;
  cfg.recipe = "regularity-sweep";
  cfg.sigma = {1.5};
  cfg.tau = {0.5};
  cfg.b = {0.0};
  cfg.box_radius = 2.0;
  cfg.spacing = 1.0 / 32.0;
  cfg.out_dir = dir;
  const RecipeResult res = run_recipe(cfg);
  CHECK(res.exit_code == 0);
  CHECK(wrote_file(res, "regularity.csv"));

  const auto rows = lines_of(dir + "/regularity.csv");
  CHECK(rows[0] ==
        "sigma,tau,b,converged,final_residual,alpha_min,alpha_median,c_emp,centers_valid,centers_used,inequality_margin");
  REQUIRE(rows.size() == 2);
  const auto cells = split_csv(rows[1]);
  REQUIRE(cells.size() == 11);
  CHECK(cells[3] == "1");
  CHECK(parse_double(cells[5]) >= 0.05);  // alpha_min
  CHECK(parse_long(cells[8]) > 0);        // centers_valid
}

TEST_CASE("unknown recipes and unwritable outputs are configuration errors") {
  ExperimentConfig cfg = tiny_barrier_config(fresh_dir("err"));
  cfg.recipe = "zap";
  try {
    run_recipe(cfg);
    FAIL("expected unknown_recipe");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unknown_recipe);
  }

  // A regular file in the way of the output directory is an io error.
  write_text_file("/tmp/nlelab_blocker.txt", "x\n");
  ExperimentConfig blocked = tiny_barrier_config("/tmp/nlelab_blocker.txt/sub");
  try {
    run_recipe(blocked);
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::io);
  }
}
