#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/params.hpp"
#include "core/quadrature.hpp"

namespace nlelab {

/// One experiment: a named recipe over a zipped parameter grid. The sigma,
/// tau, and b lists must share one length (singletons broadcast); every grid
/// point is vetted against the structural hypotheses and skipped with a
/// logged reason when it fails. All randomness derives from the seed.
struct ExperimentConfig {
  std::string recipe;
  std::vector<double> sigma;
  std::vector<double> tau;
  std::vector<double> b = {0.0};
  std::string b_rule = "fixed"; ///< "fixed" uses the b list; "h3max" derives b = 0.99 lambda_lo A0 (2-sigma)/(1-tau)
  double lambda_lo = 1.0;
  double lambda_hi = 2.0;
  int dim = 1;
  double box_radius = 2.0;
  double spacing = 1.0 / 32.0;
  QuadratureConfig quad{};
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Reads an ExperimentConfig from flat key = value text. Keys mirror the
/// field names exactly (quadrature overrides as rings_per_decade and
/// angular_points); unknown keys are rejected.
ExperimentConfig experiment_from_config(const Config& c);

/// Reads a scalar parameter set; keys sigma, tau, lambda_lo, lambda_hi, b,
/// dim (the last four optional). Unknown keys are rejected.
EllipticityParams params_from_config(const Config& c);

/// Expands the zipped lists into one parameter set per grid point.
std::vector<EllipticityParams> expand_grid(const ExperimentConfig& cfg);

struct RecipePoint {
  int index = 0;
  EllipticityParams params;
  std::string status; ///< "ok", "skipped", or "failed"
  std::string detail;
};

struct RecipeResult {
  /// 0 when the run produced output; 2 when every attempted point failed
  /// numerically. Configuration problems (unknown recipe, unwritable output)
  /// throw instead.
  int exit_code = 0;
  std::vector<std::string> files; ///< paths written, in creation order
  std::vector<RecipePoint> points;
  long points_ok = 0;
  long points_skipped = 0;
  long points_failed = 0;
};

/// Runs "eval-suite", "barrier-suite", "abp-suite", "solve-suite", or
/// "regularity-sweep", writing the recipe's CSV reports plus summary.csv
/// under out_dir. Identical config and seed produce byte-identical files;
/// per-point failures are logged in the summary and the run continues.
RecipeResult run_recipe(const ExperimentConfig& cfg);

} // namespace nlelab
