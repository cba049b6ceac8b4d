#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/params.hpp"

using namespace nlelab;

static EllipticityParams base_params() {
  EllipticityParams p;
  p.sigma = 1.5;
  p.tau = 0.5;
  p.lambda_lo = 1.0;
  p.lambda_hi = 2.0;
  p.b = 0.25;
  p.dim = 1;
  p.universal = {0.5, 0.1, 0.5, 1.0};
  return p;
}

TEST_CASE("well-posed parameters pass all hypotheses") {
  const auto r = check_hypotheses(base_params());
  CHECK(r.params_ok);
  CHECK(r.h1);
  CHECK(r.h2);
  CHECK(r.h3);
  CHECK(r.all());
  CHECK(r.margin_h1 > 0);
  CHECK(r.margin_h2 == doctest::Approx(0.5));
  // H3 margin: 1 * 1 * 0.5 - 0.25 * 0.5 = 0.375
  CHECK(r.margin_h3 == doctest::Approx(0.375));
}

TEST_CASE("H1 fails when tau reaches min(1, sigma)") {
  auto p = base_params();
  p.sigma = 1.5;
  p.tau = 1.0;
  const auto r = check_hypotheses(p);
  CHECK_FALSE(r.h1);
  CHECK(r.margin_h1 <= 0);
}

TEST_CASE("H1 fails for sigma below sigma0 or at 2") {
  auto p = base_params();
  p.sigma = 0.4;
  CHECK_FALSE(check_hypotheses(p).h1);
  p.sigma = 2.0;
  p.tau = 0.5;
  CHECK_FALSE(check_hypotheses(p).h1);
}

TEST_CASE("H2 boundary case sigma=1.99 tau=0.99 m=1 passes with zero margin") {
  auto p = base_params();
  p.sigma = 1.99;
  p.tau = 0.99;
  p.universal.m = 1.0;
  const auto r = check_hypotheses(p);
  CHECK(r.h2);
  CHECK(std::abs(r.margin_h2) < 1e-12);
}

TEST_CASE("H2 fails once the gap drops below m") {
  auto p = base_params();
  p.sigma = 1.2;
  p.tau = 0.8;
  p.universal.m = 0.5;
  const auto r = check_hypotheses(p);
  CHECK_FALSE(r.h2);
  CHECK(r.margin_h2 == doctest::Approx(-0.1));
}

TEST_CASE("H3 fails for oversized drift") {
  auto p = base_params();
  p.b = 10.0;
  const auto r = check_hypotheses(p);
  CHECK_FALSE(r.h3);
  CHECK(r.margin_h3 < 0);
}

TEST_CASE("H3 tightens as sigma approaches 2") {
  auto p = base_params();
  p.sigma = 1.99;
  p.tau = 0.5;
  p.b = 0.25;
  // 1 * 1 * 0.01 = 0.01 < 0.125
  CHECK_FALSE(check_hypotheses(p).h3);
  p.b = 0.01;
  CHECK(check_hypotheses(p).h3);
}

TEST_CASE("non-finite input throws invalid_parameter") {
  auto p = base_params();
  p.sigma = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(check_hypotheses(p), Error);
  try {
    check_hypotheses(p);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_parameter);
  }
}

TEST_CASE("degenerate band and bad dim flagged by params_ok") {
  auto p = base_params();
  p.lambda_lo = 3.0; // above lambda_hi
  CHECK_FALSE(check_hypotheses(p).params_ok);
  p = base_params();
  p.dim = 3;
  CHECK_FALSE(check_hypotheses(p).params_ok);
  p = base_params();
  p.b = -1.0;
  CHECK_FALSE(check_hypotheses(p).params_ok);
}
