#pragma once

#include <cmath>
#include <span>

namespace nlelab {

/// Least-squares line y = slope*x + intercept with coefficient of determination.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};

inline LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
  LineFit f;
  f.n = static_cast<int>(xs.size());
  if (f.n < 2) return f;
  double sx = 0, sy = 0;
  for (int i = 0; i < f.n; ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / f.n, my = sy / f.n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < f.n; ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

} // namespace nlelab
