#include "core/gridfield.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/csv.hpp"
#include "core/error.hpp"

namespace nlelab {

namespace {

constexpr double kNodeSnap = 1e-9;

long checked_nodes_per_axis(double radius, double spacing) {
  const double ratio = radius / spacing;
  const double rounded = std::round(ratio);
  if (!(radius > 0) || !(spacing > 0) || std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    fail(Errc::invalid_parameter, "box_radius/spacing must be a positive integer");
  }
  return 2 * static_cast<long>(rounded) + 1;
}

} // namespace

GridField::GridField(int dim, double box_radius, double spacing, std::vector<double> values, Tail tail)
    : dim_(dim), radius_(box_radius), spacing_(spacing), tail_(std::move(tail)) {
  if (dim_ != 1 && dim_ != 2) fail(Errc::invalid_parameter, "dim must be 1 or 2");
  naxis_ = checked_nodes_per_axis(radius_, spacing_);
  const long expect = dim_ == 1 ? naxis_ : naxis_ * naxis_;
  if (static_cast<long>(values.size()) != expect) {
    fail(Errc::invalid_parameter, "value array size does not match grid");
  }
  values_ = std::move(values);
  for (double v : values_) {
    if (!std::isfinite(v)) fail(Errc::invalid_parameter, "non-finite node value");
  }
  if (tail_.is_const && !std::isfinite(tail_.value)) fail(Errc::invalid_parameter, "non-finite tail constant");
  if (!tail_.is_const && !tail_.fn) fail(Errc::invalid_parameter, "callable tail without callable");
  refresh_node_bounds();
  refresh_tail_bounds();
}

GridField GridField::from_function(int dim, double box_radius, double spacing,
                                   const std::function<double(std::span<const double>)>& f, Tail tail) {
  const long naxis = checked_nodes_per_axis(box_radius, spacing);
  std::vector<double> vals;
  if (dim == 1) {
    vals.resize(static_cast<std::size_t>(naxis));
    for (long i = 0; i < naxis; ++i) {
      const double x = -box_radius + spacing * static_cast<double>(i);
      vals[static_cast<std::size_t>(i)] = f(std::span<const double>(&x, 1));
    }
  } else {
    vals.resize(static_cast<std::size_t>(naxis * naxis));
    for (long iy = 0; iy < naxis; ++iy) {
      for (long ix = 0; ix < naxis; ++ix) {
        const std::array<double, 2> x = {-box_radius + spacing * static_cast<double>(ix),
                                         -box_radius + spacing * static_cast<double>(iy)};
        vals[static_cast<std::size_t>(ix + naxis * iy)] = f(std::span<const double>(x.data(), 2));
      }
    }
  }
  return GridField(dim, box_radius, spacing, std::move(vals), std::move(tail));
}

GridField GridField::constant(int dim, double box_radius, double spacing, double c) {
  const long naxis = checked_nodes_per_axis(box_radius, spacing);
  const long count = dim == 1 ? naxis : naxis * naxis;
  return GridField(dim, box_radius, spacing, std::vector<double>(static_cast<std::size_t>(count), c),
                   Tail::constant(c));
}

void GridField::set_value(long flat, double v) {
  if (!std::isfinite(v)) fail(Errc::invalid_parameter, "non-finite node value");
  values_[static_cast<std::size_t>(flat)] = v;
  vmin_ = std::min(vmin_, v);
  vmax_ = std::max(vmax_, v);
}

std::array<double, 2> GridField::node_coords(long flat) const {
  if (dim_ == 1) return {axis_coord(flat), 0.0};
  return {axis_coord(flat % naxis_), axis_coord(flat / naxis_)};
}

double GridField::tail_at(std::span<const double> x) const {
  if (tail_.is_const) return tail_.value;
  const double v = tail_.fn(x);
  if (!std::isfinite(v)) fail(Errc::invalid_parameter, "tail callable returned non-finite value");
  return v;
}

double GridField::operator()(std::span<const double> x) const {
  return dim_ == 1 ? eval(x[0]) : eval(x[0], x[1]);
}

double GridField::eval(double x0, double x1) const {
  const double pad = radius_ * (1.0 + 1e-12);
  if (dim_ == 1) {
    if (x0 < -pad || x0 > pad) {
      return tail_at(std::span<const double>(&x0, 1));
    }
    double t = (x0 + radius_) / spacing_;
    t = std::clamp(t, 0.0, static_cast<double>(naxis_ - 1));
    long i = static_cast<long>(std::floor(t));
    double f = t - static_cast<double>(i);
    if (f < kNodeSnap) f = 0.0;
    if (f > 1.0 - kNodeSnap && i + 1 < naxis_) {
      f = 0.0;
      ++i;
    }
    if (i >= naxis_ - 1) return values_[static_cast<std::size_t>(naxis_ - 1)];
    const double a = values_[static_cast<std::size_t>(i)];
    if (f == 0.0) return a;
    return a + f * (values_[static_cast<std::size_t>(i + 1)] - a);
  }
  if (x0 < -pad || x0 > pad || x1 < -pad || x1 > pad) {
    const std::array<double, 2> x = {x0, x1};
    return tail_at(std::span<const double>(x.data(), 2));
  }
  auto locate = [this](double c, long& i, double& f) {
    double t = (c + radius_) / spacing_;
    t = std::clamp(t, 0.0, static_cast<double>(naxis_ - 1));
    i = static_cast<long>(std::floor(t));
    f = t - static_cast<double>(i);
    if (f < kNodeSnap) f = 0.0;
    if (f > 1.0 - kNodeSnap && i + 1 < naxis_) {
      f = 0.0;
      ++i;
    }
    if (i >= naxis_ - 1) {
      i = naxis_ - 1;
      f = 0.0;
    }
  };
  long i0, i1;
  double f0, f1;
  locate(x0, i0, f0);
  locate(x1, i1, f1);
  const long i0p = f0 > 0 ? i0 + 1 : i0;
  const long i1p = f1 > 0 ? i1 + 1 : i1;
  const double v00 = values_[static_cast<std::size_t>(flat_index(i0, i1))];
  const double v10 = values_[static_cast<std::size_t>(flat_index(i0p, i1))];
  const double v01 = values_[static_cast<std::size_t>(flat_index(i0, i1p))];
  const double v11 = values_[static_cast<std::size_t>(flat_index(i0p, i1p))];
  return (1 - f1) * ((1 - f0) * v00 + f0 * v10) + f1 * ((1 - f0) * v01 + f0 * v11);
}

void GridField::set_tail(Tail t) {
  tail_ = std::move(t);
  if (tail_.is_const && !std::isfinite(tail_.value)) fail(Errc::invalid_parameter, "non-finite tail constant");
  if (!tail_.is_const && !tail_.fn) fail(Errc::invalid_parameter, "callable tail without callable");
  refresh_tail_bounds();
}

void GridField::refresh_node_bounds() {
  vmin_ = values_.empty() ? 0.0 : values_[0];
  vmax_ = vmin_;
  for (double v : values_) {
    vmin_ = std::min(vmin_, v);
    vmax_ = std::max(vmax_, v);
  }
}

void GridField::refresh_tail_bounds() {
  if (tail_.is_const) {
    tail_min_ = tail_max_ = tail_.value;
    return;
  }
  double lo = 0, hi = 0;
  bool first = true;
  const int shells = 25;
  for (int k = 0; k <= shells; ++k) {
    const double r = radius_ * (1.0 + 1e-9) * std::pow(10.0, 3.0 * k / shells);
    const int ndir = dim_ == 1 ? 2 : 16;
    for (int d = 0; d < ndir; ++d) {
      std::array<double, 2> x;
      if (dim_ == 1) {
        x = {d == 0 ? r : -r, 0.0};
      } else {
        const double th = 2.0 * M_PI * (d + 0.5) / ndir;
        x = {r * std::cos(th), r * std::sin(th)};
      }
      const double v = tail_at(std::span<const double>(x.data(), dim_));
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  tail_min_ = lo;
  tail_max_ = hi;
}

double GridField::sup_norm() const {
  return std::max({std::abs(vmin_), std::abs(vmax_), std::abs(tail_min_), std::abs(tail_max_)});
}

double GridField::osc_bound() const {
  return std::max(vmax_, tail_max_) - std::min(vmin_, tail_min_);
}

double delta_even(const GridField& u, std::span<const double> x, std::span<const double> y) {
  const int d = u.dim();
  if (d == 1) return u.eval(x[0] + y[0]) + u.eval(x[0] - y[0]) - 2.0 * u.eval(x[0]);
  return u.eval(x[0] + y[0], x[1] + y[1]) + u.eval(x[0] - y[0], x[1] - y[1]) - 2.0 * u.eval(x[0], x[1]);
}

double delta_odd(const GridField& u, std::span<const double> x, std::span<const double> y) {
  const int d = u.dim();
  if (d == 1) return u.eval(x[0] + y[0]) - u.eval(x[0] - y[0]);
  return u.eval(x[0] + y[0], x[1] + y[1]) - u.eval(x[0] - y[0], x[1] - y[1]);
}

namespace {

/// Shared lattice scan for the Moreau envelope: min over offsets o (multiples
/// of h within the search box) of u(x + o) + |o|^2 / eps.
double moreau_at(const GridField& u, double x0, double x1, double eps, long steps) {
  const double h = u.spacing();
  double best = u.eval(x0, x1);
  if (u.dim() == 1) {
    for (long k = -steps; k <= steps; ++k) {
      if (k == 0) continue;
      const double o = h * static_cast<double>(k);
      const double cand = u.eval(x0 + o) + o * o / eps;
      best = std::min(best, cand);
    }
    return best;
  }
  for (long ky = -steps; ky <= steps; ++ky) {
    const double oy = h * static_cast<double>(ky);
    for (long kx = -steps; kx <= steps; ++kx) {
      if (kx == 0 && ky == 0) continue;
      const double ox = h * static_cast<double>(kx);
      const double cand = u.eval(x0 + ox, x1 + oy) + (ox * ox + oy * oy) / eps;
      best = std::min(best, cand);
    }
  }
  return best;
}

} // namespace

GridField inf_convolution(const GridField& u, double eps) {
  if (!(eps > 0) || !std::isfinite(eps)) fail(Errc::invalid_parameter, "inf_convolution requires eps > 0");
  const double osc = std::max(u.osc_bound(), 0.0);
  const double radius = 2.0 * std::sqrt(eps * osc) + u.spacing();
  const long steps = static_cast<long>(std::ceil(radius / u.spacing()));
  const long n = u.node_count();
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const auto c = u.node_coords(i);
    vals[static_cast<std::size_t>(i)] = moreau_at(u, c[0], c[1], eps, steps);
  }
  auto src = std::make_shared<const GridField>(u);
  Tail tail = Tail::callable([src, eps, steps](std::span<const double> x) {
    const double x1 = src->dim() == 2 ? x[1] : 0.0;
    return moreau_at(*src, x[0], x1, eps, steps);
  });
  return GridField(u.dim(), u.box_radius(), u.spacing(), std::move(vals), std::move(tail));
}

GridField negate(const GridField& u) {
  std::vector<double> vals(u.values());
  for (double& v : vals) v = -v;
  Tail tail;
  if (u.tail().is_const) {
    tail = Tail::constant(-u.tail().value);
  } else {
    auto fn = u.tail().fn;
    tail = Tail::callable([fn](std::span<const double> x) { return -fn(x); });
  }
  return GridField(u.dim(), u.box_radius(), u.spacing(), std::move(vals), std::move(tail));
}

GridField sup_convolution(const GridField& u, double eps) { return negate(inf_convolution(negate(u), eps)); }

GridField rescale(const GridField& u, double alpha, double beta) {
  if (!(beta > 0) || !std::isfinite(beta) || !std::isfinite(alpha)) {
    fail(Errc::invalid_parameter, "rescale requires finite alpha and beta > 0");
  }
  std::vector<double> vals(u.values());
  for (double& v : vals) v *= alpha;
  Tail tail;
  if (u.tail().is_const) {
    tail = Tail::constant(alpha * u.tail().value);
  } else {
    auto fn = u.tail().fn;
    const int d = u.dim();
    tail = Tail::callable([fn, alpha, beta, d](std::span<const double> x) {
      std::array<double, 2> z = {beta * x[0], d == 2 ? beta * x[1] : 0.0};
      return alpha * fn(std::span<const double>(z.data(), d));
    });
  }
  return GridField(u.dim(), u.box_radius() / beta, u.spacing() / beta, std::move(vals), std::move(tail));
}

GridField incremental_quotient(const GridField& u, double hstep, std::span<const double> e, double gamma) {
  if (!(std::abs(hstep) > 0) || !std::isfinite(hstep)) fail(Errc::invalid_parameter, "hstep must be nonzero");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail(Errc::invalid_parameter, "gamma must lie in [0, 1]");
  std::array<double, 2> dir = {e[0], u.dim() == 2 ? e[1] : 0.0};
  const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1]);
  if (!(norm > 0)) fail(Errc::invalid_parameter, "direction must be nonzero");
  dir[0] /= norm;
  dir[1] /= norm;
  const double scale = std::pow(std::abs(hstep), gamma);
  const long n = u.node_count();
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    const auto c = u.node_coords(i);
    const double shifted = u.eval(c[0] + hstep * dir[0], c[1] + hstep * dir[1]);
    vals[static_cast<std::size_t>(i)] = (shifted - u.eval(c[0], c[1])) / scale;
  }
  auto src = std::make_shared<const GridField>(u);
  const int d = u.dim();
  Tail tail = Tail::callable([src, hstep, dir, scale, d](std::span<const double> x) {
    const double x1 = d == 2 ? x[1] : 0.0;
    return (src->eval(x[0] + hstep * dir[0], x1 + hstep * dir[1]) - src->eval(x[0], x1)) / scale;
  });
  return GridField(u.dim(), u.box_radius(), u.spacing(), std::move(vals), std::move(tail));
}

void save_field_csv(const GridField& u, const std::string& path) {
  std::string tail_desc;
  if (u.tail().is_const) {
    tail_desc = "const:" + fmt_double(u.tail().value);
  } else if (!u.tail().name.empty()) {
    tail_desc = "fn:" + u.tail().name;
  } else {
    fail(Errc::io, "cannot serialize a field with an anonymous callable tail");
  }
  std::ostringstream out;
  out << "dim,box_radius,spacing,tail\n";
  out << u.dim() << ',' << fmt_double(u.box_radius()) << ',' << fmt_double(u.spacing()) << ',' << tail_desc
      << '\n';
  out << "node_index,value\n";
  const long n = u.node_count();
  for (long i = 0; i < n; ++i) {
    out << i << ',' << fmt_double(u.value(i)) << '\n';
  }
  write_text_file(path, out.str());
}

GridField load_field_csv(const std::string& path, const std::function<Tail(const std::string&)>& resolve_named) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv(line)[0] != "dim") fail(Errc::parse, path + ": bad field header");
  if (!std::getline(in, line)) fail(Errc::parse, path + ": truncated field file");
  const auto meta = split_csv(line);
  if (meta.size() != 4) fail(Errc::parse, path + ": bad field metadata row");
  const int dim = static_cast<int>(parse_long(meta[0]));
  const double radius = parse_double(meta[1]);
  const double spacing = parse_double(meta[2]);
  Tail tail;
  if (meta[3].rfind("const:", 0) == 0) {
    tail = Tail::constant(parse_double(meta[3].substr(6)));
  } else if (meta[3].rfind("fn:", 0) == 0) {
    if (!resolve_named) fail(Errc::io, path + ": named tail '" + meta[3] + "' needs a resolver");
    tail = resolve_named(meta[3].substr(3));
    tail.name = meta[3].substr(3);
  } else {
    fail(Errc::parse, path + ": unknown tail descriptor '" + meta[3] + "'");
  }
  if (!std::getline(in, line) || split_csv(line)[0] != "node_index") {
    fail(Errc::parse, path + ": missing node header");
  }
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) fail(Errc::parse, path + ": bad node row");
    const long idx = parse_long(cells[0]);
    if (idx != static_cast<long>(vals.size())) fail(Errc::parse, path + ": node rows out of order");
    vals.push_back(parse_double(cells[1]));
  }
  return GridField(dim, radius, spacing, std::move(vals), std::move(tail));
}

} // namespace nlelab
