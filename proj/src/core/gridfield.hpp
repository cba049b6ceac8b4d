#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nlelab {

using TailFn = std::function<double(std::span<const double>)>;

/// Behaviour of a field outside its grid box. Nonlocal operators see the whole
/// space, so every field carries an explicit tail: either a constant or a
/// bounded callable (with an optional generator name for serialization).
struct Tail {
  bool is_const = true;
  double value = 0.0;
  TailFn fn;
  std::string name;

  static Tail constant(double c) {
    Tail t;
    t.is_const = true;
    t.value = c;
    return t;
  }
  static Tail callable(TailFn f, std::string name = "") {
    Tail t;
    t.is_const = false;
    t.fn = std::move(f);
    t.name = std::move(name);
    return t;
  }
};

/// Uniform grid sample of a function on [-R, R]^dim plus a mandatory tail.
/// Evaluation is multilinear inside the box (exact at nodes) and delegates to
/// the tail outside. R/h must be an integer so nodes land on +-R exactly.
class GridField {
public:
  GridField(int dim, double box_radius, double spacing, std::vector<double> values, Tail tail);

  static GridField from_function(int dim, double box_radius, double spacing,
                                 const std::function<double(std::span<const double>)>& f, Tail tail);
  static GridField constant(int dim, double box_radius, double spacing, double c);

  int dim() const { return dim_; }
  double box_radius() const { return radius_; }
  double spacing() const { return spacing_; }
  long nodes_per_axis() const { return naxis_; }
  long node_count() const { return static_cast<long>(values_.size()); }

  double value(long flat) const { return values_[static_cast<std::size_t>(flat)]; }
  void set_value(long flat, double v);
  const std::vector<double>& values() const { return values_; }

  long flat_index(long ix, long iy = 0) const { return dim_ == 1 ? ix : ix + naxis_ * iy; }
  std::array<double, 2> node_coords(long flat) const;
  double axis_coord(long i) const { return -radius_ + spacing_ * static_cast<double>(i); }

  /// Evaluate anywhere: multilinear interpolation on the closed box, tail outside.
  double operator()(std::span<const double> x) const;
  double eval(double x0, double x1 = 0.0) const;

  const Tail& tail() const { return tail_; }
  void set_tail(Tail t);

  double node_min() const { return vmin_; }
  double node_max() const { return vmax_; }
  /// Tail bounds are exact for constant tails and deterministic sampled
  /// estimates (log-radial shells out to ~1e3 R) for callable tails.
  double tail_min() const { return tail_min_; }
  double tail_max() const { return tail_max_; }
  double sup_norm() const;
  double osc_bound() const;

private:
  void refresh_node_bounds();
  void refresh_tail_bounds();
  double tail_at(std::span<const double> x) const;

  int dim_ = 1;
  double radius_ = 1.0;
  double spacing_ = 1.0;
  long naxis_ = 0;
  std::vector<double> values_;
  Tail tail_;
  double vmin_ = 0, vmax_ = 0, tail_min_ = 0, tail_max_ = 0;
};

/// Second-order symmetric difference u(x+y) + u(x-y) - 2 u(x).
double delta_even(const GridField& u, std::span<const double> x, std::span<const double> y);
/// First-order antisymmetric difference u(x+y) - u(x-y).
double delta_odd(const GridField& u, std::span<const double> x, std::span<const double> y);

/// Moreau envelopes over the lattice (and the tail within the search radius
/// 2 sqrt(eps osc(u)) padded by one cell). The inf-convolution is semiconcave
/// and the sup-convolution semiconvex, both with modulus 2/eps; both converge
/// monotonically to u as eps -> 0.
GridField inf_convolution(const GridField& u, double eps);
GridField sup_convolution(const GridField& u, double eps);

/// x -> alpha u(beta x); node values map exactly (no interpolation).
GridField rescale(const GridField& u, double alpha, double beta);

/// x -> (u(x + hstep e) - u(x)) / |hstep|^gamma for a unit vector e, gamma in [0, 1].
GridField incremental_quotient(const GridField& u, double hstep, std::span<const double> e, double gamma);

GridField negate(const GridField& u);

void save_field_csv(const GridField& u, const std::string& path);
GridField load_field_csv(const std::string& path,
                         const std::function<Tail(const std::string&)>& resolve_named = {});

} // namespace nlelab
