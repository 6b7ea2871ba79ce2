#pragma once

// Uniform 1D/2D node-centred grids, grid functions, central-difference
// stencils, sup norms and the field CSV format.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "plap/errors.hpp"
#include "plap/operator_algebra.hpp"

namespace plap {

enum class Boundary { Periodic, Dirichlet };

inline std::string_view to_string(Boundary b) {
  return b == Boundary::Periodic ? "periodic" : "dirichlet";
}

inline Boundary parse_boundary(std::string_view s) {
  if (s == "periodic") return Boundary::Periodic;
  if (s == "dirichlet") return Boundary::Dirichlet;
  throw InvalidArgument("unknown boundary '" + std::string(s) + "'");
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

using NodeIndex = std::array<int, 2>;

/// 17 significant digits, the format used for every emitted float.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest string that round-trips (used in file names).
inline std::string short_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class GridSpec {
 public:
  GridSpec(int dim, std::array<Interval, 2> extent, std::array<int, 2> resolution, Boundary boundary)
      : dim_(dim), extent_(extent), resolution_(resolution), boundary_(boundary) {
    if (dim_ != 1 && dim_ != 2) throw InvalidArgument("grid dim must be 1 or 2");
    if (dim_ == 1) {
      extent_[1] = Interval{};
      resolution_[1] = 1;
    }
    for (int a = 0; a < dim_; ++a) {
      if (resolution_[a] < 8) throw InvalidArgument("grid resolution must be >= 8 per axis");
      if (!(std::isfinite(extent_[a].lo) && std::isfinite(extent_[a].hi) &&
            extent_[a].hi > extent_[a].lo)) {
        throw InvalidArgument("grid extent must be a finite interval with hi > lo");
      }
    }
  }

  static GridSpec line(Interval x, int n, Boundary b) { return GridSpec(1, {x, Interval{}}, {n, 1}, b); }
  static GridSpec rect(Interval x, Interval y, int nx, int ny, Boundary b) {
    return GridSpec(2, {x, y}, {nx, ny}, b);
  }

  int dim() const { return dim_; }
  const Interval& extent(int axis) const { return extent_[axis]; }
  int resolution(int axis) const { return resolution_[axis]; }
  Boundary boundary() const { return boundary_; }
  bool periodic() const { return boundary_ == Boundary::Periodic; }

  double spacing(int axis) const {
    const double len = extent_[axis].hi - extent_[axis].lo;
    return periodic() ? len / resolution_[axis] : len / (resolution_[axis] - 1);
  }

  double min_spacing() const {
    double h = spacing(0);
    if (dim_ == 2) h = std::min(h, spacing(1));
    return h;
  }

  std::size_t node_count() const {
    return static_cast<std::size_t>(resolution_[0]) * static_cast<std::size_t>(resolution_[1]);
  }

  /// Row-major: the last axis varies fastest.
  std::size_t flat(NodeIndex n) const {
    return static_cast<std::size_t>(n[0]) * resolution_[1] + static_cast<std::size_t>(n[1]);
  }

  NodeIndex unflat(std::size_t k) const {
    return {static_cast<int>(k / resolution_[1]), static_cast<int>(k % resolution_[1])};
  }

  Vector coordinate(NodeIndex n) const {
    Vector x(dim_);
    for (int a = 0; a < dim_; ++a) x[a] = extent_[a].lo + n[a] * spacing(a);
    return x;
  }

  bool is_boundary(NodeIndex n) const {
    if (periodic()) return false;
    for (int a = 0; a < dim_; ++a)
      if (n[a] == 0 || n[a] == resolution_[a] - 1) return true;
    return false;
  }

  bool contains(NodeIndex n) const {
    for (int a = 0; a < 2; ++a)
      if (n[a] < 0 || n[a] >= resolution_[a]) return false;
    return true;
  }

  /// Same domain with half the spacing; every node of *this is a node of the result.
  GridSpec refined() const {
    std::array<int, 2> r = resolution_;
    for (int a = 0; a < dim_; ++a) r[a] = periodic() ? 2 * r[a] : 2 * r[a] - 1;
    return GridSpec(dim_, extent_, r, boundary_);
  }

  bool operator==(const GridSpec&) const = default;

 private:
  int dim_;
  std::array<Interval, 2> extent_;
  std::array<int, 2> resolution_;
  Boundary boundary_;
};

/// Grid function at one time level.
class ScalarField {
 public:
  ScalarField(GridSpec grid, std::vector<double> values, double time = 0.0)
      : grid_(std::move(grid)), values_(std::move(values)), time_(time) {
    if (values_.size() != grid_.node_count())
      throw InvalidArgument("field value count does not match the grid");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("field values must be finite");
    if (!(time_ >= 0)) throw InvalidArgument("field time must be >= 0");
  }

  template <class F>
  static ScalarField sample(const GridSpec& grid, F&& f, double t = 0.0) {
    std::vector<double> v(grid.node_count());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(grid.coordinate(grid.unflat(k)), t);
    return ScalarField(grid, std::move(v), t);
  }

  const GridSpec& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double time() const { return time_; }
  double operator[](std::size_t k) const { return values_[k]; }
  double at(NodeIndex n) const { return values_[grid_.flat(n)]; }

 private:
  GridSpec grid_;
  std::vector<double> values_;
  double time_;
};

namespace detail {

/// Value at node + offset, wrapping on periodic grids.
inline double shifted(const ScalarField& f, NodeIndex n, int d0, int d1) {
  const GridSpec& g = f.grid();
  NodeIndex m{n[0] + d0, n[1] + d1};
  if (g.periodic()) {
    for (int a = 0; a < 2; ++a) {
      const int r = g.resolution(a);
      m[a] = ((m[a] % r) + r) % r;
    }
  }
  return f.at(m);
}

inline void require_stencil(const ScalarField& f, NodeIndex n) {
  if (!f.grid().contains(n)) throw InvalidArgument("node outside the grid");
  if (f.grid().is_boundary(n)) throw InvalidArgument("no interior stencil at a Dirichlet boundary node");
}

}  // namespace detail

/// Central differences (f_{i+1} - f_{i-1}) / 2h per axis.
inline Vector gradient(const ScalarField& f, NodeIndex n) {
  detail::require_stencil(f, n);
  const GridSpec& g = f.grid();
  Vector grad(g.dim());
  grad[0] = (detail::shifted(f, n, 1, 0) - detail::shifted(f, n, -1, 0)) / (2 * g.spacing(0));
  if (g.dim() == 2)
    grad[1] = (detail::shifted(f, n, 0, 1) - detail::shifted(f, n, 0, -1)) / (2 * g.spacing(1));
  return grad;
}

/// Second differences on the diagonal, four-point cross stencil off it.
inline Matrix hessian(const ScalarField& f, NodeIndex n) {
  detail::require_stencil(f, n);
  const GridSpec& g = f.grid();
  const int d = g.dim();
  Matrix h(d, d);
  const double c = f.at(n);
  const double h0 = g.spacing(0);
  h(0, 0) = (detail::shifted(f, n, 1, 0) - 2 * c + detail::shifted(f, n, -1, 0)) / (h0 * h0);
  if (d == 2) {
    const double h1 = g.spacing(1);
    h(1, 1) = (detail::shifted(f, n, 0, 1) - 2 * c + detail::shifted(f, n, 0, -1)) / (h1 * h1);
    const double cross = (detail::shifted(f, n, 1, 1) + detail::shifted(f, n, -1, -1) -
                          detail::shifted(f, n, 1, -1) - detail::shifted(f, n, -1, 1)) /
                         (4 * h0 * h1);
    h(0, 1) = cross;
    h(1, 0) = cross;
  }
  return h;
}

/// Stencil derivatives of a function at an arbitrary point (same formulas as
/// gradient/hessian with spacing h on every axis).
struct PointDerivatives {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

template <class F>
PointDerivatives stencil_derivatives(F&& f, const Vector& x, double h) {
  const int n = static_cast<int>(x.size());
  PointDerivatives d;
  d.value = f(x);
  d.gradient.resize(n);
  d.hessian.resize(n, n);
  auto at = [&](int i, int si, int j, int sj) {
    Vector y = x;
    y[i] += si * h;
    if (j >= 0) y[j] += sj * h;
    return f(y);
  };
  for (int i = 0; i < n; ++i) {
    const double fp = at(i, 1, -1, 0), fm = at(i, -1, -1, 0);
    d.gradient[i] = (fp - fm) / (2 * h);
    d.hessian(i, i) = (fp - 2 * d.value + fm) / (h * h);
    for (int j = i + 1; j < n; ++j) {
      const double c = (at(i, 1, j, 1) + at(i, -1, j, -1) - at(i, 1, j, -1) - at(i, -1, j, 1)) / (4 * h * h);
      d.hessian(i, j) = c;
      d.hessian(j, i) = c;
    }
  }
  return d;
}

inline double sup_norm(const ScalarField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double sup_diff(const ScalarField& f, const ScalarField& g) {
  if (!(f.grid() == g.grid())) throw InvalidArgument("sup_diff: grid mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < f.values().size(); ++k) m = std::max(m, std::abs(f[k] - g[k]));
  return m;
}

/// Values of a field on `fine` (= coarse.refined()) at the nodes of `coarse`.
inline ScalarField inject(const ScalarField& fine, const GridSpec& coarse) {
  if (!(fine.grid() == coarse.refined())) throw InvalidArgument("inject: grids are not a refinement pair");
  std::vector<double> v(coarse.node_count());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const NodeIndex n = coarse.unflat(k);
    v[k] = fine.at({2 * n[0], coarse.dim() == 2 ? 2 * n[1] : 0});
  }
  return ScalarField(coarse, std::move(v), fine.time());
}

/// `# grid dim=<d> extent=<a,b;...> N=<n,...> boundary=<b> time=<t>` then one
/// value per line in row-major order.
inline void write_field_csv(std::ostream& os, const ScalarField& f) {
  const GridSpec& g = f.grid();
  os << "# grid dim=" << g.dim() << " extent=";
  for (int a = 0; a < g.dim(); ++a) {
    if (a) os << ';';
    os << format_double(g.extent(a).lo) << ',' << format_double(g.extent(a).hi);
  }
  os << " N=";
  for (int a = 0; a < g.dim(); ++a) os << (a ? "," : "") << g.resolution(a);
  os << " boundary=" << to_string(g.boundary()) << " time=" << format_double(f.time()) << '\n';
  for (double v : f.values()) os << format_double(v) << '\n';
}

namespace detail {

inline double csv_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("field csv: bad number '" + s + "'");
  }
}

inline int csv_int(const std::string& s) {
  const double v = csv_double(s);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw InvalidArgument("field csv: bad integer '" + s + "'");
  return static_cast<int>(v);
}

}  // namespace detail

inline ScalarField read_field_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.rfind("# grid", 0) != 0)
    throw InvalidArgument("field csv: missing '# grid' header");
  std::istringstream hs(header.substr(6));
  std::string tok;
  int dim = 0;
  std::string extent_s, n_s, boundary_s, time_s;
  while (hs >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw InvalidArgument("field csv: bad header token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "dim") dim = detail::csv_int(val);
    else if (key == "extent") extent_s = val;
    else if (key == "N") n_s = val;
    else if (key == "boundary") boundary_s = val;
    else if (key == "time") time_s = val;
    else throw InvalidArgument("field csv: unknown header key '" + key + "'");
  }
  if (dim != 1 && dim != 2) throw InvalidArgument("field csv: dim must be 1 or 2");
  std::array<Interval, 2> ext{};
  std::array<int, 2> res{1, 1};
  {
    std::istringstream es(extent_s);
    std::string part;
    int a = 0;
    while (std::getline(es, part, ';')) {
      if (a >= dim) throw InvalidArgument("field csv: too many extents");
      const auto c = part.find(',');
      if (c == std::string::npos) throw InvalidArgument("field csv: extent needs 'a,b'");
      ext[a] = {detail::csv_double(part.substr(0, c)), detail::csv_double(part.substr(c + 1))};
      ++a;
    }
    if (a != dim) throw InvalidArgument("field csv: extent count does not match dim");
  }
  {
    std::istringstream ns(n_s);
    std::string part;
    int a = 0;
    while (std::getline(ns, part, ',')) {
      if (a >= dim) throw InvalidArgument("field csv: too many resolutions");
      res[a++] = detail::csv_int(part);
    }
    if (a != dim) throw InvalidArgument("field csv: resolution count does not match dim");
  }
  GridSpec grid(dim, ext, res, parse_boundary(boundary_s));
  std::vector<double> values;
  values.reserve(grid.node_count());
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    values.push_back(detail::csv_double(line));
  }
  return ScalarField(grid, std::move(values), time_s.empty() ? 0.0 : detail::csv_double(time_s));
}

}  // namespace plap
