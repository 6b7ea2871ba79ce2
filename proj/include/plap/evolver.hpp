#pragma once

// Explicit forward-Euler integration of
//   u_t = tr(A(grad u) hess u) - H(x, t, grad u)
// on periodic or Dirichlet grids.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "plap/errors.hpp"
#include "plap/field_grid.hpp"
#include "plap/operator_algebra.hpp"

namespace plap {

struct SolverControls {
  double cfl_sigma = 0.5;
  std::optional<double> grad_clamp;  // default: 2x data Lipschitz estimate (unbounded families)
  std::vector<double> snapshot_times;  // default: {T}
  std::optional<double> eps_num;       // default: minimum grid spacing
  std::optional<double> fixed_dt;      // shared step for sweeps; must respect the CFL limit
  std::size_t max_steps = 100'000'000;
};

struct Problem {
  OperatorSpec spec;
  HamiltonianSpec ham;
  GridSpec grid;
  SpaceTimeFunction initial;
  SpaceTimeFunction dirichlet;  // required on Dirichlet grids
  double t_start = 0.0;
  double T = 1.0;
  SolverControls controls;

  void validate() const {
    if (!initial) throw InvalidArgument("problem: initial data missing");
    if (!(std::isfinite(t_start) && t_start >= 0)) throw InvalidArgument("problem: t_start must be >= 0");
    if (!(std::isfinite(T) && T >= t_start)) throw InvalidArgument("problem: T must be >= t_start");
    const auto& c = controls;
    if (!(c.cfl_sigma > 0 && c.cfl_sigma <= 1)) throw InvalidArgument("problem: cfl_sigma must lie in (0, 1]");
    if (c.grad_clamp && !(*c.grad_clamp > 0)) throw InvalidArgument("problem: grad_clamp must be > 0");
    if (c.eps_num && !(*c.eps_num >= 0)) throw InvalidArgument("problem: eps_num must be >= 0");
    if (c.fixed_dt && !(*c.fixed_dt > 0)) throw InvalidArgument("problem: fixed_dt must be > 0");
    if (c.max_steps == 0) throw InvalidArgument("problem: max_steps must be > 0");
    for (std::size_t i = 0; i < c.snapshot_times.size(); ++i) {
      const double s = c.snapshot_times[i];
      if (!(s >= t_start && s <= T)) throw InvalidArgument("problem: snapshot times must lie in [t_start, T]");
      if (i > 0 && !(s > c.snapshot_times[i - 1]))
        throw InvalidArgument("problem: snapshot times must be strictly increasing");
    }
    if (!grid.periodic()) {
      if (!dirichlet) throw InvalidArgument("problem: Dirichlet grid needs boundary data");
      for (std::size_t k = 0; k < grid.node_count(); ++k) {
        const NodeIndex n = grid.unflat(k);
        if (!grid.is_boundary(n)) continue;
        const Vector x = grid.coordinate(n);
        const double a = initial(x, t_start), b = dirichlet(x, t_start);
        if (std::abs(a - b) > 1e-9 * (1.0 + std::abs(a)))
          throw InvalidArgument("problem: initial and boundary data disagree at t_start");
      }
    }
  }
};

/// Solver parameters after defaults are applied.
struct Discretization {
  double eps_num = 0.0;
  double grad_floor = 0.0;
  double grad_clamp = std::numeric_limits<double>::infinity();
};

/// Max |central-difference gradient| of the initial data over the grid.
inline double data_lipschitz_estimate(const Problem& pb) {
  const ScalarField u0 = ScalarField::sample(pb.grid, pb.initial, pb.t_start);
  double m = 0.0;
  for (std::size_t k = 0; k < pb.grid.node_count(); ++k) {
    const NodeIndex n = pb.grid.unflat(k);
    if (pb.grid.is_boundary(n)) continue;
    m = std::max(m, gradient(u0, n).norm());
  }
  return m;
}

inline Discretization resolve_discretization(const Problem& pb) {
  Discretization d;
  d.eps_num = pb.controls.eps_num.value_or(pb.grid.min_spacing());
  d.grad_floor = pb.spec.grad_floor() > 0 ? pb.spec.grad_floor() : d.eps_num;
  if (pb.controls.grad_clamp) {
    d.grad_clamp = *pb.controls.grad_clamp;
  } else if (pb.spec.unbounded_at_infinity()) {
    const double lip = data_lipschitz_estimate(pb);
    d.grad_clamp = lip > 0 ? 2.0 * lip : 1.0;
  }
  return d;
}

/// Unit vector along the Hessian eigenvalue of largest magnitude (e1 if the
/// Hessian vanishes).
inline Vector dominant_direction(const Matrix& hess) {
  const int n = static_cast<int>(hess.rows());
  Vector e = Vector::Zero(n);
  e[0] = 1.0;
  if (n == 1) return e;
  Eigen::SelfAdjointEigenSolver<Matrix> es(hess);
  const auto& ev = es.eigenvalues();
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (std::abs(ev[i]) > std::abs(ev[best])) best = i;
  if (ev[best] == 0.0) return e;
  return es.eigenvectors().col(best);
}

/// A at a discrete gradient. The magnitude is clamped at grad_clamp. Below the
/// gradient floor the family is evaluated at the lifted gradient
/// max(|xi|, eps_num) * u, where u = xi/|xi| when xi != 0 and otherwise the
/// dominant Hessian direction; with eps_num = 0 the diffusion is dropped.
inline RankOneForm effective_form(const OperatorSpec& spec, const Discretization& d, const Vector& xi,
                                  const Matrix& hess) {
  Vector x = xi;
  const double r0 = x.norm();
  if (r0 > d.grad_clamp) x *= d.grad_clamp / r0;
  if (spec.everywhere_defined()) return diffusion_form(spec, x);
  const double r = x.norm();
  if (r > 0 && r >= d.grad_floor) return diffusion_form(spec, x);
  const double lifted = std::max(r, d.eps_num);
  if (lifted == 0.0) return {0.0, 0.0, Vector::Zero(x.size())};
  const Vector u = r > 0 ? Vector(x / r) : dominant_direction(hess);
  return diffusion_form(spec, Vector(lifted * u));
}

struct SolveStats {
  std::size_t steps = 0;
  double min_dt = std::numeric_limits<double>::infinity();
  double max_dt = 0.0;
  double final_time = 0.0;
  /// Largest excursion outside [min, max] of all imposed data (initial and boundary).
  double overshoot = 0.0;
  Discretization discretization;
};

struct SolveResult {
  std::vector<ScalarField> snapshots;
  SolveStats stats;
};

/// Reusable per-problem state: neighbour tables, node coordinates and the
/// right-hand side of the last evaluated field.
class Stepper {
 public:
  explicit Stepper(Problem pb) : pb_(std::move(pb)) {
    pb_.validate();
    disc_ = resolve_discretization(pb_);
    const GridSpec& g = pb_.grid;
    dim_ = g.dim();
    n0_ = g.resolution(0);
    n1_ = g.resolution(1);
    h0_ = g.spacing(0);
    h1_ = dim_ == 2 ? g.spacing(1) : 1.0;
    coords_.reserve(g.node_count());
    boundary_.resize(g.node_count());
    for (std::size_t k = 0; k < g.node_count(); ++k) {
      const NodeIndex n = g.unflat(k);
      coords_.push_back(g.coordinate(n));
      boundary_[k] = g.is_boundary(n);
    }
    auto wrap = [&](int i, int r) { return g.periodic() ? ((i % r) + r) % r : std::clamp(i, 0, r - 1); };
    for (int i = 0; i < n0_; ++i) {
      m0_.push_back(wrap(i - 1, n0_));
      p0_.push_back(wrap(i + 1, n0_));
    }
    for (int j = 0; j < n1_; ++j) {
      m1_.push_back(wrap(j - 1, n1_));
      p1_.push_back(wrap(j + 1, n1_));
    }
    rhs_.assign(g.node_count(), 0.0);
  }

  const Problem& problem() const { return pb_; }
  const Discretization& discretization() const { return disc_; }

  ScalarField initial_field() const {
    const GridSpec& g = pb_.grid;
    std::vector<double> v(g.node_count());
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = boundary_[k] ? pb_.dirichlet(coords_[k], pb_.t_start) : pb_.initial(coords_[k], pb_.t_start);
    return ScalarField(g, std::move(v), pb_.t_start);
  }

  /// Fills the right-hand side for `u`; returns the largest eigenvalue of the
  /// effective A over updated nodes.
  double evaluate(const ScalarField& u) {
    if (!(u.grid() == pb_.grid)) throw InvalidArgument("field is not on the problem grid");
    const auto& v = u.values();
    for (double x : v)
      if (!std::isfinite(x)) throw InvalidArgument("field must be finite");
    const double t = u.time();
    double lambda = 0.0;
    Vector xi(dim_);
    Matrix hs(dim_, dim_);
    for (int i = 0; i < n0_; ++i) {
      for (int j = 0; j < n1_; ++j) {
        const std::size_t k = flat(i, j);
        if (boundary_[k]) {
          rhs_[k] = 0.0;
          continue;
        }
        const double c = v[k];
        const double e = v[flat(p0_[i], j)], w = v[flat(m0_[i], j)];
        xi[0] = (e - w) / (2 * h0_);
        hs(0, 0) = (e - 2 * c + w) / (h0_ * h0_);
        if (dim_ == 2) {
          const double nn = v[flat(i, p1_[j])], s = v[flat(i, m1_[j])];
          xi[1] = (nn - s) / (2 * h1_);
          hs(1, 1) = (nn - 2 * c + s) / (h1_ * h1_);
          hs(0, 1) = hs(1, 0) = (v[flat(p0_[i], p1_[j])] + v[flat(m0_[i], m1_[j])] -
                                 v[flat(p0_[i], m1_[j])] - v[flat(m0_[i], p1_[j])]) /
                                (4 * h0_ * h1_);
        }
        const RankOneForm a = effective_form(pb_.spec, disc_, xi, hs);
        lambda = std::max(lambda, a.max_eigenvalue());
        double r = a.trace_product(hs);
        if (!pb_.ham.trivial()) r -= hamiltonian(pb_.ham, coords_[k], t, xi);
        rhs_[k] = r;
      }
    }
    lambda_ = lambda;
    evaluated_ = &u;
    return lambda;
  }

  /// sigma h_min^2 / (2 n Lambda) with Lambda floored at 1.
  double cfl_from_lambda(double lambda) const {
    const double h = pb_.grid.min_spacing();
    return pb_.controls.cfl_sigma * h * h / (2.0 * dim_ * std::max(lambda, 1.0));
  }

  /// Advance the field last passed to evaluate() by dt.
  ScalarField advance(const ScalarField& u, double dt) {
    if (evaluated_ != &u) evaluate(u);
    const double t_new = u.time() + dt;
    std::vector<double> out(u.values().size());
    const auto& v = u.values();
    for (std::size_t k = 0; k < out.size(); ++k) {
      out[k] = boundary_[k] ? pb_.dirichlet(coords_[k], t_new) : v[k] + dt * rhs_[k];
      if (!std::isfinite(out[k])) throw BlowUp(pb_.grid.unflat(k), t_new);
    }
    evaluated_ = nullptr;
    return ScalarField(pb_.grid, std::move(out), t_new);
  }

 private:
  std::size_t flat(int i, int j) const { return static_cast<std::size_t>(i) * n1_ + j; }

  Problem pb_;
  Discretization disc_;
  int dim_ = 1, n0_ = 1, n1_ = 1;
  double h0_ = 1.0, h1_ = 1.0;
  std::vector<Vector> coords_;
  std::vector<char> boundary_;
  std::vector<int> m0_, p0_, m1_, p1_;
  std::vector<double> rhs_;
  double lambda_ = 0.0;
  const ScalarField* evaluated_ = nullptr;
};

inline double cfl_dt(const Problem& pb, const ScalarField& u) {
  Stepper st(pb);
  return st.cfl_from_lambda(st.evaluate(u));
}

/// One forward-Euler step; rejects dt above the CFL limit and steps past T.
inline ScalarField step(const ScalarField& u, const Problem& pb, double dt) {
  Stepper st(pb);
  const double limit = st.cfl_from_lambda(st.evaluate(u));
  if (!(dt > 0)) throw InvalidArgument("step: dt must be > 0");
  if (dt > limit * (1 + 1e-12)) throw InvalidArgument("step: dt violates the CFL limit");
  if (u.time() + dt > pb.T + 1e-12 * std::max(1.0, std::abs(pb.T)) + dt * 1e-9)
    throw InvalidArgument("step: dt steps past the final time");
  return st.advance(u, dt);
}

inline SolveResult solve(const Problem& pb) {
  Stepper st(pb);
  SolveResult res;
  res.stats.discretization = st.discretization();
  std::vector<double> times = pb.controls.snapshot_times;
  if (times.empty()) times.push_back(pb.T);

  ScalarField u = st.initial_field();
  double data_lo = std::numeric_limits<double>::infinity(), data_hi = -data_lo;
  auto track_data = [&](const ScalarField& f, bool boundary_only) {
    for (std::size_t k = 0; k < f.values().size(); ++k) {
      if (boundary_only && !f.grid().is_boundary(f.grid().unflat(k))) continue;
      data_lo = std::min(data_lo, f[k]);
      data_hi = std::max(data_hi, f[k]);
    }
  };
  auto track_overshoot = [&](const ScalarField& f) {
    for (double x : f.values())
      res.stats.overshoot = std::max({res.stats.overshoot, x - data_hi, data_lo - x});
  };
  track_data(u, false);

  const double tol = 1e-12 * std::max(1.0, std::abs(pb.T));
  std::size_t next = 0;
  auto capture = [&]() {
    while (next < times.size() && std::abs(times[next] - u.time()) <= tol) {
      res.snapshots.emplace_back(u.grid(), u.values(), times[next]);
      ++next;
    }
  };
  capture();
  while (next < times.size()) {
    if (res.stats.steps >= pb.controls.max_steps)
      throw BudgetExceeded("budget exceeded: " + std::to_string(res.stats.steps) + " steps reached t=" +
                           std::to_string(u.time()) + " of T=" + std::to_string(pb.T));
    const double limit = st.cfl_from_lambda(st.evaluate(u));
    double dt = limit;
    if (pb.controls.fixed_dt) {
      dt = *pb.controls.fixed_dt;
      if (dt > limit * (1 + 1e-9))
        throw NumericalFailure("fixed time step exceeds the CFL limit at t=" + std::to_string(u.time()));
    }
    const double remaining = times[next] - u.time();
    bool land = false;
    if (dt >= remaining * (1 - 1e-9)) {
      dt = remaining;
      land = true;
    }
    ScalarField nu = st.advance(u, dt);
    if (land) nu = ScalarField(nu.grid(), nu.values(), times[next]);
    u = std::move(nu);
    if (!pb.grid.periodic()) track_data(u, true);
    track_overshoot(u);
    ++res.stats.steps;
    res.stats.min_dt = std::min(res.stats.min_dt, dt);
    res.stats.max_dt = std::max(res.stats.max_dt, dt);
    capture();
  }
  res.stats.final_time = u.time();
  if (res.stats.steps == 0) res.stats.min_dt = 0.0;
  return res;
}

}  // namespace plap
