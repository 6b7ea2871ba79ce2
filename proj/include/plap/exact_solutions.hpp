#pragma once

// Closed-form solutions of the normalized/variational p-Laplace problems and
// residual checks against their governing equations.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "plap/errors.hpp"
#include "plap/field_grid.hpp"
#include "plap/operator_algebra.hpp"

namespace plap {

enum class SolutionId { HeatMode, Barenblatt, RadialElliptic, TorsionRadial, Fundamental };

inline std::string_view to_string(SolutionId id) {
  switch (id) {
    case SolutionId::HeatMode: return "heat_mode";
    case SolutionId::Barenblatt: return "barenblatt";
    case SolutionId::RadialElliptic: return "radial_elliptic";
    case SolutionId::TorsionRadial: return "torsion";
    case SolutionId::Fundamental: return "fundamental";
  }
  return "?";
}

inline SolutionId parse_solution_id(std::string_view s) {
  for (auto id : {SolutionId::HeatMode, SolutionId::Barenblatt, SolutionId::RadialElliptic,
                  SolutionId::TorsionRadial, SolutionId::Fundamental}) {
    if (to_string(id) == s) return id;
  }
  throw InvalidArgument("unknown solution '" + std::string(s) + "'");
}

/// Value and exact derivatives at one point.
struct Jet {
  double value = 0.0;
  double time_derivative = 0.0;
  Vector gradient;
  Matrix hessian;
};

class ExactSolution {
 public:
  /// e^{(1-p)t} sin(x_1): the x_1-only solution of u_t = normalized p-Laplacian.
  static ExactSolution heat_mode(double p, int n = 1) {
    if (!(p >= 1)) throw InvalidArgument("heat mode requires p >= 1");
    return ExactSolution(SolutionId::HeatMode, p, n);
  }

  /// Barenblatt profile t^{-n/l}(A + g (|x| t^{-1/l})^{p/(p-1)})_+^{(p-1)/(p-2)},
  /// l = n(p-2)+p, g = ((2-p)/p) l^{1/(1-p)}.
  static ExactSolution barenblatt(double p, int n, double amplitude) {
    if (!(p > 2.0 * n / (n + 1.0)) || p == 2.0)
      throw InvalidArgument("barenblatt requires p > 2n/(n+1) and p != 2 (parameter outside validity)");
    if (!(amplitude > 0)) throw InvalidArgument("barenblatt requires A > 0");
    ExactSolution s(SolutionId::Barenblatt, p, n);
    s.amplitude_ = amplitude;
    return s;
  }

  /// |x|^{(p+1)/(p-1)}, solving lambda_p u^{(p-1)/(p+1)} - p-Laplacian u = 0.
  static ExactSolution radial_elliptic(double p, int n) {
    if (!(p > 1)) throw InvalidArgument("radial elliptic solution requires p > 1 (parameter outside validity)");
    return ExactSolution(SolutionId::RadialElliptic, p, n);
  }

  /// -((p-1)/p)(c/n)^{1/(p-1)} |x|^{p/(p-1)}, solving -p-Laplacian v = c.
  static ExactSolution torsion(double p, int n, double c) {
    if (!(p > 1)) throw InvalidArgument("torsion solution requires p > 1 (parameter outside validity)");
    if (!(c > 0)) throw InvalidArgument("torsion solution requires c > 0");
    ExactSolution s(SolutionId::TorsionRadial, p, n);
    s.c_ = c;
    return s;
  }

  /// |x|^{(p-n)/(p-1)}, p-harmonic away from the origin.
  static ExactSolution fundamental(double p, int n) {
    if (!(p > n)) throw InvalidArgument("fundamental solution requires p > n (parameter outside validity)");
    return ExactSolution(SolutionId::Fundamental, p, n);
  }

  SolutionId id() const { return id_; }
  double p() const { return p_; }
  int n() const { return n_; }
  double amplitude() const { return amplitude_; }
  double c() const { return c_; }
  bool parabolic() const { return id_ == SolutionId::HeatMode || id_ == SolutionId::Barenblatt; }

  /// n(p-2)+p for Barenblatt, (n+1)((p+1)/(p-1))^{p-1} for the radial elliptic example.
  double lambda() const {
    if (id_ == SolutionId::Barenblatt) return n_ * (p_ - 2.0) + p_;
    if (id_ == SolutionId::RadialElliptic) return (n_ + 1.0) * std::pow((p_ + 1.0) / (p_ - 1.0), p_ - 1.0);
    throw InvalidArgument("lambda is defined for barenblatt and radial_elliptic only");
  }

  /// ((2-p)/p) lambda^{1/(1-p)}; positive for p < 2, negative for p > 2.
  double gamma() const {
    if (id_ != SolutionId::Barenblatt) throw InvalidArgument("gamma is defined for barenblatt only");
    return (2.0 - p_) / p_ * std::pow(lambda(), 1.0 / (1.0 - p_));
  }

  /// Support radius at time t (infinite for p < 2).
  double support_radius(double t) const {
    if (id_ != SolutionId::Barenblatt) throw InvalidArgument("support radius is defined for barenblatt only");
    if (p_ < 2) return std::numeric_limits<double>::infinity();
    return std::pow(amplitude_ / -gamma(), (p_ - 1.0) / p_) * std::pow(t, 1.0 / lambda());
  }

  /// Operator for which this is a solution.
  OperatorSpec operator_spec() const {
    return id_ == SolutionId::HeatMode ? OperatorSpec::normalized(p_) : OperatorSpec::variational(p_);
  }

  double eval(const Vector& x, double t) const {
    check_point(x, t);
    switch (id_) {
      case SolutionId::HeatMode:
        return std::exp((1.0 - p_) * t) * std::sin(x[0]);
      case SolutionId::Barenblatt: {
        const double l = lambda();
        const double h = amplitude_ + gamma() * std::pow(x.norm() * std::pow(t, -1.0 / l), p_ / (p_ - 1.0));
        if (h <= 0) return 0.0;
        return std::pow(t, -n_ / l) * std::pow(h, (p_ - 1.0) / (p_ - 2.0));
      }
      default: {
        const auto [coef, r] = power_law();
        const double s = x.norm();
        return s == 0.0 ? 0.0 : coef * std::pow(s, r);
      }
    }
  }

  /// Exact value and derivatives; x must avoid the origin for radial solutions.
  Jet jet(const Vector& x, double t) const {
    check_point(x, t);
    const int d = static_cast<int>(x.size());
    Jet j;
    j.gradient = Vector::Zero(d);
    j.hessian = Matrix::Zero(d, d);
    if (id_ == SolutionId::HeatMode) {
      const double decay = std::exp((1.0 - p_) * t);
      j.value = decay * std::sin(x[0]);
      j.time_derivative = (1.0 - p_) * j.value;
      j.gradient[0] = decay * std::cos(x[0]);
      j.hessian(0, 0) = -j.value;
      return j;
    }
    const double s = x.norm();
    if (s == 0.0) throw SingularPoint("origin");
    const Vector u = x / s;
    double phi = 0, phi_s = 0, phi_ss = 0, phi_t = 0;
    if (id_ == SolutionId::Barenblatt) {
      const double l = lambda(), g = gamma();
      const double a = p_ / (p_ - 1.0), b = (p_ - 1.0) / (p_ - 2.0), k = 1.0 / l;
      const double tk = std::pow(t, -a * k);
      const double h = amplitude_ + g * tk * std::pow(s, a);
      if (h > 0) {
        const double h_s = g * a * tk * std::pow(s, a - 1.0);
        const double h_ss = g * a * (a - 1.0) * tk * std::pow(s, a - 2.0);
        const double h_t = -a * k * g * tk / t * std::pow(s, a);
        const double pre = std::pow(t, -n_ * k);
        phi = pre * std::pow(h, b);
        phi_s = pre * b * std::pow(h, b - 1.0) * h_s;
        phi_ss = pre * b * ((b - 1.0) * std::pow(h, b - 2.0) * h_s * h_s + std::pow(h, b - 1.0) * h_ss);
        phi_t = -n_ * k / t * phi + pre * b * std::pow(h, b - 1.0) * h_t;
      }
    } else {
      const auto [coef, r] = power_law();
      phi = coef * std::pow(s, r);
      phi_s = coef * r * std::pow(s, r - 1.0);
      phi_ss = coef * r * (r - 1.0) * std::pow(s, r - 2.0);
    }
    j.value = phi;
    j.time_derivative = phi_t;
    j.gradient = phi_s * u;
    const Matrix uu = u * u.transpose();
    j.hessian = phi_ss * uu + (phi_s / s) * (Matrix::Identity(d, d) - uu);
    return j;
  }

  /// Governing equation evaluated on given derivatives; zero for an exact solution.
  double equation_defect(double value, double time_derivative, const Vector& grad, const Matrix& hess) const {
    if (id_ == SolutionId::HeatMode) {
      // Depends on x_1 only, so the normalized operator acts along e_1.
      Vector e1 = Vector::Zero(grad.size());
      e1[0] = 1.0;
      const RankOneForm a{1.0, p_ - 2.0, e1};
      return time_derivative - a.trace_product(hess);
    }
    const double plap = grad.norm() == 0.0 ? 0.0 : diffusion_form(operator_spec(), grad).trace_product(hess);
    switch (id_) {
      case SolutionId::Barenblatt: return time_derivative - plap;
      case SolutionId::RadialElliptic:
        return lambda() * std::pow(std::max(value, 0.0), (p_ - 1.0) / (p_ + 1.0)) - plap;
      case SolutionId::TorsionRadial: return -plap - c_;
      case SolutionId::Fundamental: return -plap;
      default: break;
    }
    throw InvalidArgument("unhandled solution");
  }

  bool operator==(const ExactSolution&) const = default;

 private:
  ExactSolution(SolutionId id, double p, int n) : id_(id), p_(p), n_(n) {
    if (n < 1 || n > 3) throw InvalidArgument("solution dimension must be 1, 2 or 3");
  }

  /// (C, r) with u = C |x|^r for the stationary radial solutions.
  std::pair<double, double> power_law() const {
    switch (id_) {
      case SolutionId::RadialElliptic: return {1.0, (p_ + 1.0) / (p_ - 1.0)};
      case SolutionId::TorsionRadial:
        return {-(p_ - 1.0) / p_ * std::pow(c_ / n_, 1.0 / (p_ - 1.0)), p_ / (p_ - 1.0)};
      case SolutionId::Fundamental: return {1.0, (p_ - n_) / (p_ - 1.0)};
      default: break;
    }
    throw InvalidArgument("not a power-law solution");
  }

  void check_point(const Vector& x, double t) const {
    if (id_ == SolutionId::HeatMode) {
      if (x.size() < 1 || x.size() > 3) throw InvalidArgument("point dimension must be 1, 2 or 3");
    } else if (x.size() != n_) {
      throw InvalidArgument("point dimension does not match the solution dimension");
    }
    if (parabolic()) {
      if (id_ == SolutionId::Barenblatt ? !(t > 0) : !(t >= 0))
        throw InvalidArgument("time outside the solution's domain");
    }
  }

  SolutionId id_;
  double p_;
  int n_;
  double amplitude_ = 1.0;
  double c_ = 1.0;
};

struct ResidualMode {
  bool discrete = false;
  double h = 0.0;
  static ResidualMode analytic() { return {}; }
  static ResidualMode stencil(double h) {
    if (!(h > 0)) throw InvalidArgument("discrete residual needs h > 0");
    return {true, h};
  }
};

/// Equation defect of the exact solution at (x, t) using exact (analytic) or
/// central-difference (discrete) derivatives. Points closer than `clearance` to
/// the origin (radial solutions) or to the free boundary (Barenblatt, p > 2)
/// are rejected.
inline double residual(const ExactSolution& sol, const Vector& x, double t, ResidualMode mode,
                       double clearance) {
  if (!(clearance > 0)) throw InvalidArgument("clearance must be > 0");
  if (sol.id() != SolutionId::HeatMode) {
    if (x.norm() < clearance) throw SingularPoint("within clearance of the origin");
    if (sol.id() == SolutionId::Barenblatt && sol.p() > 2) {
      if (!(t > 0)) throw InvalidArgument("barenblatt needs t > 0");
      if (sol.support_radius(t) - x.norm() < clearance) throw SingularPoint("within clearance of the free boundary");
    }
  }
  if (!mode.discrete) {
    const Jet j = sol.jet(x, t);
    return sol.equation_defect(j.value, j.time_derivative, j.gradient, j.hessian);
  }
  const double h = mode.h;
  const auto d = stencil_derivatives([&](const Vector& y) { return sol.eval(y, t); }, x, h);
  double ut = 0.0;
  if (sol.parabolic()) {
    if (sol.id() == SolutionId::Barenblatt && !(t - h > 0)) throw InvalidArgument("stencil reaches t <= 0");
    ut = (sol.eval(x, t + h) - sol.eval(x, t - h)) / (2 * h);
  }
  return sol.equation_defect(d.value, ut, d.gradient, d.hessian);
}

/// Space-time sample set for sup-norm comparisons.
struct DomainSampler {
  std::vector<Vector> points;
  std::vector<double> times;

  /// Uniform tensor grid on [lo, hi] (per axis `count` points, endpoints
  /// included) times `nt` uniform times in [t0, t1].
  static DomainSampler box(const Vector& lo, const Vector& hi, int count, double t0, double t1, int nt) {
    const int d = static_cast<int>(lo.size());
    if (d < 1 || d > 3 || hi.size() != lo.size()) throw InvalidArgument("sampler: bad box dimension");
    if (count < 1 || nt < 1) throw InvalidArgument("sampler: counts must be positive");
    DomainSampler s;
    auto lin = [](double a, double b, int i, int m) { return m == 1 ? a : a + (b - a) * i / (m - 1.0); };
    int total = 1;
    for (int a = 0; a < d; ++a) total *= count;
    for (int k = 0; k < total; ++k) {
      Vector x(d);
      int rem = k;
      for (int a = d - 1; a >= 0; --a) {
        x[a] = lin(lo[a], hi[a], rem % count, count);
        rem /= count;
      }
      s.points.push_back(x);
    }
    for (int i = 0; i < nt; ++i) s.times.push_back(lin(t0, t1, i, nt));
    return s;
  }

  /// 10^4 space points (per dimension 10^4, 100^2, 22^3) times 10^2 times.
  static DomainSampler dense_box(const Vector& lo, const Vector& hi, double t0, double t1) {
    const int d = static_cast<int>(lo.size());
    const int count = d == 1 ? 10000 : d == 2 ? 100 : 22;
    return box(lo, hi, count, t0, t1, 100);
  }

  static DomainSampler grid_nodes(const GridSpec& g, std::vector<double> times) {
    DomainSampler s;
    for (std::size_t k = 0; k < g.node_count(); ++k) s.points.push_back(g.coordinate(g.unflat(k)));
    s.times = std::move(times);
    return s;
  }
};

/// max over samples of |u_a - u_b| for two members of the same solution family.
inline double sup_diff_closed_form(const ExactSolution& a, const ExactSolution& b, const DomainSampler& s) {
  if (a.id() != b.id()) throw InvalidArgument("sup_diff_closed_form: solutions of different families");
  if (s.points.empty() || s.times.empty()) throw InvalidArgument("sup_diff_closed_form: empty sampler");
  double m = 0.0;
  for (double t : s.times)
    for (const auto& x : s.points) m = std::max(m, std::abs(a.eval(x, t) - b.eval(x, t)));
  return m;
}

}  // namespace plap
