#pragma once

// Diffusion matrices of the quasilinear p-Laplace families, their closed-form
// square roots, the square-root and first-order gap functionals, and the
// predicted sup-norm convergence exponents.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "plap/errors.hpp"

namespace plap {

/// Small dense types; dimension is at most 3 so everything stays on the stack.
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

/// A function of (x, t), used for initial/boundary data and source terms.
using SpaceTimeFunction = std::function<double(const Vector&, double)>;

enum class Family {
  Normalized,
  Variational,
  GeneralPQ,
  RegularizedPQ,
  BiasedInfinity,
  BiasedInfinityRegularized,
};

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::Normalized: return "normalized";
    case Family::Variational: return "variational";
    case Family::GeneralPQ: return "general_pq";
    case Family::RegularizedPQ: return "regularized_pq";
    case Family::BiasedInfinity: return "biased_infinity";
    case Family::BiasedInfinityRegularized: return "biased_infinity_regularized";
  }
  return "?";
}

inline Family parse_family(std::string_view name) {
  for (Family f : {Family::Normalized, Family::Variational, Family::GeneralPQ,
                   Family::RegularizedPQ, Family::BiasedInfinity,
                   Family::BiasedInfinityRegularized}) {
    if (to_string(f) == name) return f;
  }
  throw InvalidArgument("unknown operator family '" + std::string(name) + "'");
}

/// One member of the operator family together with the gradient threshold
/// below which the solver switches to the regularized form.
class OperatorSpec {
 public:
  static OperatorSpec normalized(double p) {
    OperatorSpec s(Family::Normalized);
    s.p_ = p;
    s.validate();
    return s;
  }
  static OperatorSpec variational(double p) {
    OperatorSpec s(Family::Variational);
    s.p_ = p;
    s.validate();
    return s;
  }
  static OperatorSpec general_pq(double p, double p_prime) {
    OperatorSpec s(Family::GeneralPQ);
    s.p_ = p;
    s.p_prime_ = p_prime;
    s.validate();
    return s;
  }
  static OperatorSpec regularized_pq(double p, double p_prime, double eps) {
    OperatorSpec s(Family::RegularizedPQ);
    s.p_ = p;
    s.p_prime_ = p_prime;
    s.eps_ = eps;
    s.validate();
    return s;
  }
  static OperatorSpec biased_infinity(double a) {
    OperatorSpec s(Family::BiasedInfinity);
    s.a_ = a;
    s.validate();
    return s;
  }
  static OperatorSpec biased_infinity_regularized(double eps1, double eps2, double a) {
    OperatorSpec s(Family::BiasedInfinityRegularized);
    s.eps1_ = eps1;
    s.eps2_ = eps2;
    s.a_ = a;
    s.validate();
    return s;
  }

  [[nodiscard]] OperatorSpec with_grad_floor(double eta) const {
    OperatorSpec s = *this;
    s.grad_floor_ = eta;
    s.validate();
    return s;
  }

  Family family() const { return family_; }
  double p() const { return p_; }
  double p_prime() const { return p_prime_; }
  double eps() const { return eps_; }
  double eps1() const { return eps1_; }
  double eps2() const { return eps2_; }
  double a() const { return a_; }
  double grad_floor() const { return grad_floor_; }

  /// Exponent of |xi| in the scalar prefactor (p' of the general family).
  double homogeneity() const {
    switch (family_) {
      case Family::Variational: return p_;
      case Family::GeneralPQ:
      case Family::RegularizedPQ: return p_prime_;
      default: return 2.0;
    }
  }

  /// True when A(0) is defined.
  bool everywhere_defined() const {
    return (family_ == Family::RegularizedPQ && eps_ > 0) ||
           (family_ == Family::BiasedInfinityRegularized && eps1_ > 0);
  }

  /// True when A grows without bound as |xi| -> infinity.
  bool unbounded_at_infinity() const {
    switch (family_) {
      case Family::Variational:
      case Family::GeneralPQ:
      case Family::RegularizedPQ: return homogeneity() > 2.0;
      default: return false;
    }
  }

  bool operator==(const OperatorSpec&) const = default;

 private:
  explicit OperatorSpec(Family f) : family_(f) {}

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(p_) || !finite(p_prime_) || !finite(eps_) || !finite(eps1_) || !finite(eps2_) ||
        !finite(a_) || !finite(grad_floor_)) {
      throw InvalidArgument("operator parameters must be finite");
    }
    switch (family_) {
      case Family::Normalized:
        if (p_ < 1) throw InvalidArgument("normalized family requires p >= 1");
        break;
      case Family::Variational:
        if (p_ <= 1) throw InvalidArgument("variational family requires p > 1");
        break;
      case Family::GeneralPQ:
        if (p_ <= 1 || p_prime_ <= 1)
          throw InvalidArgument("general (p,p') family requires p > 1 and p' > 1");
        break;
      case Family::RegularizedPQ:
        if (p_ < 1 || p_prime_ < 2)
          throw InvalidArgument("regularized family requires p >= 1 and p' >= 2");
        if (eps_ < 0) throw InvalidArgument("regularization eps must be >= 0");
        break;
      case Family::BiasedInfinity:
        break;
      case Family::BiasedInfinityRegularized:
        if (eps1_ < 0 || eps2_ < 0) throw InvalidArgument("eps1, eps2 must be >= 0");
        break;
    }
    if (grad_floor_ < 0) throw InvalidArgument("grad_floor must be >= 0");
  }

  Family family_;
  double p_ = 2.0;
  double p_prime_ = 2.0;
  double eps_ = 0.0;
  double eps1_ = 0.0;
  double eps2_ = 0.0;
  double a_ = 0.0;
  double grad_floor_ = 0.0;
};

/// iso * I + dir * u (x) u with |u| = 1. Every family evaluates to this form,
/// which gives eigenvalues, square roots and trace products in closed form.
struct RankOneForm {
  double iso = 0.0;
  double dir = 0.0;
  Vector unit;  // zero vector when the direction is undefined (then dir == 0)

  int dim() const { return static_cast<int>(unit.size()); }

  Matrix matrix() const {
    const int n = dim();
    Matrix m = iso * Matrix::Identity(n, n);
    if (dir != 0.0) m += dir * unit * unit.transpose();
    return m;
  }

  double max_eigenvalue() const {
    if (dim() == 1) return iso + dir;
    return std::max(iso, iso + dir);
  }

  double min_eigenvalue() const {
    if (dim() == 1) return iso + dir;
    return std::min(iso, iso + dir);
  }

  /// Principal square root; both eigenvalues are nonnegative for admissible specs.
  RankOneForm sqrt() const {
    const double s_iso = std::sqrt(std::max(iso, 0.0));
    const double s_par = std::sqrt(std::max(iso + dir, 0.0));
    return {s_iso, s_par - s_iso, unit};
  }

  /// tr(A M) for a symmetric M.
  double trace_product(const Matrix& m) const {
    double t = iso * m.trace();
    if (dir != 0.0) t += dir * unit.dot(m * unit);
    return t;
  }
};

namespace detail {

inline void check_xi(const Vector& xi) {
  if (xi.size() < 1 || xi.size() > 3) throw InvalidArgument("gradient dimension must be 1, 2 or 3");
  if (!xi.allFinite()) throw InvalidArgument("gradient must be finite");
}

inline Vector unit_or_zero(const Vector& xi, double r) {
  if (r > 0) return xi / r;
  return Vector::Zero(xi.size());
}

}  // namespace detail

/// (|xi|^2 + eps^2)^{(p'-2)/2} (I + (p-2) xi (x) xi / (|xi|^2 + eps^2)).
/// Accepts any p, p' (used internally for the grid-tied regularization of
/// singular families); undefined only for xi = 0 with eps = 0.
inline RankOneForm regularized_pq_form(double p, double p_prime, double eps, const Vector& xi) {
  detail::check_xi(xi);
  const double r2 = xi.squaredNorm();
  const double s = r2 + eps * eps;
  if (s == 0.0) throw SingularGradient();
  const double r = std::sqrt(r2);
  const double scale = (p_prime == 2.0) ? 1.0 : std::pow(s, 0.5 * (p_prime - 2.0));
  return {scale, scale * (p - 2.0) * r2 / s, detail::unit_or_zero(xi, r)};
}

/// xi (x) xi / (|xi|^2 + eps1^2) + eps1 I.
inline RankOneForm biased_regularized_form(double eps1, const Vector& xi) {
  detail::check_xi(xi);
  const double r2 = xi.squaredNorm();
  const double s = r2 + eps1 * eps1;
  if (s == 0.0) throw SingularGradient();
  const double r = std::sqrt(r2);
  return {eps1, r2 / s, detail::unit_or_zero(xi, r)};
}

/// A(xi) in rank-one form. Throws SingularGradient at xi = 0 for families
/// that are not everywhere defined.
inline RankOneForm diffusion_form(const OperatorSpec& spec, const Vector& xi) {
  detail::check_xi(xi);
  switch (spec.family()) {
    case Family::RegularizedPQ:
      return regularized_pq_form(spec.p(), spec.p_prime(), spec.eps(), xi);
    case Family::BiasedInfinityRegularized:
      return biased_regularized_form(spec.eps1(), xi);
    default:
      break;
  }
  const double r = xi.norm();
  if (r == 0.0) throw SingularGradient();
  const Vector u = xi / r;
  switch (spec.family()) {
    case Family::Normalized:
      return {1.0, spec.p() - 2.0, u};
    case Family::Variational:
    case Family::GeneralPQ: {
      const double scale = std::pow(r, spec.homogeneity() - 2.0);
      return {scale, scale * (spec.p() - 2.0), u};
    }
    case Family::BiasedInfinity:
      return {0.0, 1.0, u};
    default:
      break;
  }
  throw InvalidArgument("unhandled family");
}

inline Matrix diffusion_matrix(const OperatorSpec& spec, const Vector& xi) {
  return diffusion_form(spec, xi).matrix();
}

inline Matrix sqrt_matrix(const OperatorSpec& spec, const Vector& xi) {
  return diffusion_form(spec, xi).sqrt().matrix();
}

/// Largest singular value of a symmetric matrix.
inline double spectral_norm(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Spectral norm of A_A(xi)^{1/2} - A_B(xi)^{1/2}.
inline double c1_gap(const OperatorSpec& a, const OperatorSpec& b, const Vector& xi) {
  const RankOneForm sa = diffusion_form(a, xi).sqrt();
  const RankOneForm sb = diffusion_form(b, xi).sqrt();
  // Both roots are built from the same xi, so the difference is rank-one
  // along xi/|xi| with eigenvalues d_par (along xi) and d_iso (across).
  const double d_iso = std::abs(sa.iso - sb.iso);
  const double d_par = std::abs((sa.iso + sa.dir) - (sb.iso + sb.dir));
  return xi.size() == 1 ? d_par : std::max(d_par, d_iso);
}

/// Which parameter a perturbation of size eps moves.
enum class PerturbationAxis { P, PPrime, Eps, Eps1Eps2 };

inline std::string_view to_string(PerturbationAxis a) {
  switch (a) {
    case PerturbationAxis::P: return "p";
    case PerturbationAxis::PPrime: return "p_prime";
    case PerturbationAxis::Eps: return "eps";
    case PerturbationAxis::Eps1Eps2: return "eps1_eps2";
  }
  return "?";
}

inline PerturbationAxis parse_axis(std::string_view name) {
  for (auto a : {PerturbationAxis::P, PerturbationAxis::PPrime, PerturbationAxis::Eps,
                 PerturbationAxis::Eps1Eps2}) {
    if (to_string(a) == name) return a;
  }
  throw InvalidArgument("unknown perturbation axis '" + std::string(name) + "'");
}

/// The perturbed operator A_eps for a base operator A_0.
///   P:        p -> p + eps
///   PPrime:   p' -> p' + eps (general and regularized families)
///   Eps:      regularization eps (normalized/general/regularized -> regularized)
///   Eps1Eps2: eps1 = eps2 = eps (biased families)
inline OperatorSpec perturb(const OperatorSpec& base, PerturbationAxis axis, double eps) {
  OperatorSpec out = base;
  const double floor = base.grad_floor();
  switch (axis) {
    case PerturbationAxis::P:
      switch (base.family()) {
        case Family::Normalized: out = OperatorSpec::normalized(base.p() + eps); break;
        case Family::Variational: out = OperatorSpec::variational(base.p() + eps); break;
        case Family::GeneralPQ:
          out = OperatorSpec::general_pq(base.p() + eps, base.p_prime());
          break;
        case Family::RegularizedPQ:
          out = OperatorSpec::regularized_pq(base.p() + eps, base.p_prime(), base.eps());
          break;
        default: throw InvalidArgument("axis p does not apply to the biased families");
      }
      break;
    case PerturbationAxis::PPrime:
      switch (base.family()) {
        case Family::GeneralPQ:
          out = OperatorSpec::general_pq(base.p(), base.p_prime() + eps);
          break;
        case Family::RegularizedPQ:
          out = OperatorSpec::regularized_pq(base.p(), base.p_prime() + eps, base.eps());
          break;
        default: throw InvalidArgument("axis p_prime applies to general/regularized families only");
      }
      break;
    case PerturbationAxis::Eps:
      switch (base.family()) {
        case Family::Normalized: out = OperatorSpec::regularized_pq(base.p(), 2.0, eps); break;
        case Family::Variational: out = OperatorSpec::regularized_pq(base.p(), base.p(), eps); break;
        case Family::GeneralPQ:
        case Family::RegularizedPQ:
          out = OperatorSpec::regularized_pq(base.p(), base.p_prime(), eps);
          break;
        default: throw InvalidArgument("axis eps does not apply to the biased families");
      }
      break;
    case PerturbationAxis::Eps1Eps2:
      if (base.family() != Family::BiasedInfinity &&
          base.family() != Family::BiasedInfinityRegularized) {
        throw InvalidArgument("axis eps1_eps2 applies to the biased families only");
      }
      out = OperatorSpec::biased_infinity_regularized(eps, eps, base.a());
      break;
  }
  return out.with_grad_floor(floor);
}

/// Test-function exponent k: max(4, 2p'/(p'-1)) for families singular at
/// vanishing gradients, 4 otherwise.
inline double default_test_exponent(const OperatorSpec& spec) {
  const double h = spec.homogeneity();
  const bool singular = (spec.family() == Family::Variational || spec.family() == Family::GeneralPQ) &&
                        h < 2.0;
  return singular ? std::max(4.0, 2.0 * h / (h - 1.0)) : 4.0;
}

struct C1Params {
  double alpha = 1.0;
  double beta = 0.0;
  double c_A = 1.0;
  double k = 4.0;

  void validate() const {
    if (!(alpha > 0)) throw InvalidArgument("C1: alpha must be > 0");
    if (!(c_A >= 0)) throw InvalidArgument("C1: c_A must be >= 0");
    if (!(k > 2)) throw InvalidArgument("C1: k must be > 2");
    if (!(beta > (2.0 - k) / (2.0 * (k - 1.0))))
      throw InvalidArgument("C1: beta must exceed (2-k)/(2(k-1))");
  }
};

struct C2Params {
  double gamma = 1.0;
  double c_H = 0.0;
};

struct C1Report {
  double max_ratio = 0.0;
  Vector worst_xi;
  double worst_eps = 0.0;
  bool pass = false;
};

/// Log-spaced magnitudes in [lo, hi] times `directions` unit vectors in R^dim.
/// Directions are evenly spaced angles in 2D, a Fibonacci sphere in 3D; with
/// `rng_seed` set they are drawn uniformly at random instead.
inline std::vector<Vector> xi_grid(int dim, double lo, double hi, int magnitudes, int directions,
                                   std::optional<unsigned long long> rng_seed = std::nullopt);

/// max over (eps, xi) of c1_gap(A_eps, A_0, xi) / (eps^alpha (1 + |xi|^beta)).
inline C1Report c1_certify(const OperatorSpec& base, PerturbationAxis axis,
                           std::span<const double> eps_list, std::span<const Vector> grid,
                           const C1Params& candidate) {
  candidate.validate();
  if (grid.empty()) throw InvalidArgument("c1_certify: xi grid is empty");
  if (eps_list.empty()) throw InvalidArgument("c1_certify: eps list is empty");
  C1Report rep;
  rep.worst_xi = grid.front();
  for (double eps : eps_list) {
    if (!(eps > 0)) throw InvalidArgument("c1_certify: perturbations must be > 0");
    const OperatorSpec a_eps = perturb(base, axis, eps);
    for (const Vector& xi : grid) {
      const double r = xi.norm();
      if (!(r > 0)) throw InvalidArgument("c1_certify: xi magnitudes must be > 0");
      const double ratio =
          c1_gap(a_eps, base, xi) / (std::pow(eps, candidate.alpha) * (1.0 + std::pow(r, candidate.beta)));
      if (ratio > rep.max_ratio) {
        rep.max_ratio = ratio;
        rep.worst_xi = xi;
        rep.worst_eps = eps;
      }
    }
  }
  rep.pass = rep.max_ratio <= candidate.c_A;
  return rep;
}

/// First-order term H(x, t, xi) = -a sqrt(|xi|^2 + eps2^2) - f(x, t).
struct HamiltonianSpec {
  double a = 0.0;
  double eps2 = 0.0;
  SpaceTimeFunction source;  // empty means f == 0
  std::optional<double> lipschitz;

  /// H matching an operator: the biased families carry a and eps2; the
  /// others have no gradient term.
  static HamiltonianSpec for_operator(const OperatorSpec& spec, SpaceTimeFunction f = {}) {
    HamiltonianSpec h;
    if (spec.family() == Family::BiasedInfinity || spec.family() == Family::BiasedInfinityRegularized) {
      h.a = spec.a();
      h.eps2 = spec.eps2();
    }
    h.source = std::move(f);
    return h;
  }

  bool trivial() const { return a == 0.0 && !source; }
};

inline double hamiltonian(const HamiltonianSpec& h, const Vector& x, double t, const Vector& xi) {
  double v = 0.0;
  if (h.a != 0.0) v -= h.a * std::sqrt(xi.squaredNorm() + h.eps2 * h.eps2);
  if (h.source) v -= h.source(x, t);
  return v;
}

struct SpaceTimePoint {
  Vector x;
  double t = 0.0;
};

inline double c2_gap(const HamiltonianSpec& ha, const HamiltonianSpec& hb, std::span<const Vector> xis,
                     std::span<const SpaceTimePoint> points) {
  if (xis.empty() || points.empty()) throw InvalidArgument("c2_gap: grids must be nonempty");
  double m = 0.0;
  for (const auto& z : points)
    for (const auto& xi : xis)
      m = std::max(m, std::abs(hamiltonian(ha, z.x, z.t, xi) - hamiltonian(hb, z.x, z.t, xi)));
  return m;
}

/// nu = alpha theta / (1 + (1 - theta) max(beta, 0)).
inline double theoretical_rate(double alpha, double beta, double theta) {
  if (!(theta > 0 && theta <= 1)) throw InvalidArgument("theta must lie in (0, 1]");
  if (!(alpha > 0)) throw InvalidArgument("alpha must be > 0");
  if (!std::isfinite(beta)) throw InvalidArgument("beta must be finite");
  return alpha * theta / (1.0 + (1.0 - theta) * std::max(beta, 0.0));
}

/// Application cases with a closed-form exponent.
enum class FamilyCase {
  Normalized,                 // p -> q, normalized family
  VariationalSubquadratic,    // p < 2, q <= 2
  VariationalSuperquadratic,  // p > 2, q >= 2
  GeneralPQDegenerate,        // p' > 2, q' >= 2
  GeneralPQSingular,          // p' < 2, q' <= 2
  GeneralPQEqualPPrime,       // p' = q', p -> q
  Regularization,             // eps -> 0 for p >= 1, p' >= 2
  BiasedInfinity,             // (eps1, eps2) -> 0
};

inline std::string_view to_string(FamilyCase c) {
  switch (c) {
    case FamilyCase::Normalized: return "normalized";
    case FamilyCase::VariationalSubquadratic: return "variational_subquadratic";
    case FamilyCase::VariationalSuperquadratic: return "variational_superquadratic";
    case FamilyCase::GeneralPQDegenerate: return "general_pq_degenerate";
    case FamilyCase::GeneralPQSingular: return "general_pq_singular";
    case FamilyCase::GeneralPQEqualPPrime: return "general_pq_equal";
    case FamilyCase::Regularization: return "regularization";
    case FamilyCase::BiasedInfinity: return "biased_infinity";
  }
  return "?";
}

inline FamilyCase parse_family_case(std::string_view name) {
  for (auto c : {FamilyCase::Normalized, FamilyCase::VariationalSubquadratic,
                 FamilyCase::VariationalSuperquadratic, FamilyCase::GeneralPQDegenerate,
                 FamilyCase::GeneralPQSingular, FamilyCase::GeneralPQEqualPPrime,
                 FamilyCase::Regularization, FamilyCase::BiasedInfinity}) {
    if (to_string(c) == name) return c;
  }
  throw InvalidArgument("unknown theory case '" + std::string(name) + "'");
}

/// Inputs of family_rate; only the fields a case reads need to be set.
struct RateParams {
  double theta = 1.0;
  double p = 2.0;
  double q = 2.0;
  double p_prime = 2.0;
  double q_prime = 2.0;
  std::optional<double> m;  // free Young-inequality exponent; absent = supremum
};

struct RatePrediction {
  double nu = 0.0;
  bool attained = true;  // false: nu is an open supremum (every smaller rate holds)
};

inline RatePrediction family_rate(FamilyCase c, const RateParams& in) {
  const double theta = in.theta;
  if (!(theta > 0 && theta <= 1)) throw InvalidArgument("theta must lie in (0, 1]");
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw CaseNotApplicable(std::string(to_string(c)) + ": " + what);
  };
  switch (c) {
    case FamilyCase::Normalized:
      require(in.p >= 1 && in.q >= 1, "needs p, q >= 1");
      return {theta, true};
    case FamilyCase::VariationalSubquadratic:
      require(in.p > 1 && in.p < 2 && in.q > 1 && in.q <= 2, "needs 1 < p < 2 and 1 < q <= 2");
      return {theta, true};
    case FamilyCase::VariationalSuperquadratic: {
      require(in.p > 2 && in.q >= 2, "needs p > 2 and q >= 2");
      // beta ranges over (q/2 - 1, inf): the infimum is excluded unless theta = 1.
      return {theoretical_rate(1.0, in.q / 2.0 - 1.0, theta), theta == 1.0};
    }
    case FamilyCase::GeneralPQDegenerate:
      require(in.p > 1 && in.q > 1 && in.p_prime > 2 && in.q_prime >= 2,
              "needs p' > 2 and q' >= 2");
      return {theoretical_rate(1.0, in.q_prime / 2.0 - 1.0, theta), theta == 1.0};
    case FamilyCase::GeneralPQSingular:
      require(in.p > 1 && in.q > 1 && in.p_prime > 1 && in.p_prime < 2 && in.q_prime > 1 &&
                  in.q_prime <= 2,
              "needs 1 < p' < 2 and 1 < q' <= 2");
      return {theta, true};
    case FamilyCase::GeneralPQEqualPPrime:
      require(in.p > 1 && in.q > 1 && in.q_prime > 1, "needs p, q, q' > 1");
      return {theoretical_rate(1.0, in.q_prime / 2.0 - 1.0, theta), true};
    case FamilyCase::Regularization: {
      const double pp = in.p_prime;
      require(in.p >= 1 && pp >= 2, "needs p >= 1 and p' >= 2");
      if (pp == 2.0) {
        if (in.m) {
          require(*in.m > 0 && *in.m < 0.5, "m must lie in (0, 1/2)");
          return {*in.m * theta, true};
        }
        return {theta / 2.0, false};
      }
      if (pp < 3.0) return {(pp - 2.0) * theta, true};
      if (pp <= 4.0) {
        if (in.m) {
          require(*in.m > 0 && *in.m < 1, "m must lie in (0, 1)");
          return {theta * std::min(pp - 2.0, *in.m), true};
        }
        return {theta, false};
      }
      if (in.m) {
        require(*in.m > 0 && *in.m < 1, "m must lie in (0, 1)");
        const double beta = std::max(pp - 4.0, pp / 2.0 - 1.0 - *in.m);
        return {*in.m * theta / (1.0 + (1.0 - theta) * beta), true};
      }
      return {theta / (1.0 + (1.0 - theta) * (pp - 4.0)), false};
    }
    case FamilyCase::BiasedInfinity:
      // eps1 contributes eps1^{2 m theta} with m in (0, 1/4); eps2 contributes eps2^1.
      if (in.m) {
        require(*in.m > 0 && *in.m < 0.25, "m must lie in (0, 1/4)");
        return {std::min(2.0 * *in.m * theta, 1.0), true};
      }
      return {theta / 2.0, false};
  }
  throw InvalidArgument("unhandled case");
}

inline std::vector<Vector> xi_grid(int dim, double lo, double hi, int magnitudes, int directions,
                                   std::optional<unsigned long long> rng_seed) {
  if (dim < 1 || dim > 3) throw InvalidArgument("xi_grid: dim must be 1, 2 or 3");
  if (!(lo > 0 && hi >= lo) || magnitudes < 1 || directions < 1)
    throw InvalidArgument("xi_grid: need 0 < lo <= hi and positive counts");
  std::vector<Vector> dirs;
  if (dim == 1) {
    dirs.push_back(Vector::Constant(1, 1.0));
    if (directions > 1) dirs.push_back(Vector::Constant(1, -1.0));
  } else if (rng_seed) {
    std::mt19937_64 rng(*rng_seed);
    std::normal_distribution<double> normal;
    for (int i = 0; i < directions; ++i) {
      Vector v(dim);
      do {
        for (int d = 0; d < dim; ++d) v[d] = normal(rng);
      } while (v.norm() < 1e-12);
      dirs.push_back(v.normalized());
    }
  } else if (dim == 2) {
    for (int i = 0; i < directions; ++i) {
      const double th = M_PI * i / directions;  // opposite directions give the same matrices
      Vector v(2);
      v << std::cos(th), std::sin(th);
      dirs.push_back(v);
    }
  } else {
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < directions; ++i) {
      const double z = directions == 1 ? 1.0 : 1.0 - 2.0 * (i + 0.5) / directions;
      const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
      Vector v(3);
      v << rr * std::cos(golden * i), rr * std::sin(golden * i), z;
      dirs.push_back(v);
    }
  }
  std::vector<Vector> out;
  out.reserve(dirs.size() * magnitudes);
  for (int k = 0; k < magnitudes; ++k) {
    const double r = magnitudes == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(k) / (magnitudes - 1));
    for (const auto& d : dirs) out.push_back(r * d);
  }
  return out;
}

}  // namespace plap
