// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "plap/evolver.hpp"
#include "plap/exact_solutions.hpp"
#include "plap/operator_algebra.hpp"
#include "plap/rate_harness.hpp"

using namespace plap;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

Vector scalar(double x) { return Vector::Constant(1, x); }

const double kTwoPi = 2 * M_PI;

Problem heat_problem(int n) {
  return Problem{OperatorSpec::normalized(3), {}, GridSpec::line({0, kTwoPi}, n, Boundary::Periodic),
                 [](const Vector& x, double) { return std::sin(x[0]); }, {}, 0.0, 0.5, {}};
}

double heat_error(int n) {
  const Problem pb = heat_problem(n);
  const SolveResult r = solve(pb);
  const auto sol = ExactSolution::heat_mode(3);
  const auto exact = ScalarField::sample(pb.grid, [&](const Vector& x, double t) { return sol.eval(x, t); }, 0.5);
  return sup_diff(r.snapshots.back(), exact);
}

Outcome heat_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const double e = heat_error(256), e_half = heat_error(512);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double factor = e / e_half;
  return {e <= 5e-3 && factor >= 3.0 && secs < 10.0,
          "err(N=256)=" + fmt("%.3e", e) + " refinement factor " + fmt("%.2f", factor) + " in " + fmt("%.2fs", secs)};
}

SweepPlan normalized_plan() {
  SweepPlan plan{heat_problem(256)};
  plan.axis = PerturbationAxis::P;
  for (int k = 3; k <= 8; ++k) plan.values.push_back(std::ldexp(1.0, -k));
  plan.theory = TheoryRef{FamilyCase::Normalized, RateParams{1.0, 3.0, 3.0, 2.0, 2.0, {}}};
  plan.margin = 0.1;
  const GridSpec grid = plan.base.grid;
  plan.oracle_gap = [grid](double eps) {
    return sup_diff_closed_form(ExactSolution::heat_mode(3), ExactSolution::heat_mode(3 + eps),
                                DomainSampler::grid_nodes(grid, {0.5}));
  };
  return plan;
}

Outcome normalized_rate(const RateFit& fit, double secs) {
  return {fit.slope >= 0.9 && fit.slope <= 1.1 && secs < 120.0,
          "slope " + fmt("%.4f", fit.slope) + " (r^2 " + fmt("%.6f", fit.r_squared) + ") in " + fmt("%.2fs", secs)};
}

Outcome oracle_agreement(const RateFit& fit) {
  const double floor = fit.error_floor.value_or(INFINITY);
  bool ok = floor <= 1e-3;
  double worst = 0.0;
  int kept = 0;
  for (std::size_t i = 0; i < fit.eps_list.size(); ++i) {
    if (fit.excluded[i]) continue;
    ++kept;
    const double d = std::abs(fit.gap_list[i] - fit.oracle_gaps[i]);
    worst = std::max(worst, d);
    ok = ok && d <= floor;
  }
  ok = ok && kept > 0;
  return {ok, "max |solver gap - closed form| " + fmt("%.3e", worst) + " vs floor " + fmt("%.3e", floor) + " over " +
                  std::to_string(kept) + " gaps"};
}

Outcome barenblatt() {
  const auto b = ExactSolution::barenblatt(3, 1, 1.0);
  // Discrete residual at h, h/2, h/4 over points clear of the origin and the free boundary.
  const double clearance = 0.1;
  std::vector<double> hs{1e-2, 5e-3, 2.5e-3}, res;
  for (double h : hs) {
    double m = 0.0;
    for (int it = 0; it <= 10; ++it) {
      const double t = 1.0 + it / 10.0;
      const double r = b.support_radius(t);
      for (int i = 0; i <= 100; ++i) {
        const double x = -r + 2 * r * i / 100.0;
        try {
          m = std::max(m, std::abs(residual(b, scalar(x), t, ResidualMode::stencil(h), clearance)));
        } catch (const SingularPoint&) {
        }
      }
    }
    res.push_back(m);
  }
  bool trend = true;
  for (std::size_t k = 1; k < hs.size(); ++k)
    trend = trend && res[k] <= 10.0 * res[0] * (hs[k] / hs[0]) * (hs[k] / hs[0]);

  // Solver from t = 1 to t = 2 on [-5, 5], which contains the support up to t = 2.
  auto exact = [&](const Vector& x, double t) { return b.eval(x, t); };
  Problem pb{OperatorSpec::variational(3), {}, GridSpec::line({-5, 5}, 401, Boundary::Dirichlet), exact, exact, 1.0, 2.0, {}};
  const SolveResult r = solve(pb);
  const double err = sup_diff(r.snapshots.back(), ScalarField::sample(pb.grid, exact, 2.0));
  double coef = 0.0;  // max local diffusion coefficient (p-1)|u_x|^{p-2}
  for (std::size_t k = 0; k < pb.grid.node_count(); ++k) {
    const Vector x = pb.grid.coordinate(pb.grid.unflat(k));
    if (x.norm() == 0.0) continue;
    coef = std::max(coef, 2.0 * b.jet(x, 2.0).gradient.norm());
  }
  const double tol = 10.0 * 5e-3 * coef;
  return {trend && err <= tol,
          "residuals " + fmt("%.2e", res[0]) + "/" + fmt("%.2e", res[1]) + "/" + fmt("%.2e", res[2]) +
              "; solver err " + fmt("%.3e", err) + " <= " + fmt("%.3e", tol)};
}

Outcome sqrt_identity() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int s = 0; s < 10000; ++s) {
    const int n = 1 + s % 3;
    Vector xi(n);
    for (int a = 0; a < n; ++a) xi[a] = normal(rng);
    xi *= std::pow(10.0, -3.0 + 6.0 * uni(rng)) / xi.norm();
    const double p = 1.0 + 4.0 * uni(rng) + 1e-3;
    OperatorSpec spec = OperatorSpec::normalized(p);
    switch (s % 6) {
      case 1: spec = OperatorSpec::variational(p); break;
      case 2: spec = OperatorSpec::general_pq(p, 1.0 + 4.0 * uni(rng) + 1e-3); break;
      case 3: spec = OperatorSpec::regularized_pq(p, 2.0 + 3.0 * uni(rng), uni(rng)); break;
      case 4: spec = OperatorSpec::biased_infinity(uni(rng)); break;
      case 5: spec = OperatorSpec::biased_infinity_regularized(uni(rng), uni(rng), uni(rng)); break;
      default: break;
    }
    const Matrix a = diffusion_matrix(spec, xi);
    const Matrix sq = sqrt_matrix(spec, xi);
    const double an = spectral_norm(a);
    worst = std::max(worst, spectral_norm(sq * sq - a) / (1.0 + an));
  }
  return {worst <= 1e-10, "max ||S^2 - A|| / (1 + ||A||) = " + fmt("%.3e", worst) + " over 10^4 samples"};
}

Outcome c1_certification() {
  const auto grid = xi_grid(3, 1e-3, 1e3, 61, 16);
  const std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4};
  const double q = 3.0;
  const auto base = OperatorSpec::variational(q);
  const C1Report good = c1_certify(base, PerturbationAxis::P, eps, grid, C1Params{1.0, q / 2 - 1, 10.0, 4.0});
  const C1Report bad = c1_certify(base, PerturbationAxis::P, eps, grid, C1Params{1.0, q / 2 - 1 - 0.5, 10.0, 4.0});
  return {good.pass && !bad.pass && bad.worst_xi.norm() >= 100.0,
          "ratio " + fmt("%.3f", good.max_ratio) + " (beta=0.5), " + fmt("%.1f", bad.max_ratio) + " (beta=0) at |xi|=" +
              fmt("%.0f", bad.worst_xi.norm()) + ", c_A=10"};
}

Outcome rate_tables() {
  int checked = 0, wrong = 0;
  auto expect = [&](FamilyCase c, RateParams p, double nu, bool attained) {
    ++checked;
    const RatePrediction r = family_rate(c, p);
    if (std::abs(r.nu - nu) > 1e-12 || r.attained != attained) {
      ++wrong;
      std::printf("    mismatch: %s theta=%g p=%g q=%g p'=%g q'=%g: got %.17g (%s), expected %.17g (%s)\n",
                  std::string(to_string(c)).c_str(), p.theta, p.p, p.q, p.p_prime, p.q_prime, r.nu,
                  r.attained ? "attained" : "open", nu, attained ? "attained" : "open");
    }
  };
  const std::vector<double> thetas{0.25, 0.5, 1.0}, pprimes{2.0, 2.5, 3.5, 5.0};
  for (double th : thetas) {
    expect(FamilyCase::Normalized, {th, 3.1, 3.0, 2, 2, {}}, th, true);
    // Variational, p < 2 and q <= 2: rate theta.
    for (double q : {1.5, 2.0}) expect(FamilyCase::VariationalSubquadratic, {th, 1.6, q, 2, 2, {}}, th, true);
    for (double pp : pprimes) {
      // Variational, p > 2 and q >= 2: theta / (1 + (1 - theta) beta) as beta decreases to q/2 - 1.
      expect(FamilyCase::VariationalSuperquadratic, {th, pp + 0.1, pp, 2, 2, {}},
             th / (1 + (1 - th) * (pp / 2 - 1)), th == 1.0);
      // General family with p' = q': 2 theta / (2 theta + (1 - theta) q').
      expect(FamilyCase::GeneralPQEqualPPrime, {th, 3.0, 3.2, pp, pp, {}}, 2 * th / (2 * th + (1 - th) * pp), true);
      if (pp > 2) {
        expect(FamilyCase::GeneralPQDegenerate, {th, 3.0, 3.0, pp + 0.1, pp, {}},
               th / (1 + (1 - th) * (pp / 2 - 1)), th == 1.0);
      }
    }
    for (double qp : {1.5, 2.0}) expect(FamilyCase::GeneralPQSingular, {th, 3.0, 3.0, 1.5, qp, {}}, th, true);
    // Regularization cases (1)-(4).
    expect(FamilyCase::Regularization, {th, 1, 1, 2.0, 2.0, {}}, th / 2, false);
    expect(FamilyCase::Regularization, {th, 1, 1, 2.5, 2.5, {}}, 0.5 * th, true);
    expect(FamilyCase::Regularization, {th, 1, 1, 3.5, 3.5, {}}, th, false);
    expect(FamilyCase::Regularization, {th, 1, 1, 5.0, 5.0, {}}, th / (1 + (1 - th) * 1.0), false);
    expect(FamilyCase::BiasedInfinity, {th, 2, 2, 2, 2, {}}, th / 2, false);
  }
  return {wrong == 0, std::to_string(checked - wrong) + "/" + std::to_string(checked) + " cases match"};
}

Outcome mcf_regularization() {
  const auto t0 = std::chrono::steady_clock::now();
  SweepPlan plan{Problem{OperatorSpec::normalized(1), {}, GridSpec::line({0, kTwoPi}, 512, Boundary::Periodic),
                         [](const Vector& x, double) { return std::sin(x[0]); }, {}, 0.0, 0.5, {}}};
  plan.axis = PerturbationAxis::Eps;
  for (int k = 2; k <= 6; ++k) plan.values.push_back(std::ldexp(1.0, -k));
  plan.theory = TheoryRef{FamilyCase::Regularization, RateParams{1.0, 1.0, 1.0, 2.0, 2.0, {}}};
  plan.margin = 0.1;
  const RateFit fit = run_sweep(plan);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {fit.slope >= 0.4 && fit.consistent.value_or(false) && secs < 300.0,
          "slope " + fmt("%.4f", fit.slope) + " vs open sup " + fmt("%.2f", *fit.theory_nu) + " (" +
              (fit.consistent.value_or(false) ? "consistent" : "inconsistent") + ") in " + fmt("%.2fs", secs)};
}

Outcome maximum_principle() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double a1 = 2 * uni(rng) - 1, a2 = 2 * uni(rng) - 1, a3 = 0.5 * uni(rng), ph = kTwoPi * uni(rng);
    const double p = 1.0 + 3.0 * uni(rng) + 1e-3;
    OperatorSpec spec = OperatorSpec::normalized(p);
    switch (trial % 6) {
      case 1: spec = OperatorSpec::variational(1.2 + 2.5 * uni(rng)); break;
      case 2: spec = OperatorSpec::general_pq(p, 1.2 + 2.5 * uni(rng)); break;
      case 3: spec = OperatorSpec::regularized_pq(p, 2.0 + 2.0 * uni(rng), 0.05 + 0.5 * uni(rng)); break;
      case 4: spec = OperatorSpec::biased_infinity(uni(rng)); break;
      case 5: spec = OperatorSpec::biased_infinity_regularized(0.05 + 0.5 * uni(rng), 0.1, 1.0); break;
      default: break;
    }
    auto init = [=](const Vector& x, double) {
      return a1 * std::sin(x[0] + ph) + a2 * std::cos(2 * x[0]) + a3 * std::sin(3 * x[0]);
    };
    const bool periodic = trial % 2 == 0;
    Problem pb{spec, {}, GridSpec::line({0, kTwoPi}, 40, periodic ? Boundary::Periodic : Boundary::Dirichlet), init,
               periodic ? SpaceTimeFunction{} : SpaceTimeFunction{init}, 0.0, 0.05, {}};
    pb.controls.snapshot_times = {0.01, 0.025, 0.05};
    const SolveResult r = solve(pb);
    const auto u0 = ScalarField::sample(pb.grid, init, 0.0);
    const auto [lo, hi] = std::minmax_element(u0.values().begin(), u0.values().end());
    for (const auto& snap : r.snapshots)
      for (double v : snap.values()) worst = std::max({worst, v - *hi, *lo - v});
  }
  return {worst <= 1e-12, "max excursion outside the data range " + fmt("%.3e", worst) + " over 100 problems"};
}

Outcome elliptic_residuals() {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> rad(0.01, 1.0);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  int count = 0;
  for (double p : {2.5, 3.0, 4.0}) {
    for (int n : {1, 2, 3}) {
      std::vector<ExactSolution> sols{ExactSolution::radial_elliptic(p, n), ExactSolution::torsion(p, n, 1.0)};
      if (p > n) sols.push_back(ExactSolution::fundamental(p, n));
      for (const auto& s : sols) {
        for (int i = 0; i < 100; ++i) {
          Vector x(n);
          for (int a = 0; a < n; ++a) x[a] = normal(rng);
          x *= rad(rng) / x.norm();
          worst = std::max(worst, std::abs(residual(s, x, 0.0, ResidualMode::analytic(), 1e-3)));
          ++count;
        }
      }
    }
  }
  return {worst <= 1e-10, "max analytic residual " + fmt("%.3e", worst) + " over " + std::to_string(count) + " points"};
}

Outcome holder_estimator() {
  const auto g = GridSpec::line({-1, 1}, 1024, Boundary::Dirichlet);
  const auto sq = estimate_holder(ScalarField::sample(g, [](const Vector& x, double) { return std::sqrt(std::abs(x[0])); }));
  const auto af = estimate_holder(ScalarField::sample(g, [](const Vector& x, double) { return 0.7 * x[0] + 0.2; }));
  return {sq.theta_hat >= 0.45 && sq.theta_hat <= 0.55 && af.theta_hat >= 0.95 && af.theta_hat <= 1.0,
          "theta(|x|^1/2)=" + fmt("%.4f", sq.theta_hat) + " theta(affine)=" + fmt("%.4f", af.theta_hat)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "heat-mode accuracy", heat_accuracy);

  RateFit sweep;
  double sweep_secs = 0.0;
  bool sweep_ok = true;
  std::string sweep_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    sweep = run_sweep(normalized_plan());
    sweep_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } catch (const std::exception& e) {
    sweep_ok = false;
    sweep_error = e.what();
  }
  report(2, "normalized rate recovery", [&] {
    return sweep_ok ? normalized_rate(sweep, sweep_secs) : Outcome{false, "sweep failed: " + sweep_error};
  });
  report(3, "oracle agreement", [&] {
    return sweep_ok ? oracle_agreement(sweep) : Outcome{false, "sweep failed: " + sweep_error};
  });
  report(4, "barenblatt verification", barenblatt);
  report(5, "square-root identity", sqrt_identity);
  report(6, "C1 certification", c1_certification);
  report(7, "rate-exponent tables", rate_tables);
  report(8, "regularization rate (mean curvature)", mcf_regularization);
  report(9, "maximum principle", maximum_principle);
  report(10, "elliptic example residuals", elliptic_residuals);
  report(11, "hoelder estimator", holder_estimator);

  std::printf("%d/11 criteria passed\n", 11 - failures);
  return failures == 0 ? 0 : 1;
}
