#pragma once

// Perturbation sweeps, empirical exponent fits and comparison with the
// predicted rates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "plap/errors.hpp"
#include "plap/evolver.hpp"
#include "plap/field_grid.hpp"
#include "plap/operator_algebra.hpp"

namespace plap {

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t dropped = 0;  // pairs with a zero gap
};

namespace detail {

inline LogLogFit ols(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 1e-300)) throw InvalidArgument("fit: degenerate abscissae (all equal)");
  LogLogFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (f.intercept + f.slope * xs[i]);
    ss_res += r * r;
  }
  f.r_squared = syy > 0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

}  // namespace detail

/// Least squares on (log eps, log gap). Zero gaps are dropped; at least three
/// positive pairs must remain.
inline LogLogFit fit_loglog(const std::vector<double>& eps, const std::vector<double>& gaps) {
  if (eps.size() != gaps.size()) throw InvalidArgument("fit_loglog: length mismatch");
  std::vector<double> xs, ys;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0) || !std::isfinite(eps[i])) throw InvalidArgument("fit_loglog: eps must be positive");
    if (!(gaps[i] >= 0) || !std::isfinite(gaps[i])) throw InvalidArgument("fit_loglog: gaps must be >= 0");
    if (gaps[i] == 0) {
      ++dropped;
      continue;
    }
    xs.push_back(std::log(eps[i]));
    ys.push_back(std::log(gaps[i]));
  }
  if (xs.size() < 3) throw InvalidArgument("fit_loglog: fewer than 3 positive gaps");
  LogLogFit f = detail::ols(xs, ys);
  f.dropped = dropped;
  return f;
}

struct HolderEstimate {
  bool flat = false;
  double theta_hat = 0.0;
  double L_hat = 0.0;
};

/// Upper-envelope Hoelder fit. Pairs are taken at dyadic node offsets
/// 1, 2, 4, ... up to a quarter of the resolution along each axis; each offset
/// contributes the `percentile` quantile of |u(x) - u(y)| (1.0 = maximum) over
/// at most `pair_count` evenly strided pairs.
inline HolderEstimate estimate_holder(const ScalarField& f, int pair_count = 100000, double percentile = 1.0) {
  const GridSpec& g = f.grid();
  if (g.node_count() < 2) throw InvalidArgument("estimate_holder: field needs >= 2 nodes");
  if (pair_count < 100) throw InvalidArgument("estimate_holder: pair_count must be >= 100");
  if (!(percentile > 0 && percentile <= 1)) throw InvalidArgument("estimate_holder: percentile must lie in (0, 1]");
  // Envelope model w(r) = c + L r^theta; c absorbs sub-grid placement of singular points.
  // Increments w(2r) - w(r) = L (2^theta - 1) r^theta remove c before the log-log fit.
  std::vector<double> xs, ys, xs_env, ys_env;
  for (int axis = 0; axis < g.dim(); ++axis) {
    const int n_axis = g.resolution(axis);
    std::vector<double> env;
    for (int d = 1; d <= std::max(1, n_axis / 4); d *= 2) {
      std::vector<std::size_t> starts;
      for (std::size_t k = 0; k < g.node_count(); ++k) {
        const NodeIndex nd = g.unflat(k);
        if (nd[axis] + d < n_axis) starts.push_back(k);
      }
      const std::size_t stride = std::max<std::size_t>(1, starts.size() / pair_count);
      std::vector<double> osc;
      for (std::size_t s = 0; s < starts.size(); s += stride) {
        NodeIndex a = g.unflat(starts[s]), b = a;
        b[axis] += d;
        osc.push_back(std::abs(f.at(a) - f.at(b)));
      }
      if (osc.empty()) break;
      const std::size_t q = std::min(osc.size() - 1, static_cast<std::size_t>(std::ceil(percentile * osc.size())) - 1);
      std::nth_element(osc.begin(), osc.begin() + static_cast<std::ptrdiff_t>(q), osc.end());
      env.push_back(osc[q]);
      if (osc[q] > 1e-300) {
        xs_env.push_back(std::log(d * g.spacing(axis)));
        ys_env.push_back(std::log(osc[q]));
      }
    }
    for (std::size_t i = 0; i + 1 < env.size(); ++i) {
      const double inc = env[i + 1] - env[i];
      if (inc <= 1e-300) continue;
      xs.push_back(std::log(std::ldexp(g.spacing(axis), static_cast<int>(i))));
      ys.push_back(std::log(inc));
    }
  }
  HolderEstimate h;
  if (xs_env.empty()) {
    h.flat = true;
    return h;
  }
  if (xs.size() < 2) {
    if (xs_env.size() == 1) {
      // A single distance bin: only the Lipschitz bound is identifiable.
      h.theta_hat = 1.0;
      h.L_hat = std::exp(ys_env[0] - xs_env[0]);
      return h;
    }
    const LogLogFit fit = detail::ols(xs_env, ys_env);
    h.theta_hat = std::clamp(fit.slope, 1e-12, 1.0);
    h.L_hat = std::exp(fit.intercept);
    return h;
  }
  const LogLogFit fit = detail::ols(xs, ys);
  h.theta_hat = std::clamp(fit.slope, 1e-12, 1.0);
  h.L_hat = std::exp(fit.intercept) / (std::exp2(h.theta_hat) - 1.0);
  return h;
}

struct TheoryRef {
  FamilyCase which = FamilyCase::Normalized;
  RateParams params;
};

struct SweepPlan {
  Problem base;
  PerturbationAxis axis = PerturbationAxis::P;
  std::vector<double> values;  // strictly decreasing, positive
  bool shared_dt = true;
  std::vector<double> gap_times;  // default {T}
  std::optional<TheoryRef> theory;
  double margin = 0.1;
  /// Optional per-value adjustment of the perturbed problem (e.g. boundary data g_eps).
  std::function<void(Problem&, double)> adjust;
  /// Optional closed-form gap for each value, compared against the solver gaps.
  std::function<double(double)> oracle_gap;
  bool measure_floor = true;
  unsigned jobs = 1;  // 0 = hardware concurrency

  void validate() const {
    if (values.size() < 4) throw InvalidArgument("sweep: need >= 4 perturbations");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!(values[i] > 0) || !std::isfinite(values[i])) throw InvalidArgument("sweep: perturbations must be > 0");
      if (i > 0 && !(values[i] < values[i - 1]))
        throw InvalidArgument("sweep: perturbations must be strictly decreasing");
    }
    if (!(margin > 0)) throw InvalidArgument("sweep: margin must be > 0");
    base.validate();
    for (std::size_t i = 0; i < gap_times.size(); ++i) {
      if (!(gap_times[i] >= base.t_start && gap_times[i] <= base.T))
        throw InvalidArgument("sweep: gap times must lie in [t_start, T]");
      if (i > 0 && !(gap_times[i] > gap_times[i - 1])) throw InvalidArgument("sweep: gap times must increase");
    }
  }
};

struct RateFit {
  std::vector<double> eps_list;
  std::vector<double> gap_list;
  std::vector<bool> excluded;  // gap below 10x the error floor
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::optional<double> theory_nu;
  std::optional<bool> theory_attained;
  std::optional<double> holder_theta;
  std::optional<double> error_floor;
  std::optional<bool> consistent;
  std::vector<double> oracle_gaps;
  std::optional<double> oracle_discrepancy;  // max |solver - oracle| over kept values
  double shared_dt = 0.0;
  std::string detail;
};

struct Verdict {
  bool consistent = false;
  std::string detail;
};

/// Attained rates: |slope - nu| <= margin. Open suprema are one-sided:
/// slope >= nu - margin.
inline Verdict compare_theory(const RateFit& fit, double margin) {
  if (!fit.theory_nu) throw InvalidArgument("compare_theory: fit has no theory rate");
  if (!(margin > 0)) throw InvalidArgument("compare_theory: margin must be > 0");
  const double nu = *fit.theory_nu;
  const bool attained = fit.theory_attained.value_or(true);
  Verdict v;
  if (attained) {
    v.consistent = std::abs(fit.slope - nu) <= margin;
    v.detail = "slope " + format_double(fit.slope) + " vs attained rate " + format_double(nu) + " (margin " +
               format_double(margin) + ")";
  } else {
    v.consistent = fit.slope >= nu - margin;
    v.detail = "slope " + format_double(fit.slope) + " vs open supremum " + format_double(nu) +
               " (one-sided, margin " + format_double(margin) + ")";
  }
  return v;
}

namespace detail {

template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  // Report the first failure in index order so the outcome does not depend on scheduling.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline double max_gap(const SolveResult& a, const SolveResult& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) m = std::max(m, sup_diff(a.snapshots[i], b.snapshots[i]));
  return m;
}

}  // namespace detail

/// Problem for one perturbation value.
inline Problem perturbed_problem(const SweepPlan& plan, double value) {
  Problem pb = plan.base;
  pb.spec = perturb(plan.base.spec, plan.axis, value);
  if (plan.axis == PerturbationAxis::Eps1Eps2) {
    HamiltonianSpec h = HamiltonianSpec::for_operator(pb.spec, plan.base.ham.source);
    h.lipschitz = plan.base.ham.lipschitz;
    pb.ham = std::move(h);
  }
  if (plan.adjust) plan.adjust(pb, value);
  return pb;
}

inline RateFit run_sweep(const SweepPlan& plan) {
  plan.validate();
  std::vector<double> times = plan.gap_times;
  if (times.empty()) times.push_back(plan.base.T);

  // Index 0 is the base problem; i >= 1 is values[i - 1].
  std::vector<Problem> problems;
  problems.push_back(plan.base);
  for (double v : plan.values) {
    try {
      problems.push_back(perturbed_problem(plan, v));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string(e.what()) + " (perturbation " + format_double(v) + ")");
    }
  }
  for (auto& pb : problems) pb.controls.snapshot_times = times;

  RateFit fit;
  if (plan.shared_dt) {
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& pb : problems) {
      Stepper st(pb);
      dt = std::min(dt, st.cfl_from_lambda(st.evaluate(st.initial_field())));
    }
    if (plan.base.controls.fixed_dt) dt = std::min(dt, *plan.base.controls.fixed_dt);
    for (auto& pb : problems) pb.controls.fixed_dt = dt;
    fit.shared_dt = dt;
  }

  std::vector<SolveResult> results(problems.size());
  auto label = [&](std::size_t i) {
    return i == 0 ? std::string("base problem") : "perturbation " + format_double(plan.values[i - 1]);
  };
  detail::parallel_for(problems.size(), plan.jobs, [&](std::size_t i) {
    try {
      results[i] = solve(problems[i]);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(std::string(e.what()) + " (" + label(i) + ")");
    } catch (const NumericalFailure& e) {
      throw NumericalFailure(std::string(e.what()) + " (" + label(i) + ")");
    }
  });

  double floor = 0.0;
  if (plan.measure_floor) {
    Problem fine = problems[0];
    fine.grid = fine.grid.refined();
    fine.controls.fixed_dt.reset();
    const SolveResult rf = solve(fine);
    for (std::size_t s = 0; s < times.size(); ++s)
      floor = std::max(floor, sup_diff(results[0].snapshots[s], inject(rf.snapshots[s], plan.base.grid)));
    fit.error_floor = floor;
  }

  std::vector<double> kept_eps, kept_gaps;
  for (std::size_t k = 0; k < plan.values.size(); ++k) {
    const double gap = detail::max_gap(results[0], results[k + 1]);
    const bool excl = plan.measure_floor && gap < 10.0 * floor;
    fit.eps_list.push_back(plan.values[k]);
    fit.gap_list.push_back(gap);
    fit.excluded.push_back(excl);
    if (plan.oracle_gap) fit.oracle_gaps.push_back(plan.oracle_gap(plan.values[k]));
    if (excl) continue;
    kept_eps.push_back(plan.values[k]);
    kept_gaps.push_back(gap);
    if (plan.oracle_gap)
      fit.oracle_discrepancy = std::max(fit.oracle_discrepancy.value_or(0.0), std::abs(gap - fit.oracle_gaps.back()));
  }
  if (kept_eps.size() < 3)
    throw NumericalFailure("sweep: fewer than 3 gaps above 10x the error floor " + format_double(floor));
  const LogLogFit lf = fit_loglog(kept_eps, kept_gaps);
  fit.slope = lf.slope;
  fit.intercept = lf.intercept;
  fit.r_squared = lf.r_squared;

  const HolderEstimate he = estimate_holder(results[0].snapshots.back());
  if (!he.flat) fit.holder_theta = he.theta_hat;

  if (plan.theory) {
    const RatePrediction pr = family_rate(plan.theory->which, plan.theory->params);
    fit.theory_nu = pr.nu;
    fit.theory_attained = pr.attained;
    const Verdict v = compare_theory(fit, plan.margin);
    fit.consistent = v.consistent;
    fit.detail = v.detail;
  }
  if (fit.oracle_discrepancy) {
    if (!fit.detail.empty()) fit.detail += "; ";
    fit.detail += "oracle discrepancy " + format_double(*fit.oracle_discrepancy);
  }
  return fit;
}

/// Rate table CSV: eps,gap,excluded.
inline void write_rate_csv(std::ostream& os, const RateFit& fit) {
  os << "eps,gap,excluded\n";
  for (std::size_t i = 0; i < fit.eps_list.size(); ++i)
    os << format_double(fit.eps_list[i]) << ',' << format_double(fit.gap_list[i]) << ','
       << (fit.excluded[i] ? "true" : "false") << '\n';
}

}  // namespace plap
