#pragma once

// Experiment configuration (JSON, schema_version 1) and the command
// implementations behind the `plap` executable.

#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plap/errors.hpp"
#include "plap/evolver.hpp"
#include "plap/exact_solutions.hpp"
#include "plap/field_grid.hpp"
#include "plap/operator_algebra.hpp"
#include "plap/rate_harness.hpp"

namespace plap::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kNumericalFailure = 1, kConfigError = 2 };

struct Options {
  std::string config_path;
  std::optional<std::string> out_dir;  // default "." (rate-table: stdout only)
  unsigned jobs = 0;  // 0 = available parallelism
  unsigned long long seed = 20240601ULL;
};

// ---------------------------------------------------------------------------
// JSON access with strict key checking

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw InvalidArgument(where + ": unknown key '" + key + "'");
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw InvalidArgument(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw InvalidArgument(where + ": must be finite");
  return v;
}

inline double number(const json& obj, const char* key, const std::string& where, std::optional<double> dflt = {}) {
  if (!obj.contains(key)) {
    if (dflt) return *dflt;
    throw InvalidArgument(where + ": missing '" + key + "'");
  }
  return number(obj.at(key), where + "." + key);
}

inline std::optional<double> opt_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return std::nullopt;
  return number(obj.at(key), where + "." + key);
}

inline int integer(const json& obj, const char* key, const std::string& where, std::optional<int> dflt = {}) {
  if (!obj.contains(key)) {
    if (dflt) return *dflt;
    throw InvalidArgument(where + ": missing '" + key + "'");
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw InvalidArgument(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline std::string text(const json& obj, const char* key, const std::string& where,
                        std::optional<std::string> dflt = {}) {
  if (!obj.contains(key)) {
    if (dflt) return *dflt;
    throw InvalidArgument(where + ": missing '" + key + "'");
  }
  const json& v = obj.at(key);
  if (!v.is_string()) throw InvalidArgument(where + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline bool boolean(const json& obj, const char* key, const std::string& where, bool dflt) {
  if (!obj.contains(key)) return dflt;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw InvalidArgument(where + "." + key + ": expected a boolean");
  return v.get<bool>();
}

inline std::vector<double> numbers(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return {};
  const json& v = obj.at(key);
  if (!v.is_array()) throw InvalidArgument(where + "." + key + ": expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], where + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

/// A scalar or an array of scalars, as a list.
inline std::vector<double> scalar_or_list(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return {};
  if (obj.at(key).is_array()) return numbers(obj, key, where);
  return {number(obj.at(key), where + "." + key)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config sections

inline OperatorSpec parse_operator(const json& j, const std::string& where = "operator") {
  using namespace detail;
  check_keys(j, where, {"family", "p", "p_prime", "eps", "eps1", "eps2", "a", "grad_floor"});
  const Family f = parse_family(text(j, "family", where));
  OperatorSpec spec = [&] {
    switch (f) {
      case Family::Normalized: return OperatorSpec::normalized(number(j, "p", where));
      case Family::Variational: return OperatorSpec::variational(number(j, "p", where));
      case Family::GeneralPQ: return OperatorSpec::general_pq(number(j, "p", where), number(j, "p_prime", where));
      case Family::RegularizedPQ:
        return OperatorSpec::regularized_pq(number(j, "p", where), number(j, "p_prime", where),
                                            number(j, "eps", where));
      case Family::BiasedInfinity: return OperatorSpec::biased_infinity(number(j, "a", where));
      case Family::BiasedInfinityRegularized:
        return OperatorSpec::biased_infinity_regularized(number(j, "eps1", where), number(j, "eps2", where),
                                                         number(j, "a", where));
    }
    throw InvalidArgument(where + ": unhandled family");
  }();
  if (j.contains("grad_floor")) spec = spec.with_grad_floor(number(j, "grad_floor", where));
  return spec;
}

inline ExactSolution parse_solution(const json& j, const std::string& where,
                                    std::initializer_list<const char*> extra_keys = {}) {
  using namespace detail;
  std::vector<const char*> keys{"solution", "p", "n", "amplitude", "c"};
  keys.insert(keys.end(), extra_keys.begin(), extra_keys.end());
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end())
      throw InvalidArgument(where + ": unknown key '" + key + "'");
  const SolutionId id = parse_solution_id(text(j, "solution", where));
  const double p = number(j, "p", where);
  const int n = integer(j, "n", where, 1);
  switch (id) {
    case SolutionId::HeatMode: return ExactSolution::heat_mode(p, n);
    case SolutionId::Barenblatt: return ExactSolution::barenblatt(p, n, number(j, "amplitude", where, 1.0));
    case SolutionId::RadialElliptic: return ExactSolution::radial_elliptic(p, n);
    case SolutionId::TorsionRadial: return ExactSolution::torsion(p, n, number(j, "c", where, 1.0));
    case SolutionId::Fundamental: return ExactSolution::fundamental(p, n);
  }
  throw InvalidArgument(where + ": unhandled solution");
}

/// Space-time expression: constant, fourier, exact or abs_power.
inline SpaceTimeFunction parse_expr(const json& j, const std::string& where, int dim) {
  using namespace detail;
  if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
  const std::string type = text(j, "type", where);
  if (type == "constant") {
    check_keys(j, where, {"type", "value"});
    const double c = number(j, "value", where);
    return [c](const Vector&, double) { return c; };
  }
  if (type == "fourier") {
    // offset + sum_k amplitude * sin(wavenumber . x + phase)
    check_keys(j, where, {"type", "offset", "terms"});
    const double offset = number(j, "offset", where, 0.0);
    if (!j.contains("terms") || !j.at("terms").is_array() || j.at("terms").empty())
      throw InvalidArgument(where + ": 'terms' must be a nonempty array");
    struct Term {
      double amp, phase;
      std::vector<double> k;
    };
    std::vector<Term> terms;
    for (std::size_t i = 0; i < j.at("terms").size(); ++i) {
      const json& t = j.at("terms")[i];
      const std::string w = where + ".terms[" + std::to_string(i) + "]";
      check_keys(t, w, {"amplitude", "wavenumber", "phase"});
      Term term{number(t, "amplitude", w), number(t, "phase", w, 0.0), numbers(t, "wavenumber", w)};
      if (static_cast<int>(term.k.size()) != dim) throw InvalidArgument(w + ": wavenumber length must equal grid dim");
      terms.push_back(std::move(term));
    }
    return [offset, terms](const Vector& x, double) {
      double v = offset;
      for (const auto& t : terms) {
        double arg = t.phase;
        for (std::size_t a = 0; a < t.k.size(); ++a) arg += t.k[a] * x[static_cast<int>(a)];
        v += t.amp * std::sin(arg);
      }
      return v;
    };
  }
  if (type == "exact") {
    const ExactSolution sol = parse_solution(j, where, {"type"});
    if (sol.id() != SolutionId::HeatMode && sol.n() != dim)
      throw InvalidArgument(where + ": solution dimension must equal grid dim");
    return [sol](const Vector& x, double t) { return sol.eval(x, t); };
  }
  if (type == "abs_power") {
    // scale * |x - center|^exponent
    check_keys(j, where, {"type", "center", "exponent", "scale"});
    std::vector<double> c = numbers(j, "center", where);
    if (c.empty()) c.assign(dim, 0.0);
    if (static_cast<int>(c.size()) != dim) throw InvalidArgument(where + ": center length must equal grid dim");
    const double e = number(j, "exponent", where);
    if (!(e > 0)) throw InvalidArgument(where + ": exponent must be > 0");
    const double s = number(j, "scale", where, 1.0);
    Vector center(dim);
    for (int a = 0; a < dim; ++a) center[a] = c[a];
    return [center, e, s](const Vector& x, double) { return s * std::pow((x - center).norm(), e); };
  }
  throw InvalidArgument(where + ": unknown expression type '" + type + "'");
}

inline GridSpec parse_grid(const json& j) {
  using namespace detail;
  const std::string where = "grid";
  check_keys(j, where, {"dim", "extent", "resolution", "boundary"});
  const int dim = integer(j, "dim", where);
  if (dim != 1 && dim != 2) throw InvalidArgument("grid.dim must be 1 or 2");
  if (!j.contains("extent") || !j.at("extent").is_array() || static_cast<int>(j.at("extent").size()) != dim)
    throw InvalidArgument("grid.extent must list one [lo, hi] pair per axis");
  std::array<Interval, 2> ext{};
  for (int a = 0; a < dim; ++a) {
    const json& e = j.at("extent")[a];
    if (!e.is_array() || e.size() != 2) throw InvalidArgument("grid.extent entries must be [lo, hi]");
    ext[a] = Interval{number(e[0], "grid.extent"), number(e[1], "grid.extent")};
  }
  if (!j.contains("resolution") || !j.at("resolution").is_array() ||
      static_cast<int>(j.at("resolution").size()) != dim)
    throw InvalidArgument("grid.resolution must list one node count per axis");
  std::array<int, 2> res{1, 1};
  for (int a = 0; a < dim; ++a) {
    if (!j.at("resolution")[a].is_number_integer()) throw InvalidArgument("grid.resolution entries must be integers");
    res[a] = j.at("resolution")[a].get<int>();
  }
  return GridSpec(dim, ext, res, parse_boundary(text(j, "boundary", where, "periodic")));
}

inline SolverControls parse_solver(const json& j) {
  using namespace detail;
  const std::string where = "solver";
  check_keys(j, where, {"cfl_sigma", "grad_clamp", "snapshot_times", "eps_num", "fixed_dt", "max_steps"});
  SolverControls c;
  c.cfl_sigma = number(j, "cfl_sigma", where, 0.5);
  c.grad_clamp = opt_number(j, "grad_clamp", where);
  c.snapshot_times = numbers(j, "snapshot_times", where);
  c.eps_num = opt_number(j, "eps_num", where);
  c.fixed_dt = opt_number(j, "fixed_dt", where);
  if (j.contains("max_steps")) {
    const json& v = j.at("max_steps");
    if (!v.is_number_integer() || v.get<long long>() <= 0) throw InvalidArgument("solver.max_steps must be a positive integer");
    c.max_steps = v.get<std::size_t>();
  }
  return c;
}

inline TheoryRef parse_theory(const json& j, const std::string& where) {
  using namespace detail;
  check_keys(j, where, {"case", "theta", "p", "q", "p_prime", "q_prime", "m"});
  TheoryRef t;
  t.which = parse_family_case(text(j, "case", where));
  t.params.theta = number(j, "theta", where, 1.0);
  t.params.p = number(j, "p", where, 2.0);
  t.params.q = number(j, "q", where, t.params.p);
  t.params.p_prime = number(j, "p_prime", where, 2.0);
  t.params.q_prime = number(j, "q_prime", where, t.params.p_prime);
  t.params.m = opt_number(j, "m", where);
  family_rate(t.which, t.params);  // validates the case window
  return t;
}

struct ExactCheck {
  ExactSolution solution;
  ResidualMode mode;
  double clearance = 1e-3;
  int samples = 100;
  Interval radius{0.01, 1.0};
  Interval times{0.5, 1.0};
  double tolerance = 1e-10;
};

inline ExactCheck parse_exact(const json& j) {
  using namespace detail;
  const std::string where = "exact";
  ExactCheck e{parse_solution(j, where, {"clearance", "samples", "radius", "times", "mode", "h", "tolerance"}),
               ResidualMode::analytic()};
  const std::string mode = text(j, "mode", where, "analytic");
  if (mode == "discrete") {
    e.mode = ResidualMode::stencil(number(j, "h", where, 1e-3));
  } else if (mode != "analytic") {
    throw InvalidArgument("exact.mode must be 'analytic' or 'discrete'");
  } else if (j.contains("h")) {
    throw InvalidArgument("exact.h applies to discrete mode only");
  }
  e.clearance = number(j, "clearance", where, 1e-3);
  if (!(e.clearance > 0)) throw InvalidArgument("exact.clearance must be > 0");
  e.samples = integer(j, "samples", where, 100);
  if (e.samples < 1) throw InvalidArgument("exact.samples must be >= 1");
  auto interval = [&](const char* key, Interval dflt) {
    const auto v = numbers(j, key, where);
    if (v.empty()) return dflt;
    if (v.size() != 2 || !(v[1] >= v[0])) throw InvalidArgument(std::string("exact.") + key + " must be [lo, hi] with lo <= hi");
    return Interval{v[0], v[1]};
  };
  e.radius = interval("radius", e.radius);
  if (!(e.radius.lo > 0)) throw InvalidArgument("exact.radius must be positive");
  const Interval t_default = e.solution.id() == SolutionId::Barenblatt ? Interval{1.0, 2.0} : Interval{0.5, 1.0};
  e.times = interval("times", t_default);
  if (e.solution.id() == SolutionId::Barenblatt && !(e.times.lo > 0))
    throw InvalidArgument("exact.times must be positive for barenblatt");
  if (!(e.times.lo >= 0)) throw InvalidArgument("exact.times must be >= 0");
  e.tolerance = number(j, "tolerance", where, e.mode.discrete ? 1e-4 : 1e-10);
  if (!(e.tolerance > 0)) throw InvalidArgument("exact.tolerance must be > 0");
  return e;
}

struct C1Check {
  OperatorSpec base;
  PerturbationAxis axis;
  std::vector<double> eps;
  int dim = 1;
  double lo = 1e-3, hi = 1e3;
  int magnitudes = 25, directions = 8;
  bool random_directions = false;
  C1Params params;
};

inline C1Check parse_c1(const json& j) {
  using namespace detail;
  const std::string where = "c1";
  check_keys(j, where, {"operator", "axis", "eps", "xi", "alpha", "beta", "c_A", "k"});
  if (!j.contains("operator")) throw InvalidArgument("c1: missing 'operator'");
  C1Check c{parse_operator(j.at("operator"), "c1.operator"), parse_axis(text(j, "axis", where))};
  c.eps = numbers(j, "eps", where);
  if (c.eps.empty()) throw InvalidArgument("c1.eps must be a nonempty array");
  for (double e : c.eps)
    if (!(e > 0)) throw InvalidArgument("c1.eps entries must be > 0");
  if (j.contains("xi")) {
    const json& x = j.at("xi");
    check_keys(x, "c1.xi", {"dim", "lo", "hi", "magnitudes", "directions", "random"});
    c.dim = integer(x, "dim", "c1.xi", 1);
    c.lo = number(x, "lo", "c1.xi", 1e-3);
    c.hi = number(x, "hi", "c1.xi", 1e3);
    c.magnitudes = integer(x, "magnitudes", "c1.xi", 25);
    c.directions = integer(x, "directions", "c1.xi", 8);
    c.random_directions = boolean(x, "random", "c1.xi", false);
  }
  xi_grid(c.dim, c.lo, c.hi, 1, 1);  // validates the ranges
  if (c.magnitudes < 1 || c.directions < 1) throw InvalidArgument("c1.xi counts must be positive");
  c.params.alpha = number(j, "alpha", where, 1.0);
  c.params.beta = number(j, "beta", where, 0.0);
  c.params.c_A = number(j, "c_A", where, 1.0);
  c.params.k = number(j, "k", where, default_test_exponent(c.base));
  c.params.validate();
  for (double e : c.eps) perturb(c.base, c.axis, e);
  return c;
}

struct RateTableRow {
  FamilyCase which;
  RateParams params;
  RatePrediction prediction;
};

inline std::vector<RateTableRow> parse_rate_table(const json& j) {
  using namespace detail;
  const std::string where = "rate_table";
  check_keys(j, where, {"case", "theta", "p", "q", "p_prime", "q_prime", "m"});
  const FamilyCase which = parse_family_case(text(j, "case", where));
  auto list = [&](const char* key, std::vector<double> dflt) {
    auto v = scalar_or_list(j, key, where);
    return v.empty() ? dflt : v;
  };
  const auto thetas = list("theta", {1.0});
  const auto ps = list("p", {2.0});
  const auto qs = scalar_or_list(j, "q", where);
  const auto pps = list("p_prime", {2.0});
  const auto qps = scalar_or_list(j, "q_prime", where);
  const auto ms = scalar_or_list(j, "m", where);
  std::vector<RateTableRow> rows;
  for (double th : thetas)
    for (double p : ps)
      for (double q : qs.empty() ? std::vector<double>{p} : qs)
        for (double pp : pps)
          for (double qp : qps.empty() ? std::vector<double>{pp} : qps) {
            std::vector<std::optional<double>> mv{std::nullopt};
            if (!ms.empty()) mv.assign(ms.begin(), ms.end());
            for (const auto& m : mv) {
              RateParams rp{th, p, q, pp, qp, m};
              rows.push_back({which, rp, family_rate(which, rp)});
            }
          }
  return rows;
}

/// Fully validated experiment document.
struct ExperimentConfig {
  std::string run_id = "run";
  std::optional<Problem> problem;
  std::optional<SweepPlan> sweep;
  std::optional<ExactCheck> exact;
  std::optional<std::vector<RateTableRow>> rate_table;
  std::optional<C1Check> c1;
};

inline ExperimentConfig parse_config(const json& doc) {
  using namespace detail;
  check_keys(doc, "config",
             {"schema_version", "run_id", "operator", "hamiltonian", "grid", "initial", "boundary_data", "t_start",
              "T", "solver", "sweep", "exact", "rate_table", "c1"});
  if (!doc.contains("schema_version")) throw InvalidArgument("config: missing 'schema_version'");
  if (integer(doc, "schema_version", "config") != kSchemaVersion)
    throw InvalidArgument("config: unsupported schema_version (expected 1)");
  ExperimentConfig cfg;
  cfg.run_id = text(doc, "run_id", "config", "run");
  if (cfg.run_id.empty() || cfg.run_id.find_first_of("/\\") != std::string::npos)
    throw InvalidArgument("config: run_id must be a nonempty file-name-safe string");

  const bool has_problem = doc.contains("operator") || doc.contains("grid") || doc.contains("initial");
  if (has_problem) {
    for (const char* k : {"operator", "grid", "initial"})
      if (!doc.contains(k)) throw InvalidArgument(std::string("config: missing '") + k + "'");
    const OperatorSpec spec = parse_operator(doc.at("operator"));
    const GridSpec grid = parse_grid(doc.at("grid"));
    SpaceTimeFunction source;
    if (doc.contains("hamiltonian")) {
      const json& h = doc.at("hamiltonian");
      check_keys(h, "hamiltonian", {"source", "lipschitz"});
      if (h.contains("source")) source = parse_expr(h.at("source"), "hamiltonian.source", grid.dim());
    }
    HamiltonianSpec ham = HamiltonianSpec::for_operator(spec, source);
    if (doc.contains("hamiltonian")) ham.lipschitz = opt_number(doc.at("hamiltonian"), "lipschitz", "hamiltonian");
    SpaceTimeFunction init = parse_expr(doc.at("initial"), "initial", grid.dim());
    SpaceTimeFunction bd;
    if (doc.contains("boundary_data")) bd = parse_expr(doc.at("boundary_data"), "boundary_data", grid.dim());
    if (!grid.periodic() && !bd) bd = init;
    Problem pb{spec, ham, grid, init, bd, number(doc, "t_start", "config", 0.0), number(doc, "T", "config"), {}};
    if (doc.contains("solver")) pb.controls = parse_solver(doc.at("solver"));
    pb.validate();
    cfg.problem = std::move(pb);
  } else {
    for (const char* k : {"hamiltonian", "boundary_data", "solver", "sweep", "T", "t_start"})
      if (doc.contains(k)) throw InvalidArgument(std::string("config: '") + k + "' requires operator, grid and initial");
  }

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    const std::string where = "sweep";
    check_keys(s, where, {"axis", "values", "shared_dt", "gap_times", "theory", "margin", "measure_floor"});
    SweepPlan plan{*cfg.problem};
    plan.axis = parse_axis(text(s, "axis", where));
    plan.values = numbers(s, "values", where);
    plan.shared_dt = boolean(s, "shared_dt", where, true);
    plan.gap_times = numbers(s, "gap_times", where);
    if (s.contains("theory")) plan.theory = parse_theory(s.at("theory"), "sweep.theory");
    plan.margin = number(s, "margin", where, 0.1);
    plan.measure_floor = boolean(s, "measure_floor", where, true);
    plan.validate();
    for (double v : plan.values) perturbed_problem(plan, v);
    cfg.sweep = std::move(plan);
  }
  if (doc.contains("exact")) cfg.exact = parse_exact(doc.at("exact"));
  if (doc.contains("rate_table")) cfg.rate_table = parse_rate_table(doc.at("rate_table"));
  if (doc.contains("c1")) cfg.c1 = parse_c1(doc.at("c1"));
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed config '" + path + "': " + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::filesystem::path prepare_out(const Options& o) {
  std::filesystem::path dir(o.out_dir.value_or("."));
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << body;
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace detail

inline json stats_json(const SolveStats& s, const Problem& pb) {
  return {{"steps", s.steps},
          {"min_dt", s.min_dt},
          {"max_dt", s.max_dt},
          {"final_time", s.final_time},
          {"overshoot", s.overshoot},
          {"eps_num", s.discretization.eps_num},
          {"grad_floor", s.discretization.grad_floor},
          {"grad_clamp", std::isfinite(s.discretization.grad_clamp) ? json(s.discretization.grad_clamp) : json(nullptr)},
          {"family", std::string(to_string(pb.spec.family()))},
          {"nodes", pb.grid.node_count()}};
}

inline json fit_json(const RateFit& f) {
  return {{"slope", f.slope},
          {"intercept", f.intercept},
          {"r_squared", f.r_squared},
          {"theory_nu", detail::optional_json(f.theory_nu)},
          {"theory_attained", detail::optional_json(f.theory_attained)},
          {"consistent", detail::optional_json(f.consistent)},
          {"error_floor", detail::optional_json(f.error_floor)},
          {"holder_theta", detail::optional_json(f.holder_theta)},
          {"shared_dt", f.shared_dt},
          {"detail", f.detail}};
}

inline std::string rate_table_csv(const std::vector<RateTableRow>& rows) {
  std::ostringstream os;
  os << "case,theta,p,q,p_prime,q_prime,m,nu,bound\n";
  for (const auto& r : rows) {
    os << to_string(r.which) << ',' << format_double(r.params.theta) << ',' << format_double(r.params.p) << ','
       << format_double(r.params.q) << ',' << format_double(r.params.p_prime) << ','
       << format_double(r.params.q_prime) << ',' << (r.params.m ? format_double(*r.params.m) : "") << ','
       << format_double(r.prediction.nu) << ',' << (r.prediction.attained ? "attained" : "open") << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code; exceptions are mapped by run().

inline int cmd_solve(const ExperimentConfig& cfg, const Options& o) {
  if (!cfg.problem) throw InvalidArgument("solve: config needs operator, grid, initial and T");
  const Problem& pb = *cfg.problem;
  const SolveResult res = solve(pb);
  const auto dir = detail::prepare_out(o);
  for (const auto& snap : res.snapshots) {
    std::ostringstream os;
    write_field_csv(os, snap);
    detail::write_text(dir / (cfg.run_id + "_t" + short_double(snap.time()) + ".csv"), os.str());
  }
  json st = stats_json(res.stats, pb);
  st["snapshots"] = res.snapshots.size();
  detail::write_text(dir / (cfg.run_id + "_stats.json"), st.dump(2) + "\n");
  spdlog::info("solve: {} steps, {} snapshot(s), overshoot {}", res.stats.steps, res.snapshots.size(),
               res.stats.overshoot);
  return kOk;
}

inline int cmd_rate_sweep(const ExperimentConfig& cfg, const Options& o) {
  if (!cfg.sweep) throw InvalidArgument("rate-sweep: config needs a 'sweep' section");
  SweepPlan plan = *cfg.sweep;
  plan.jobs = o.jobs;
  const RateFit fit = run_sweep(plan);
  for (std::size_t i = 0; i < fit.excluded.size(); ++i)
    if (fit.excluded[i]) spdlog::warn("gap at eps={} is below 10x the error floor; excluded", fit.eps_list[i]);
  const auto dir = detail::prepare_out(o);
  std::ostringstream csv;
  write_rate_csv(csv, fit);
  detail::write_text(dir / (cfg.run_id + "_rates.csv"), csv.str());
  detail::write_text(dir / (cfg.run_id + "_fit.json"), fit_json(fit).dump(2) + "\n");
  spdlog::info("rate-sweep: slope {} (r^2 {}) {}", fit.slope, fit.r_squared, fit.detail);
  return kOk;
}

inline int cmd_verify_exact(const ExperimentConfig& cfg, const Options& o) {
  if (!cfg.exact) throw InvalidArgument("verify-exact: config needs an 'exact' section");
  const ExactCheck& e = *cfg.exact;
  const ExactSolution& sol = e.solution;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal;
  const int n = sol.n();
  std::ostringstream csv;
  for (int a = 0; a < n; ++a) csv << 'x' << a << ',';
  csv << "t,residual\n";
  double worst = 0.0;
  int used = 0, skipped = 0;
  for (int s = 0; s < e.samples; ++s) {
    Vector x(n);
    if (sol.id() == SolutionId::HeatMode) {
      for (int a = 0; a < n; ++a) x[a] = 2 * M_PI * uni(rng);
    } else {
      do {
        for (int a = 0; a < n; ++a) x[a] = normal(rng);
      } while (x.norm() < 1e-12);
      x *= (e.radius.lo + (e.radius.hi - e.radius.lo) * uni(rng)) / x.norm();
    }
    const double t = sol.parabolic() ? e.times.lo + (e.times.hi - e.times.lo) * uni(rng) : 0.0;
    try {
      const double r = residual(sol, x, t, e.mode, e.clearance);
      worst = std::max(worst, std::abs(r));
      ++used;
      for (int a = 0; a < n; ++a) csv << format_double(x[a]) << ',';
      csv << format_double(t) << ',' << format_double(r) << '\n';
    } catch (const SingularPoint&) {
      ++skipped;
    }
  }
  const bool pass = used > 0 && worst <= e.tolerance;
  const auto dir = detail::prepare_out(o);
  detail::write_text(dir / (cfg.run_id + "_residuals.csv"), csv.str());
  const json report{{"solution", std::string(to_string(sol.id()))},
                    {"p", sol.p()},
                    {"n", n},
                    {"mode", e.mode.discrete ? "discrete" : "analytic"},
                    {"samples", used},
                    {"skipped", skipped},
                    {"max_residual", worst},
                    {"tolerance", e.tolerance},
                    {"pass", pass}};
  detail::write_text(dir / (cfg.run_id + "_residuals.json"), report.dump(2) + "\n");
  if (pass)
    spdlog::info("verify-exact: max residual {} over {} points", worst, used);
  else
    spdlog::error("verify-exact: max residual {} exceeds tolerance {} ({} points used)", worst, e.tolerance, used);
  return pass ? kOk : kNumericalFailure;
}

inline int cmd_rate_table(const ExperimentConfig& cfg, const Options& o, std::ostream& out) {
  if (!cfg.rate_table) throw InvalidArgument("rate-table: config needs a 'rate_table' section");
  const std::string body = rate_table_csv(*cfg.rate_table);
  out << body;
  if (o.out_dir) {
    const auto dir = detail::prepare_out(o);
    detail::write_text(dir / (cfg.run_id + "_rate_table.csv"), body);
  }
  return kOk;
}

inline int cmd_check_c1(const ExperimentConfig& cfg, const Options& o) {
  if (!cfg.c1) throw InvalidArgument("check-c1: config needs a 'c1' section");
  const C1Check& c = *cfg.c1;
  std::optional<unsigned long long> seed;
  if (c.random_directions) seed = o.seed;
  const auto grid = xi_grid(c.dim, c.lo, c.hi, c.magnitudes, c.directions, seed);
  const C1Report rep = c1_certify(c.base, c.axis, c.eps, grid, c.params);
  const auto dir = detail::prepare_out(o);
  const json report{{"max_ratio", rep.max_ratio},
                    {"c_A", c.params.c_A},
                    {"alpha", c.params.alpha},
                    {"beta", c.params.beta},
                    {"k", c.params.k},
                    {"worst_xi", detail::vector_json(rep.worst_xi)},
                    {"worst_eps", rep.worst_eps},
                    {"pass", rep.pass}};
  detail::write_text(dir / (cfg.run_id + "_c1.json"), report.dump(2) + "\n");
  if (rep.pass)
    spdlog::info("check-c1: certified, max ratio {} <= c_A {}", rep.max_ratio, c.params.c_A);
  else
    spdlog::error("check-c1: max ratio {} exceeds c_A {} at |xi|={}, eps={}", rep.max_ratio, c.params.c_A,
                  rep.worst_xi.norm(), rep.worst_eps);
  return rep.pass ? kOk : kNumericalFailure;
}

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"solve", "rate-sweep", "verify-exact", "rate-table", "check-c1"};
  return names;
}

/// Loads and validates the config, then dispatches. Validation happens before
/// any output is written.
inline int run(const std::string& command, const Options& o, std::ostream& out = std::cout) {
  try {
    const ExperimentConfig cfg = load_config(o.config_path);
    if (command == "solve") return cmd_solve(cfg, o);
    if (command == "rate-sweep") return cmd_rate_sweep(cfg, o);
    if (command == "verify-exact") return cmd_verify_exact(cfg, o);
    if (command == "rate-table") return cmd_rate_table(cfg, o, out);
    if (command == "check-c1") return cmd_check_c1(cfg, o);
    throw InvalidArgument("unknown command '" + command + "'");
  } catch (const InvalidArgument& e) {
    spdlog::error("{}", e.what());
    return kConfigError;
  } catch (const NumericalFailure& e) {
    spdlog::error("{}", e.what());
    return kNumericalFailure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kNumericalFailure;
  }
}

}  // namespace plap::cli
