#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <map>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "plap/cli.hpp"

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("plap");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("PLAP_LOG")) spdlog::cfg::helpers::load_levels(lvl);

  CLI::App app{"Stability experiments for p-Laplace type parabolic and elliptic equations"};
  app.require_subcommand(1);
  plap::cli::Options opts;
  std::string out;
  std::string command;
  const std::map<std::string, std::string> about{
      {"solve", "evolve one problem and write field snapshots"},
      {"rate-sweep", "solve a perturbation sweep and fit the convergence exponent"},
      {"verify-exact", "check closed-form solutions against their equations"},
      {"rate-table", "print predicted convergence exponents"},
      {"check-c1", "test the operator-gap condition on a gradient grid"}};
  for (const auto& name : plap::cli::command_names()) {
    auto* sub = app.add_subcommand(name, about.count(name) ? about.at(name) : "");
    sub->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", opts.jobs, "parallel solves in a sweep (0 = available cores)");
    sub->add_option("--seed", opts.seed, "sampling seed");
    sub->callback([&command, name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : plap::cli::kConfigError;
  }
  if (!out.empty()) opts.out_dir = out;
  if (opts.jobs == 0) opts.jobs = std::max(1u, std::thread::hardware_concurrency());
  return plap::cli::run(command, opts);
}
