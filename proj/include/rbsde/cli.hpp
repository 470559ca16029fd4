#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbsde/config.hpp"
#include "rbsde/harness.hpp"
#include "rbsde/io.hpp"
#include "rbsde/parallel.hpp"
#include "rbsde/penalty.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/version.hpp"

namespace rbsde {

namespace detail {

inline std::string summary_vec(const Vec& v) {
  std::string s = "(";
  for (std::size_t c = 0; c < v.size(); ++c) {
    if (c) s += ",";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v[c]);
    s += buf;
  }
  return s + ")";
}

inline Vec y0_mean(const BackwardSolution& sol) {
  Vec m(sol.dim, 0.0);
  for (std::size_t c = 0; c < sol.dim; ++c) {
    Kahan acc;
    for (std::size_t i = 0; i < sol.paths; ++i) acc.add(sol.y_at(0, i)[c]);
    m[c] = acc.value() / static_cast<double>(sol.paths);
  }
  return m;
}

} // namespace detail

// Exit codes: 0 success, 1 configuration error, 2 numerical error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"rbsde: penalized solver for reflected BSDEs in shrinking convex tubes"};
  app.set_version_flag("--version", std::string(version));
  app.require_subcommand(1);

  RunConfig rc;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", rc.scenario, "built-in scenario name");
    cmd->add_option("--config", rc.config_file, "scenario config file (JSON)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--steps", rc.steps, "time steps N");
    cmd->add_option("--paths", rc.paths, "Monte Carlo paths M");
    cmd->add_option("--n-penalty", rc.n_penalty, "penalty level n");
    cmd->add_option("--seed", rc.seed, "base seed");
    cmd->add_option("--replications", rc.replications, "sweep replications");
    cmd->add_option("--n-list", rc.n_list, "penalty levels for sweeps")->delimiter(',');
    cmd->add_option("--basis-degree", rc.basis_degree, "polynomial basis total degree");
    cmd->add_option("--out", rc.out_dir, "output directory");
  };
  CLI::App* c_validate = app.add_subcommand("validate", "check a scenario configuration");
  CLI::App* c_solve = app.add_subcommand("solve", "run one penalized backward solve");
  CLI::App* c_sweep = app.add_subcommand("sweep", "penalty-level sweep with rate fits");
  CLI::App* c_diag = app.add_subcommand("diagnose", "solve and check Skorokhod conditions");
  for (CLI::App* c : {c_validate, c_solve, c_sweep, c_diag}) add_common(c);

  std::vector<const char*> argv;
  argv.push_back("rbsde");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    rc.threads = threads_from_env();

    ResolvedRun run = resolve_run(rc);
    const Scenario& sc = run.scenario;
    const TimeGrid grid(sc.horizon(), run.steps);

    if (c_validate->parsed()) {
      const TubeValidation tv = validate_tube(sc.tube, grid, 2048);
      if (!tv.ok) {
        for (const auto& msg : tv.violations) err << "violation: " << msg << "\n";
        return 1;
      }
      validate_scenario(sc, grid);
      out << "scenario '" << sc.name << "' ok: steps=" << run.steps
          << " paths=" << run.paths << " horizon=" << sc.horizon() << "\n";
      return 0;
    }

    validate_scenario(sc, grid);
    PathBundle bundle = sample_paths(grid, sc.noise, run.paths, run.seed, run.threads);
    forward_euler(sc.forward, bundle, run.threads);

    if (c_solve->parsed() || c_diag->parsed()) {
      SolveOptions opt;
      opt.basis = run.basis;
      opt.threads = run.threads;
      opt.store_z = c_solve->parsed();
      opt.store_u = c_solve->parsed();
      const BackwardSolution sol =
          backward_solve_penalized(sc, bundle, opt, PenaltyLevel{run.n_penalty});
      const PenaltyMetrics pm = penalty_metrics(sol, sc.tube);
      write_manifest(run.out_dir, c_solve->parsed() ? "solve" : "diagnose",
                     run.config_echo, run.seed);
      if (c_solve->parsed()) {
        dump_solution_csv(sol, grid, run.out_dir);
        out << "Y0_mean=" << detail::summary_vec(detail::y0_mean(sol))
            << " tv_lambda=" << format_double(pm.tv_lambda.value)
            << " sup_dist_sq=" << format_double(pm.sup_dist_sq.value) << "\n";
        return 0;
      }
      const double band = default_band(sol);
      const SkorokhodReport rep = skorokhod_diagnostics(sol, sc.tube, grid, band);
      const json jrep{{"tv_total", rep.tv_total},
                      {"alignment_min", rep.alignment_min},
                      {"interior_mass_fraction", rep.interior_mass_fraction},
                      {"variational_gap", rep.variational_gap},
                      {"variational_gap_se", rep.variational_gap_se},
                      {"band", rep.band},
                      {"active_steps", rep.active_steps},
                      {"n_penalty", run.n_penalty}};
      write_text_file(std::filesystem::path(run.out_dir) / "skorokhod.json",
                      jrep.dump(2) + "\n");
      out << "tv_total=" << format_double(rep.tv_total)
          << " alignment_min=" << format_double(rep.alignment_min)
          << " interior_mass_fraction=" << format_double(rep.interior_mass_fraction)
          << " variational_gap=" << format_double(rep.variational_gap) << "\n";
      return 0;
    }

    // sweep
    SweepPlan plan;
    plan.scenario_id = sc.name;
    plan.n_list = run.n_list;
    plan.steps = run.steps;
    plan.paths = run.paths;
    plan.replications = run.replications;
    plan.seed_base = run.seed;
    plan.basis = run.basis;
    plan.threads = run.threads;
    const RateReport report = run_sweep(sc, plan);
    emit_report(report, run.out_dir);
    write_manifest(run.out_dir, "sweep", run.config_echo, run.seed);
    if (report.partial) {
      err << "sweep aborted: " << report.abort_reason << " (partial report written)\n";
      return 2;
    }
    out << "sweep ok:";
    auto slope_str = [](const RateFit& f) {
      if (!f.defined) return std::string("null");
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.3f+-%.3f", f.slope, f.half_width);
      return std::string(buf);
    };
    out << " slope_sup=" << slope_str(report.slope_sup)
        << " slope_int=" << slope_str(report.slope_int)
        << " slope_cauchy=" << slope_str(report.slope_cauchy) << "\n";
    return 0;
  } catch (const config_error& e) {
    err << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const input_error& e) {
    err << "input error: " << e.what() << "\n";
    return 1;
  } catch (const numerical_error& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

} // namespace rbsde
