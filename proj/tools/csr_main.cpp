// csr: command-line front end for the superradiance simulators.
//
// Exit codes: 0 success with every requested check passing, 1 a check or a
// run failed, 2 usage or configuration error.

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csr/experiments.hpp"
#include "csr/parallel.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct Options {
  csr::ModelParams params;
  bool n_set = false;
  bool alpha_set = false;
  std::string out = "out";
  std::string format = "csv";
  int jobs = csr::default_jobs();
  int verbosity = 0;
  std::vector<std::string> figures;
  std::vector<int> n_values = csr::default_sweep();
  std::vector<double> alpha_values;
  std::string model = "two-level";
  int trials = 100000;
  bool events = false;
  bool dump_trajectory = false;
};

const std::map<std::string, csr::OutputFormat> kFormats{{"csv", csr::OutputFormat::csv},
                                                        {"json", csr::OutputFormat::json}};

void add_model_flags(CLI::App* cmd, Options& o, bool with_alpha) {
  cmd->add_option("--n", o.params.n_atoms, "Number of atoms N (1..5000)")
      ->check(CLI::Range(1, 5000))
      ->capture_default_str();
  if (with_alpha)
    cmd->add_option("--alpha", o.params.alpha,
                    "Branching ratio alpha, lower over upper single-atom decay rate (dimensionless, >= 0)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  cmd->add_option("--t-cap", o.params.t_cap,
                  "Integration horizon in dimensionless time (units of the inverse single-atom "
                  "decay rate); 0 selects 20 (1 + 1/min(alpha,1)) (E0 + ln N)/N")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--abs-tol", o.params.abs_tol, "Absolute integrator tolerance (probability units)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--rel-tol", o.params.rel_tol, "Relative integrator tolerance (dimensionless)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--absorb-eps", o.params.absorb_eps,
                  "Stop once the absorbed probability exceeds 1 - absorb-eps (dimensionless)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--seed", o.params.seed, "Master seed of the stochastic oracle (64-bit)")
      ->capture_default_str();
}

void add_output_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--format", o.format, "Table format; summary.json is always written")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "Worker threads (default: available hardware threads)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("-v,--verbose", "Print every check, not only failures");
}

nlohmann::json config_json(const Options& o, const std::string& command) {
  const auto& p = o.params;
  return {{"command", command},
          {"n_atoms", p.n_atoms},
          {"alpha", p.alpha},
          {"t_cap", p.t_cap},
          {"abs_tol", p.abs_tol},
          {"rel_tol", p.rel_tol},
          {"absorb_eps", p.absorb_eps},
          {"seed", p.seed},
          {"figures", o.figures},
          {"n_values", o.n_values},
          {"alpha_values", o.alpha_values},
          {"model", o.model},
          {"trials", o.trials}};
}

csr::ModelKind model_kind(const std::string& name) {
  return name == "cascade" ? csr::ModelKind::cascade : csr::ModelKind::two_level;
}

int report(const std::vector<const csr::ExperimentResult*>& results, const Options& o,
           const std::string& command) {
  const auto written =
      csr::write_outputs(results, o.out, kFormats.at(o.format), config_json(o, command));
  int failed = 0;
  for (const auto* r : results) {
    for (const auto& c : r->checks) {
      if (!c.passed) ++failed;
      if (!c.passed || o.verbosity > 0)
        std::fprintf(c.passed ? stdout : stderr, "%s [%s] %s: %s (target %s, band %s)\n",
                     c.passed ? "PASS" : "FAIL", r->name.c_str(), c.name.c_str(),
                     csr::format_number(c.value).c_str(), csr::format_number(c.target).c_str(),
                     c.band.c_str());
    }
  }
  std::printf("wrote %zu files to %s; %d check(s) failed\n", written.size(), o.out.c_str(), failed);
  return failed ? kExitCheckFailed : kExitOk;
}

csr::SweepSpec sweep_spec(const Options& o, double alpha) {
  csr::SweepSpec spec;
  spec.n_values = o.n_values;
  spec.alpha = alpha;
  spec.base = o.params;
  spec.jobs = o.jobs;
  return spec;
}

/// fig4 runs at N = 500, alpha = 1/3 unless the flags say otherwise.
csr::ModelParams timeline_params(const Options& o) {
  auto p = o.params;
  if (!o.n_set) p.n_atoms = 500;
  if (!o.alpha_set) p.alpha = 1.0 / 3.0;
  return p;
}

int run_figures(const Options& o, const std::string& command) {
  std::vector<std::unique_ptr<csr::ExperimentResult>> owned;
  for (const auto& name : o.figures) {
    switch (csr::figure_from_string(name)) {
      case csr::Figure::fig2:
        owned.push_back(std::make_unique<csr::SweepResult>(csr::run_fig2(sweep_spec(o, 0.0))));
        break;
      case csr::Figure::fig3:
        owned.push_back(std::make_unique<csr::SweepResult>(
            csr::run_fig3(sweep_spec(o, o.alpha_set ? o.params.alpha : 0.1))));
        break;
      case csr::Figure::fig4:
        owned.push_back(std::make_unique<csr::TimelineResult>(csr::run_fig4(timeline_params(o), o.jobs)));
        break;
    }
  }
  std::vector<const csr::ExperimentResult*> results;
  for (const auto& r : owned) results.push_back(r.get());
  return report(results, o, command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Simulator for two-level Dicke superradiance and cascade three-level superradiance.\n"
      "All times are dimensionless, in units of the inverse single-atom upper decay rate."};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from a TOML/INI file; flags override it");
  Options o;

  auto* two_level = app.add_subcommand("two-level", "Evolve the two-level master equation");
  add_model_flags(two_level, o, false);
  add_output_flags(two_level, o);
  two_level->add_option("--figures", o.figures, "Run figure pipelines instead (fig2)")
      ->check(CLI::IsMember({"fig2"}));
  two_level->add_flag("--dump-trajectory", o.dump_trajectory, "Also write the full P_n(t) table");

  auto* cascade = app.add_subcommand("cascade", "Evolve the cascade master equation (alpha defaults to 0.1)");
  add_model_flags(cascade, o, true);
  add_output_flags(cascade, o);
  cascade->add_option("--figures", o.figures, "Run figure pipelines instead (fig3, fig4)")
      ->check(CLI::IsMember({"fig3", "fig4"}));
  cascade->add_flag("--dump-trajectory", o.dump_trajectory, "Also write the occupation marginals over time");

  auto* sweep = app.add_subcommand("sweep", "Run a sweep over N (fig2/fig3 pipelines) or over alpha");
  add_model_flags(sweep, o, true);
  add_output_flags(sweep, o);
  sweep->add_option("--model", o.model, "Model to sweep")
      ->check(CLI::IsMember({"two-level", "cascade"}))
      ->capture_default_str();
  sweep->add_option("--n-values", o.n_values, "Atom counts of the N sweep (each >= 2)");
  sweep->add_option("--alpha-values", o.alpha_values,
                    "Cascade only: scan these alphas at fixed --n instead of sweeping N");

  auto* oracle = app.add_subcommand("oracle", "Gillespie ensemble checked against the ODE solution");
  add_model_flags(oracle, o, true);
  add_output_flags(oracle, o);
  oracle->add_option("--model", o.model, "Model to sample")
      ->check(CLI::IsMember({"two-level", "cascade"}))
      ->capture_default_str();
  oracle->add_option("--trials", o.trials, "Number of independent trials")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  oracle->add_flag("--events", o.events, "Also write the per-trial event logs");

  auto* figures = app.add_subcommand("figures", "Regenerate the figure datasets with their checks");
  add_model_flags(figures, o, true);
  add_output_flags(figures, o);
  figures->add_option("--figures", o.figures, "Figures to run (default: all)")
      ->check(CLI::IsMember({"fig2", "fig3", "fig4"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string command = cmd->get_name();
  o.verbosity = static_cast<int>(cmd->count("--verbose"));
  o.n_set = cmd->count("--n") > 0;
  o.alpha_set = cmd->get_option_no_throw("--alpha") && cmd->count("--alpha") > 0;

  try {
    o.params.validate();
    if (command == "figures") {
      if (o.figures.empty()) o.figures = {"fig2", "fig3", "fig4"};
      return run_figures(o, command);
    }
    if (!o.figures.empty()) return run_figures(o, command);

    if (command == "two-level" || command == "cascade") {
      const auto result = csr::run_single(o.params, model_kind(command), o.dump_trajectory);
      return report({&result}, o, command);
    }
    if (command == "sweep") {
      if (!o.alpha_values.empty()) {
        if (o.model != "cascade") throw csr::DomainError("--alpha-values needs --model cascade");
        const auto result = csr::run_alpha_scan(o.params, o.alpha_values, o.jobs);
        return report({&result}, o, command);
      }
      if (o.model == "two-level") {
        const auto result = csr::run_fig2(sweep_spec(o, 0.0));
        return report({&result}, o, command);
      }
      const auto result = csr::run_fig3(sweep_spec(o, o.params.alpha));
      return report({&result}, o, command);
    }
    if (command == "oracle") {
      const auto result =
          csr::run_oracle(o.params, model_kind(o.model), o.trials, o.jobs, o.events);
      return report({&result}, o, command);
    }
  } catch (const csr::DomainError& e) {
    std::cerr << "csr: configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "csr: " << command << " failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
