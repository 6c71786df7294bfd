#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csr/evolver.hpp"
#include "csr/io.hpp"
#include "csr/observables.hpp"
#include "csr/oracle.hpp"

namespace csr {

/// Every pass/fail threshold used by the pipelines and the acceptance suite.
struct CheckTolerances {
  double conservation = 1e-8;
  double area_rel = 5e-3;
  double harmonic_rel = 5e-3;
  double estimator_rel = 0.10;
  int estimator_min_n = 200;
  double tau_infty_rel = 1e-2;
  double argmax_abs = 1e-3;
  double probe_abs = 1e-2;
  double probe_argmax_rel = 0.10;
  double intensity_fit_rel = 1e-2;
  double sigma_fit_residual = 1e-2;
  double quadrature_rel = 2e-3;
  double tail_rel = 1e-3;
  double alpha_scaling_rel = 0.10;
  double upper_vs_two_level_rel = 1e-2;
  double first_peak_abs = 1e-3;
  double second_sigma_min_abs = 3e-3;
  double second_peak_abs = 3e-3;
  double second_delay_abs = 3e-3;
  double final_absorbed_min = 0.99;
  double reduction_abs = 1e-7;
  double total_variation = 1e-2;
  double standard_errors = 3.0;
  double snapshot_sum = 1e-8;
};

inline constexpr CheckTolerances kTolerances{};

/// Reference numbers the timeline and probe checks compare against.
struct TimelineTargets {
  double first_peak = 0.013;
  double second_sigma_min = 0.019;
  double second_peak = 0.053;
  double second_delay = 0.052;
  double absorbed_time = 0.1;
  double probe_p0 = 0.44;
  double probe_p1 = 0.24;
  double probe_p2 = 0.11;
};

inline constexpr TimelineTargets kTimeline{};

struct Check {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  /// Human-readable acceptance band, e.g. "+-0.001" or "< 0.01".
  std::string band;
  bool passed = false;
};

/// |value - target| <= tol
Check check_abs(std::string name, double value, double target, double tol);
/// |value - target| <= tol |target|
Check check_rel(std::string name, double value, double target, double tol);
Check check_below(std::string name, double value, double limit);
Check check_above(std::string name, double value, double limit);

struct ExperimentResult {
  std::string name;
  std::vector<Check> checks;
  std::vector<Table> tables;
  nlohmann::json summary;

  bool passed() const;
  std::vector<const Check*> failures() const;
};

enum class Figure { fig2, fig3, fig4 };
std::string to_string(Figure figure);
Figure figure_from_string(const std::string& name);

/// The atom counts of the figure sweeps.
std::vector<int> default_sweep();

struct SweepSpec {
  std::vector<int> n_values = default_sweep();
  /// Ignored for fig2.
  double alpha = 0.1;
  /// Integration controls and seed; n_atoms and alpha are overridden.
  ModelParams base;
  int jobs = 1;

  void validate() const;
};

/// Everything one evolution contributes to a figure.
struct RunSummary {
  ModelParams params;
  ModelKind kind = ModelKind::two_level;
  DelayReport report;
  double max_conservation = 0.0;
  double end_time = 0.0;
  double absorbed_end = 0.0;
  bool absorbed_before_cap = false;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  /// Two-level only.
  std::optional<SinglePhotonProbe> probe;
  /// Two-level only: quadrature of t Q_1(t).
  std::optional<double> single_numeric;
  /// Per mode: intensity, area, mean delay, fluctuation.
  std::vector<std::array<ObservableSeries, 4>> series;
};

RunSummary summarize_run(const Trajectory& traj);

struct SweepResult : ExperimentResult {
  std::vector<RunSummary> points;
  /// I_max against N^2, one per mode.
  std::vector<LinearFit> intensity_fits;
  /// sigma(inf) against pi/sqrt(6)/(E0 + ln N), one per mode.
  std::vector<LinearFit> sigma_fits;
};

struct SnapshotTable {
  double time = 0.0;
  double total = 0.0;
  Table table;
};

struct TimelineResult : ExperimentResult {
  RunSummary run;
  std::vector<SnapshotTable> snapshots;
  double absorbed_at_probe = 0.0;
};

struct AlphaScanResult : ExperimentResult {
  std::vector<RunSummary> points;
};

struct OracleResult : ExperimentResult {
  TrialEnsemble ensemble;
  double max_total_variation = 0.0;
  /// Conservation error of the deterministic reference run.
  double max_conservation = 0.0;
  EmpiricalDelay completion;
  double expected_completion = 0.0;
};

/// Snapshot times of the N = 500, alpha = 1/3 timeline.
std::vector<double> timeline_times();

/// Two-level sweep: intensities, delays four ways, fluctuations, fits.
SweepResult run_fig2(const SweepSpec& spec);
/// Cascade sweep at spec.alpha: two-mode analogs, second-mode delay raw and
/// alpha-scaled, second-mode fluctuation minima.
SweepResult run_fig3(const SweepSpec& spec);
/// Single cascade run with full-state snapshots and the timeline checks.
TimelineResult run_fig4(const ModelParams& params, int jobs = 1);
/// Cascade runs at fixed N over several alphas; checks the delay-gap scaling.
AlphaScanResult run_alpha_scan(const ModelParams& base, const std::vector<double>& alphas,
                               int jobs = 1);
/// One evolution of either model with its series and delay report.
ExperimentResult run_single(const ModelParams& params, ModelKind kind, bool dump_trajectory = false);
/// Gillespie ensemble compared with the deterministic solution.
OracleResult run_oracle(const ModelParams& params, ModelKind kind, int n_trials, int jobs,
                        bool keep_event_logs = false);

/// Reference grid for oracle histograms: 64 log-spaced points spanning the
/// emission of every mode.
std::vector<double> oracle_reference_grid(const ModelParams& params, ModelKind kind);

/// JSON view of the numbers a DelayReport carries.
nlohmann::json to_json(const DelayReport& report);
nlohmann::json to_json(const std::vector<Check>& checks);

enum class OutputFormat { csv, json };

/// Writes `<name>.csv` (or `.json`) per table and `summary.json` with
/// "schema": 1, all atomically. Returns the paths written.
std::vector<std::filesystem::path> write_outputs(const std::vector<const ExperimentResult*>& results,
                                                 const std::filesystem::path& directory,
                                                 OutputFormat format,
                                                 const nlohmann::json& config = {});

}  // namespace csr
