#include "csr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "csr/parallel.hpp"

namespace csr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string band_abs(double tol) { return "+-" + format_number(tol); }
std::string band_rel(double tol) { return "+-" + format_number(100.0 * tol) + "%"; }

std::string label(const std::string& what, int n_atoms) {
  return what + " (N=" + std::to_string(n_atoms) + ")";
}

std::string label(const std::string& what, int n_atoms, Mode mode) {
  return what + " (N=" + std::to_string(n_atoms) + ", " + to_string(mode) + ")";
}

/// H_N / (N + 1), summed from the small end.
double harmonic_delay(int n_atoms) {
  double h = 0.0;
  for (int k = n_atoms; k >= 1; --k) h += 1.0 / k;
  return h / (n_atoms + 1);
}

/// Exact value of sum_{n=1}^{ceil(N/2)} 1/I(n): H_N/(N+1), plus half the
/// middle term when N is odd.
double half_harmonic_delay(int n_atoms) {
  const double h = harmonic_delay(n_atoms);
  if (n_atoms % 2 == 0) return h;
  return h + 0.5 / two_level_rate<double>((n_atoms + 1) / 2, n_atoms);
}

double predicted_fluctuation(int n_atoms) {
  return std::numbers::pi / std::sqrt(6.0) / (kEulerGamma + std::log(static_cast<double>(n_atoms)));
}

double value_or_nan(const std::optional<double>& v) { return v ? *v : kNaN; }

/// Largest drop of a series that should be nondecreasing, relative to its end value.
double max_relative_drop(const std::vector<double>& v) {
  double drop = 0.0, last = kNaN, scale = 0.0;
  for (double x : v)
    if (std::isfinite(x)) scale = std::max(scale, std::abs(x));
  for (double x : v) {
    if (std::isnan(x)) continue;
    if (!std::isnan(last)) drop = std::max(drop, last - x);
    last = std::isnan(last) ? x : std::max(last, x);
  }
  return scale > 0.0 ? drop / scale : 0.0;
}

int mode_number(Mode mode) { return mode == Mode::cascade_lower ? 2 : 1; }

/// Long-format series table: one row per (N, mode, t).
Table series_table(const std::string& name, const std::vector<RunSummary>& runs) {
  Table table(name, {"n_atoms", "mode", "t", "intensity", "intensity_normalized", "area",
                     "mean_delay", "fluctuation"});
  for (const auto& run : runs) {
    for (const auto& s : run.series) {
      const auto& intensity = s[0];
      const double peak = *std::max_element(intensity.values.begin(), intensity.values.end());
      for (std::size_t j = 0; j < intensity.size(); ++j)
        table.add_row({static_cast<double>(run.params.n_atoms),
                       static_cast<double>(mode_number(intensity.mode)), intensity.times[j],
                       intensity.values[j], intensity.values[j] / peak, s[1].values[j],
                       s[2].values[j], s[3].values[j]});
    }
  }
  return table;
}

void add_run_checks(std::vector<Check>& checks, const RunSummary& run) {
  const auto& tol = kTolerances;
  const int n_atoms = run.params.n_atoms;
  checks.push_back(check_below(label("conservation", n_atoms), run.max_conservation, tol.conservation));
  for (std::size_t k = 0; k < run.report.modes.size(); ++k) {
    const auto& d = run.report.modes[k];
    checks.push_back(check_rel(label("pulse area", n_atoms, d.mode), d.area_end, n_atoms, tol.area_rel));
    checks.push_back(check_below(label("mean delay nondecreasing, max drop", n_atoms, d.mode),
                                 max_relative_drop(run.series[k][2].values), 1e-12));
    checks.push_back(check_below(label("quadrature half-grid difference", n_atoms, d.mode),
                                 d.richardson_rel_diff, tol.quadrature_rel));
    checks.push_back(
        check_below(label("tail truncation bound", n_atoms, d.mode), d.tail_rel_bound, tol.tail_rel));
  }
}

nlohmann::json run_json(const RunSummary& run) {
  nlohmann::json j;
  j["n_atoms"] = run.params.n_atoms;
  j["model"] = run.kind == ModelKind::two_level ? "two-level" : "cascade";
  if (run.kind == ModelKind::cascade) j["alpha"] = run.params.alpha;
  j["t_cap"] = run.params.effective_t_cap();
  j["end_time"] = run.end_time;
  j["absorbed_end"] = run.absorbed_end;
  j["absorbed_before_cap"] = run.absorbed_before_cap;
  j["max_conservation_error"] = run.max_conservation;
  j["accepted_steps"] = run.accepted_steps;
  j["rejected_steps"] = run.rejected_steps;
  j["delays"] = to_json(run.report);
  if (run.probe) {
    const auto& p = *run.probe;
    j["single_photon_probe"] = {
        {"t_peak_based", p.t_peak_based},
        {"p0_p1_p2_peak_based", p.at_peak_based},
        {"t_formula", p.t_formula},
        {"p0_p1_p2_formula", p.at_formula},
        {"p1_argmax", p.p1_argmax},
        {"p1_max", p.p1_max},
    };
  }
  if (run.single_numeric) j["single_photon_delay_numeric"] = *run.single_numeric;
  return j;
}

nlohmann::json fit_json(const LinearFit& fit, double y_norm) {
  return {{"slope", fit.slope},
          {"intercept", fit.intercept},
          {"residual_norm", fit.residual_norm},
          {"relative_residual", fit.residual_norm / y_norm}};
}

double norm_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

ModelParams with(const ModelParams& base, int n_atoms, double alpha) {
  ModelParams p = base;
  p.n_atoms = n_atoms;
  p.alpha = alpha;
  return p;
}

std::vector<RunSummary> run_points(const std::vector<ModelParams>& params, ModelKind kind,
                                   int jobs) {
  std::vector<RunSummary> out(params.size());
  parallel_for(params.size(), jobs, [&](std::size_t i, std::size_t) {
    const auto traj = kind == ModelKind::two_level ? evolve_two_level(params[i])
                                                   : evolve_cascade(params[i]);
    out[i] = summarize_run(traj);
  });
  return out;
}

/// Fits per mode and the checks shared by both sweep figures.
void add_fits(SweepResult& result, const std::string& prefix) {
  const auto& tol = kTolerances;
  const std::size_t n_modes = result.points.front().report.modes.size();
  std::vector<double> n_squared, sigma_pred;
  for (const auto& run : result.points) {
    const double n = run.params.n_atoms;
    n_squared.push_back(n * n);
    sigma_pred.push_back(predicted_fluctuation(run.params.n_atoms));
  }
  nlohmann::json fits = nlohmann::json::object();
  for (std::size_t k = 0; k < n_modes; ++k) {
    std::vector<double> imax, sigma;
    for (const auto& run : result.points) {
      imax.push_back(run.report.modes[k].intensity_max);
      sigma.push_back(run.report.modes[k].sigma_infty);
    }
    const Mode mode = result.points.front().report.modes[k].mode;
    const auto ifit = linear_fit(n_squared, imax);
    const auto sfit = linear_fit(sigma_pred, sigma);
    result.intensity_fits.push_back(ifit);
    result.sigma_fits.push_back(sfit);
    fits[to_string(mode)] = {{"intensity_max_vs_n_squared", fit_json(ifit, norm_of(imax))},
                             {"sigma_infty_vs_predicted", fit_json(sfit, norm_of(sigma))}};
    result.checks.push_back(check_below(prefix + " intensity max vs N^2 relative residual (" +
                                            to_string(mode) + ")",
                                        ifit.residual_norm / norm_of(imax), tol.intensity_fit_rel));
    if (mode == Mode::two_level)
      result.checks.push_back(check_below(
          prefix + " sigma(inf) vs pi/sqrt(6)/(E0+ln N) residual norm (" + to_string(mode) + ")",
          sfit.residual_norm, tol.sigma_fit_residual));
  }
  result.summary["fits"] = fits;
}

Table scaling_table(const std::string& name, const SweepResult& result) {
  std::vector<std::string> columns{"n_atoms", "n_squared", "sigma_predicted"};
  for (const auto& d : result.points.front().report.modes) {
    const std::string suffix = d.mode == Mode::two_level ? "" : d.mode == Mode::cascade_upper ? "_upper" : "_lower";
    columns.push_back("intensity_max" + suffix);
    columns.push_back("sigma_infty" + suffix);
    columns.push_back("area_end" + suffix);
  }
  Table table(name, columns);
  for (const auto& run : result.points) {
    const double n = run.params.n_atoms;
    std::vector<double> row{n, n * n, predicted_fluctuation(run.params.n_atoms)};
    for (const auto& d : run.report.modes) {
      row.push_back(d.intensity_max);
      row.push_back(d.sigma_infty);
      row.push_back(d.area_end);
    }
    table.add_row(std::move(row));
  }
  return table;
}

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

Check check_abs(std::string name, double value, double target, double tol) {
  return {std::move(name), value, target, band_abs(tol), std::abs(value - target) <= tol};
}

Check check_rel(std::string name, double value, double target, double tol) {
  return {std::move(name), value, target, band_rel(tol),
          std::abs(value - target) <= tol * std::abs(target)};
}

Check check_below(std::string name, double value, double limit) {
  return {std::move(name), value, limit, "< " + format_number(limit), value < limit};
}

Check check_above(std::string name, double value, double limit) {
  return {std::move(name), value, limit, "> " + format_number(limit), value > limit};
}

bool ExperimentResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::vector<const Check*> ExperimentResult::failures() const {
  std::vector<const Check*> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(&c);
  return out;
}

std::string to_string(Figure figure) {
  switch (figure) {
    case Figure::fig2: return "fig2";
    case Figure::fig3: return "fig3";
    case Figure::fig4: return "fig4";
  }
  return "unknown";
}

Figure figure_from_string(const std::string& name) {
  for (Figure f : {Figure::fig2, Figure::fig3, Figure::fig4})
    if (to_string(f) == name) return f;
  throw DomainError("unknown figure '" + name + "' (expected fig2, fig3 or fig4)");
}

std::vector<int> default_sweep() { return {100, 125, 150, 175, 200, 250, 300, 350, 400, 450, 500}; }

void SweepSpec::validate() const {
  if (n_values.empty()) throw DomainError("sweep: n_values is empty");
  for (int n : n_values)
    if (n < 2) throw DomainError("sweep: every N must be >= 2, got " + std::to_string(n));
  if (n_values.size() < 2) throw DomainError("sweep: fits need at least two N values");
  with(base, n_values.front(), alpha).validate();
}

std::vector<double> timeline_times() { return {0.0, 0.013, 0.019, 0.024, 0.053, 0.1}; }

RunSummary summarize_run(const Trajectory& traj) {
  RunSummary run;
  run.params = traj.params;
  run.kind = traj.kind;
  run.report = delay_report(traj);
  run.max_conservation = traj.max_conservation_error();
  run.end_time = traj.end_time();
  run.absorbed_end = traj.absorbed.back();
  run.absorbed_before_cap = traj.absorbed_before_cap;
  run.accepted_steps = traj.stats.accepted;
  run.rejected_steps = traj.stats.rejected;
  if (traj.kind == ModelKind::two_level) {
    run.probe = single_photon_probe(traj);
    run.single_numeric = partial_delay_numeric(traj, 1).value;
  }
  for (Mode mode : modes_of(traj))
    run.series.push_back({intensity_series(traj, mode), pulse_area(traj, mode),
                          average_delay_series(traj, mode), fluctuation_series(traj, mode)});
  return run;
}

SweepResult run_fig2(const SweepSpec& spec) {
  spec.validate();
  const auto& tol = kTolerances;
  SweepResult result;
  result.name = "fig2";

  std::vector<ModelParams> params;
  for (int n : spec.n_values) params.push_back(with(spec.base, n, spec.base.alpha));
  result.points = run_points(params, ModelKind::two_level, spec.jobs);

  Table delays("fig2_delays", {"n_atoms", "tau_predicted", "tau_argmax", "tau_partial",
                               "tau_partial_numeric", "tau_infty", "tau_sigma_min",
                               "harmonic_delay", "single_photon_delay", "single_photon_delay_numeric"});
  Table probe("fig2_probe", {"n_atoms", "t_formula", "p0_formula", "p1_formula", "p2_formula",
                             "t_peak_based", "p0_peak_based", "p1_peak_based", "p2_peak_based",
                             "p1_argmax", "p1_max"});
  nlohmann::json points = nlohmann::json::array();
  for (const auto& run : result.points) {
    const int n = run.params.n_atoms;
    const auto& d = run.report.modes.front();
    const double h = harmonic_delay(n);
    const double single = partial_delay_harmonic(n, 1, n);
    delays.add_row({static_cast<double>(n), run.report.tau_predicted, d.tau_argmax,
                    value_or_nan(d.tau_partial), value_or_nan(d.tau_partial_numeric), d.tau_infty,
                    d.tau_sigma_min, h, single, *run.single_numeric});
    const auto& p = *run.probe;
    probe.add_row({static_cast<double>(n), p.t_formula, p.at_formula[0], p.at_formula[1],
                   p.at_formula[2], p.t_peak_based, p.at_peak_based[0], p.at_peak_based[1],
                   p.at_peak_based[2], p.p1_argmax, p.p1_max});
    points.push_back(run_json(run));

    add_run_checks(result.checks, run);
    result.checks.push_back(check_rel(label("partial delay harmonic form vs H_N/(N+1)", n),
                                      *d.tau_partial, half_harmonic_delay(n), 1e-12));
    result.checks.push_back(check_rel(label("single-photon delay harmonic form vs 2H_N/(N+1)", n),
                                      single, 2.0 * h, 1e-12));
    result.checks.push_back(check_rel(label("partial delay quadrature vs harmonic", n),
                                      *d.tau_partial_numeric, *d.tau_partial, tol.harmonic_rel));
    result.checks.push_back(check_rel(label("single-photon delay quadrature vs harmonic", n),
                                      *run.single_numeric, single, tol.harmonic_rel));
    result.checks.push_back(check_rel(label("<tau(inf)> vs H_N/(N+1)", n), d.tau_infty, h,
                                      tol.tau_infty_rel));
    if (n >= tol.estimator_min_n) {
      const double pred = run.report.tau_predicted;
      result.checks.push_back(check_rel(label("argmax delay vs (E0+ln N)/N", n), d.tau_argmax, pred, tol.estimator_rel));
      result.checks.push_back(check_rel(label("partial delay vs (E0+ln N)/N", n), *d.tau_partial, pred, tol.estimator_rel));
      result.checks.push_back(check_rel(label("<tau(inf)> vs (E0+ln N)/N", n), d.tau_infty, pred, tol.estimator_rel));
      result.checks.push_back(check_rel(label("sigma-minimum delay vs (E0+ln N)/N", n), d.tau_sigma_min, pred, tol.estimator_rel));
    }
  }
  result.summary["points"] = points;
  add_fits(result, "fig2");

  result.tables.push_back(series_table("fig2_series", result.points));
  result.tables.push_back(std::move(delays));
  result.tables.push_back(scaling_table("fig2_scaling", result));
  result.tables.push_back(std::move(probe));
  return result;
}

SweepResult run_fig3(const SweepSpec& spec) {
  spec.validate();
  if (!(spec.alpha > 0.0)) throw DomainError("fig3: alpha must be positive");
  const auto& tol = kTolerances;
  SweepResult result;
  result.name = "fig3";

  std::vector<ModelParams> params;
  for (int n : spec.n_values) params.push_back(with(spec.base, n, spec.alpha));
  result.points = run_points(params, ModelKind::cascade, spec.jobs);
  // Two-level references for the upper mode; cheap next to the cascade runs.
  const auto reference = run_points(params, ModelKind::two_level, spec.jobs);

  Table delays("fig3_delays",
               {"n_atoms", "alpha", "mode", "tau_predicted", "tau_argmax", "tau_argmax_scaled",
                "tau_partial", "tau_infty", "tau_infty_scaled", "tau_sigma_min",
                "sigma_min_first", "sigma_min_second", "sigma_infty"});
  Table gaps("fig3_gaps", {"n_atoms", "alpha", "tau_predicted", "gap", "gap_scaled",
                           "gap_scaled_over_tau_predicted"});
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const auto& run = result.points[i];
    const int n = run.params.n_atoms;
    const double a = run.params.alpha;
    const double pred = run.report.tau_predicted;
    for (const auto& d : run.report.modes) {
      const bool lower = d.mode == Mode::cascade_lower;
      const double scale = lower ? a : 1.0;
      const auto minimum = [&](std::size_t k) {
        return k < d.sigma_minima.size() ? d.sigma_minima[k] : kNaN;
      };
      delays.add_row({static_cast<double>(n), a, static_cast<double>(mode_number(d.mode)),
                      lower ? pred / a : pred, d.tau_argmax, scale * d.tau_argmax,
                      value_or_nan(d.tau_partial), d.tau_infty, scale * d.tau_infty,
                      d.tau_sigma_min, minimum(0), minimum(1), d.sigma_infty});
    }
    gaps.add_row({static_cast<double>(n), a, pred, *run.report.lower_gap,
                  *run.report.lower_gap_scaled, *run.report.lower_gap_scaled / pred});
    auto j = run_json(run);
    j["two_level_reference"] = to_json(reference[i].report);
    points.push_back(std::move(j));

    add_run_checks(result.checks, run);
    const auto& up = run.report.mode(Mode::cascade_upper);
    const auto& low = run.report.mode(Mode::cascade_lower);
    const auto& ref = reference[i].report.mode(Mode::two_level);
    result.checks.push_back(check_rel(label("upper-mode argmax delay vs two-level", n),
                                      up.tau_argmax, ref.tau_argmax, tol.upper_vs_two_level_rel));
    result.checks.push_back(check_rel(label("upper-mode <tau(inf)> vs two-level", n), up.tau_infty,
                                      ref.tau_infty, tol.upper_vs_two_level_rel));
    result.checks.push_back(check_rel(label("alpha (<tau2(inf)> - <tau1(inf)>) / tau_1D", n),
                                      *run.report.lower_gap_scaled / pred, 1.0,
                                      tol.alpha_scaling_rel));
    // "Near tau_1D": the first minimum sits on the tau_1D side of the
    // geometric midpoint between tau_1D and tau_1D/alpha.
    result.checks.push_back(check_above(label("lower-mode sigma minima count", n),
                                        static_cast<double>(low.sigma_minima.size()), 1.5));
    const double first = low.sigma_minima.empty() ? kNaN : low.sigma_minima.front();
    result.checks.push_back(check_below(label("lower-mode first sigma minimum / sqrt(tau_1D tau_2D)", n),
                                        std::isnan(first) ? 1e300 : first / (pred / std::sqrt(a)), 1.0));
  }
  result.summary["alpha"] = spec.alpha;
  result.summary["points"] = points;
  add_fits(result, "fig3");

  result.tables.push_back(series_table("fig3_series", result.points));
  result.tables.push_back(std::move(delays));
  result.tables.push_back(std::move(gaps));
  result.tables.push_back(scaling_table("fig3_scaling", result));
  return result;
}

TimelineResult run_fig4(const ModelParams& params, int /*jobs*/) {
  params.validate();
  const auto& tol = kTolerances;
  const auto& target = kTimeline;
  TimelineResult result;
  result.name = "fig4";

  EvolveOptions options;
  options.snapshot_times = timeline_times();
  const auto traj = evolve_cascade(params, options);
  result.run = summarize_run(traj);
  const int n_atoms = params.n_atoms;

  for (double t : timeline_times()) {
    if (t > traj.end_time()) continue;
    const auto& state = traj.snapshot_at(t);
    SnapshotTable snap;
    snap.time = t;
    snap.total = state.probs.sum();
    snap.table = Table("fig4_snapshot_t" + time_tag(t),
                       {"n", "m", "lower_count", "intermediate_count", "n_minus_upper", "probability"});
    for (int m = 0; m <= n_atoms; ++m)
      for (int n = 0; n <= m; ++n)
        snap.table.add_row({static_cast<double>(n), static_cast<double>(m),
                            static_cast<double>(n_atoms - m), static_cast<double>(m - n),
                            static_cast<double>(n_atoms - n), state.at(n, m)});
    result.checks.push_back(check_abs("snapshot sum (t=" + time_tag(t) + ")", snap.total, 1.0,
                                      tol.snapshot_sum));
    if (t == 0.0)
      result.checks.push_back(check_abs("snapshot t=0 mass at n=m=N", state.at(n_atoms, n_atoms), 1.0, 0.0));
    if (t == target.absorbed_time) result.absorbed_at_probe = state.at(0, 0);
    result.snapshots.push_back(std::move(snap));
  }

  add_run_checks(result.checks, result.run);
  const auto& up = result.run.report.mode(Mode::cascade_upper);
  const auto& low = result.run.report.mode(Mode::cascade_lower);
  const double first_min = low.sigma_minima.empty() ? kNaN : low.sigma_minima.front();
  result.checks.push_back(check_abs("first-mode intensity peak", up.tau_argmax, target.first_peak, tol.first_peak_abs));
  result.checks.push_back(check_abs("second-mode first sigma minimum", first_min, target.second_sigma_min, tol.second_sigma_min_abs));
  result.checks.push_back(check_abs("second-mode intensity peak", low.tau_argmax, target.second_peak, tol.second_peak_abs));
  result.checks.push_back(check_abs("second-mode <tau(inf)>", low.tau_infty, target.second_delay, tol.second_delay_abs));
  result.checks.push_back(check_above("P_00(t=0.1)", result.absorbed_at_probe, tol.final_absorbed_min));

  nlohmann::json snapshots = nlohmann::json::array();
  for (const auto& s : result.snapshots) snapshots.push_back({{"t", s.time}, {"total", s.total}, {"table", s.table.name}});
  result.summary["run"] = run_json(result.run);
  result.summary["snapshots"] = snapshots;
  result.summary["p00_at_0_1"] = result.absorbed_at_probe;
  // The two reindexings of the lower-level axis are both in the snapshot tables.
  result.summary["snapshot_axes"] = {"lower_count = N - m", "n_minus_upper = N - n"};

  result.tables.push_back(series_table("fig4_series", {result.run}));
  for (const auto& s : result.snapshots) result.tables.push_back(s.table);
  return result;
}

AlphaScanResult run_alpha_scan(const ModelParams& base, const std::vector<double>& alphas, int jobs) {
  if (alphas.empty()) throw DomainError("alpha scan: no alpha values");
  const auto& tol = kTolerances;
  AlphaScanResult result;
  result.name = "alpha_scan";
  std::vector<ModelParams> params;
  for (double a : alphas) {
    if (!(a > 0.0)) throw DomainError("alpha scan: alpha must be positive");
    params.push_back(with(base, base.n_atoms, a));
  }
  result.points = run_points(params, ModelKind::cascade, jobs);

  Table table("alpha_scan", {"n_atoms", "alpha", "tau_predicted", "tau1_infty", "tau2_infty",
                             "tau2_argmax", "gap", "gap_scaled_over_tau_predicted"});
  nlohmann::json points = nlohmann::json::array();
  for (const auto& run : result.points) {
    const double a = run.params.alpha;
    const double pred = run.report.tau_predicted;
    const double ratio = *run.report.lower_gap_scaled / pred;
    table.add_row({static_cast<double>(run.params.n_atoms), a, pred,
                   run.report.mode(Mode::cascade_upper).tau_infty,
                   run.report.mode(Mode::cascade_lower).tau_infty,
                   run.report.mode(Mode::cascade_lower).tau_argmax, *run.report.lower_gap, ratio});
    points.push_back(run_json(run));
    add_run_checks(result.checks, run);
    result.checks.push_back(check_rel("alpha (<tau2(inf)> - <tau1(inf)>) / tau_1D (N=" +
                                          std::to_string(run.params.n_atoms) + ", alpha=" +
                                          format_number(a) + ")",
                                      ratio, 1.0, tol.alpha_scaling_rel));
  }
  result.summary["points"] = points;
  result.tables.push_back(std::move(table));
  return result;
}

ExperimentResult run_single(const ModelParams& params, ModelKind kind, bool dump_trajectory) {
  const auto traj = kind == ModelKind::two_level ? evolve_two_level(params) : evolve_cascade(params);
  const auto run = summarize_run(traj);
  const std::string prefix = kind == ModelKind::two_level ? "two_level" : "cascade";
  ExperimentResult result;
  result.name = prefix;
  add_run_checks(result.checks, run);
  result.summary = run_json(run);
  result.tables.push_back(series_table(prefix + "_series", {run}));
  if (dump_trajectory) result.tables.push_back(trajectory_table(traj, prefix + "_trajectory"));
  return result;
}

std::vector<double> oracle_reference_grid(const ModelParams& params, ModelKind kind) {
  const double tau = params.predicted_delay();
  double hi = 4.0 * tau;
  if (kind == ModelKind::cascade && params.alpha > 0.0) hi = 4.0 * tau * (1.0 + 1.0 / params.alpha);
  const double lo = 0.1 * tau;
  constexpr int kPoints = 64;
  std::vector<double> grid;
  for (int i = 0; i < kPoints; ++i) grid.push_back(lo * std::pow(hi / lo, i / double(kPoints - 1)));
  return grid;
}

OracleResult run_oracle(const ModelParams& params, ModelKind kind, int n_trials, int jobs,
                        bool keep_event_logs) {
  params.validate();
  const auto& tol = kTolerances;
  OracleResult result;
  result.name = "oracle";

  SamplingOptions sampling;
  sampling.reference_grid = oracle_reference_grid(params, kind);
  sampling.keep_event_logs = keep_event_logs;
  sampling.jobs = jobs;
  EvolveOptions evolve;
  evolve.extra_times = sampling.reference_grid;
  const bool cascade = kind == ModelKind::cascade;
  const auto traj = cascade ? evolve_cascade(params, evolve) : evolve_two_level(params, evolve);
  result.ensemble = cascade ? sample_cascade(params, n_trials, sampling)
                            : sample_two_level(params, n_trials, sampling);
  const auto& ensemble = result.ensemble;
  result.max_total_variation = max_total_variation(ensemble, traj);
  result.max_conservation = traj.max_conservation_error();
  result.completion = completion_time_stats(ensemble);
  result.expected_completion = cascade ? expected_completion_from(traj)
                                       : expected_two_level_completion(params.n_atoms);
  const auto report = delay_report(traj);

  const int n_atoms = params.n_atoms;
  const std::string model = cascade ? "cascade" : "two-level";
  result.checks.push_back(check_below("max total variation, empirical vs ODE (" + model + ")",
                                      result.max_total_variation, tol.total_variation));
  result.checks.push_back(check_abs("mean completion time (" + model + ")", result.completion.mean,
                                    result.expected_completion,
                                    tol.standard_errors * result.completion.std_error));

  nlohmann::json delays = nlohmann::json::object();
  const std::vector<Mode> modes = cascade ? std::vector<Mode>{Mode::cascade_upper, Mode::cascade_lower}
                                          : std::vector<Mode>{Mode::two_level};
  for (Mode mode : modes) {
    const auto e = empirical_delay(ensemble, mode);
    delays[to_string(mode)] = {{"mean", e.mean},
                               {"normalized_std", e.normalized_std},
                               {"std_error", e.std_error},
                               {"ode_tau_infty", report.mode(mode).tau_infty}};
    if (mode == Mode::two_level) {
      const double exact = partial_delay_harmonic(n_atoms, 1, n_atoms - n_atoms / 2);
      delays[to_string(mode)]["exact_mean"] = exact;
      result.checks.push_back(check_abs("mean half-population event time (two-level)", e.mean,
                                        exact, tol.standard_errors * e.std_error));
    }
  }

  Table marginals("oracle_marginals",
                  cascade ? std::vector<std::string>{"t", "level", "empirical_upper", "ode_upper",
                                                     "empirical_intermediate", "ode_intermediate",
                                                     "empirical_lower", "ode_lower"}
                          : std::vector<std::string>{"t", "level", "empirical", "ode"});
  const auto& grid = ensemble.summary.grid;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] > traj.end_time()) break;
    const auto j = static_cast<Eigen::Index>(
        std::lower_bound(traj.times.begin(), traj.times.end(), grid[g] * (1.0 - 1e-12)) -
        traj.times.begin());
    const auto col = static_cast<Eigen::Index>(g);
    for (int k = 0; k <= n_atoms; ++k) {
      std::vector<double> row{grid[g], static_cast<double>(k), ensemble.summary.upper(k, col),
                              traj.upper_marginal(k, j)};
      if (cascade) {
        row.insert(row.end(), {ensemble.summary.intermediate(k, col), traj.intermediate_marginal(k, j),
                               ensemble.summary.lower(k, col), traj.lower_marginal(k, j)});
      }
      marginals.add_row(std::move(row));
    }
  }
  Table trials("oracle_trials", {"trial", "completion_time", "upper_half_time", "lower_half_time"});
  for (std::size_t i = 0; i < ensemble.trials.size(); ++i) {
    const auto& t = ensemble.trials[i];
    trials.add_row({static_cast<double>(i + 1), t.completion_time, t.upper_half_time, t.lower_half_time});
  }

  result.summary = {{"model", model},
                    {"n_atoms", n_atoms},
                    {"n_trials", n_trials},
                    {"seed", params.seed},
                    {"reference_grid_points", grid.size()},
                    {"max_total_variation", result.max_total_variation},
                    {"ode_max_conservation_error", result.max_conservation},
                    {"completion_time",
                     {{"mean", result.completion.mean},
                      {"std_error", result.completion.std_error},
                      {"expected", result.expected_completion}}},
                    {"delays", delays}};
  if (cascade) result.summary["alpha"] = params.alpha;
  result.tables.push_back(std::move(marginals));
  result.tables.push_back(std::move(trials));
  if (keep_event_logs) result.tables.push_back(event_log_table(ensemble));
  return result;
}

nlohmann::json to_json(const DelayReport& report) {
  nlohmann::json out;
  out["n_atoms"] = report.n_atoms;
  out["tau_predicted"] = report.tau_predicted;
  if (report.kind == ModelKind::cascade) out["alpha"] = report.alpha;
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& d : report.modes) {
    nlohmann::json m;
    m["tau_argmax"] = d.tau_argmax;
    m["intensity_max"] = d.intensity_max;
    if (d.tau_partial) m["tau_partial"] = *d.tau_partial;
    if (d.tau_partial_numeric) m["tau_partial_numeric"] = *d.tau_partial_numeric;
    m["tau_infty"] = d.tau_infty;
    m["tau_sigma_min"] = std::isnan(d.tau_sigma_min) ? nlohmann::json() : nlohmann::json(d.tau_sigma_min);
    m["sigma_minima"] = d.sigma_minima;
    m["sigma_infty"] = d.sigma_infty;
    m["area_end"] = d.area_end;
    m["quadrature_half_grid_rel_diff"] = d.richardson_rel_diff;
    m["tail_rel_bound"] = d.tail_rel_bound;
    if (d.mode == Mode::cascade_lower) {
      m["tau_argmax_scaled"] = report.alpha * d.tau_argmax;
      m["tau_infty_scaled"] = report.alpha * d.tau_infty;
    }
    modes[to_string(d.mode)] = std::move(m);
  }
  out["modes"] = std::move(modes);
  if (report.lower_gap) {
    out["lower_gap"] = *report.lower_gap;
    out["lower_gap_scaled"] = *report.lower_gap_scaled;
  }
  return out;
}

nlohmann::json to_json(const std::vector<Check>& checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : checks) {
    out.push_back({{"name", c.name},
                   {"value", std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json()},
                   {"target", c.target},
                   {"band", c.band},
                   {"passed", c.passed}});
  }
  return out;
}

std::vector<std::filesystem::path> write_outputs(const std::vector<const ExperimentResult*>& results,
                                                 const std::filesystem::path& directory,
                                                 OutputFormat format, const nlohmann::json& config) {
  std::vector<std::filesystem::path> written;
  nlohmann::json summary;
  summary["schema"] = 1;
  if (!config.is_null()) summary["config"] = config;
  nlohmann::json experiments = nlohmann::json::object();
  bool all = true;
  for (const auto* r : results) {
    for (const auto& table : r->tables) {
      const auto path = directory / (table.name + (format == OutputFormat::csv ? ".csv" : ".json"));
      write_file_atomic(path, format == OutputFormat::csv ? table.to_csv() : table.to_json().dump() + "\n");
      written.push_back(path);
    }
    nlohmann::json entry;
    entry["summary"] = r->summary;
    entry["checks"] = to_json(r->checks);
    entry["passed"] = r->passed();
    entry["tables"] = nlohmann::json::array();
    for (const auto& table : r->tables) entry["tables"].push_back(table.name);
    experiments[r->name] = std::move(entry);
    all = all && r->passed();
  }
  summary["experiments"] = std::move(experiments);
  summary["passed"] = all;
  const auto path = directory / "summary.json";
  write_file_atomic(path, summary.dump(2) + "\n");
  written.push_back(path);
  return written;
}

}  // namespace csr
