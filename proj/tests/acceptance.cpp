// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. All thresholds come from kTolerances / kTimeline or are
// pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csr/experiments.hpp"
#include "csr/parallel.hpp"

using namespace csr;
namespace fs = std::filesystem;

namespace {

constexpr int kOracleAtoms = 100;
constexpr double kOracleAlpha = 0.1;
constexpr int kReductionAtoms = 100;
constexpr int kTimelineAtoms = 500;
constexpr double kTimelineAlpha = 1.0 / 3.0;
constexpr double kExtraAlpha = 0.05;
constexpr double kHarmonicExact = 1e-12;

struct Criterion {
  Criterion(int id_, std::string title_) : id(id_), title(std::move(title_)) {}

  int id;
  std::string title;
  bool passed = true;
  std::vector<std::string> lines;

  void expect(const Check& c) {
    passed = passed && c.passed;
    if (!c.passed || lines.size() < 64)
      lines.push_back(std::string(c.passed ? "ok   " : "FAIL ") + c.name + " = " +
                      format_number(c.value) + " (target " + format_number(c.target) + ", " +
                      c.band + ")");
  }
  void note(const std::string& text) { lines.push_back("info " + text); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Stopwatch {
 public:
  explicit Stopwatch(std::string what) : what_(std::move(what)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start_;
    std::fprintf(stderr, "  [%6.1f s] %s\n", dt.count(), what_.c_str());
  }

 private:
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

const Check* find_check(const ExperimentResult& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return &c;
  return nullptr;
}

void expect_named(Criterion& crit, const ExperimentResult& r, const std::string& name) {
  if (const auto* c = find_check(r, name)) {
    crit.expect(*c);
  } else {
    crit.expect(Check{name + " [missing]", std::nan(""), 0.0, "present", false});
  }
}

const RunSummary& point_at(const std::vector<RunSummary>& points, int n_atoms) {
  for (const auto& p : points)
    if (p.params.n_atoms == n_atoms) return p;
  throw std::runtime_error("no sweep point at N=" + std::to_string(n_atoms));
}

double harmonic_delay(int n_atoms) {
  long double h = 0;
  for (int k = 1; k <= n_atoms; ++k) h += 1.0L / k;
  return static_cast<double>(h / (n_atoms + 1));
}

double half_harmonic_delay(int n_atoms) {
  const double h = harmonic_delay(n_atoms);
  return n_atoms % 2 ? h + 0.5 / two_level_rate<double>((n_atoms + 1) / 2, n_atoms) : h;
}

/// Expected total-variation distance produced by multinomial noise alone,
/// max over grid times and marginals: 0.5 sum_n sqrt(2 p (1 - p) / (pi M)).
double expected_noise_tv(const OracleResult& r) {
  const auto& table = *std::find_if(r.tables.begin(), r.tables.end(),
                                    [](const Table& t) { return t.name == "oracle_marginals"; });
  std::vector<std::size_t> ode_columns;
  for (std::size_t k = 0; k < table.columns.size(); ++k)
    if (table.columns[k].rfind("ode", 0) == 0) ode_columns.push_back(k);
  std::map<std::pair<double, std::size_t>, double> sums;
  const double m = r.ensemble.n_trials;
  for (const auto& row : table.rows)
    for (std::size_t k : ode_columns) {
      const double p = std::clamp(std::isnan(row[k]) ? 0.0 : row[k], 0.0, 1.0);
      sums[{row[0], k}] += 0.5 * std::sqrt(2.0 * p * (1.0 - p) / (std::numbers::pi * m));
    }
  double worst = 0.0;
  for (const auto& [key, v] : sums) worst = std::max(worst, v);
  return worst;
}

/// Writes both runs and compares every emitted file byte for byte.
bool identical_outputs(const std::vector<const ExperimentResult*>& a,
                       const std::vector<const ExperimentResult*>& b, const fs::path& dir,
                       std::string& detail) {
  fs::remove_all(dir);
  const auto first = write_outputs(a, dir / "run1", OutputFormat::csv, {{"rerun", "determinism"}});
  const auto second = write_outputs(b, dir / "run2", OutputFormat::csv, {{"rerun", "determinism"}});
  if (first.size() != second.size()) {
    detail = "file counts differ";
    return false;
  }
  std::size_t bytes = 0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto x = slurp(first[i]);
    if (first[i].filename() != second[i].filename() || x != slurp(second[i])) {
      detail = first[i].filename().string() + " differs";
      return false;
    }
    bytes += x.size();
  }
  detail = std::to_string(first.size()) + " files, " + std::to_string(bytes) + " bytes identical";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite for the superradiance simulators"};
  std::string out = "acceptance_out";
  int jobs = default_jobs();
  int trials = 100000;
  app.add_option("--out", out, "Directory for the datasets produced along the way");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--trials", trials, "Oracle trials per model")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto& tol = kTolerances;
  const auto& target = kTimeline;
  std::fprintf(stderr, "acceptance: jobs=%d trials=%d out=%s\n", jobs, trials, out.c_str());

  SweepSpec two_level_spec;
  two_level_spec.jobs = jobs;
  SweepSpec cascade_spec = two_level_spec;
  cascade_spec.alpha = kOracleAlpha;

  std::optional<SweepResult> fig2, fig3;
  std::optional<TimelineResult> fig4;
  std::optional<AlphaScanResult> scan;
  std::optional<OracleResult> oracle_two, oracle_cascade;
  double reduction_diff = 0.0, reduction_conservation = 0.0;
  std::size_t reduction_points = 0;
  {
    Stopwatch w("two-level sweep");
    fig2 = run_fig2(two_level_spec);
  }
  {
    Stopwatch w("cascade sweep, alpha=0.1");
    fig3 = run_fig3(cascade_spec);
  }
  {
    Stopwatch w("timeline run, N=500, alpha=1/3");
    ModelParams p;
    p.n_atoms = kTimelineAtoms;
    p.alpha = kTimelineAlpha;
    fig4 = run_fig4(p, jobs);
  }
  {
    Stopwatch w("alpha=0.05 run, N=500");
    ModelParams p;
    p.n_atoms = kTimelineAtoms;
    scan = run_alpha_scan(p, {kExtraAlpha}, jobs);
  }
  {
    Stopwatch w("alpha=0 reduction, N=100");
    ModelParams p;
    p.n_atoms = kReductionAtoms;
    p.alpha = 0.0;
    const auto two = evolve_two_level(p);
    const auto cas = evolve_cascade(p);
    reduction_points = std::min(two.size(), cas.size());
    reduction_conservation = std::max(two.max_conservation_error(), cas.max_conservation_error());
    for (std::size_t j = 0; j < reduction_points; ++j) {
      if (two.times[j] != cas.times[j]) {
        reduction_diff = std::numeric_limits<double>::infinity();
        break;
      }
      const auto c = static_cast<Eigen::Index>(j);
      reduction_diff = std::max(
          reduction_diff, (two.upper_marginal.col(c) - cas.upper_marginal.col(c)).cwiseAbs().maxCoeff());
    }
  }
  {
    Stopwatch w("oracles, " + std::to_string(trials) + " trials each");
    ModelParams p;
    p.n_atoms = kOracleAtoms;
    p.alpha = kOracleAlpha;
    oracle_two = run_oracle(p, ModelKind::two_level, trials, jobs);
    oracle_cascade = run_oracle(p, ModelKind::cascade, trials, jobs);
  }
  {
    Stopwatch w("writing datasets");
    write_outputs({&*fig2, &*fig3, &*fig4, &*scan, &*oracle_two}, fs::path(out) / "datasets",
                  OutputFormat::csv, {{"suite", "acceptance"}});
    write_outputs({&*oracle_cascade}, fs::path(out) / "oracle_cascade", OutputFormat::csv,
                  {{"suite", "acceptance"}});
  }

  std::vector<Criterion> criteria;

  {  // 1
    Criterion c{1, "probability conservation on every trajectory"};
    double worst = reduction_conservation;
    for (const auto* pts : {&fig2->points, &fig3->points, &scan->points})
      for (const auto& p : *pts) worst = std::max(worst, p.max_conservation);
    worst = std::max({worst, fig4->run.max_conservation, oracle_two->max_conservation,
                      oracle_cascade->max_conservation});
    c.expect(check_below("max |sum P - 1| over all runs", worst, tol.conservation * (1 + 1e-12)));
    criteria.push_back(std::move(c));
  }
  {  // 2
    Criterion c{2, "two-level delay four ways at N=500"};
    const auto& run = point_at(fig2->points, 500);
    const auto& d = run.report.mode(Mode::two_level);
    const double pred = run.report.tau_predicted;
    c.expect(check_rel("argmax delay", d.tau_argmax, pred, tol.estimator_rel));
    c.expect(check_rel("partial delay (harmonic)", *d.tau_partial, pred, tol.estimator_rel));
    c.expect(check_rel("partial delay (quadrature)", *d.tau_partial_numeric, pred, tol.estimator_rel));
    c.expect(check_rel("<tau(inf)>", d.tau_infty, pred, tol.estimator_rel));
    c.expect(check_rel("sigma-minimum delay", d.tau_sigma_min, pred, tol.estimator_rel));
    c.expect(check_abs("argmax delay vs printed value", d.tau_argmax, target.first_peak, tol.argmax_abs));
    criteria.push_back(std::move(c));
  }
  {  // 3
    Criterion c{3, "harmonic identities, every N"};
    for (const auto& run : fig2->points) {
      const int n = run.params.n_atoms;
      const auto& d = run.report.mode(Mode::two_level);
      const double h = harmonic_delay(n);
      const std::string tag = " (N=" + std::to_string(n) + ")";
      c.expect(check_rel("partial delay analytic" + tag, *d.tau_partial, half_harmonic_delay(n),
                         kHarmonicExact));
      c.expect(check_rel("single-photon delay analytic" + tag, partial_delay_harmonic(n, 1, n), 2 * h,
                         kHarmonicExact));
      c.expect(check_rel("partial delay quadrature" + tag, *d.tau_partial_numeric, half_harmonic_delay(n),
                         tol.harmonic_rel));
      c.expect(check_rel("single-photon delay quadrature" + tag, *run.single_numeric, 2 * h,
                         tol.harmonic_rel));
    }
    criteria.push_back(std::move(c));
  }
  {  // 4
    Criterion c{4, "total pulse area equals N per mode"};
    auto areas = [&](const RunSummary& run, const std::string& where) {
      for (const auto& d : run.report.modes)
        c.expect(check_rel(where + " area (N=" + std::to_string(run.params.n_atoms) + ", " +
                               to_string(d.mode) + ")",
                           d.area_end, run.params.n_atoms, tol.area_rel));
    };
    for (const auto& run : fig2->points) areas(run, "two-level sweep");
    for (const auto& run : fig3->points) areas(run, "cascade sweep");
    areas(fig4->run, "timeline");
    for (const auto& run : scan->points) areas(run, "alpha=0.05");
    criteria.push_back(std::move(c));
  }
  {  // 5
    Criterion c{5, "single-photon probe at N=500"};
    const auto& run = point_at(fig2->points, 500);
    const auto& p = *run.probe;
    // The probe time is twice the measured time to the intensity peak.
    c.note("probe time 2 tau_D = " + format_number(p.t_peak_based) + " (2 x intensity-peak time)");
    c.expect(check_abs("P0(2 tau_D)", p.at_peak_based[0], target.probe_p0, tol.probe_abs));
    c.expect(check_abs("P1(2 tau_D)", p.at_peak_based[1], target.probe_p1, tol.probe_abs));
    c.expect(check_abs("P2(2 tau_D)", p.at_peak_based[2], target.probe_p2, tol.probe_abs));
    c.expect(check_rel("argmax_t P1(t) vs 2(E0+ln N)/N", p.p1_argmax, p.t_formula, tol.probe_argmax_rel));
    c.note("at 2(E0+ln N)/N = " + format_number(p.t_formula) + ": P0,P1,P2 = " +
           format_number(p.at_formula[0]) + ", " + format_number(p.at_formula[1]) + ", " +
           format_number(p.at_formula[2]));
    criteria.push_back(std::move(c));
  }
  {  // 6
    Criterion c{6, "scaling fits over the N sweep"};
    expect_named(c, *fig2, "fig2 intensity max vs N^2 relative residual (two-level)");
    expect_named(c, *fig2, "fig2 sigma(inf) vs pi/sqrt(6)/(E0+ln N) residual norm (two-level)");
    c.note("sigma(inf) fit slope " + format_number(fig2->sigma_fits[0].slope) + ", intercept " +
           format_number(fig2->sigma_fits[0].intercept));
    criteria.push_back(std::move(c));
  }
  {  // 7
    Criterion c{7, "cascade timeline at N=500, alpha=1/3"};
    for (const char* name : {"first-mode intensity peak", "second-mode first sigma minimum",
                             "second-mode intensity peak", "second-mode <tau(inf)>", "P_00(t=0.1)"})
      expect_named(c, *fig4, name);
    criteria.push_back(std::move(c));
  }
  {  // 8
    Criterion c{8, "alpha (<tau2(inf)> - <tau1(inf)>) / tau_1D = 1 at N=500"};
    std::vector<const RunSummary*> runs{&scan->points.front(), &point_at(fig3->points, 500), &fig4->run};
    for (const auto* run : runs)
      c.expect(check_rel("alpha=" + format_number(run->params.alpha), *run->report.lower_gap_scaled /
                                                                          run->report.tau_predicted,
                         1.0, tol.alpha_scaling_rel));
    criteria.push_back(std::move(c));
  }
  {  // 9
    Criterion c{9, "alpha=0 cascade reduces to the two-level solution at N=100"};
    c.expect(check_below("max |P_n cascade - P_n two-level| over " + std::to_string(reduction_points) +
                             " grid points",
                         reduction_diff, tol.reduction_abs * (1 + 1e-12)));
    criteria.push_back(std::move(c));
  }
  {  // 10
    Criterion c{10, "stochastic oracle agrees with the ODE at N=100"};
    for (const auto* r : {&*oracle_two, &*oracle_cascade}) {
      for (const auto& check : r->checks) c.expect(check);
      c.note(r->summary["model"].get<std::string>() + ": mean completion " +
             format_number(r->completion.mean) + " +- " + format_number(r->completion.std_error) +
             " vs " + format_number(r->expected_completion));
      c.note(r->summary["model"].get<std::string>() + ": total variation expected from sampling noise alone " +
             format_number(expected_noise_tv(*r)));
    }
    criteria.push_back(std::move(c));
  }
  {  // 11
    Criterion c{11, "identical config and seed give byte-identical outputs"};
    Stopwatch w("determinism reruns");
    SweepSpec rerun_spec = two_level_spec;
    rerun_spec.jobs = std::max(1, jobs == 1 ? 2 : 1);
    const auto fig2_again = run_fig2(rerun_spec);
    ModelParams p;
    p.n_atoms = kOracleAtoms;
    p.alpha = kOracleAlpha;
    const auto oracle_again = run_oracle(p, ModelKind::two_level, trials, rerun_spec.jobs);
    ModelParams small = p;
    small.n_atoms = 60;
    const auto cascade_a = run_single(small, ModelKind::cascade, true);
    const auto cascade_b = run_single(small, ModelKind::cascade, true);
    std::string detail;
    const bool same = identical_outputs({&*fig2, &*oracle_two, &cascade_a},
                                        {&fig2_again, &oracle_again, &cascade_b},
                                        fs::path(out) / "determinism", detail);
    c.expect(Check{"rerun outputs (" + detail + ")", same ? 1.0 : 0.0, 1.0, "identical", same});
    criteria.push_back(std::move(c));
  }

  int failed = 0;
  std::printf("\n");
  for (const auto& c : criteria) {
    std::printf("%s  criterion %2d: %s\n", c.passed ? "PASS" : "FAIL", c.id, c.title.c_str());
    for (const auto& line : c.lines)
      if (line.rfind("ok", 0) != 0 || !c.passed) std::printf("        %s\n", line.c_str());
    if (!c.passed) ++failed;
  }
  std::printf("\n%zu criteria, %d passed, %d failed\n", criteria.size(),
              static_cast<int>(criteria.size()) - failed, failed);
  return failed ? 1 : 0;
}
