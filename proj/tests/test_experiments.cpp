#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "csr/experiments.hpp"

using namespace csr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SweepSpec small_sweep(int jobs) {
  SweepSpec spec;
  spec.n_values = {20, 30, 40};
  spec.alpha = 0.2;
  spec.jobs = jobs;
  return spec;
}

const Check* find(const ExperimentResult& r, const std::string& prefix) {
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

}  // namespace

TEST_CASE("check helpers") {
  CHECK(check_abs("a", 0.0135, 0.013, 0.001).passed);
  CHECK_FALSE(check_abs("a", 0.0145, 0.013, 0.001).passed);
  CHECK(check_rel("r", 1.05, 1.0, 0.1).passed);
  CHECK_FALSE(check_rel("r", 1.2, 1.0, 0.1).passed);
  CHECK(check_below("b", 0.5, 1.0).passed);
  CHECK_FALSE(check_below("b", std::nan(""), 1.0).passed);
  CHECK_FALSE(check_above("c", std::nan(""), 1.0).passed);
  CHECK(check_above("c", 2.0, 1.0).band == "> 1");
  CHECK_FALSE(check_abs("nan", std::nan(""), 1.0, 1.0).passed);
}

TEST_CASE("figure names and sweep validation") {
  CHECK(figure_from_string("fig3") == Figure::fig3);
  CHECK(to_string(Figure::fig4) == "fig4");
  CHECK_THROWS_AS(figure_from_string("fig9"), DomainError);
  CHECK(default_sweep().size() == 11);
  CHECK(default_sweep().front() == 100);
  CHECK(default_sweep().back() == 500);
  SweepSpec spec;
  spec.n_values = {};
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec.n_values = {1, 10};
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec.n_values = {10};
  CHECK_THROWS_AS(spec.validate(), DomainError);
  CHECK(timeline_times().size() == 6);
}

TEST_CASE("two-level sweep pipeline") {
  const auto r = run_fig2(small_sweep(1));
  CHECK(r.name == "fig2");
  REQUIRE(r.points.size() == 3);
  REQUIRE(r.intensity_fits.size() == 1);
  CHECK(r.intensity_fits[0].slope > 0.15);
  CHECK(r.intensity_fits[0].slope < 0.26);
  std::vector<std::string> names;
  for (const auto& t : r.tables) names.push_back(t.name);
  CHECK(names == std::vector<std::string>{"fig2_series", "fig2_delays", "fig2_scaling", "fig2_probe"});
  const auto* conservation = find(r, "conservation (N=20)");
  REQUIRE(conservation);
  CHECK(conservation->passed);
  const auto* identity = find(r, "partial delay harmonic form vs H_N/(N+1) (N=40)");
  REQUIRE(identity);
  CHECK(identity->passed);
  // The N >= 200 estimator checks do not apply to this sweep.
  CHECK(find(r, "argmax delay vs") == nullptr);
}

TEST_CASE("pipelines are byte-identical across reruns and thread counts") {
  const auto a = run_fig2(small_sweep(1));
  const auto b = run_fig2(small_sweep(3));
  REQUIRE(a.tables.size() == b.tables.size());
  for (std::size_t i = 0; i < a.tables.size(); ++i) CHECK(a.tables[i].to_csv() == b.tables[i].to_csv());

  const auto base = fs::temp_directory_path() / "csr_experiments_test";
  fs::remove_all(base);
  const auto written = write_outputs({&a}, base / "a", OutputFormat::csv, {{"k", 1}});
  write_outputs({&b}, base / "b", OutputFormat::csv, {{"k", 1}});
  CHECK(written.size() == a.tables.size() + 1);
  for (const auto& path : written)
    CHECK(slurp(path) == slurp(base / "b" / path.filename()));

  const auto summary = nlohmann::json::parse(slurp(base / "a" / "summary.json"));
  CHECK(summary["schema"] == 1);
  CHECK(summary["config"]["k"] == 1);
  CHECK(summary["experiments"]["fig2"]["checks"].size() == a.checks.size());
  CHECK(summary["passed"].get<bool>() == a.passed());

  write_outputs({&a}, base / "json", OutputFormat::json);
  const auto table = nlohmann::json::parse(slurp(base / "json" / "fig2_delays.json"));
  CHECK(table["rows"].size() == 3);
  fs::remove_all(base);
}

TEST_CASE("cascade sweep pipeline") {
  const auto r = run_fig3(small_sweep(2));
  REQUIRE(r.points.size() == 3);
  CHECK(r.intensity_fits.size() == 2);
  CHECK(find(r, "alpha (<tau2(inf)> - <tau1(inf)>) / tau_1D (N=40)") != nullptr);
  CHECK(find(r, "upper-mode argmax delay vs two-level (N=30)") != nullptr);
  const auto* area = find(r, "pulse area (N=40, cascade-lower)");
  REQUIRE(area);
  CHECK(area->passed);
}

TEST_CASE("timeline pipeline at small N") {
  ModelParams p;
  p.n_atoms = 30;
  p.alpha = 1.0 / 3.0;
  const auto r = run_fig4(p);
  REQUIRE(r.snapshots.size() == timeline_times().size());
  for (const auto& s : r.snapshots) {
    CHECK(s.total == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(s.table.rows.size() == cascade_state_size(30));
  }
  const auto* start = find(r, "snapshot t=0 mass at n=m=N");
  REQUIRE(start);
  CHECK(start->passed);
  CHECK(r.tables.front().name == "fig4_series");
  CHECK(r.tables[1].name == "fig4_snapshot_t0");
  CHECK(r.tables[2].name == "fig4_snapshot_t0.013");
  CHECK(r.absorbed_at_probe > 0.0);
}

TEST_CASE("alpha scan, single runs and oracle runs") {
  ModelParams p;
  p.n_atoms = 25;
  const auto scan = run_alpha_scan(p, {0.2, 0.5}, 2);
  CHECK(scan.points.size() == 2);
  CHECK(scan.tables.front().rows.size() == 2);
  CHECK_THROWS_AS(run_alpha_scan(p, {}), DomainError);
  CHECK_THROWS_AS(run_alpha_scan(p, {0.0}), DomainError);

  const auto single = run_single(p, ModelKind::two_level, true);
  CHECK(single.passed());
  CHECK(single.tables.size() == 2);
  CHECK(single.tables[1].name == "two_level_trajectory");

  const auto oracle = run_oracle(p, ModelKind::two_level, 5000, 2, true);
  CHECK(oracle.tables.size() == 3);
  CHECK(oracle.max_total_variation < 0.05);
  CHECK(oracle.summary["n_trials"] == 5000);
  const auto grid = oracle_reference_grid(p, ModelKind::cascade);
  CHECK(grid.size() == 64);
  CHECK(grid.back() > oracle_reference_grid(p, ModelKind::two_level).back());
}
