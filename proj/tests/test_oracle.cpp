#include <doctest.h>

#include <cmath>
#include <set>

#include "csr/oracle.hpp"
#include "csr/random.hpp"

using namespace csr;

namespace {

ModelParams params_for(int n_atoms, double alpha = 0.1, std::uint64_t seed = 42) {
  ModelParams p;
  p.n_atoms = n_atoms;
  p.alpha = alpha;
  p.seed = seed;
  return p;
}

SamplingOptions with_logs(int jobs = 1, std::vector<double> grid = {}) {
  SamplingOptions o;
  o.keep_event_logs = true;
  o.jobs = jobs;
  o.reference_grid = std::move(grid);
  return o;
}

bool same_logs(const TrialEnsemble& a, const TrialEnsemble& b) {
  if (a.event_logs.size() != b.event_logs.size()) return false;
  for (std::size_t i = 0; i < a.event_logs.size(); ++i) {
    if (a.event_logs[i].size() != b.event_logs[i].size()) return false;
    for (std::size_t e = 0; e < a.event_logs[i].size(); ++e)
      if (a.event_logs[i][e].time != b.event_logs[i][e].time ||
          a.event_logs[i][e].transition != b.event_logs[i][e].transition)
        return false;
  }
  return true;
}

}  // namespace

TEST_CASE("SplitMix64 reference output") {
  // First output of SplitMix64 seeded with 0.
  CHECK(splitmix64_mix(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("xoshiro streams are reproducible and distinct") {
  Xoshiro256 a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    firsts.insert(x);
  }
  CHECK(firsts.size() == 100);
  CHECK(Xoshiro256(7, 3)() != c());
  CHECK(Xoshiro256(7, 3)() != d());
  Xoshiro256 u(1);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform_open_zero();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
  }
  CHECK(lo > 0.0);
  CHECK(hi <= 1.0);
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
  Xoshiro256 e(2);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += e.standard_exponential();
  CHECK(mean / 100000 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("two-level trials have exactly N ordered events") {
  const auto ens = sample_two_level(params_for(25), 200, with_logs());
  REQUIRE(ens.event_logs.size() == 200);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& log = ens.event_logs[i];
    CHECK(log.size() == 25);
    for (std::size_t e = 1; e < log.size(); ++e) CHECK(log[e].time >= log[e - 1].time);
    CHECK(ens.trials[i].upper_events == 25);
    CHECK(ens.trials[i].completion_time == log.back().time);
    CHECK(ens.trials[i].upper_half_time == log[12].time);  // event ceil(25/2) = 13
  }
}

TEST_CASE("cascade trials end in the absorbing state") {
  const auto ens = sample_cascade(params_for(20, 0.3), 300, with_logs());
  for (std::size_t i = 0; i < ens.trials.size(); ++i) {
    const auto& log = ens.event_logs[i];
    CHECK(ens.trials[i].upper_events == 20);
    CHECK(ens.trials[i].lower_events == 20);
    CHECK(log.size() == 40);
    // Occupations stay valid: intermediate count never negative.
    int n = 20, m = 20;
    for (const auto& ev : log) {
      if (ev.transition == Transition::upper) --n; else --m;
      CHECK(n >= 0);
      CHECK(n <= m);
    }
  }
}

TEST_CASE("determinism and schedule independence") {
  const std::vector<double> grid{0.01, 0.05, 0.1, 0.3};
  const auto a = sample_cascade(params_for(15, 0.2, 99), 500, with_logs(1, grid));
  const auto b = sample_cascade(params_for(15, 0.2, 99), 500, with_logs(4, grid));
  CHECK(same_logs(a, b));
  CHECK(a.summary.upper == b.summary.upper);
  CHECK(a.summary.lower == b.summary.lower);
  const auto c = sample_cascade(params_for(15, 0.2, 100), 500, with_logs(1, grid));
  CHECK_FALSE(same_logs(a, c));
  // A prefix of the trials is the same regardless of ensemble size.
  const auto d = sample_cascade(params_for(15, 0.2, 99), 100, with_logs(3, grid));
  for (std::size_t i = 0; i < 100; ++i) CHECK(d.trials[i].completion_time == a.trials[i].completion_time);
}

TEST_CASE("alpha = 0 cascade replays the two-level stream") {
  const auto two = sample_two_level(params_for(30, 0.0, 5), 50, with_logs());
  const auto cas = sample_cascade(params_for(30, 0.0, 5), 50, with_logs());
  CHECK(same_logs(two, cas));
}

TEST_CASE("single-atom completion time is Exp(1)") {
  const auto ens = sample_two_level(params_for(1), 100000);
  const auto stats = completion_time_stats(ens);
  CHECK(std::abs(stats.mean - 1.0) < 3.0 * stats.std_error);
  CHECK(stats.normalized_std == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("mean completion time matches sum 1/I(n)") {
  const auto ens = sample_two_level(params_for(40), 40000, with_logs(2));
  const auto stats = completion_time_stats(ens);
  CHECK(std::abs(stats.mean - expected_two_level_completion(40)) < 3.0 * stats.std_error);
  const auto delay = empirical_delay(ens, Mode::two_level);
  double exact = 0.0;
  for (int n = 21; n <= 40; ++n) exact += 1.0 / two_level_rate(n, 40);
  CHECK(std::abs(delay.mean - exact) < 3.0 * delay.std_error);
}

TEST_CASE("single trial has zero spread") {
  const auto ens = sample_two_level(params_for(10), 1);
  const auto d = empirical_delay(ens, Mode::two_level);
  CHECK(d.normalized_std == 0.0);
  CHECK(d.std_error == 0.0);
}

TEST_CASE("empirical marginals match the deterministic solution") {
  const auto p = params_for(20, 0.2);
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(0.02 * i);
  EvolveOptions opt;
  opt.extra_times = grid;
  SamplingOptions s;
  s.reference_grid = grid;
  s.jobs = 2;

  const auto two_traj = evolve_two_level(p, opt);
  const auto two = sample_two_level(p, 40000, s);
  CHECK(max_total_variation(two, two_traj) < 0.02);

  const auto cas_traj = evolve_cascade(p, opt);
  const auto cas = sample_cascade(p, 40000, s);
  CHECK(max_total_variation(cas, cas_traj) < 0.02);
  for (Eigen::Index g = 0; g < cas.summary.upper.cols(); ++g) {
    CHECK(cas.summary.upper.col(g).sum() == doctest::Approx(1.0));
    CHECK(cas.summary.lower.col(g).sum() == doctest::Approx(1.0));
  }
  const auto stats = completion_time_stats(cas);
  CHECK(std::abs(stats.mean - expected_completion_from(cas_traj)) < 3.0 * stats.std_error);
  CHECK_THROWS_AS(max_total_variation(two, cas_traj), DomainError);
}

TEST_CASE("a slow lower transition separates the two bursts") {
  const auto p = params_for(50, 0.01);
  const auto ens = sample_cascade(p, 500);
  const double lower_peak = p.predicted_delay() / p.alpha;
  for (const auto& t : ens.trials) CHECK(t.upper_half_time < 0.2 * lower_peak);
  const auto upper = empirical_delay(ens, Mode::cascade_upper);
  const auto lower = empirical_delay(ens, Mode::cascade_lower);
  CHECK(lower.mean > 10.0 * upper.mean);
}

TEST_CASE("oracle argument checks") {
  CHECK_THROWS_AS(sample_two_level(params_for(10), 0), DomainError);
  SamplingOptions unsorted;
  unsorted.reference_grid = {0.2, 0.1};
  CHECK_THROWS_AS(sample_two_level(params_for(10), 10, unsorted), DomainError);
  const auto ens = sample_two_level(params_for(10), 10);
  CHECK_THROWS_AS(empirical_delay(ens, Mode::cascade_upper), DomainError);
}
