#include "csr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "csr/parallel.hpp"
#include "csr/random.hpp"

namespace csr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Counts = std::vector<std::uint64_t>;

/// Occupation histograms of one worker, laid out [grid point][level].
struct Histograms {
  Counts upper, intermediate, lower;
};

void validate_request(const ModelParams& params, int n_trials) {
  params.validate();
  if (n_trials < 1) throw DomainError("sampling requires n_trials >= 1");
}

void check_grid(const std::vector<double>& grid) {
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw DomainError("reference grid must be sorted");
}

int half_index(int n_atoms) { return (n_atoms + 1) / 2; }

/// Walks the event log once, recording the occupation at every grid time.
void accumulate(const std::vector<JumpEvent>& events, int n_atoms, bool cascade,
                const std::vector<double>& grid, Histograms& h) {
  int n = n_atoms, m = n_atoms;
  std::size_t e = 0;
  const std::size_t width = static_cast<std::size_t>(n_atoms) + 1;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    while (e < events.size() && events[e].time <= grid[g]) {
      if (events[e].transition == Transition::upper)
        --n;
      else
        --m;
      ++e;
    }
    ++h.upper[g * width + static_cast<std::size_t>(n)];
    if (cascade) {
      ++h.intermediate[g * width + static_cast<std::size_t>(m - n)];
      ++h.lower[g * width + static_cast<std::size_t>(n_atoms - m)];
    }
  }
}

std::vector<JumpEvent> run_trial(const ModelParams& params, bool cascade, int trial) {
  Xoshiro256 rng(params.seed, static_cast<std::uint64_t>(trial));
  const int n_atoms = params.n_atoms;
  std::vector<JumpEvent> events;
  events.reserve(static_cast<std::size_t>(cascade ? 2 * n_atoms : n_atoms));
  double t = 0.0;
  if (!cascade) {
    for (int n = n_atoms; n >= 1; --n) {
      t += rng.standard_exponential() / two_level_rate<double>(n, n_atoms);
      events.push_back({t, Transition::upper});
    }
    return events;
  }
  int n = n_atoms, m = n_atoms;
  for (;;) {
    const auto [upper, lower] = cascade_rates<double>(n, m, n_atoms, params.alpha);
    const double total = upper + lower;
    if (total <= 0.0) break;
    t += rng.standard_exponential() / total;
    bool take_upper = lower <= 0.0;
    if (upper > 0.0 && lower > 0.0) take_upper = rng.uniform_open_zero() * total <= upper;
    if (take_upper) {
      --n;
      events.push_back({t, Transition::upper});
    } else {
      --m;
      events.push_back({t, Transition::lower});
    }
  }
  return events;
}

TrialSummary summarize(const std::vector<JumpEvent>& events, int n_atoms) {
  TrialSummary s;
  s.upper_half_time = kNaN;
  s.lower_half_time = kNaN;
  const int half = half_index(n_atoms);
  for (const auto& e : events) {
    if (e.transition == Transition::upper) {
      if (++s.upper_events == half) s.upper_half_time = e.time;
    } else {
      if (++s.lower_events == half) s.lower_half_time = e.time;
    }
  }
  s.completion_time = events.empty() ? 0.0 : events.back().time;
  return s;
}

TrialEnsemble sample(const ModelParams& params, int n_trials, const SamplingOptions& options,
                     bool cascade) {
  validate_request(params, n_trials);
  check_grid(options.reference_grid);

  TrialEnsemble ensemble;
  ensemble.kind = cascade ? ModelKind::cascade : ModelKind::two_level;
  ensemble.params = params;
  ensemble.n_trials = n_trials;
  ensemble.seed = params.seed;
  ensemble.trials.resize(static_cast<std::size_t>(n_trials));
  if (options.keep_event_logs) ensemble.event_logs.resize(static_cast<std::size_t>(n_trials));

  const int n_atoms = params.n_atoms;
  const auto& grid = options.reference_grid;
  const std::size_t cells = grid.size() * (static_cast<std::size_t>(n_atoms) + 1);
  const int jobs = std::max(1, std::min(options.jobs, n_trials));
  std::vector<Histograms> per_worker(static_cast<std::size_t>(jobs));
  for (auto& h : per_worker) {
    h.upper.assign(cells, 0);
    if (cascade) {
      h.intermediate.assign(cells, 0);
      h.lower.assign(cells, 0);
    }
  }

  parallel_for(static_cast<std::size_t>(n_trials), jobs, [&](std::size_t i, std::size_t worker) {
    auto events = run_trial(params, cascade, static_cast<int>(i));
    ensemble.trials[i] = summarize(events, n_atoms);
    accumulate(events, n_atoms, cascade, grid, per_worker[worker]);
    if (options.keep_event_logs) ensemble.event_logs[i] = std::move(events);
  });

  // Integer counts reduce exactly, so the result is independent of scheduling.
  Histograms total = std::move(per_worker.front());
  for (std::size_t w = 1; w < per_worker.size(); ++w) {
    for (std::size_t c = 0; c < cells; ++c) {
      total.upper[c] += per_worker[w].upper[c];
      if (cascade) {
        total.intermediate[c] += per_worker[w].intermediate[c];
        total.lower[c] += per_worker[w].lower[c];
      }
    }
  }
  auto to_matrix = [&](const Counts& counts) {
    Eigen::MatrixXd out(n_atoms + 1, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t g = 0; g < grid.size(); ++g)
      for (int n = 0; n <= n_atoms; ++n)
        out(n, static_cast<Eigen::Index>(g)) =
            static_cast<double>(counts[g * (static_cast<std::size_t>(n_atoms) + 1) +
                                       static_cast<std::size_t>(n)]) /
            n_trials;
    return out;
  };
  ensemble.summary.grid = grid;
  ensemble.summary.upper = to_matrix(total.upper);
  if (cascade) {
    ensemble.summary.intermediate = to_matrix(total.intermediate);
    ensemble.summary.lower = to_matrix(total.lower);
  }
  return ensemble;
}

EmpiricalDelay stats_of(const std::vector<double>& values) {
  EmpiricalDelay out;
  const auto count = static_cast<double>(values.size());
  if (values.empty()) throw DomainError("empirical statistics of an empty ensemble");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / count;
  double squares = 0.0;
  for (double v : values) squares += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(squares / (count - 1.0)) : 0.0;
  out.mean = mean;
  out.normalized_std = mean != 0.0 ? sd / mean : 0.0;
  out.std_error = sd / std::sqrt(count);
  return out;
}

/// Column of `m` at time t, linearly interpolated on the trajectory grid.
Eigen::VectorXd column_at(const Eigen::MatrixXd& m, const std::vector<double>& times, double t) {
  if (t <= times.front()) return m.col(0);
  if (t >= times.back()) return m.col(static_cast<Eigen::Index>(times.size() - 1));
  const auto hi = static_cast<Eigen::Index>(std::upper_bound(times.begin(), times.end(), t) -
                                            times.begin());
  const Eigen::Index lo = hi - 1;
  const double w = (t - times[static_cast<std::size_t>(lo)]) /
                   (times[static_cast<std::size_t>(hi)] - times[static_cast<std::size_t>(lo)]);
  if (w <= 1e-12) return m.col(lo);
  return (1.0 - w) * m.col(lo) + w * m.col(hi);
}

}  // namespace

TrialEnsemble sample_two_level(const ModelParams& params, int n_trials,
                               const SamplingOptions& options) {
  return sample(params, n_trials, options, false);
}

TrialEnsemble sample_cascade(const ModelParams& params, int n_trials,
                             const SamplingOptions& options) {
  return sample(params, n_trials, options, true);
}

EmpiricalDelay empirical_delay(const TrialEnsemble& ensemble, Mode mode) {
  std::vector<double> values;
  values.reserve(ensemble.trials.size());
  for (const auto& t : ensemble.trials) {
    const double v = mode == Mode::cascade_lower ? t.lower_half_time : t.upper_half_time;
    if (std::isnan(v)) throw DomainError("empirical_delay: mode never reaches half population");
    values.push_back(v);
  }
  if (mode == Mode::two_level && ensemble.kind != ModelKind::two_level)
    throw DomainError("empirical_delay: two-level mode on a cascade ensemble");
  if (mode != Mode::two_level && ensemble.kind != ModelKind::cascade)
    throw DomainError("empirical_delay: cascade mode on a two-level ensemble");
  return stats_of(values);
}

EmpiricalDelay completion_time_stats(const TrialEnsemble& ensemble) {
  std::vector<double> values;
  values.reserve(ensemble.trials.size());
  for (const auto& t : ensemble.trials) values.push_back(t.completion_time);
  return stats_of(values);
}

double max_total_variation(const TrialEnsemble& ensemble, const Trajectory& traj) {
  if (ensemble.kind != traj.kind) throw DomainError("max_total_variation: model kinds differ");
  if (ensemble.params.n_atoms != traj.n_atoms())
    throw DomainError("max_total_variation: atom counts differ");
  const auto& grid = ensemble.summary.grid;
  double worst = 0.0;
  auto compare = [&](const Eigen::MatrixXd& empirical, const Eigen::MatrixXd& exact) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (grid[g] > traj.end_time()) continue;
      const Eigen::VectorXd p = column_at(exact, traj.times, grid[g]);
      const double tv = 0.5 * (empirical.col(static_cast<Eigen::Index>(g)) - p).cwiseAbs().sum();
      worst = std::max(worst, tv);
    }
  };
  compare(ensemble.summary.upper, traj.upper_marginal);
  if (ensemble.kind == ModelKind::cascade) {
    compare(ensemble.summary.intermediate, traj.intermediate_marginal);
    compare(ensemble.summary.lower, traj.lower_marginal);
  }
  return worst;
}

double expected_two_level_completion(int n_atoms) { return partial_delay_harmonic(n_atoms, 1, n_atoms); }

double expected_completion_from(const Trajectory& traj) {
  double total = 0.0;
  for (std::size_t j = 1; j < traj.size(); ++j)
    total += 0.5 * (traj.times[j] - traj.times[j - 1]) *
             ((1.0 - traj.absorbed[j - 1]) + (1.0 - traj.absorbed[j]));
  return total;
}

}  // namespace csr
