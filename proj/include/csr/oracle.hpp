#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "csr/evolver.hpp"
#include "csr/observables.hpp"

namespace csr {

/// Exact stochastic simulation of the same jump processes the evolver
/// integrates. Used only as an independent check on the deterministic path.

enum class Transition : std::uint8_t { upper = 0, lower = 1 };

struct JumpEvent {
  double time = 0.0;
  Transition transition = Transition::upper;
};

struct TrialSummary {
  double completion_time = 0.0;
  /// Time of the ceil(N/2)-th event of each transition (NaN if it never fires).
  double upper_half_time = 0.0;
  double lower_half_time = 0.0;
  int upper_events = 0;
  int lower_events = 0;
};

/// Empirical occupation distributions on a reference grid; column j is the
/// distribution at grid[j]. `intermediate` and `lower` are empty for two-level.
struct EmpiricalMarginals {
  std::vector<double> grid;
  Eigen::MatrixXd upper;
  Eigen::MatrixXd intermediate;
  Eigen::MatrixXd lower;
};

struct TrialEnsemble {
  ModelKind kind = ModelKind::two_level;
  ModelParams params;
  int n_trials = 0;
  std::uint64_t seed = 0;
  std::vector<TrialSummary> trials;
  /// Filled only when SamplingOptions::keep_event_logs is set.
  std::vector<std::vector<JumpEvent>> event_logs;
  EmpiricalMarginals summary;
};

struct SamplingOptions {
  /// Times at which occupation histograms are accumulated.
  std::vector<double> reference_grid;
  bool keep_event_logs = false;
  int jobs = 1;
};

/// Pure-death chain: N sequential exponential waits at rates I(N), ..., I(1).
TrialEnsemble sample_two_level(const ModelParams& params, int n_trials,
                               const SamplingOptions& options = {});

/// Gillespie on (n, m): wait Exp(I1 + I2), then pick the upper transition with
/// probability I1 / (I1 + I2). The selection uniform is drawn only when both
/// transitions are possible, so with alpha = 0 a trial consumes exactly the
/// random numbers of the two-level trial with the same stream.
TrialEnsemble sample_cascade(const ModelParams& params, int n_trials,
                             const SamplingOptions& options = {});

struct EmpiricalDelay {
  double mean = 0.0;
  /// Sample standard deviation over mean; 0 for a single trial.
  double normalized_std = 0.0;
  double std_error = 0.0;
};

/// Per-trial delay is the time of the ceil(N/2)-th event of the mode.
EmpiricalDelay empirical_delay(const TrialEnsemble& ensemble, Mode mode);
EmpiricalDelay completion_time_stats(const TrialEnsemble& ensemble);

/// Largest total-variation distance between the empirical and deterministic
/// marginals over the reference grid (all marginals the ensemble carries).
double max_total_variation(const TrialEnsemble& ensemble, const Trajectory& traj);

/// sum_n 1 / I(n), the exact mean time to full decay of the two-level chain.
double expected_two_level_completion(int n_atoms);

/// int_0^end (1 - absorbed(t)) dt from a trajectory.
double expected_completion_from(const Trajectory& traj);

}  // namespace csr
