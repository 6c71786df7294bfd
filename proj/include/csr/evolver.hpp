#pragma once

#include <vector>

#include <Eigen/Core>

#include "csr/integrator.hpp"
#include "csr/model.hpp"

namespace csr {

enum class Stepper {
  /// Dormand-Prince for the two-level ladder, Radau for the cascade.
  automatic,
  dopri5,
  radau,
};

struct EvolveOptions {
  Stepper stepper = Stepper::automatic;
  /// Extra output times merged into the default grid.
  std::vector<double> extra_times;
  /// Cascade only: times at which the full packed state is retained. They are
  /// merged into the grid as well.
  std::vector<double> snapshot_times;
  int log_points = 2000;
  int peak_points = 500;
  double log_start = 1e-5;
};

/// Time evolution sampled on an output grid.
///
/// Two-level runs keep P_n at every grid point in `upper_marginal`. Cascade
/// runs keep the three occupation marginals (upper n, intermediate m - n,
/// lower N - m) plus full states only at the requested snapshot times; the
/// full history of 125k-cell states would not fit in memory at N = 500.
struct Trajectory {
  ModelKind kind = ModelKind::two_level;
  ModelParams params;
  std::vector<double> times;
  /// |sum P - 1| at each grid point.
  std::vector<double> conservation;
  /// Probability held by states with zero outflow.
  std::vector<double> absorbed;
  /// <I(t)> for the two-level ladder, <I_1(t)> for the cascade.
  std::vector<double> upper_intensity;
  /// <I_2(t)>; empty for two-level runs.
  std::vector<double> lower_intensity;
  /// Column j is the distribution of the upper-level count at times[j].
  Eigen::MatrixXd upper_marginal;
  Eigen::MatrixXd intermediate_marginal;
  Eigen::MatrixXd lower_marginal;
  std::vector<CascadeState> snapshots;
  IntegrationStats stats;
  bool absorbed_before_cap = false;

  int n_atoms() const { return params.n_atoms; }
  std::size_t size() const { return times.size(); }
  double end_time() const { return times.back(); }
  double max_conservation_error() const;
  /// Two-level only: P_n at grid point j.
  double probability(int n, std::size_t j) const { return upper_marginal(n, static_cast<Eigen::Index>(j)); }
  /// Linear interpolation of a row of `upper_marginal` at time t.
  double upper_probability_at(int n, double t) const;
  const CascadeState& snapshot_at(double t) const;
};

/// Log-spaced grid from options.log_start to the horizon, merged with uniform
/// refinements over [0.5, 2] x each predicted peak and the extra times.
std::vector<double> output_grid(const ModelParams& params, ModelKind kind,
                                const EvolveOptions& options = {});

/// Integrates dP_n/dt = I(n+1) P_{n+1} - I(n) P_n from P_n(0) = delta_{n,N}.
Trajectory evolve_two_level(const ModelParams& params, const EvolveOptions& options = {});

/// Integrates the two-transition cascade from P_{n,m}(0) = delta_{n,N} delta_{m,N}.
Trajectory evolve_cascade(const ModelParams& params, const EvolveOptions& options = {});

}  // namespace csr
