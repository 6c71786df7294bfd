#include "csr/evolver.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "csr/generator.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace csr {

namespace {

constexpr double kNegativeFloor = -1e-9;

void append_uniform(std::vector<double>& grid, double lo, double hi, int points) {
  if (points < 2 || !(hi > lo)) return;
  for (int i = 0; i < points; ++i) grid.push_back(lo + (hi - lo) * i / (points - 1));
}

void check_floor(double t, double lowest) {
  if (lowest < kNegativeFloor)
    throw IntegrationError("negative probability " + std::to_string(lowest), t);
}

// Decayed cells underflow into the subnormal range, where x86 arithmetic is
// two orders of magnitude slower.
class FlushSubnormals {
 public:
#if defined(__SSE__)
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushSubnormals() { _mm_setcsr(saved_); }

 private:
  unsigned int saved_;
#endif
};

template <typename Generator, typename OnOutput>
IntegrationStats run_stepper(Stepper stepper, const Generator& generator,
                             StateVector<double>& state, std::span<const double> grid,
                             const ModelParams& params, OnOutput& record) {
  const FlushSubnormals guard;
  const StepControl<double> control{params.abs_tol, params.rel_tol};
  auto on_accept = [](double t, const StateVector<double>& p) { check_floor(t, p.minCoeff()); };
  if (stepper == Stepper::radau)
    return integrate_radau_linear<double>(generator, state, 0.0, grid, control, record, on_accept);
  return integrate_dopri5<double>(
      [&](const StateVector<double>& p, StateVector<double>& dp) { generator.apply(p, dp); }, state,
      0.0, grid, control, record, on_accept);
}

void shrink_columns(Eigen::MatrixXd& m, std::size_t cols) {
  if (m.size() > 0) m.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(cols));
}

}  // namespace

double Trajectory::max_conservation_error() const {
  return conservation.empty() ? 0.0 : *std::max_element(conservation.begin(), conservation.end());
}

double Trajectory::upper_probability_at(int n, double t) const {
  if (t < times.front() || t > times.back())
    throw DomainError("upper_probability_at: time outside trajectory");
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.end()) return upper_marginal(n, static_cast<Eigen::Index>(times.size() - 1));
  const auto hi = static_cast<std::size_t>(it - times.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - times[lo]) / (times[hi] - times[lo]);
  return (1.0 - w) * upper_marginal(n, static_cast<Eigen::Index>(lo)) +
         w * upper_marginal(n, static_cast<Eigen::Index>(hi));
}

const CascadeState& Trajectory::snapshot_at(double t) const {
  for (const auto& s : snapshots)
    if (std::abs(s.time - t) <= 1e-12 * std::max(1.0, std::abs(t))) return s;
  throw DomainError("snapshot_at: no snapshot at t=" + std::to_string(t));
}

std::vector<double> output_grid(const ModelParams& params, ModelKind kind,
                                const EvolveOptions& options) {
  params.validate();
  const double horizon = params.effective_t_cap();
  const double start = std::min(options.log_start, horizon);

  std::vector<double> grid{0.0};
  if (options.log_points >= 2) {
    const double ratio = std::log(horizon / start);
    for (int i = 0; i < options.log_points; ++i)
      grid.push_back(start * std::exp(ratio * i / (options.log_points - 1)));
  }
  const double peak = params.predicted_delay();
  append_uniform(grid, 0.5 * peak, 2.0 * peak, options.peak_points);
  if (kind == ModelKind::cascade && params.alpha > 0.0)
    append_uniform(grid, 0.5 * peak / params.alpha, 2.0 * peak / params.alpha, options.peak_points);
  grid.insert(grid.end(), options.extra_times.begin(), options.extra_times.end());
  grid.insert(grid.end(), options.snapshot_times.begin(), options.snapshot_times.end());

  std::sort(grid.begin(), grid.end());
  std::vector<double> merged;
  merged.reserve(grid.size());
  for (double t : grid) {
    if (t < 0.0 || t > horizon) continue;
    // Near-duplicates would force steps at the round-off floor.
    if (!merged.empty() && t - merged.back() <= 1e-12 * std::max(t, 1e-300)) continue;
    merged.push_back(t);
  }
  return merged;
}

Trajectory evolve_two_level(const ModelParams& params, const EvolveOptions& options) {
  params.validate();
  const int n_atoms = params.n_atoms;
  const TwoLevelGenerator<double> generator(n_atoms);
  const auto grid = output_grid(params, ModelKind::two_level, options);

  Trajectory traj;
  traj.kind = ModelKind::two_level;
  traj.params = params;
  traj.times.reserve(grid.size());
  traj.upper_marginal.resize(n_atoms + 1, static_cast<Eigen::Index>(grid.size()));

  StateVector<double> state = TwoLevelState::fully_inverted(n_atoms).probs;
  const double threshold = 1.0 - params.absorb_eps;

  auto record = [&](double t, const StateVector<double>& p) {
    check_floor(t, p.minCoeff());
    const auto j = static_cast<Eigen::Index>(traj.times.size());
    traj.times.push_back(t);
    traj.conservation.push_back(std::abs(p.sum() - 1.0));
    traj.absorbed.push_back(p[0]);
    traj.upper_intensity.push_back(generator.intensity(p));
    traj.upper_marginal.col(j) = p;
    if (p[0] > threshold) {
      traj.absorbed_before_cap = true;
      return false;
    }
    return true;
  };

  const Stepper stepper =
      options.stepper == Stepper::automatic ? Stepper::dopri5 : options.stepper;
  traj.stats = run_stepper(stepper, generator, state, grid, params, record);

  shrink_columns(traj.upper_marginal, traj.times.size());
  return traj;
}

Trajectory evolve_cascade(const ModelParams& params, const EvolveOptions& options) {
  params.validate();
  const int n_atoms = params.n_atoms;
  const CascadeGenerator<double> generator(n_atoms, params.alpha);
  const auto grid = output_grid(params, ModelKind::cascade, options);

  Trajectory traj;
  traj.kind = ModelKind::cascade;
  traj.params = params;
  const auto cols = static_cast<Eigen::Index>(grid.size());
  traj.upper_marginal.setZero(n_atoms + 1, cols);
  traj.intermediate_marginal.setZero(n_atoms + 1, cols);
  traj.lower_marginal.setZero(n_atoms + 1, cols);

  std::vector<Eigen::Index> absorbing;
  for (Eigen::Index k = 0; k < generator.size(); ++k)
    if (generator.outflow()[k] == 0.0) absorbing.push_back(k);

  auto wanted_snapshot = [&](double t) {
    return std::any_of(options.snapshot_times.begin(), options.snapshot_times.end(),
                       [t](double s) { return std::abs(s - t) <= 1e-12 * std::max(1.0, t); });
  };

  StateVector<double> state = CascadeState::fully_inverted(n_atoms).probs;
  const double threshold = 1.0 - params.absorb_eps;

  auto record = [&](double t, const StateVector<double>& p) {
    check_floor(t, p.minCoeff());
    const auto j = static_cast<Eigen::Index>(traj.times.size());
    traj.times.push_back(t);
    traj.conservation.push_back(std::abs(p.sum() - 1.0));
    double absorbed = 0.0;
    for (auto k : absorbing) absorbed += p[k];
    traj.absorbed.push_back(absorbed);
    traj.upper_intensity.push_back(generator.upper_intensity(p));
    traj.lower_intensity.push_back(generator.lower_intensity(p));
    auto upper = traj.upper_marginal.col(j);
    auto middle = traj.intermediate_marginal.col(j);
    auto lower = traj.lower_marginal.col(j);
    for (int m = 0; m <= n_atoms; ++m) {
      const auto row = static_cast<Eigen::Index>(TriangularIndex::row_start(m));
      for (int n = 0; n <= m; ++n) {
        const double value = p[row + n];
        upper[n] += value;
        middle[m - n] += value;
        lower[n_atoms - m] += value;
      }
    }
    if (wanted_snapshot(t)) {
      CascadeState snap;
      snap.n_atoms = n_atoms;
      snap.probs = p;
      snap.time = t;
      traj.snapshots.push_back(std::move(snap));
    }
    if (absorbed > threshold) {
      traj.absorbed_before_cap = true;
      return false;
    }
    return true;
  };

  const Stepper stepper =
      options.stepper == Stepper::automatic ? Stepper::radau : options.stepper;
  traj.stats = run_stepper(stepper, generator, state, grid, params, record);

  const auto kept = traj.times.size();
  shrink_columns(traj.upper_marginal, kept);
  shrink_columns(traj.intermediate_marginal, kept);
  shrink_columns(traj.lower_marginal, kept);
  return traj;
}

}  // namespace csr
