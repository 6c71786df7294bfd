#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csr/evolver.hpp"

namespace csr {

/// Emission channel an observable refers to.
enum class Mode { two_level, cascade_upper, cascade_lower };
enum class SeriesKind { intensity, area, mean_delay, fluctuation };

std::string to_string(Mode mode);
std::string to_string(SeriesKind kind);

class BoundaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObservableSeries {
  std::vector<double> times;
  /// NaN marks points where the series is undefined (zero area).
  std::vector<double> values;
  Mode mode = Mode::two_level;
  SeriesKind kind = SeriesKind::intensity;

  std::size_t size() const { return times.size(); }
  double back() const { return values.back(); }
};

/// Modes carried by a trajectory: one for two-level, upper then lower for cascade.
std::vector<Mode> modes_of(const Trajectory& traj);

/// <I(t)> = sum I(n) P_n(t), or the cascade's <I_1>, <I_2>.
ObservableSeries intensity_series(const Trajectory& traj, Mode mode);

/// Running integrals int_0^t s^k <I(s)> ds for k = 0, 1, 2 by cumulative
/// trapezoid on the trajectory grid.
struct EmissionMoments {
  std::vector<double> area;
  std::vector<double> first;
  std::vector<double> second;
};
EmissionMoments emission_moments(std::span<const double> times, std::span<const double> intensity);

/// Incomplete pulse area A(t).
ObservableSeries pulse_area(const Trajectory& traj, Mode mode);

/// <tau(t)> = (1/A(t)) int_0^t s <I(s)> ds; NaN while A(t) <= 1e-300.
ObservableSeries average_delay_series(const Trajectory& traj, Mode mode);

/// sigma(t) = sqrt(<tau^2(t)> - <tau(t)>^2) / <tau(t)>. Variances down to
/// -1e-12 (relative to <tau^2>) are clipped to zero; below that it throws.
ObservableSeries fluctuation_series(const Trajectory& traj, Mode mode);

/// Grid argmax refined by the vertex of the parabola through the bracketing
/// points. Throws BoundaryError when the maximum sits on the first or last point.
double delay_argmax(const ObservableSeries& series);

/// Exact sum_{n=n_low}^{n_high} 1 / (n (N - n + 1)).
double partial_delay_harmonic(int n_atoms, int n_low, int n_high);

struct PartialDelay {
  double value = 0.0;
  /// False when Q_n at the last grid point exceeds 1e-8 of its peak.
  bool tail_converged = true;
};

/// int t I(n) P_n(t) dt on a two-level trajectory.
PartialDelay partial_delay_numeric(const Trajectory& traj, int n);

struct SinglePhotonProbe {
  /// Twice the measured intensity-peak delay.
  double t_peak_based = 0.0;
  std::array<double, 3> at_peak_based{};  // P0, P1, P2
  /// 2 (E0 + ln N) / N.
  double t_formula = 0.0;
  std::array<double, 3> at_formula{};
  double p1_argmax = 0.0;
  double p1_max = 0.0;
};

/// P0, P1, P2 around the time the ensemble is most likely to hold a single
/// excitation. Two-level trajectories only.
SinglePhotonProbe single_photon_probe(const Trajectory& traj);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  /// Euclidean norm of the residual vector.
  double residual_norm = 0.0;
};

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

/// Interior local minima at or after `t_from`, parabola-refined, earliest
/// first. Minima closer than a factor 1.3 in time are merged into the deeper
/// one; flat round-off wiggles (prominence below 1e-6 relative) are ignored.
std::vector<double> find_local_minima(const ObservableSeries& series, double t_from = 0.0);

struct ModeDelays {
  Mode mode = Mode::two_level;
  double tau_argmax = 0.0;
  double intensity_max = 0.0;
  /// Harmonic form of the half-population transition delay; two-level and
  /// cascade upper mode.
  std::optional<double> tau_partial;
  /// Quadrature of t Q_{N/2+1}(t); two-level only.
  std::optional<double> tau_partial_numeric;
  double tau_infty = 0.0;
  /// Deepest sigma(t) minimum; NaN when none exists.
  double tau_sigma_min = 0.0;
  std::vector<double> sigma_minima;
  double sigma_infty = 0.0;
  double area_end = 0.0;
  /// |<tau(end)> on every other grid point - <tau(end)>| / <tau(end)>.
  double richardson_rel_diff = 0.0;
  /// (1 - absorbed(end)) * t_end / <tau(end)>.
  double tail_rel_bound = 0.0;
};

struct DelayReport {
  ModelKind kind = ModelKind::two_level;
  int n_atoms = 0;
  double alpha = 0.0;
  /// (E0 + ln N) / N
  double tau_predicted = 0.0;
  std::vector<ModeDelays> modes;
  /// Cascade: <tau_2(inf)> - <tau_1(inf)> and that gap times alpha.
  std::optional<double> lower_gap;
  std::optional<double> lower_gap_scaled;

  const ModeDelays& mode(Mode m) const;
};

DelayReport delay_report(const Trajectory& traj);

}  // namespace csr
