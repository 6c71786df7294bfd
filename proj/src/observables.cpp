#include "csr/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/QR>

namespace csr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kAreaFloor = 1e-300;

const std::vector<double>& raw_intensity(const Trajectory& traj, Mode mode) {
  switch (mode) {
    case Mode::two_level:
      if (traj.kind != ModelKind::two_level)
        throw DomainError("two-level mode requested from a cascade trajectory");
      return traj.upper_intensity;
    case Mode::cascade_upper:
    case Mode::cascade_lower:
      if (traj.kind != ModelKind::cascade)
        throw DomainError("cascade mode requested from a two-level trajectory");
      return mode == Mode::cascade_upper ? traj.upper_intensity : traj.lower_intensity;
  }
  throw DomainError("unknown mode");
}

void require_trajectory(const Trajectory& traj) {
  if (traj.times.size() < 2) throw DomainError("trajectory needs at least two grid points");
}

ObservableSeries make_series(const Trajectory& traj, Mode mode, SeriesKind kind,
                             std::vector<double> values) {
  return ObservableSeries{traj.times, std::move(values), mode, kind};
}

/// Vertex of the parabola through three points, clamped to their span.
double parabola_vertex(double t0, double y0, double t1, double y1, double t2, double y2) {
  const double denom = (t0 - t1) * (t0 - t2) * (t1 - t2);
  const double a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom;
  const double b = (t2 * t2 * (y0 - y1) + t1 * t1 * (y2 - y0) + t0 * t0 * (y1 - y2)) / denom;
  if (a == 0.0 || !std::isfinite(a) || !std::isfinite(b)) return t1;
  return std::clamp(-b / (2.0 * a), t0, t2);
}

double parabola_value(double t0, double y0, double t1, double y1, double t2, double y2, double t) {
  const double l0 = (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2));
  const double l1 = (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2));
  const double l2 = (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1));
  return y0 * l0 + y1 * l1 + y2 * l2;
}

struct Extremum {
  double time;
  double value;
};

double prominence_side(const std::vector<double>& v, std::size_t i, int dir) {
  double highest = v[i];
  for (auto j = static_cast<std::ptrdiff_t>(i) + dir;
       j >= 0 && j < static_cast<std::ptrdiff_t>(v.size()); j += dir) {
    const double x = v[static_cast<std::size_t>(j)];
    if (std::isnan(x)) break;
    if (x < v[i]) break;
    highest = std::max(highest, x);
  }
  return highest - v[i];
}

std::vector<Extremum> local_minima(const ObservableSeries& series, double t_from) {
  const auto& t = series.times;
  const auto& v = series.values;
  std::vector<Extremum> found;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (t[i] < t_from) continue;
    if (std::isnan(v[i - 1]) || std::isnan(v[i]) || std::isnan(v[i + 1])) continue;
    if (!(v[i] < v[i - 1] && v[i] <= v[i + 1])) continue;
    const double prominence = std::min(prominence_side(v, i, -1), prominence_side(v, i, +1));
    if (prominence <= 1e-6 * std::abs(v[i])) continue;
    const double at = parabola_vertex(t[i - 1], v[i - 1], t[i], v[i], t[i + 1], v[i + 1]);
    const double value = parabola_value(t[i - 1], v[i - 1], t[i], v[i], t[i + 1], v[i + 1], at);
    found.push_back({at, value});
  }
  std::vector<Extremum> merged;
  for (const auto& m : found) {
    if (!merged.empty() && m.time < 1.3 * merged.back().time) {
      if (m.value < merged.back().value) merged.back() = m;
      continue;
    }
    merged.push_back(m);
  }
  return merged;
}

double trapezoid_delay(std::span<const double> t, std::span<const double> q) {
  const auto moments = emission_moments(t, q);
  return moments.first.back() / moments.area.back();
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::two_level: return "two-level";
    case Mode::cascade_upper: return "cascade-upper";
    case Mode::cascade_lower: return "cascade-lower";
  }
  return "unknown";
}

std::string to_string(SeriesKind kind) {
  switch (kind) {
    case SeriesKind::intensity: return "intensity";
    case SeriesKind::area: return "area";
    case SeriesKind::mean_delay: return "mean-delay";
    case SeriesKind::fluctuation: return "fluctuation";
  }
  return "unknown";
}

std::vector<Mode> modes_of(const Trajectory& traj) {
  if (traj.kind == ModelKind::two_level) return {Mode::two_level};
  return {Mode::cascade_upper, Mode::cascade_lower};
}

ObservableSeries intensity_series(const Trajectory& traj, Mode mode) {
  require_trajectory(traj);
  return make_series(traj, mode, SeriesKind::intensity, raw_intensity(traj, mode));
}

EmissionMoments emission_moments(std::span<const double> times, std::span<const double> intensity) {
  if (times.size() != intensity.size() || times.empty())
    throw DomainError("emission_moments: size mismatch");
  EmissionMoments m;
  m.area.assign(times.size(), 0.0);
  m.first.assign(times.size(), 0.0);
  m.second.assign(times.size(), 0.0);
  for (std::size_t j = 1; j < times.size(); ++j) {
    const double h = 0.5 * (times[j] - times[j - 1]);
    const double q0 = intensity[j - 1], q1 = intensity[j];
    const double t0 = times[j - 1], t1 = times[j];
    m.area[j] = m.area[j - 1] + h * (q0 + q1);
    m.first[j] = m.first[j - 1] + h * (t0 * q0 + t1 * q1);
    m.second[j] = m.second[j - 1] + h * (t0 * t0 * q0 + t1 * t1 * q1);
  }
  return m;
}

ObservableSeries pulse_area(const Trajectory& traj, Mode mode) {
  require_trajectory(traj);
  auto moments = emission_moments(traj.times, raw_intensity(traj, mode));
  return make_series(traj, mode, SeriesKind::area, std::move(moments.area));
}

ObservableSeries average_delay_series(const Trajectory& traj, Mode mode) {
  require_trajectory(traj);
  const auto moments = emission_moments(traj.times, raw_intensity(traj, mode));
  std::vector<double> values(traj.size(), kNaN);
  for (std::size_t j = 0; j < values.size(); ++j)
    if (moments.area[j] > kAreaFloor) values[j] = moments.first[j] / moments.area[j];
  return make_series(traj, mode, SeriesKind::mean_delay, std::move(values));
}

ObservableSeries fluctuation_series(const Trajectory& traj, Mode mode) {
  require_trajectory(traj);
  const auto moments = emission_moments(traj.times, raw_intensity(traj, mode));
  std::vector<double> values(traj.size(), kNaN);
  for (std::size_t j = 0; j < values.size(); ++j) {
    const double area = moments.area[j];
    if (area <= kAreaFloor) continue;
    const double mean = moments.first[j] / area;
    const double square = moments.second[j] / area;
    double variance = square - mean * mean;
    if (variance < 0.0) {
      if (variance < -1e-12 * square)
        throw std::runtime_error("fluctuation_series: negative variance at t=" +
                                 std::to_string(traj.times[j]));
      variance = 0.0;
    }
    values[j] = std::sqrt(variance) / mean;
  }
  return make_series(traj, mode, SeriesKind::fluctuation, std::move(values));
}

double delay_argmax(const ObservableSeries& series) {
  const auto& v = series.values;
  if (v.size() < 3) throw BoundaryError("delay_argmax: need at least three points");
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  if (best == 0 || best + 1 == v.size())
    throw BoundaryError("delay_argmax: maximum on the grid boundary (horizon too short?)");
  const auto& t = series.times;
  return parabola_vertex(t[best - 1], v[best - 1], t[best], v[best], t[best + 1], v[best + 1]);
}

double partial_delay_harmonic(int n_atoms, int n_low, int n_high) {
  if (n_low < 1 || n_low > n_high || n_high > n_atoms)
    throw DomainError("partial_delay_harmonic: require 1 <= n_low <= n_high <= N");
  // Smallest terms first.
  double sum = 0.0;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n_high - n_low + 1));
  for (int n = n_low; n <= n_high; ++n) terms.push_back(1.0 / two_level_rate<double>(n, n_atoms));
  std::sort(terms.begin(), terms.end());
  for (double x : terms) sum += x;
  return sum;
}

PartialDelay partial_delay_numeric(const Trajectory& traj, int n) {
  require_trajectory(traj);
  if (traj.kind != ModelKind::two_level)
    throw DomainError("partial_delay_numeric: two-level trajectory required");
  const int n_atoms = traj.n_atoms();
  const double rate = two_level_rate<double>(n, n_atoms);
  std::vector<double> q(traj.size());
  double peak = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    q[j] = rate * traj.probability(n, j);
    peak = std::max(peak, q[j]);
  }
  PartialDelay out;
  out.value = emission_moments(traj.times, q).first.back();
  out.tail_converged = q.back() <= 1e-8 * peak;
  return out;
}

SinglePhotonProbe single_photon_probe(const Trajectory& traj) {
  require_trajectory(traj);
  if (traj.kind != ModelKind::two_level)
    throw DomainError("single_photon_probe: two-level trajectory required");
  const int n_atoms = traj.n_atoms();
  if (n_atoms < 2) throw DomainError("single_photon_probe: needs N >= 2");

  SinglePhotonProbe probe;
  probe.t_formula = 2.0 * traj.params.predicted_delay();
  probe.t_peak_based = 2.0 * delay_argmax(intensity_series(traj, Mode::two_level));
  for (double t : {probe.t_formula, probe.t_peak_based})
    if (t > traj.end_time())
      throw BoundaryError("single_photon_probe: trajectory ends before the probe time");
  for (int n = 0; n < 3; ++n) {
    probe.at_formula[static_cast<std::size_t>(n)] = traj.upper_probability_at(n, probe.t_formula);
    probe.at_peak_based[static_cast<std::size_t>(n)] =
        traj.upper_probability_at(n, probe.t_peak_based);
  }
  ObservableSeries p1{traj.times, {}, Mode::two_level, SeriesKind::intensity};
  p1.values.resize(traj.size());
  for (std::size_t j = 0; j < traj.size(); ++j) p1.values[j] = traj.probability(1, j);
  probe.p1_argmax = delay_argmax(p1);
  probe.p1_max = *std::max_element(p1.values.begin(), p1.values.end());
  return probe;
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("linear_fit: size mismatch");
  if (xs.size() < 2) throw DomainError("linear_fit: need at least two points");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*lo == *hi) throw DomainError("linear_fit: all x values are equal");

  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd design(n, 2);
  design.col(0) = Eigen::Map<const Eigen::VectorXd>(xs.data(), n);
  design.col(1).setOnes();
  const Eigen::Map<const Eigen::VectorXd> y(ys.data(), n);
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(y);
  return {coef[0], coef[1], (design * coef - y).norm()};
}

std::vector<double> find_local_minima(const ObservableSeries& series, double t_from) {
  std::vector<double> times;
  for (const auto& m : local_minima(series, t_from)) times.push_back(m.time);
  return times;
}

const ModeDelays& DelayReport::mode(Mode m) const {
  for (const auto& d : modes)
    if (d.mode == m) return d;
  throw DomainError("DelayReport: no data for mode " + to_string(m));
}

DelayReport delay_report(const Trajectory& traj) {
  require_trajectory(traj);
  DelayReport report;
  report.kind = traj.kind;
  report.n_atoms = traj.n_atoms();
  report.alpha = traj.kind == ModelKind::cascade ? traj.params.alpha : 0.0;
  report.tau_predicted = traj.params.predicted_delay();

  const int n_atoms = traj.n_atoms();
  for (Mode mode : modes_of(traj)) {
    ModeDelays d;
    d.mode = mode;
    const auto intensity = intensity_series(traj, mode);
    d.intensity_max = *std::max_element(intensity.values.begin(), intensity.values.end());
    d.tau_argmax = delay_argmax(intensity);

    const auto moments = emission_moments(traj.times, intensity.values);
    d.area_end = moments.area.back();
    d.tau_infty = moments.first.back() / d.area_end;
    const auto sigma = fluctuation_series(traj, mode);
    d.sigma_infty = sigma.back();

    double t_from = traj.end_time();
    for (std::size_t j = 0; j < traj.size(); ++j) {
      if (moments.area[j] > 1e-3 * d.area_end) {
        t_from = traj.times[j];
        break;
      }
    }
    const auto minima = local_minima(sigma, t_from);
    d.tau_sigma_min = kNaN;
    double deepest = std::numeric_limits<double>::infinity();
    for (const auto& m : minima) {
      d.sigma_minima.push_back(m.time);
      if (m.value < deepest) {
        deepest = m.value;
        d.tau_sigma_min = m.time;
      }
    }

    std::vector<double> half_t, half_q;
    for (std::size_t j = 0; j < traj.size(); j += 2) {
      half_t.push_back(traj.times[j]);
      half_q.push_back(intensity.values[j]);
    }
    if (half_t.back() != traj.times.back()) {
      half_t.push_back(traj.times.back());
      half_q.push_back(intensity.values.back());
    }
    d.richardson_rel_diff = std::abs(trapezoid_delay(half_t, half_q) - d.tau_infty) / d.tau_infty;
    d.tail_rel_bound = (1.0 - traj.absorbed.back()) * traj.end_time() / d.tau_infty;

    // Q_{N/2+1} covers the transitions N..N/2+1, which by I(n) = I(N-n+1)
    // mirror 1..N-N/2.
    if (mode != Mode::cascade_lower && n_atoms >= 2)
      d.tau_partial = partial_delay_harmonic(n_atoms, 1, n_atoms - n_atoms / 2);
    if (mode == Mode::two_level && n_atoms >= 2)
      d.tau_partial_numeric = partial_delay_numeric(traj, n_atoms / 2 + 1).value;
    report.modes.push_back(std::move(d));
  }
  if (traj.kind == ModelKind::cascade) {
    report.lower_gap = report.modes[1].tau_infty - report.modes[0].tau_infty;
    report.lower_gap_scaled = *report.lower_gap * traj.params.alpha;
  }
  return report;
}

}  // namespace csr
