#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

namespace csr {

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double last_good_time)
      : std::runtime_error(what + " (last good t=" + std::to_string(last_good_time) + ")"),
        last_good_time_(last_good_time) {}
  double last_good_time() const { return last_good_time_; }

 private:
  double last_good_time_;
};

template <typename Scalar>
struct StepControl {
  Scalar abs_tol = Scalar(1e-10);
  Scalar rel_tol = Scalar(1e-8);
  Scalar initial_step = Scalar(0);  // 0: pick from the initial derivative
  std::size_t max_steps = 50'000'000;
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
  double end_time = 0.0;
  bool stopped_early = false;
};

/// Dormand-Prince 5(4) with FSAL, max-norm error control and a PI step
/// controller. Steps are shortened to land exactly on every output time.
///
/// `rhs(y, dy)` evaluates the derivative. `on_output(t, y)` runs at each output
/// time and returns false to stop. `on_accept(t, y)` runs after every accepted
/// step and may throw to abort.
template <typename Scalar, typename Rhs, typename OnOutput, typename OnAccept>
IntegrationStats integrate_dopri5(const Rhs& rhs, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y,
                                  Scalar t0, std::span<const Scalar> outputs,
                                  const StepControl<Scalar>& control, OnOutput&& on_output,
                                  OnAccept&& on_accept) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using std::abs;
  using std::max;
  using std::min;
  using std::pow;

  constexpr Scalar a21 = Scalar(1) / 5;
  constexpr Scalar a31 = Scalar(3) / 40, a32 = Scalar(9) / 40;
  constexpr Scalar a41 = Scalar(44) / 45, a42 = Scalar(-56) / 15, a43 = Scalar(32) / 9;
  constexpr Scalar a51 = Scalar(19372) / 6561, a52 = Scalar(-25360) / 2187,
                   a53 = Scalar(64448) / 6561, a54 = Scalar(-212) / 729;
  constexpr Scalar a61 = Scalar(9017) / 3168, a62 = Scalar(-355) / 33,
                   a63 = Scalar(46732) / 5247, a64 = Scalar(49) / 176,
                   a65 = Scalar(-5103) / 18656;
  constexpr Scalar b1 = Scalar(35) / 384, b3 = Scalar(500) / 1113, b4 = Scalar(125) / 192,
                   b5 = Scalar(-2187) / 6784, b6 = Scalar(11) / 84;
  constexpr Scalar e1 = Scalar(71) / 57600, e3 = Scalar(-71) / 16695, e4 = Scalar(71) / 1920,
                   e5 = Scalar(-17253) / 339200, e6 = Scalar(22) / 525, e7 = Scalar(-1) / 40;

  constexpr Scalar safety = Scalar(0.9);
  constexpr Scalar min_factor = Scalar(0.2);
  constexpr Scalar max_factor = Scalar(10);
  constexpr Scalar beta = Scalar(0.04);
  constexpr Scalar expo = Scalar(0.2) - beta * Scalar(0.75);

  IntegrationStats stats;
  const Eigen::Index dim = y.size();
  Vector k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim);
  Vector stage(dim), y_new(dim);

  Scalar t = t0;
  std::size_t next = 0;
  while (next < outputs.size() && outputs[next] <= t) {
    if (!on_output(outputs[next], static_cast<const Vector&>(y))) {
      stats.stopped_early = true;
      stats.end_time = static_cast<double>(t);
      return stats;
    }
    ++next;
  }
  if (next == outputs.size()) {
    stats.end_time = static_cast<double>(t);
    return stats;
  }

  rhs(y, k1);
  ++stats.rhs_evaluations;

  auto error_norm = [&](const Vector& err) {
    const Vector scale =
        (control.abs_tol + control.rel_tol * y.cwiseAbs().cwiseMax(y_new.cwiseAbs()).array())
            .matrix();
    return err.cwiseAbs().cwiseQuotient(scale).maxCoeff();
  };

  Scalar h = control.initial_step;
  if (h <= Scalar(0)) {
    const Scalar scale_y = (control.abs_tol + control.rel_tol * y.cwiseAbs().array()).maxCoeff();
    const Scalar slope = k1.cwiseAbs().maxCoeff();
    h = slope > Scalar(0) ? Scalar(0.01) * scale_y / slope : Scalar(1e-6);
    h = min(h, outputs.back() - t);
  }
  Scalar previous_error = Scalar(1e-4);
  bool last_rejected = false;

  while (next < outputs.size()) {
    if (stats.accepted + stats.rejected >= control.max_steps)
      throw IntegrationError("dopri5: step budget exhausted", static_cast<double>(t));
    const Scalar target = outputs[next];
    bool lands = false;
    Scalar step = h;
    if (t + step >= target) {
      step = target - t;
      lands = true;
    }
    if (step <= Scalar(16) * std::numeric_limits<Scalar>::epsilon() * max(abs(t), Scalar(1e-300)))
      throw IntegrationError("dopri5: step size underflow", static_cast<double>(t));

    stage = y + step * (a21 * k1);
    rhs(stage, k2);
    stage = y + step * (a31 * k1 + a32 * k2);
    rhs(stage, k3);
    stage = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(stage, k4);
    stage = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(stage, k5);
    stage = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(stage, k6);
    y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(y_new, k7);
    stats.rhs_evaluations += 6;

    stage = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const Scalar err = error_norm(stage);
    if (!std::isfinite(static_cast<double>(err)))
      throw IntegrationError("dopri5: non-finite error estimate", static_cast<double>(t));

    const Scalar fac11 = pow(max(err, Scalar(1e-30)), expo);
    if (err <= Scalar(1)) {
      Scalar factor = fac11 / pow(previous_error, beta) / safety;
      factor = max(Scalar(1) / max_factor, min(Scalar(1) / min_factor, factor));
      Scalar proposal = step / factor;
      if (last_rejected) proposal = min(proposal, step);
      previous_error = max(err, Scalar(1e-4));
      last_rejected = false;
      ++stats.accepted;

      t = lands ? target : t + step;
      y.swap(y_new);
      k1.swap(k7);
      on_accept(t, static_cast<const Vector&>(y));
      // A clipped landing step says nothing about the admissible step size.
      h = lands ? max(h, proposal) : proposal;
      if (lands) {
        ++next;
        if (!on_output(t, static_cast<const Vector&>(y))) {
          stats.stopped_early = true;
          break;
        }
        while (next < outputs.size() && outputs[next] <= t) ++next;
      }
    } else {
      h = step / min(Scalar(1) / min_factor, fac11 / safety);
      last_rejected = true;
      ++stats.rejected;
    }
  }
  stats.end_time = static_cast<double>(t);
  return stats;
}

/// Partial-fraction form of the (2,3) Pade approximant of exp(z),
///   R(z) = (1 + 2z/5 + z^2/20) / (1 - 3z/5 + 3z^2/20 - z^3/60)
///        = sum_i residue_i / (z - pole_i),
/// which is the stability function of the 3-stage Radau IIA method: order 5
/// and L-stable. For y' = J y one step is y <- R(hJ) y.
struct RadauRational {
  double real_pole = 0.0;
  double real_residue = 0.0;
  std::complex<double> complex_pole;  // the conjugate pole is implied
  std::complex<double> complex_residue;

  static const RadauRational& instance() {
    static const RadauRational value = build();
    return value;
  }

  std::complex<double> evaluate(std::complex<double> z) const {
    return real_residue / (z - real_pole) + complex_residue / (z - complex_pole) +
           std::conj(complex_residue) / (z - std::conj(complex_pole));
  }

 private:
  static RadauRational build() {
    // Companion matrix of Q(z) / (-1/60) = z^3 - 9 z^2 + 36 z - 60.
    Eigen::Matrix3d companion;
    companion << 0, 0, 60, 1, 0, -36, 0, 1, 9;
    const Eigen::Vector3cd roots = Eigen::EigenSolver<Eigen::Matrix3d>(companion).eigenvalues();
    auto numerator = [](std::complex<double> z) { return 1.0 + 0.4 * z + z * z / 20.0; };
    auto denominator_slope = [](std::complex<double> z) {
      return -0.6 + 0.3 * z - z * z / 20.0;
    };
    RadauRational r;
    for (int i = 0; i < 3; ++i) {
      const std::complex<double> root = roots[i];
      const std::complex<double> residue = numerator(root) / denominator_slope(root);
      if (std::abs(root.imag()) < 1e-12) {
        r.real_pole = root.real();
        r.real_residue = residue.real();
      } else if (root.imag() > 0) {
        r.complex_pole = root;
        r.complex_residue = residue;
      }
    }
    return r;
  }
};

/// Adaptive Radau IIA (order 5) for linear autonomous systems y' = J y whose
/// shifted systems (hJ - s I) x = b are cheap to solve.
///
/// `system.solve_shifted(h, s, b, x)` must accept real and complex s. Error
/// control uses step doubling: the two half steps are kept and the difference
/// to the full step, divided by 2^5 - 1, estimates their local error.
template <typename Scalar, typename System, typename OnOutput, typename OnAccept>
IntegrationStats integrate_radau_linear(const System& system,
                                        Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y, Scalar t0,
                                        std::span<const Scalar> outputs,
                                        const StepControl<Scalar>& control, OnOutput&& on_output,
                                        OnAccept&& on_accept) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Complex = std::complex<Scalar>;
  using ComplexVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
  using std::max;
  using std::min;

  const auto& rational = RadauRational::instance();
  const Eigen::Index dim = y.size();
  ComplexVector complex_rhs(dim), complex_x(dim);
  Vector real_x(dim), full(dim), half(dim), doubled(dim);

  auto propagate = [&](const Vector& in, Scalar h, Vector& out) {
    system.solve_shifted(h, Scalar(rational.real_pole), in, real_x);
    complex_rhs = in.template cast<Complex>();
    system.solve_shifted(h, Complex(rational.complex_pole), complex_rhs, complex_x);
    const Scalar re = Scalar(2 * rational.complex_residue.real());
    const Scalar im = Scalar(2 * rational.complex_residue.imag());
    out = Scalar(rational.real_residue) * real_x + re * complex_x.real() - im * complex_x.imag();
  };

  IntegrationStats stats;
  Scalar t = t0;
  std::size_t next = 0;
  while (next < outputs.size() && outputs[next] <= t) {
    if (!on_output(outputs[next], static_cast<const Vector&>(y))) {
      stats.stopped_early = true;
      stats.end_time = static_cast<double>(t);
      return stats;
    }
    ++next;
  }

  Scalar h = control.initial_step > Scalar(0) ? control.initial_step : Scalar(1e-6);
  constexpr Scalar safety = Scalar(0.9);

  while (next < outputs.size()) {
    if (stats.accepted + stats.rejected >= control.max_steps)
      throw IntegrationError("radau: step budget exhausted", static_cast<double>(t));
    const Scalar target = outputs[next];
    bool lands = false;
    Scalar step = h;
    if (t + step >= target) {
      step = target - t;
      lands = true;
    }
    if (step <= Scalar(16) * std::numeric_limits<Scalar>::epsilon() * max(std::abs(t), Scalar(1e-300)))
      throw IntegrationError("radau: step size underflow", static_cast<double>(t));

    propagate(y, step, full);
    propagate(y, step / 2, half);
    propagate(half, step / 2, doubled);
    stats.rhs_evaluations += 9;

    const Scalar err =
        ((doubled - full).cwiseAbs().array() /
         (Scalar(31) * (control.abs_tol +
                        control.rel_tol * y.cwiseAbs().cwiseMax(doubled.cwiseAbs()).array())))
            .maxCoeff();
    if (!std::isfinite(static_cast<double>(err)))
      throw IntegrationError("radau: non-finite error estimate", static_cast<double>(t));

    const Scalar factor =
        min(Scalar(4), max(Scalar(0.2), safety * std::pow(max(err, Scalar(1e-12)), Scalar(-1) / 6)));
    if (err <= Scalar(1)) {
      ++stats.accepted;
      t = lands ? target : t + step;
      y.swap(doubled);
      on_accept(t, static_cast<const Vector&>(y));
      h = lands ? max(h, step * factor) : step * factor;
      if (lands) {
        ++next;
        if (!on_output(t, static_cast<const Vector&>(y))) {
          stats.stopped_early = true;
          break;
        }
        while (next < outputs.size() && outputs[next] <= t) ++next;
      }
    } else {
      ++stats.rejected;
      h = step * factor;
    }
  }
  stats.end_time = static_cast<double>(t);
  return stats;
}

}  // namespace csr
