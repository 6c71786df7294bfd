#pragma once

#include <complex>
#include <vector>

#include "csr/model.hpp"

namespace csr {

namespace detail {

// The reciprocal does not depend on the substitution chain, so taking it
// separately keeps the division off the loop-carried dependency.
template <typename T>
inline T reciprocal(T den) {
  return T(1) / den;
}

// Plain formula; std::complex division goes through the slow Annex G path.
template <typename T>
inline std::complex<T> reciprocal(std::complex<T> den) {
  const T inv = T(1) / (den.real() * den.real() + den.imag() * den.imag());
  return {den.real() * inv, -den.imag() * inv};
}

template <typename T>
inline T times(T a, T b) {
  return a * b;
}

template <typename T>
inline std::complex<T> times(std::complex<T> a, std::complex<T> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace detail

/// Matrix-free rate matrix of the two-level ladder:
///   dP_n/dt = I(n+1) P_{n+1} - I(n) P_n.
template <typename Scalar>
class TwoLevelGenerator {
 public:
  using Vector = StateVector<Scalar>;

  explicit TwoLevelGenerator(int n_atoms) : rates_(n_atoms + 1) {
    for (int n = 0; n <= n_atoms; ++n) rates_[n] = two_level_rate<Scalar>(n, n_atoms);
  }

  Eigen::Index size() const { return rates_.size(); }
  const Vector& rates() const { return rates_; }

  template <typename In, typename Out>
  void apply(const Eigen::MatrixBase<In>& p, Eigen::MatrixBase<Out>& dp) const {
    const Eigen::Index last = rates_.size() - 1;
    for (Eigen::Index n = 0; n < last; ++n)
      dp[n] = rates_[n + 1] * p[n + 1] - rates_[n] * p[n];
    dp[last] = -rates_[last] * p[last];
  }

  /// Solves (hJ - shift I) x = b by back substitution from n = N down; J is
  /// upper bidiagonal in this ordering. `shift` may be complex.
  template <typename Shift, typename In, typename Out>
  void solve_shifted(Scalar h, Shift shift, const Eigen::MatrixBase<In>& b,
                     Eigen::MatrixBase<Out>& x) const {
    const Eigen::Index last = rates_.size() - 1;
    x[last] = detail::times(Shift(b[last]), detail::reciprocal(Shift(-h * rates_[last]) - shift));
    for (Eigen::Index n = last - 1; n >= 0; --n)
      x[n] = detail::times(Shift(b[n]) - h * rates_[n + 1] * Shift(x[n + 1]),
                           detail::reciprocal(Shift(-h * rates_[n]) - shift));
  }

  /// Expected emission rate, sum_n I(n) P_n.
  template <typename In>
  Scalar intensity(const Eigen::MatrixBase<In>& p) const {
    return rates_.dot(p.derived());
  }

 private:
  Vector rates_;
};

/// Matrix-free rate matrix of the cascade on the packed triangle:
///   dP_{n,m}/dt = I1(n+1,m) P_{n+1,m} - I1(n,m) P_{n,m}
///               + I2(n,m+1) P_{n,m+1} - I2(n,m) P_{n,m}.
/// Inflow from (n+1, m) is the next cell; inflow from (n, m+1) is m+1 cells on.
template <typename Scalar>
class CascadeGenerator {
 public:
  using Vector = StateVector<Scalar>;

  CascadeGenerator(int n_atoms, Scalar alpha) : index_(n_atoms) {
    const auto cells = static_cast<Eigen::Index>(index_.size());
    upper_.resize(cells);
    lower_.resize(cells);
    for (int m = 0; m <= n_atoms; ++m) {
      for (int n = 0; n <= m; ++n) {
        const auto [i1, i2] = cascade_rates<Scalar>(n, m, n_atoms, alpha);
        const auto idx = static_cast<Eigen::Index>(index_(n, m));
        upper_[idx] = i1;
        lower_[idx] = i2;
      }
    }
    outflow_ = upper_ + lower_;
  }

  Eigen::Index size() const { return upper_.size(); }
  const TriangularIndex& index() const { return index_; }
  const Vector& upper_rates() const { return upper_; }
  const Vector& lower_rates() const { return lower_; }
  const Vector& outflow() const { return outflow_; }

  template <typename In, typename Out>
  void apply(const Eigen::MatrixBase<In>& p, Eigen::MatrixBase<Out>& dp) const {
    const int n_atoms = index_.n_atoms();
    for (int m = 0; m <= n_atoms; ++m) {
      const auto row = static_cast<Eigen::Index>(TriangularIndex::row_start(m));
      const Eigen::Index stride = m + 1;
      const bool has_next_row = m < n_atoms;
      for (Eigen::Index k = row; k < row + m + 1; ++k) {
        Scalar value = -outflow_[k] * p[k];
        if (k + 1 < row + m + 1) value += upper_[k + 1] * p[k + 1];
        if (has_next_row) value += lower_[k + stride] * p[k + stride];
        dp[k] = value;
      }
    }
  }

  /// Solves (hJ - shift I) x = b. Every inflow comes from a cell with a larger
  /// packed index, so one sweep from the end of the packing suffices.
  template <typename Shift, typename In, typename Out>
  void solve_shifted(Scalar h, Shift shift, const Eigen::MatrixBase<In>& b,
                     Eigen::MatrixBase<Out>& x) const {
    const int n_atoms = index_.n_atoms();
    for (int m = n_atoms; m >= 0; --m) {
      const auto row = static_cast<Eigen::Index>(TriangularIndex::row_start(m));
      const Eigen::Index stride = m + 1;
      const bool has_next_row = m < n_atoms;
      for (Eigen::Index k = row + m; k >= row; --k) {
        Shift acc = b[k];
        if (k < row + m) acc -= h * upper_[k + 1] * Shift(x[k + 1]);
        if (has_next_row) acc -= h * lower_[k + stride] * Shift(x[k + stride]);
        x[k] = detail::times(acc, detail::reciprocal(Shift(-h * outflow_[k]) - shift));
      }
    }
  }

  template <typename In>
  Scalar upper_intensity(const Eigen::MatrixBase<In>& p) const {
    return upper_.dot(p.derived());
  }
  template <typename In>
  Scalar lower_intensity(const Eigen::MatrixBase<In>& p) const {
    return lower_.dot(p.derived());
  }

 private:
  TriangularIndex index_;
  Vector upper_;
  Vector lower_;
  Vector outflow_;
};

}  // namespace csr
