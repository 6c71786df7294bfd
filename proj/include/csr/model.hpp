#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace csr {

/// Euler's constant, the large-N offset in the harmonic delay asymptotics.
inline constexpr double kEulerGamma = std::numbers::egamma_v<double>;

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class ModelKind { two_level, cascade };

/// Full configuration of one experiment. Time is dimensionless throughout
/// (measured in units of the single-atom upper-transition decay rate).
struct ModelParams {
  int n_atoms = 100;
  /// Ratio of lower to upper single-atom decay rates. 0 freezes the lower
  /// transition.
  double alpha = 0.1;
  /// Integration horizon; <= 0 selects default_t_cap().
  double t_cap = 0.0;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  /// Stop once the absorbed probability exceeds 1 - absorb_eps.
  double absorb_eps = 1e-6;
  std::uint64_t seed = 42;

  /// Throws DomainError naming the first violated field.
  void validate() const;

  /// (E0 + ln N) / N
  double predicted_delay() const;
  /// 20 (1 + 1/min(alpha, 1)) (E0 + ln N)/N, with alpha = 0 treated as 1.
  double default_t_cap() const;
  double effective_t_cap() const { return t_cap > 0.0 ? t_cap : default_t_cap(); }
};

/// Cooperative rate of the two-level ladder, n(N - n + 1), integer-exact.
template <typename Scalar = double>
Scalar two_level_rate(int n, int n_atoms) {
  if (n_atoms < 1 || n < 0 || n > n_atoms)
    throw DomainError("two_level_rate: require 0 <= n <= N, got n=" + std::to_string(n) +
                      ", N=" + std::to_string(n_atoms));
  const std::int64_t value = std::int64_t{n} * (std::int64_t{n_atoms} - n + 1);
  return static_cast<Scalar>(value);
}

/// Upper and lower transition rates of the cascade at (n, m):
/// n(m - n + 1) and alpha (m - n)(N - m + 1).
template <typename Scalar = double>
std::pair<Scalar, Scalar> cascade_rates(int n, int m, int n_atoms, Scalar alpha) {
  if (n_atoms < 1 || n < 0 || n > m || m > n_atoms)
    throw DomainError("cascade_rates: require 0 <= n <= m <= N, got n=" + std::to_string(n) +
                      ", m=" + std::to_string(m) + ", N=" + std::to_string(n_atoms));
  const std::int64_t upper = std::int64_t{n} * (std::int64_t{m} - n + 1);
  const std::int64_t lower = (std::int64_t{m} - n) * (std::int64_t{n_atoms} - m + 1);
  return {static_cast<Scalar>(upper), alpha * static_cast<Scalar>(lower)};
}

/// Packing of the triangle {(n, m) : 0 <= n <= m <= N}, m outer and n inner.
/// Row m starts at m(m+1)/2, so (n, m+1) sits exactly m+1 cells after (n, m).
class TriangularIndex {
 public:
  explicit TriangularIndex(int n_atoms);

  int n_atoms() const { return n_atoms_; }
  std::size_t size() const { return size_; }

  std::size_t operator()(int n, int m) const;
  std::pair<int, int> inverse(std::size_t flat) const;

  static constexpr std::size_t row_start(int m) {
    return static_cast<std::size_t>(m) * (static_cast<std::size_t>(m) + 1) / 2;
  }

 private:
  int n_atoms_;
  std::size_t size_;
};

std::size_t triangular_index(int n, int m, int n_atoms);
std::size_t cascade_state_size(int n_atoms);

template <typename Scalar>
using StateVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Probabilities P_n over n = 0..N excited atoms.
struct TwoLevelState {
  StateVector<double> probs;
  double time = 0.0;

  static TwoLevelState fully_inverted(int n_atoms);
  /// Throws DomainError on entries below -1e-9 or |sum - 1| > 1e-8.
  void check() const;
};

/// Probabilities P_{n,m} packed by TriangularIndex. n atoms are in the upper
/// level, m - n in the intermediate level and N - m in the lower level.
struct CascadeState {
  int n_atoms = 0;
  StateVector<double> probs;
  double time = 0.0;

  static CascadeState fully_inverted(int n_atoms);
  double at(int n, int m) const { return probs[triangular_index(n, m, n_atoms)]; }
  void check() const;
};

}  // namespace csr
