#include "csr/model.hpp"

#include <algorithm>
#include <cmath>

namespace csr {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError("ModelParams: " + what);
}

void check_probabilities(const StateVector<double>& probs, const char* name) {
  if (probs.size() == 0) throw DomainError(std::string(name) + ": empty state");
  const double low = probs.minCoeff();
  if (low < -1e-9)
    throw DomainError(std::string(name) + ": negative probability " + std::to_string(low));
  const double drift = std::abs(probs.sum() - 1.0);
  if (drift > 1e-8)
    throw DomainError(std::string(name) + ": probabilities sum off by " + std::to_string(drift));
}

}  // namespace

void ModelParams::validate() const {
  require(n_atoms >= 1, "n_atoms must be >= 1");
  require(n_atoms <= 5000, "n_atoms must be <= 5000");
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and >= 0");
  require(std::isfinite(t_cap), "t_cap must be finite");
  require(abs_tol > 0.0 && abs_tol < 1.0, "abs_tol must lie in (0, 1)");
  require(rel_tol > 0.0 && rel_tol < 1.0, "rel_tol must lie in (0, 1)");
  require(absorb_eps > 0.0 && absorb_eps < 1.0, "absorb_eps must lie in (0, 1)");
}

double ModelParams::predicted_delay() const {
  return (kEulerGamma + std::log(static_cast<double>(n_atoms))) / n_atoms;
}

double ModelParams::default_t_cap() const {
  const double slow = alpha > 0.0 ? std::min(alpha, 1.0) : 1.0;
  return 20.0 * (1.0 + 1.0 / slow) * predicted_delay();
}

TriangularIndex::TriangularIndex(int n_atoms)
    : n_atoms_(n_atoms), size_(row_start(n_atoms + 1)) {
  if (n_atoms < 0) throw DomainError("TriangularIndex: negative atom count");
}

std::size_t TriangularIndex::operator()(int n, int m) const {
  if (n < 0 || n > m || m > n_atoms_)
    throw DomainError("triangular_index: require 0 <= n <= m <= N, got n=" + std::to_string(n) +
                      ", m=" + std::to_string(m) + ", N=" + std::to_string(n_atoms_));
  return row_start(m) + static_cast<std::size_t>(n);
}

std::pair<int, int> TriangularIndex::inverse(std::size_t flat) const {
  if (flat >= size_) throw DomainError("triangular_index: flat index out of range");
  // Largest m with m(m+1)/2 <= flat; the sqrt guess is off by at most one.
  auto m = static_cast<int>((std::sqrt(8.0 * static_cast<double>(flat) + 1.0) - 1.0) / 2.0);
  while (row_start(m) > flat) --m;
  while (row_start(m + 1) <= flat) ++m;
  return {static_cast<int>(flat - row_start(m)), m};
}

std::size_t triangular_index(int n, int m, int n_atoms) { return TriangularIndex(n_atoms)(n, m); }

std::size_t cascade_state_size(int n_atoms) { return TriangularIndex(n_atoms).size(); }

TwoLevelState TwoLevelState::fully_inverted(int n_atoms) {
  if (n_atoms < 1) throw DomainError("TwoLevelState: n_atoms must be >= 1");
  TwoLevelState state;
  state.probs = StateVector<double>::Zero(n_atoms + 1);
  state.probs[n_atoms] = 1.0;
  return state;
}

void TwoLevelState::check() const { check_probabilities(probs, "TwoLevelState"); }

CascadeState CascadeState::fully_inverted(int n_atoms) {
  if (n_atoms < 1) throw DomainError("CascadeState: n_atoms must be >= 1");
  CascadeState state;
  state.n_atoms = n_atoms;
  state.probs = StateVector<double>::Zero(static_cast<Eigen::Index>(cascade_state_size(n_atoms)));
  state.probs[static_cast<Eigen::Index>(triangular_index(n_atoms, n_atoms, n_atoms))] = 1.0;
  return state;
}

void CascadeState::check() const {
  if (static_cast<std::size_t>(probs.size()) != cascade_state_size(n_atoms))
    throw DomainError("CascadeState: size does not match (N+1)(N+2)/2");
  check_probabilities(probs, "CascadeState");
}

}  // namespace csr
