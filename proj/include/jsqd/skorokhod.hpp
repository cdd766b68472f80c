#pragma once

// Chained one-sided Skorokhod problem with upper barrier 1 and reflection
// matrix R_M (−1 on the diagonal, +1 on the first subdiagonal):
//
//   phi_1 = psi_1 − eta_1,   phi_i = psi_i + eta_{i−1} − eta_i  (i >= 2),
//   phi_i <= 1,  eta_i(0) = 0,  eta_i non-decreasing,  ∫(1 − phi_i) d eta_i = 0.
//
// The matrix is lower bidiagonal, so coordinate i only sees eta_{i−1} and the
// problem is solved coordinate by coordinate with the one-dimensional formula
// eta_i(t) = sup_{s<=t} (psi_i(s) + eta_{i−1}(s) − 1)^+.

#include "jsqd/core.hpp"

namespace jsqd {

inline constexpr double kBarrier = 1.0;

struct SkorokhodSolution {
  PiecewisePath phi;
  PiecewisePath eta;
  /// The input resampled on the solution grid (differs from the input grid
  /// only when barrier crossings were inserted).
  PiecewisePath psi;
};

/// Solves the problem for a step or piecewise-linear input. For linear input
/// every barrier crossing inside a segment becomes a grid point of the output,
/// which makes the grid solution exact for piecewise-linear psi.
///
/// Throws std::invalid_argument if some psi_i(0) > 1.
SkorokhodSolution solve_skorokhod(const PiecewisePath& psi);

/// sum_i sum_k |1 − phi_i(t_k)| (eta_i(t_{k+1}) − eta_i(t_k)), left endpoints.
double complementarity_residual(const SkorokhodSolution& sol);

/// max_{i,k} |phi_i − (psi_i + eta_{i−1} − eta_i)| on the solution grid.
double reflection_identity_error(const SkorokhodSolution& sol);

struct LipschitzGap {
  double gap_in = 0.0;   ///< sup_t ||psi_a − psi_b||_1
  double gap_out = 0.0;  ///< sup_t ||Gamma(psi_a) − Gamma(psi_b)||_1

  double ratio() const { return gap_in > 0.0 ? gap_out / gap_in : 0.0; }
};

/// Inputs must share grid and dimension. Reports the empirical gap only; no
/// constant is certified.
LipschitzGap lipschitz_gap(const PiecewisePath& psi_a, const PiecewisePath& psi_b);

/// Incremental form used by time-stepping integrators: each call to project()
/// advances eta with the new psi sample and returns phi at that time.
class SkorokhodStepper {
 public:
  explicit SkorokhodStepper(Eigen::Index dimension) : eta_(Vector::Zero(dimension)) {}

  Vector project(const Vector& psi);
  const Vector& eta() const { return eta_; }

 private:
  Vector eta_;
};

}  // namespace jsqd
