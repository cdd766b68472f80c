#pragma once

// Poisson tilting cost ell(z) = z log z − z + 1, costs of band-constant
// controls, and the optimal decay rate for the large-total-jobs event.

#include <cmath>
#include <concepts>
#include <stdexcept>
#include <vector>

#include "jsqd/control.hpp"
#include "jsqd/core.hpp"

namespace jsqd {

/// ell(z) for z >= 0 with ell(0) = 1. Uses a Taylor series for |z − 1| < 1e-4
/// where the closed form cancels.
template <std::floating_point Scalar>
Scalar ell(Scalar z) {
  if (z < Scalar(0)) throw std::domain_error("ell: argument must be non-negative");
  if (z == Scalar(0)) return Scalar(1);
  const Scalar u = z - Scalar(1);
  if (std::abs(u) < Scalar(1e-4)) {
    const Scalar u2 = u * u;
    return u2 / Scalar(2) - u2 * u / Scalar(6) + u2 * u2 / Scalar(12);
  }
  return z * std::log(z) - z + Scalar(1);
}

struct EllBoundViolation {
  double x = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  char bound = 'b';  ///< 'a': x <= gamma(K) ell(x) for x >= K;  'b': x <= ell(x) + 2
};

struct EllBoundsReport {
  double K = 0.0;
  double gamma = 0.0;  ///< K / ell(K)
  std::size_t checked_a = 0;
  std::size_t checked_b = 0;
  std::vector<EllBoundViolation> violations;

  bool ok() const { return violations.empty(); }
};

/// Checks x <= ell(x) + 2 on every sample and x <= (K/ell(K)) ell(x) on samples
/// x >= K. `slack` is added to each right-hand side before comparing (0 means
/// an exact check, negative values tighten it). Requires K > e^2.
EllBoundsReport ell_bounds_check(double K, const std::vector<double>& samples, double slack = 0.0);

struct CostWeights {
  double lambda = 1.0;
};

/// lambda ∫ ell(alpha) ds + ∫ zeta_1(s) ell(theta(s)) ds, in closed form for
/// piecewise-constant controls and a step or piecewise-linear zeta_1.
double control_cost(const MasterControl& ctrl, const PiecewisePath& zeta1, const CostWeights& weights);

struct OptimalTilt {
  double a_star = 1.0;
  double b_star = 1.0;
  double epsilon = 0.0;
  double T = 1.0;
};

/// a*(c) = (c + sqrt(4 + c^2)) / 2, written to stay accurate for large c.
double optimal_arrival_multiplier(double c);

/// f(c) = ell(a*(c)) + ell(1/a*(c)).
double tilt_objective(double c);

struct RateResult {
  double rate = 0.0;
  OptimalTilt tilt;
};

/// T ell(a*) + T ell(b*) with c = epsilon / T.
RateResult optimal_rate_F_eps(double epsilon, double T);

struct BruteForceResult {
  double rate = 0.0;
  double b = 0.0;  ///< argmin service multiplier
  double c = 0.0;  ///< argmin gap a − b
};

/// Grid minimum of T (ell(b + c) + ell(b)) over b in [0, B], c in [eps/T, eps/T + C]
/// with B = C = 10. A coarse pass over the whole box picks the cell, then the
/// neighbourhood is rescanned at `grid_step`. Independent of the closed form.
BruteForceResult brute_force_rate(double epsilon, double T, double grid_step);

inline constexpr double kBruteForceBMax = 10.0;
inline constexpr double kBruteForceCSpan = 10.0;

}  // namespace jsqd
