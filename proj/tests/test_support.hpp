#pragma once

// Random inputs and independent reference computations shared by the unit
// and acceptance suites. Nothing here calls into the code under test.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "jsqd/core.hpp"

namespace jsqd::testing {

/// Random piecewise-linear psi with psi(0) <= 1, K segments on [0, T].
inline PiecewisePath random_linear_psi(std::mt19937_64& gen, Eigen::Index m, Eigen::Index segments, double T = 1.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector t(segments + 1);
  t(0) = 0.0;
  for (Eigen::Index k = 1; k <= segments; ++k) t(k) = t(k - 1) + 0.2 + u(gen);
  t *= T / t(segments);
  Matrix v(segments + 1, m);
  for (Eigen::Index i = 0; i < m; ++i) v(0, i) = 1.0 - 0.6 * u(gen);
  for (Eigen::Index k = 1; k <= segments; ++k)
    for (Eigen::Index i = 0; i < m; ++i) v(k, i) = v(k - 1, i) + (2.0 * u(gen) - 0.8) * (t(k) - t(k - 1)) * 2.0;
  return PiecewisePath(t, v, Interpolation::linear);
}

/// Samples a path on a uniform grid of `points` points.
inline PiecewisePath resample(const PiecewisePath& p, Eigen::Index points, Interpolation interp) {
  Vector t = Vector::LinSpaced(points, p.start_time(), p.end_time());
  Matrix v(points, p.dimension());
  for (Eigen::Index k = 0; k < points; ++k) v.row(k) = p.at(t(k)).transpose();
  return PiecewisePath(t, v, interp);
}

/// Discrete one-sided reflection in chain order on raw samples: the running
/// maximum formula applied coordinate by coordinate.
inline Matrix reference_reflection(const Matrix& psi) {
  Matrix phi(psi.rows(), psi.cols());
  Vector eta_prev = Vector::Zero(psi.rows());
  for (Eigen::Index i = 0; i < psi.cols(); ++i) {
    Vector eta(psi.rows());
    double run = 0.0;
    for (Eigen::Index k = 0; k < psi.rows(); ++k) {
      const double z = psi(k, i) + eta_prev(k);
      run = std::max(run, z - 1.0);
      eta(k) = run;
      phi(k, i) = z - run;
    }
    eta_prev = eta;
  }
  return phi;
}

/// C(n, k) in exact integer arithmetic (fits in int64 for n <= 60).
inline std::int64_t binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t r = 1;
  for (std::int64_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace jsqd::testing
