#include "jsqd/ratefn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace jsqd {

EllBoundsReport ell_bounds_check(double K, const std::vector<double>& samples, double slack) {
  if (!(K > std::numbers::e * std::numbers::e))
    throw std::invalid_argument("ell_bounds_check: K must exceed e^2");
  EllBoundsReport rep;
  rep.K = K;
  rep.gamma = K / ell(K);
  for (double x : samples) {
    const double lx = ell(x);
    ++rep.checked_b;
    if (x > lx + 2.0 + slack) rep.violations.push_back({x, x, lx + 2.0, 'b'});
    if (x >= K) {
      ++rep.checked_a;
      if (x > rep.gamma * lx + slack) rep.violations.push_back({x, x, rep.gamma * lx, 'a'});
    }
  }
  return rep;
}

double control_cost(const MasterControl& ctrl, const PiecewisePath& zeta1, const CostWeights& weights) {
  ctrl.validate();
  if (zeta1.dimension() < 1) throw std::invalid_argument("control_cost: empty zeta path");
  if (!(weights.lambda > 0.0)) throw std::invalid_argument("control_cost: lambda must be positive");

  double arrival = 0.0;
  for (std::size_t k = 0; k < ctrl.pieces(); ++k)
    arrival += (ctrl.breakpoints[k + 1] - ctrl.breakpoints[k]) * ell(ctrl.alpha[k]);

  // ∫ zeta_1 ell(theta): split the zeta grid at control breakpoints; each
  // sub-interval has constant theta and zeta_1 is constant or linear on it.
  const Vector grid = merge_grids(zeta1.times(), Eigen::Map<const Vector>(ctrl.breakpoints.data(),
                                                                          static_cast<Eigen::Index>(ctrl.breakpoints.size())));
  double service = 0.0;
  for (Eigen::Index k = 0; k + 1 < grid.size(); ++k) {
    const double s0 = grid(k), s1 = grid(k + 1);
    if (s0 < 0.0 || s1 > ctrl.horizon()) continue;
    const double w = ell(ctrl.theta_at(s0));
    if (w == 0.0) continue;
    const double z0 = zeta1.at(s0)(0);
    const double mean = zeta1.interpolation() == Interpolation::linear ? 0.5 * (z0 + zeta1.at(s1)(0)) : z0;
    service += (s1 - s0) * mean * w;
  }
  return weights.lambda * arrival + service;
}

double optimal_arrival_multiplier(double c) {
  // (c + sqrt(4 + c^2)) / 2; for c < 0 use 2 / (sqrt(4 + c^2) − c) to avoid cancellation.
  const double r = std::hypot(2.0, c);
  return c >= 0.0 ? 0.5 * (c + r) : 2.0 / (r - c);
}

double tilt_objective(double c) {
  const double a = optimal_arrival_multiplier(c);
  return ell(a) + ell(1.0 / a);
}

RateResult optimal_rate_F_eps(double epsilon, double T) {
  if (!(epsilon > 0.0) || !(T > 0.0)) throw std::invalid_argument("optimal_rate_F_eps: epsilon and T must be positive");
  const double c = epsilon / T;
  const double a = optimal_arrival_multiplier(c);
  // b* = 1/a* = (sqrt(4 + c^2) − c) / 2, evaluated without cancellation
  const double b = 2.0 / (c + std::hypot(2.0, c));
  return {T * (ell(a) + ell(b)), {a, b, epsilon, T}};
}

namespace {

struct GridMin {
  double value = std::numeric_limits<double>::infinity();
  double b = 0.0;
  double c = 0.0;
};

// Scan b = b_lo + j h, c = c_lo + k h over the index box [jb0, jb1] x [kc0, kc1].
GridMin scan(double b_origin, double c_origin, double h, long jb0, long jb1, long kc0, long kc1) {
  GridMin best;
  for (long k = kc0; k <= kc1; ++k) {
    const double c = c_origin + static_cast<double>(k) * h;
    for (long j = jb0; j <= jb1; ++j) {
      const double b = b_origin + static_cast<double>(j) * h;
      const double v = ell(b + c) + ell(b);
      if (v < best.value) best = {v, b, c};
    }
  }
  return best;
}

}  // namespace

BruteForceResult brute_force_rate(double epsilon, double T, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("brute_force_rate: grid_step must be positive");
  if (!(T > 0.0)) throw std::invalid_argument("brute_force_rate: T must be positive");
  const double c_lo = epsilon / T;
  const long nb = std::lround(kBruteForceBMax / grid_step);
  const long nc = std::lround(kBruteForceCSpan / grid_step);

  // Coarse pass on a sub-lattice of the fine grid, then a full-resolution
  // rescan of the neighbourhood. The objective is convex, so the fine grid
  // minimum lies within a couple of coarse cells of the coarse minimum.
  const long stride = std::max(1L, std::lround(1e-2 / grid_step));
  const double H = static_cast<double>(stride) * grid_step;
  const GridMin coarse = scan(0.0, c_lo, H, 0, nb / stride, 0, nc / stride);
  const long jb = std::lround(coarse.b / grid_step);
  const long kc = std::lround((coarse.c - c_lo) / grid_step);
  const long w = 3 * stride;
  const GridMin fine = scan(0.0, c_lo, grid_step, std::max(0L, jb - w), std::min(nb, jb + w),
                            std::max(0L, kc - w), std::min(nc, kc + w));
  return {T * fine.value, fine.b, fine.c};
}

}  // namespace jsqd
