#pragma once

// Controlled fluid equations for the occupancy tail vector zeta with master
// controls (alpha, theta):
//
//   psi_1' = lambda alpha − theta (zeta_1 − zeta_2)
//   psi_i' =              − theta (zeta_i − zeta_{i+1}),   i >= 2
//   zeta   = Gamma_M(psi)
//
// alpha = theta = 1 is the law-of-large-numbers limit.

#include <stdexcept>
#include <string>
#include <vector>

#include "jsqd/control.hpp"
#include "jsqd/core.hpp"

namespace jsqd {

struct FluidSolution {
  PiecewisePath zeta;
  PiecewisePath psi;
  PiecewisePath eta;
  Eigen::Index truncation = 0;
  double dt = 0.0;
};

/// Raised when the top retained level comes within `margin` of the barrier,
/// i.e. mass would have to reflect into a level that is not tracked.
class TruncationError : public std::runtime_error {
 public:
  TruncationError(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Smallest M with x0_M = 0, plus ceil(lambda * alpha_max * T) + 2 spare levels.
Eigen::Index default_truncation(const Vector& x0, double lambda, double alpha_max, double T);

struct FluidOptions {
  double margin = 1e-9;
};

/// First-order split step: explicit Euler for psi using the current zeta,
/// then the incremental Skorokhod projection. The time grid is uniform with
/// spacing dt plus every control breakpoint. truncation <= 0 selects
/// default_truncation().
FluidSolution integrate_fluid(const Vector& x0, const MasterControl& ctrl, double lambda, double T, double dt,
                              Eigen::Index truncation = 0, FluidOptions opts = {});

FluidSolution lln_trajectory(const Vector& x0, double lambda, double T, double dt, Eigen::Index truncation = 0);

struct ConvergenceReport {
  std::vector<double> dts;
  /// sup over the coarse grid of ||zeta^{dt} − zeta^{dt/2}||_1, one per dt.
  std::vector<double> errors;
  /// errors[k+1] / errors[k].
  std::vector<double> ratios;
  /// Every error is at rounding level (the scheme is exact for this input).
  bool exact = false;
  /// Every ratio lies in [0.4, 0.6].
  bool first_order = false;
};

ConvergenceReport wellposedness_check(const Vector& x0, const MasterControl& ctrl, double lambda, double T,
                                      const std::vector<double>& dt_list, Eigen::Index truncation = 0);

}  // namespace jsqd
