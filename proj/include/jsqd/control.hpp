#pragma once

#include <vector>

#include "jsqd/core.hpp"

namespace jsqd {

/// Piecewise-constant arrival control alpha and master service control theta.
///
/// breakpoints = {s_0 = 0 < s_1 < ... < s_K = T}; alpha[k], theta[k] hold on
/// [s_k, s_{k+1}). theta is constant in y across the occupied bands.
struct MasterControl {
  std::vector<double> breakpoints;
  std::vector<double> alpha;
  std::vector<double> theta;

  static MasterControl constant(double alpha, double theta, double horizon);

  double horizon() const { return breakpoints.back(); }
  std::size_t pieces() const { return alpha.size(); }
  /// Index of the piece containing s (right-continuous; s = T maps to the last piece).
  std::size_t piece(double s) const;
  double alpha_at(double s) const { return alpha[piece(s)]; }
  double theta_at(double s) const { return theta[piece(s)]; }
  double theta_max() const;
  double alpha_max() const;

  /// Throws std::invalid_argument on negative values or a malformed grid.
  void validate() const;
};

}  // namespace jsqd
