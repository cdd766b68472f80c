#pragma once

// Shared domain types for the JSQ(d) occupancy model: occupancy vectors,
// time-indexed trajectories and the system parameter record.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace jsqd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Sum of absolute entries. Works on any dense Eigen expression.
template <typename Derived>
typename Derived::Scalar l1_norm(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseAbs().sum();
}

/// Exact occupancy of an n-server system.
///
/// counts[k] is the number of queues holding exactly k+1 jobs. The scaled
/// tail x_i = (1/n) * sum_{j>=i} c_j is derived, never stored.
class OccupancyState {
 public:
  OccupancyState() = default;
  OccupancyState(std::int64_t n, std::vector<std::int64_t> counts);

  /// Builds a state from integer tail counts n*x_1 >= n*x_2 >= ... >= 0.
  static OccupancyState from_tail_counts(std::int64_t n,
                                         std::span<const std::int64_t> tails);
  /// All n queues hold exactly one job.
  static OccupancyState all_busy(std::int64_t n);

  std::int64_t servers() const { return n_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::size_t levels() const { return counts_.size(); }

  /// Number of queues with length >= level (level >= 1). Level 0 returns n.
  std::int64_t tail_count(std::size_t level) const;
  std::vector<std::int64_t> tail_counts() const;
  /// Scaled tails (x_1, ..., x_L).
  Vector tails() const;
  /// Scaled tails padded with zeros (or truncated) to dimension m.
  Vector tails(Eigen::Index m) const;

  std::int64_t total_jobs() const;
  std::int64_t busy_servers() const { return tail_count(1); }

  bool operator==(const OccupancyState&) const = default;

 private:
  std::int64_t n_ = 0;
  std::vector<std::int64_t> counts_;
};

/// sum_i i * c_i, equal to n * ||x||_1.
inline std::int64_t total_jobs(const OccupancyState& s) { return s.total_jobs(); }

/// Initial condition: exact counts for the finite system plus the limiting
/// vector used by the fluid solvers.
struct InitialOccupancy {
  OccupancyState state;
  Vector limit;

  /// Uses the scaled tails of `state` as the limit.
  static InitialOccupancy exact(OccupancyState state);
  /// Rounds n*x_i down to integer tail counts (kept monotone).
  static InitialOccupancy from_limit(std::int64_t n, const Vector& x);

  /// ||x^n - x||_1 over the union of supports.
  double discrepancy() const;
};

struct SystemParams {
  std::int64_t n = 1;
  std::int64_t d = 1;
  double lambda_n = 1.0;
  double horizon = 1.0;
  InitialOccupancy initial;

  /// Throws std::invalid_argument when an invariant fails.
  void validate() const;
};

enum class Interpolation { step, linear };

std::string to_string(Interpolation interp);
Interpolation interpolation_from_string(const std::string& s);

/// Trajectory of fixed-dimension vectors on a strictly increasing time grid.
/// Row k of `values` is the vector at `times[k]`.
class PiecewisePath {
 public:
  PiecewisePath() = default;
  PiecewisePath(Vector times, Matrix values, Interpolation interp);

  Eigen::Index size() const { return times_.size(); }
  Eigen::Index dimension() const { return values_.cols(); }
  Interpolation interpolation() const { return interp_; }
  const Vector& times() const { return times_; }
  const Matrix& values() const { return values_; }

  double start_time() const { return times_(0); }
  double end_time() const { return times_(times_.size() - 1); }

  /// Value at time t (clamped to the grid range).
  Vector at(double t) const;
  /// Coordinate i (0-based) as a scalar path.
  PiecewisePath coordinate(Eigen::Index i) const;

 private:
  Vector times_;
  Matrix values_;
  Interpolation interp_ = Interpolation::linear;
};

/// sup over the union of both grids of ||a(t) - b(t)||_1.
double sup_l1_distance(const PiecewisePath& a, const PiecewisePath& b);

/// Sorted union of two time grids, merging points closer than tol.
Vector merge_grids(const Vector& a, const Vector& b, double tol = 0.0);

}  // namespace jsqd
