#pragma once

// Exact simulation of the n-server JSQ(d) occupancy process, optionally under
// constant exponential tilts of the arrival and service rates with the
// likelihood ratio dP/dQ accumulated along the path.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "jsqd/core.hpp"
#include "jsqd/rng.hpp"

namespace jsqd {

/// prod_{i<d} ((x − i/n) / (1 − i/n))^+ : the probability that d servers
/// sampled without replacement all fall in a given set of n x servers.
/// Throws std::domain_error unless 0 <= x <= 1 and 1 <= d <= n.
double beta_n(double x, std::int64_t n, std::int64_t d);

/// beta_n(k / n) for every integer k in [0, n], via the ratio
/// beta(k − 1) / beta(k) = (k − d) / k starting from beta(n) = 1.
class RoutingTable {
 public:
  RoutingTable(std::int64_t n, std::int64_t d);

  std::int64_t servers() const { return n_; }
  std::int64_t choices() const { return d_; }
  double operator()(std::int64_t tail_count) const { return beta_[static_cast<std::size_t>(tail_count)]; }

 private:
  std::int64_t n_;
  std::int64_t d_;
  std::vector<double> beta_;
};

/// Constant tilt: arrivals at n lambda_n a, each busy server at rate b.
struct TiltSpec {
  double a = 1.0;
  double b = 1.0;

  static TiltSpec none() { return {}; }
  bool untilted() const { return a == 1.0 && b == 1.0; }
};

enum class EventKind {
  G_eps,  ///< ||X(t)||_1 >  ||x^n||_1 + eps for some t
  F_eps,  ///< ||X(t)||_1 >= ||x^n||_1 + eps for some t
  U_j,    ///< X_j(t) > 0 for some t (some queue reaches length j)
  V_j,    ///< X_{j−1}(t) = 1 for some t (every queue reaches length j − 1)
};

std::string to_string(EventKind k);
EventKind event_kind_from_string(const std::string& s);

struct RareEvent {
  EventKind kind = EventKind::G_eps;
  double epsilon = 1.0;
  int j = 3;

  static RareEvent G(double eps) { return {EventKind::G_eps, eps, 0}; }
  static RareEvent F(double eps) { return {EventKind::F_eps, eps, 0}; }
  static RareEvent U(int j) { return {EventKind::U_j, 0.0, j}; }
  static RareEvent V(int j) { return {EventKind::V_j, 0.0, j}; }

  void validate() const;
};

enum class JumpKind { none, arrival, departure };

struct Jump {
  JumpKind kind = JumpKind::none;
  /// Level whose tail count changed: arrival to a queue of length level−1,
  /// or departure from a queue of length level.
  std::size_t level = 0;
  double time = 0.0;
};

/// The occupancy Markov chain with tail counts T_i = #queues of length >= i as
/// state. Every jump changes exactly one T_i by ±1.
class OccupancyChain {
 public:
  OccupancyChain(const SystemParams& params, TiltSpec tilt, std::shared_ptr<const RoutingTable> routing = nullptr);

  /// Advances by one jump unless the next event falls at or after `until`, in
  /// which case time moves to `until` and a JumpKind::none jump is returned.
  Jump step(Rng& rng, double until);

  double time() const { return time_; }
  double log_likelihood_ratio() const { return log_lr_; }
  std::int64_t tail(std::size_t level) const { return level < tails_.size() ? tails_[level] : 0; }
  /// Highest non-empty level.
  std::size_t levels() const { return tails_.size() - 1; }
  std::int64_t total_jobs() const { return total_; }
  std::uint64_t arrivals() const { return arrivals_; }
  std::uint64_t departures() const { return departures_; }
  OccupancyState state() const;

  /// Level i >= 1 receiving an arrival when the routing draw is u in [0, 1).
  std::size_t route(double u) const;

 private:
  std::int64_t n_;
  double base_arrival_rate_;  // n lambda_n
  double arrival_rate_;       // n lambda_n a
  TiltSpec tilt_;
  double log_a_, log_b_;
  std::shared_ptr<const RoutingTable> routing_;
  std::vector<std::int64_t> tails_;  // tails_[0] = n
  std::int64_t total_ = 0;
  double time_ = 0.0;
  double log_lr_ = 0.0;
  std::uint64_t arrivals_ = 0, departures_ = 0;
};

struct SimOptions {
  /// Times at which the state is recorded (ascending, within [0, T]).
  std::vector<double> report_times;
};

struct SimResult {
  bool hit = false;
  std::optional<double> hit_time;
  double log_lr = 0.0;
  double weight = 1.0;  ///< exp(log_lr)
  OccupancyState final_state;
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
  /// Scaled tails at SimOptions::report_times (step interpolation); empty
  /// when no report times were requested.
  std::optional<PiecewisePath> path;
};

/// Whether the current chain state lies in the event.
bool event_holds(const RareEvent& ev, const OccupancyChain& chain, std::int64_t initial_total);

/// Runs until the horizon or the first entry into `event`.
SimResult simulate(const SystemParams& params, const TiltSpec& tilt, const std::optional<RareEvent>& event, Rng& rng,
                   const SimOptions& opts = {}, std::shared_ptr<const RoutingTable> routing = nullptr);
SimResult simulate(const SystemParams& params, const TiltSpec& tilt, const std::optional<RareEvent>& event,
                   std::uint64_t seed, const SimOptions& opts = {});

struct ReplicaRecord {
  std::uint64_t replica = 0;
  bool hit = false;
  double hit_time = 0.0;
  double weight = 0.0;
  std::uint64_t arrivals = 0;
  std::uint64_t departures = 0;
};

struct EstimateResult {
  double p_hat = 0.0;
  double std_err = 0.0;
  double neg_log_rate = 0.0;  ///< −(1/n) log p_hat, +inf when p_hat = 0
  double rel_std_err = 0.0;
  std::uint64_t replications = 0;
  std::uint64_t hits = 0;
  std::string warning;
  std::vector<ReplicaRecord> records;
};

/// Importance-sampling estimate of P(event) from replications under the tilt.
/// Replica r draws from make_stream(seed0, r); the result does not depend on
/// the worker count. workers = 0 uses worker_count().
EstimateResult estimate_probability(const SystemParams& params, const RareEvent& event, const TiltSpec& tilt,
                                    std::uint64_t replications, std::uint64_t seed0, unsigned workers = 0,
                                    bool keep_records = false);

struct RemarkBound {
  double log_lower_bound = 0.0;  ///< log P(A^n)
  double per_n_rate = 0.0;       ///< log P(A^n) / n
  double log_binomial = 0.0;     ///< log C(n, d)
  double log_c_n = 0.0;          ///< log P(Gamma(d + 1, rate 2n) <= T)
};

/// Lower bound on P(some queue reaches length 3) from the event that d + 1
/// arrivals precede the first departure, fill d queues to length 2, the last
/// one joins one of them, all before T. Assumes lambda_n = 1, x^n = (1, 0, ...).
RemarkBound remark_bound(std::int64_t n, std::int64_t d, double T);

/// Named d_n schedules: "n", "sqrt", "log", "pow:<gamma>", "const:<k>" or a bare integer.
struct DSchedule {
  enum class Kind { full, sqrt, log, power, constant } kind = Kind::full;
  double param = 0.0;

  static DSchedule parse(const std::string& s);
  std::int64_t operator()(std::int64_t n) const;
  std::string name() const;
};

}  // namespace jsqd
