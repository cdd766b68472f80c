#include "jsqd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "jsqd/special.hpp"

namespace jsqd {

double beta_n(double x, std::int64_t n, std::int64_t d) {
  if (n < 1 || d < 1 || d > n) throw std::domain_error("beta_n: need 1 <= d <= n");
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("beta_n: x must lie in [0, 1]");
  const auto dn = static_cast<double>(n);
  double log_beta = 0.0;
  for (std::int64_t i = 0; i < d; ++i) {
    const double num = x - static_cast<double>(i) / dn;
    if (num <= 0.0) return 0.0;
    log_beta += std::log(num / (1.0 - static_cast<double>(i) / dn));
  }
  return std::exp(log_beta);
}

RoutingTable::RoutingTable(std::int64_t n, std::int64_t d) : n_(n), d_(d) {
  if (n < 1 || d < 1 || d > n) throw std::domain_error("routing: need 1 <= d <= n");
  beta_.assign(static_cast<std::size_t>(n) + 1, 0.0);
  double b = 1.0;
  beta_[static_cast<std::size_t>(n)] = 1.0;
  for (std::int64_t k = n; k > d; --k) {
    b *= static_cast<double>(k - d) / static_cast<double>(k);
    beta_[static_cast<std::size_t>(k - 1)] = b;
  }
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::G_eps: return "G_eps";
    case EventKind::F_eps: return "F_eps";
    case EventKind::U_j: return "U_j";
    case EventKind::V_j: return "V_j";
  }
  return "?";
}

EventKind event_kind_from_string(const std::string& s) {
  if (s == "G_eps" || s == "G") return EventKind::G_eps;
  if (s == "F_eps" || s == "F") return EventKind::F_eps;
  if (s == "U_j" || s == "U") return EventKind::U_j;
  if (s == "V_j" || s == "V") return EventKind::V_j;
  throw std::invalid_argument("unknown event kind '" + s + "'");
}

void RareEvent::validate() const {
  const bool by_eps = kind == EventKind::G_eps || kind == EventKind::F_eps;
  if (by_eps && !(epsilon > 0.0)) throw std::invalid_argument("event: epsilon must be positive");
  if (!by_eps && j < 3) throw std::invalid_argument("event: j must be at least 3");
}

OccupancyChain::OccupancyChain(const SystemParams& params, TiltSpec tilt, std::shared_ptr<const RoutingTable> routing)
    : n_(params.n),
      base_arrival_rate_(static_cast<double>(params.n) * params.lambda_n),
      arrival_rate_(base_arrival_rate_ * tilt.a),
      tilt_(tilt),
      log_a_(tilt.a > 0.0 ? std::log(tilt.a) : 0.0),
      log_b_(tilt.b > 0.0 ? std::log(tilt.b) : 0.0),
      routing_(std::move(routing)) {
  params.validate();
  if (tilt.a < 0.0 || tilt.b < 0.0) throw std::invalid_argument("tilt: multipliers must be non-negative");
  if (!routing_) routing_ = std::make_shared<RoutingTable>(params.n, params.d);
  if (routing_->servers() != params.n || routing_->choices() != params.d)
    throw std::invalid_argument("routing table does not match parameters");
  tails_.push_back(n_);
  const auto t = params.initial.state.tail_counts();
  tails_.insert(tails_.end(), t.begin(), t.end());
  total_ = params.initial.state.total_jobs();
}

std::size_t OccupancyChain::route(double u) const {
  // smallest i >= 1 with beta(T_i) <= u; beta(T_0) = 1 > u and beta(T_{L+1}) = 0
  std::size_t lo = 1, hi = tails_.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if ((*routing_)(tails_[mid]) <= u)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

Jump OccupancyChain::step(Rng& rng, double until) {
  const std::int64_t busy = tails_.size() > 1 ? tails_[1] : 0;
  const double departure_rate = tilt_.b * static_cast<double>(busy);
  const double total_rate = arrival_rate_ + departure_rate;
  // log dP/dQ accrues ∫ (rate_Q − rate_P) between jumps
  const double compensator_rate = base_arrival_rate_ * (tilt_.a - 1.0) + (tilt_.b - 1.0) * static_cast<double>(busy);

  const double dt = total_rate > 0.0 ? exponential(rng, total_rate) : std::numeric_limits<double>::infinity();
  if (time_ + dt >= until) {
    log_lr_ += compensator_rate * (until - time_);
    time_ = until;
    return {JumpKind::none, 0, time_};
  }
  log_lr_ += compensator_rate * dt;
  time_ += dt;

  if (uniform01(rng) * total_rate < arrival_rate_) {
    const std::size_t level = route(uniform01(rng));
    if (level == tails_.size()) tails_.push_back(0);
    ++tails_[level];
    ++total_;
    ++arrivals_;
    log_lr_ -= log_a_;
    return {JumpKind::arrival, level, time_};
  }
  // departure from a queue of length i with probability (T_i − T_{i+1}) / T_1
  const auto v = static_cast<std::int64_t>(uniform_below(rng, static_cast<std::uint64_t>(busy)));
  std::size_t lo = 1, hi = tails_.size() - 1;  // largest i with T_i > v
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (tails_[mid] > v)
      lo = mid;
    else
      hi = mid - 1;
  }
  --tails_[lo];
  if (lo + 1 == tails_.size() && tails_[lo] == 0) tails_.pop_back();
  --total_;
  ++departures_;
  log_lr_ -= log_b_;
  return {JumpKind::departure, lo, time_};
}

OccupancyState OccupancyChain::state() const {
  return OccupancyState::from_tail_counts(n_, std::span<const std::int64_t>(tails_).subspan(1));
}

bool event_holds(const RareEvent& ev, const OccupancyChain& chain, std::int64_t initial_total) {
  const auto n = static_cast<double>(chain.tail(0));
  switch (ev.kind) {
    case EventKind::G_eps: return static_cast<double>(chain.total_jobs() - initial_total) > ev.epsilon * n;
    case EventKind::F_eps: return static_cast<double>(chain.total_jobs() - initial_total) >= ev.epsilon * n;
    case EventKind::U_j: return chain.tail(static_cast<std::size_t>(ev.j)) > 0;
    case EventKind::V_j: return chain.tail(static_cast<std::size_t>(ev.j - 1)) == chain.tail(0);
  }
  return false;
}

SimResult simulate(const SystemParams& params, const TiltSpec& tilt, const std::optional<RareEvent>& event, Rng& rng,
                   const SimOptions& opts, std::shared_ptr<const RoutingTable> routing) {
  if (event) event->validate();
  OccupancyChain chain(params, tilt, std::move(routing));
  const std::int64_t initial_total = chain.total_jobs();
  const double horizon = params.horizon;

  // Report times strictly before the next jump see the pre-jump state.
  std::vector<std::vector<std::int64_t>> snapshots;
  std::size_t next_report = 0;
  auto snapshot = [&chain] {
    std::vector<std::int64_t> s(chain.levels());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = chain.tail(i + 1);
    return s;
  };
  auto record_before = [&](double t, const std::vector<std::int64_t>& state, bool inclusive) {
    while (next_report < opts.report_times.size() &&
           (opts.report_times[next_report] < t || (inclusive && opts.report_times[next_report] <= t))) {
      snapshots.push_back(state);
      ++next_report;
    }
  };

  SimResult res;
  if (event && event_holds(*event, chain, initial_total)) {
    res.hit = true;
    res.hit_time = 0.0;
  }
  const bool reporting = !opts.report_times.empty();
  std::vector<std::int64_t> before;
  while (!res.hit) {
    if (reporting) before = snapshot();
    const Jump j = chain.step(rng, horizon);
    if (reporting) record_before(chain.time(), before, j.kind == JumpKind::none);
    if (j.kind == JumpKind::none) break;
    if (event && event_holds(*event, chain, initial_total)) {
      res.hit = true;
      res.hit_time = j.time;
    }
  }

  res.log_lr = chain.log_likelihood_ratio();
  res.weight = std::exp(res.log_lr);
  res.final_state = chain.state();
  res.arrivals = chain.arrivals();
  res.departures = chain.departures();

  if (!opts.report_times.empty() && !snapshots.empty()) {
    std::size_t width = 1;
    for (const auto& s : snapshots) width = std::max(width, s.size());
    const auto rows = static_cast<Eigen::Index>(snapshots.size());
    Matrix v = Matrix::Zero(rows, static_cast<Eigen::Index>(width));
    const auto dn = static_cast<double>(params.n);
    for (Eigen::Index k = 0; k < rows; ++k)
      for (std::size_t i = 0; i < snapshots[static_cast<std::size_t>(k)].size(); ++i)
        v(k, static_cast<Eigen::Index>(i)) = static_cast<double>(snapshots[static_cast<std::size_t>(k)][i]) / dn;
    Vector t = Eigen::Map<const Vector>(opts.report_times.data(), rows);
    res.path = PiecewisePath(std::move(t), std::move(v), Interpolation::step);
  }
  return res;
}

SimResult simulate(const SystemParams& params, const TiltSpec& tilt, const std::optional<RareEvent>& event,
                   std::uint64_t seed, const SimOptions& opts) {
  Rng rng = make_stream(seed, 0);
  return simulate(params, tilt, event, rng, opts);
}

RemarkBound remark_bound(std::int64_t n, std::int64_t d, double T) {
  if (n < 1 || d < 1 || d > n) throw std::invalid_argument("remark_bound: need 1 <= d <= n");
  if (!(T > 0.0)) throw std::invalid_argument("remark_bound: T must be positive");
  RemarkBound rb;
  rb.log_binomial = log_binomial(n, d);
  rb.log_c_n = log_gamma_p(static_cast<double>(d + 1), 2.0 * static_cast<double>(n) * T);
  rb.log_lower_bound = -static_cast<double>(d + 1) * std::log(2.0) - rb.log_binomial + rb.log_c_n;
  rb.per_n_rate = rb.log_lower_bound / static_cast<double>(n);
  return rb;
}

DSchedule DSchedule::parse(const std::string& s) {
  if (s == "n" || s == "full") return {Kind::full, 0.0};
  if (s == "sqrt") return {Kind::sqrt, 0.0};
  if (s == "log") return {Kind::log, 0.0};
  try {
    if (s.rfind("pow:", 0) == 0) return {Kind::power, std::stod(s.substr(4))};
    if (s.rfind("const:", 0) == 0) return {Kind::constant, static_cast<double>(std::stoll(s.substr(6)))};
    std::size_t used = 0;
    const long long k = std::stoll(s, &used);
    if (used == s.size()) return {Kind::constant, static_cast<double>(k)};
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("unknown d schedule '" + s + "'");
}

std::int64_t DSchedule::operator()(std::int64_t n) const {
  const auto dn = static_cast<double>(n);
  double d = dn;
  switch (kind) {
    case Kind::full: d = dn; break;
    case Kind::sqrt: d = std::ceil(std::sqrt(dn)); break;
    case Kind::log: d = std::ceil(std::log(dn)); break;
    case Kind::power: d = std::ceil(std::pow(dn, param)); break;
    case Kind::constant: d = param; break;
  }
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(d), 1, n);
}

std::string DSchedule::name() const {
  switch (kind) {
    case Kind::full: return "n";
    case Kind::sqrt: return "sqrt";
    case Kind::log: return "log";
    case Kind::power: return "pow:" + std::to_string(param);
    case Kind::constant: return "const:" + std::to_string(static_cast<long long>(param));
  }
  return "?";
}

}  // namespace jsqd
