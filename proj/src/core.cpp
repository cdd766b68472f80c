#include "jsqd/core.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jsqd {

OccupancyState::OccupancyState(std::int64_t n, std::vector<std::int64_t> counts)
    : n_(n), counts_(std::move(counts)) {
  if (n_ <= 0) throw std::invalid_argument("occupancy: server count must be positive");
  std::int64_t busy = 0;
  for (auto c : counts_) {
    if (c < 0) throw std::invalid_argument("occupancy: negative count");
    busy += c;
  }
  if (busy > n_) throw std::invalid_argument("occupancy: more busy queues than servers");
  while (!counts_.empty() && counts_.back() == 0) counts_.pop_back();
}

OccupancyState OccupancyState::from_tail_counts(std::int64_t n,
                                                std::span<const std::int64_t> tails) {
  std::vector<std::int64_t> counts(tails.size());
  for (std::size_t i = 0; i < tails.size(); ++i) {
    const std::int64_t next = i + 1 < tails.size() ? tails[i + 1] : 0;
    if (tails[i] < next || tails[i] > n)
      throw std::invalid_argument("occupancy: tail counts must be non-increasing in [0, n]");
    counts[i] = tails[i] - next;
  }
  return OccupancyState(n, std::move(counts));
}

OccupancyState OccupancyState::all_busy(std::int64_t n) { return OccupancyState(n, {n}); }

std::int64_t OccupancyState::tail_count(std::size_t level) const {
  if (level == 0) return n_;
  std::int64_t t = 0;
  for (std::size_t k = level - 1; k < counts_.size(); ++k) t += counts_[k];
  return t;
}

std::vector<std::int64_t> OccupancyState::tail_counts() const {
  std::vector<std::int64_t> t(counts_.size());
  std::int64_t acc = 0;
  for (std::size_t k = counts_.size(); k-- > 0;) {
    acc += counts_[k];
    t[k] = acc;
  }
  return t;
}

Vector OccupancyState::tails() const { return tails(static_cast<Eigen::Index>(counts_.size())); }

Vector OccupancyState::tails(Eigen::Index m) const {
  Vector x = Vector::Zero(m);
  const auto t = tail_counts();
  const auto dn = static_cast<double>(n_);
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(m, static_cast<Eigen::Index>(t.size())); ++i)
    x(i) = static_cast<double>(t[i]) / dn;
  return x;
}

std::int64_t OccupancyState::total_jobs() const {
  std::int64_t total = 0;
  for (std::size_t k = 0; k < counts_.size(); ++k)
    total += static_cast<std::int64_t>(k + 1) * counts_[k];
  return total;
}

InitialOccupancy InitialOccupancy::exact(OccupancyState state) {
  Vector x = state.tails();
  return {std::move(state), std::move(x)};
}

InitialOccupancy InitialOccupancy::from_limit(std::int64_t n, const Vector& x) {
  std::vector<std::int64_t> tails(static_cast<std::size_t>(x.size()));
  std::int64_t prev = n;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < 0.0 || x(i) > 1.0) throw std::invalid_argument("initial: x_i must lie in [0, 1]");
    auto t = static_cast<std::int64_t>(std::floor(x(i) * static_cast<double>(n) + 1e-9));
    t = std::min(t, prev);
    tails[static_cast<std::size_t>(i)] = t;
    prev = t;
  }
  return {OccupancyState::from_tail_counts(n, tails), x};
}

double InitialOccupancy::discrepancy() const {
  const Eigen::Index m = std::max<Eigen::Index>(limit.size(), static_cast<Eigen::Index>(state.levels()));
  Vector lim = Vector::Zero(m);
  lim.head(limit.size()) = limit;
  return l1_norm(state.tails(m) - lim);
}

void SystemParams::validate() const {
  if (n <= 0) throw std::invalid_argument("params: n must be positive");
  if (d < 1 || d > n) throw std::invalid_argument("params: d must satisfy 1 <= d <= n");
  if (!(lambda_n > 0.0)) throw std::invalid_argument("params: lambda_n must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("params: horizon must be positive");
  if (initial.state.servers() != n)
    throw std::invalid_argument("params: initial state has a different server count");
}

std::string to_string(Interpolation interp) {
  return interp == Interpolation::step ? "step" : "linear";
}

Interpolation interpolation_from_string(const std::string& s) {
  if (s == "step") return Interpolation::step;
  if (s == "linear") return Interpolation::linear;
  throw std::invalid_argument("unknown interpolation '" + s + "'");
}

PiecewisePath::PiecewisePath(Vector times, Matrix values, Interpolation interp)
    : times_(std::move(times)), values_(std::move(values)), interp_(interp) {
  if (times_.size() == 0) throw std::invalid_argument("path: empty time grid");
  if (values_.rows() != times_.size())
    throw std::invalid_argument("path: one value row per grid time required");
  for (Eigen::Index k = 1; k < times_.size(); ++k)
    if (!(times_(k) > times_(k - 1)))
      throw std::invalid_argument("path: times must be strictly increasing");
}

Vector PiecewisePath::at(double t) const {
  const auto* first = times_.data();
  const auto* last = first + times_.size();
  if (t <= *first) return values_.row(0).transpose();
  if (t >= *(last - 1)) return values_.row(times_.size() - 1).transpose();
  // k: last grid index with times_(k) <= t
  const auto k = static_cast<Eigen::Index>(std::upper_bound(first, last, t) - first) - 1;
  if (interp_ == Interpolation::step || times_(k) == t) return values_.row(k).transpose();
  const double w = (t - times_(k)) / (times_(k + 1) - times_(k));
  return ((1.0 - w) * values_.row(k) + w * values_.row(k + 1)).transpose();
}

PiecewisePath PiecewisePath::coordinate(Eigen::Index i) const {
  return PiecewisePath(times_, values_.col(i), interp_);
}

Vector merge_grids(const Vector& a, const Vector& b, double tol) {
  std::vector<double> all(a.data(), a.data() + a.size());
  all.insert(all.end(), b.data(), b.data() + b.size());
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  out.reserve(all.size());
  for (double t : all)
    if (out.empty() || t - out.back() > tol) out.push_back(t);
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

double sup_l1_distance(const PiecewisePath& a, const PiecewisePath& b) {
  if (a.dimension() != b.dimension()) throw std::invalid_argument("sup_l1_distance: dimension mismatch");
  const Vector grid = merge_grids(a.times(), b.times());
  double sup = 0.0;
  for (Eigen::Index k = 0; k < grid.size(); ++k) sup = std::max(sup, l1_norm(a.at(grid(k)) - b.at(grid(k))));
  return sup;
}

}  // namespace jsqd
