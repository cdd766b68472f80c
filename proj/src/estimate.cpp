#include <cmath>
#include <limits>

#include "jsqd/parallel.hpp"
#include "jsqd/simulator.hpp"

namespace jsqd {

EstimateResult estimate_probability(const SystemParams& params, const RareEvent& event, const TiltSpec& tilt,
                                    std::uint64_t replications, std::uint64_t seed0, unsigned workers,
                                    bool keep_records) {
  if (replications < 2) throw std::invalid_argument("estimate_probability: need at least two replications");
  params.validate();
  event.validate();
  const auto routing = std::make_shared<const RoutingTable>(params.n, params.d);

  std::vector<ReplicaRecord> records(replications);
  parallel_for(replications, workers == 0 ? worker_count() : workers, [&](std::uint64_t r) {
    Rng rng = make_stream(seed0, r);
    const SimResult s = simulate(params, tilt, event, rng, {}, routing);
    records[r] = {r, s.hit, s.hit_time.value_or(0.0), s.hit ? s.weight : 0.0, s.arrivals, s.departures};
  });

  // Ordered fold: identical sums regardless of which thread ran which replica.
  EstimateResult out;
  out.replications = replications;
  double sum = 0.0;
  for (const auto& rec : records) {
    sum += rec.weight;
    out.hits += rec.hit ? 1 : 0;
  }
  const auto reps = static_cast<double>(replications);
  out.p_hat = sum / reps;
  double ss = 0.0;
  for (const auto& rec : records) ss += (rec.weight - out.p_hat) * (rec.weight - out.p_hat);
  out.std_err = std::sqrt(ss / (reps - 1.0) / reps);
  if (out.p_hat > 0.0) {
    out.neg_log_rate = -std::log(out.p_hat) / static_cast<double>(params.n);
    out.rel_std_err = out.std_err / out.p_hat;
  } else {
    out.neg_log_rate = std::numeric_limits<double>::infinity();
    out.rel_std_err = std::numeric_limits<double>::infinity();
    out.warning = "no replication hit the event; rate reported as +inf";
  }
  if (keep_records) out.records = std::move(records);
  return out;
}

}  // namespace jsqd
