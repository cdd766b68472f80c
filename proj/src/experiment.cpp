#include "jsqd/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "jsqd/fluid.hpp"
#include "jsqd/parallel.hpp"
#include "jsqd/path_io.hpp"
#include "jsqd/ratefn.hpp"
#include "jsqd/simulator.hpp"
#include "jsqd/skorokhod.hpp"

#ifndef JSQD_VERSION
#define JSQD_VERSION "0.0.0"
#endif

namespace jsqd {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::lln: return "lln";
    case ExperimentKind::rate_table: return "rate-table";
    case ExperimentKind::rare_decay: return "rare-decay";
    case ExperimentKind::skorokhod_selftest: return "skorokhod-selftest";
    case ExperimentKind::fluid_selftest: return "fluid-selftest";
    case ExperimentKind::remark_bound: return "remark-bound";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::lln, ExperimentKind::rate_table, ExperimentKind::rare_decay,
                 ExperimentKind::skorokhod_selftest, ExperimentKind::fluid_selftest, ExperimentKind::remark_bound})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------- utilities

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need two or more points");
  const auto k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: x values are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_cell(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number()) return fmt(v.get<double>());
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  return "";
}

// JSON cannot hold inf/nan; store them as strings so the payload stays valid.
json num(double v) { return std::isfinite(v) ? json(v) : json(fmt(v)); }

double as_double(const json& v) {
  if (v.is_string()) return std::stod(v.get<std::string>());
  return v.get<double>();
}

std::uint64_t point_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(0x5eedULL + index));
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << bytes;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------ config parsing

const json kGridKeys = {"n", "d", "lambda", "epsilon", "T", "j"};

json defaults_for(ExperimentKind kind) {
  json d;
  d["output_dir"] = "jsqd-out/" + to_string(kind);
  d["grid"] = json::object();
  d["tolerances"] = json::object();
  d["options"] = json::object();
  switch (kind) {
    case ExperimentKind::rate_table:
      d["grid"] = {{"epsilon", {0.25, 0.5, 1.0}}, {"T", {1.0, 2.0}}};
      d["tolerances"] = {{"gap_per_T", 1e-6}};
      d["options"] = {{"grid_step", 1e-4}};
      break;
    case ExperimentKind::rare_decay:
      d["grid"] = {{"n", {50, 100, 200}}, {"d", {"n"}}, {"lambda", {1.0}}, {"epsilon", {1.0}}, {"T", {1.0}}, {"j", {3}}};
      d["replications"] = 10000;
      d["event"] = "G_eps";
      d["tilt"] = {{"mode", "optimal"}};
      d["initial"] = "all_busy";
      d["tolerances"] = {{"slope_rel", 0.15}, {"rate_min", 0.19}, {"rate_max", 0.31}, {"rel_std_err", 0.10}};
      break;
    case ExperimentKind::lln:
      d["grid"] = {{"n", {10000}}, {"d", {"sqrt"}}, {"lambda", {0.9}}, {"T", {2.0}}};
      d["replications"] = 100;
      d["initial"] = "all_busy";
      d["tolerances"] = {{"sup_distance", 0.05}, {"quantile", 0.95}};
      d["options"] = {{"report_points", 201}, {"dt", 1e-3}, {"truncation", 0}, {"path_csv", false}};
      break;
    case ExperimentKind::remark_bound:
      d["grid"] = {{"n", {100, 1000, 10000, 100000, 1000000}}, {"d", {"sqrt"}}, {"T", {1.0}}};
      d["tolerances"] = {{"final_rate", 0.02}};
      break;
    case ExperimentKind::skorokhod_selftest:
      d["tolerances"] = {{"residual", 1e-8}, {"refinement", 1e-6}, {"identity", 0.0}};
      d["options"] = {{"paths", 500}, {"max_dimension", 8}, {"max_segments", 12}};
      break;
    case ExperimentKind::fluid_selftest:
      d["grid"] = {{"epsilon", {1.0}}, {"T", {1.0}}};
      d["tolerances"] = {{"mass", 1e-3}, {"pinned", 1e-10}, {"cost", 1e-6}, {"ratio_min", 0.4}, {"ratio_max", 0.6}};
      d["options"] = {{"dt", 1e-4}, {"dt_list", {1e-2, 5e-3, 2.5e-3, 1.25e-3}}};
      break;
  }
  return d;
}

bool stochastic(ExperimentKind k) {
  return k == ExperimentKind::lln || k == ExperimentKind::rare_decay || k == ExperimentKind::skorokhod_selftest;
}

std::int64_t as_int(const json& v, const std::string& what) {
  if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (x == std::floor(x) && std::abs(x) < 9e18) return static_cast<std::int64_t>(x);
  }
  throw ConfigError(what + ": expected an integer");
}

double as_real(const json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError(what + ": expected a number");
  return v.get<double>();
}

// Overlays `user` onto `base` one level deep; keys absent from `base` are errors.
json overlay(json base, const json& user, const std::string& section) {
  if (user.is_null()) return base;
  if (!user.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [k, v] : user.items()) {
    if (!base.contains(k)) throw ConfigError(section + ": unknown key '" + k + "'");
    base[k] = v;
  }
  return base;
}

json normalize_tilt(const json& t) {
  if (t.is_string()) {
    const auto s = t.get<std::string>();
    if (s == "optimal" || s == "none") return {{"mode", s}};
    throw ConfigError("tilt: expected \"optimal\", \"none\" or {\"a\": .., \"b\": ..}");
  }
  if (t.is_object()) {
    if (t.contains("mode") && t.size() == 1 && t["mode"].is_string()) return normalize_tilt(t["mode"]);
    json out = {{"mode", "fixed"}};
    for (const auto& [k, v] : t.items()) {
      if (k == "mode") {
        if (v != "fixed") throw ConfigError("tilt: mode with a, b must be \"fixed\"");
        continue;
      }
      if (k != "a" && k != "b") throw ConfigError("tilt: unknown key '" + k + "'");
      const double x = as_real(v, "tilt." + k);
      if (!(x > 0.0)) throw ConfigError("tilt." + k + " must be positive");
      out[k] = x;
    }
    if (!out.contains("a") || !out.contains("b")) throw ConfigError("tilt: both a and b are required");
    return out;
  }
  throw ConfigError("tilt: expected a string or an object");
}

Vector initial_limit(const json& init) {
  if (init.is_string()) {
    if (init == "all_busy") return Vector::Ones(1);
    if (init == "empty") return Vector::Zero(1);
    throw ConfigError("initial: expected \"all_busy\", \"empty\" or a list of tails");
  }
  if (!init.is_array() || init.empty()) throw ConfigError("initial: expected a non-empty list");
  Vector x(static_cast<Eigen::Index>(init.size()));
  for (std::size_t i = 0; i < init.size(); ++i) {
    x(static_cast<Eigen::Index>(i)) = as_real(init[i], "initial");
    if (x(static_cast<Eigen::Index>(i)) < 0.0 || x(static_cast<Eigen::Index>(i)) > 1.0)
      throw ConfigError("initial: tails must lie in [0, 1]");
    if (i > 0 && x(static_cast<Eigen::Index>(i)) > x(static_cast<Eigen::Index>(i - 1)))
      throw ConfigError("initial: tails must be non-increasing");
  }
  return x;
}

}  // namespace

nlohmann::json experiment_defaults(ExperimentKind kind) { return defaults_for(kind); }

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains("experiment") || !j["experiment"].is_string()) throw ConfigError("config: 'experiment' is required");
  ExperimentConfig cfg;
  cfg.kind = experiment_kind_from_string(j["experiment"].get<std::string>());
  const json d = defaults_for(cfg.kind);

  static const std::vector<std::string> known{"experiment", "output_dir", "seed",     "replications", "grid",
                                              "event",      "tilt",       "initial",  "tolerances",   "options"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("config: unknown key '" + k + "'");
  for (const char* k : {"replications", "event", "tilt", "initial"})
    if (j.contains(k) && !d.contains(k))
      throw ConfigError(std::string("config: '") + k + "' does not apply to " + to_string(cfg.kind));

  // grid
  json grid = d["grid"];
  if (j.contains("grid")) {
    if (!j["grid"].is_object()) throw ConfigError("grid: expected an object");
    for (const auto& [k, v] : j["grid"].items()) {
      if (std::find(kGridKeys.begin(), kGridKeys.end(), k) == kGridKeys.end())
        throw ConfigError("grid: unknown key '" + k + "'");
      if (!grid.contains(k)) throw ConfigError("grid: '" + k + "' does not apply to " + to_string(cfg.kind));
      grid[k] = v.is_array() ? v : json::array({v});
    }
  }
  for (const auto& [k, v] : grid.items())
    if (v.empty()) throw ConfigError("grid." + k + " must not be empty");
  if (grid.contains("n"))
    for (const auto& v : grid["n"]) {
      const auto n = as_int(v, "grid.n");
      if (n < 1) throw ConfigError("grid.n entries must be positive");
      cfg.grid.n.push_back(n);
    }
  if (grid.contains("d"))
    for (const auto& v : grid["d"]) {
      std::string s = v.is_string() ? v.get<std::string>() : std::to_string(as_int(v, "grid.d"));
      try {
        s = DSchedule::parse(s).name();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("grid.d: ") + e.what());
      }
      cfg.grid.d.push_back(s);
    }
  auto reals = [&](const char* key, std::vector<double>& out) {
    if (!grid.contains(key)) return;
    for (const auto& v : grid[key]) {
      const double x = as_real(v, std::string("grid.") + key);
      if (!(x > 0.0)) throw ConfigError(std::string("grid.") + key + " entries must be positive");
      out.push_back(x);
    }
  };
  reals("lambda", cfg.grid.lambda);
  reals("epsilon", cfg.grid.epsilon);
  reals("T", cfg.grid.T);
  if (grid.contains("j"))
    for (const auto& v : grid["j"]) {
      const auto jj = as_int(v, "grid.j");
      if (jj < 3) throw ConfigError("grid.j entries must be at least 3");
      cfg.grid.j.push_back(static_cast<int>(jj));
    }

  // seeds and replications
  if (stochastic(cfg.kind)) {
    if (!j.contains("seed")) throw ConfigError("config: 'seed' is required for " + to_string(cfg.kind));
    const auto s = j["seed"];
    if (!(s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0)))
      throw ConfigError("seed: expected a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  } else if (j.contains("seed")) {
    throw ConfigError("config: 'seed' does not apply to " + to_string(cfg.kind));
  }
  if (d.contains("replications")) {
    const auto r = as_int(j.value("replications", d["replications"]), "replications");
    if (r < 2) throw ConfigError("replications must be at least 2");
    cfg.replications = static_cast<std::uint64_t>(r);
  }
  if (d.contains("event")) {
    const auto ev = j.value("event", d["event"]);
    if (!ev.is_string()) throw ConfigError("event: expected a string");
    try {
      cfg.event = to_string(event_kind_from_string(ev.get<std::string>()));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("event: ") + e.what());
    }
  }
  if (d.contains("tilt")) cfg.tilt = normalize_tilt(j.value("tilt", d["tilt"]));
  if (d.contains("initial")) {
    cfg.initial = j.value("initial", d["initial"]);
    initial_limit(cfg.initial);
  }

  cfg.tolerances = overlay(d["tolerances"], j.value("tolerances", json()), "tolerances");
  for (const auto& [k, v] : cfg.tolerances.items()) as_real(v, "tolerances." + k);
  cfg.options = overlay(d["options"], j.value("options", json()), "options");

  const auto out = j.value("output_dir", d["output_dir"]);
  if (!out.is_string() || out.get<std::string>().empty()) throw ConfigError("output_dir: expected a path");
  cfg.output_dir = fs::path(out.get<std::string>());
  if (cfg.output_dir.is_relative() && !base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;
  return cfg;
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = to_string(kind);
  const json d = defaults_for(kind);
  json g = json::object();
  if (d["grid"].contains("n")) g["n"] = grid.n;
  if (d["grid"].contains("d")) g["d"] = grid.d;
  if (d["grid"].contains("lambda")) g["lambda"] = grid.lambda;
  if (d["grid"].contains("epsilon")) g["epsilon"] = grid.epsilon;
  if (d["grid"].contains("T")) g["T"] = grid.T;
  if (d["grid"].contains("j")) g["j"] = grid.j;
  j["grid"] = g;
  if (stochastic(kind)) j["seed"] = seed;
  if (d.contains("replications")) j["replications"] = replications;
  if (d.contains("event")) j["event"] = event;
  if (d.contains("tilt")) j["tilt"] = tilt;
  if (d.contains("initial")) j["initial"] = initial;
  j["tolerances"] = tolerances;
  j["options"] = options;
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

// ------------------------------------------------------------------ studies

namespace {

struct Study {
  json records = json::array();
  json summary = json::object();
  std::vector<std::vector<std::string>> replica_rows;
  std::vector<std::string> replica_header;
  std::vector<std::string> failures;
  bool threshold_failed = false;
  std::vector<std::pair<std::string, std::string>> extra_files;  // name, contents
};

json error_record(json rec, const std::exception& e) {
  rec["status"] = "error";
  rec["error"] = e.what();
  return rec;
}

double tol(const ExperimentConfig& cfg, const char* key) { return cfg.tolerances.at(key).get<double>(); }

// -- rate table
Study rate_table(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  const double step = cfg.options.at("grid_step").get<double>();
  double worst = 0.0;
  for (double T : cfg.grid.T)
    for (double eps : cfg.grid.epsilon) {
      const auto cf = optimal_rate_F_eps(eps, T);
      const auto bf = brute_force_rate(eps, T, step);
      const double gap = std::abs(bf.rate - cf.rate);
      worst = std::max(worst, gap / T);
      st.records.push_back({{"epsilon", eps},
                            {"T", T},
                            {"a_star", cf.tilt.a_star},
                            {"b_star", cf.tilt.b_star},
                            {"rate", cf.rate},
                            {"brute_force_rate", bf.rate},
                            {"gap", gap},
                            {"small_eps_rate", eps * eps / (4.0 * T)},
                            {"pass", gap <= tol(cfg, "gap_per_T") * T},
                            {"status", "ok"}});
      log << "  eps=" << eps << " T=" << T << " rate=" << fmt(cf.rate) << " gap=" << gap << "\n";
    }
  st.summary = {{"max_gap_per_T", worst}, {"pass", worst <= tol(cfg, "gap_per_T")}};
  return st;
}

// -- rare-event decay
TiltSpec resolve_tilt(const json& t, double eps_eff, double T) {
  const auto mode = t.at("mode").get<std::string>();
  if (mode == "none") return TiltSpec::none();
  if (mode == "fixed") return {t.at("a").get<double>(), t.at("b").get<double>()};
  const auto r = optimal_rate_F_eps(eps_eff, T);
  return {r.tilt.a_star, r.tilt.b_star};
}

Study rare_decay(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  st.replica_header = {"grid_index", "replica", "hit", "hit_time", "weight", "arrivals", "departures"};
  const EventKind kind = event_kind_from_string(cfg.event);
  const bool by_eps = kind == EventKind::G_eps || kind == EventKind::F_eps;
  const std::vector<double> thresholds =
      by_eps ? cfg.grid.epsilon : std::vector<double>(cfg.grid.j.begin(), cfg.grid.j.end());
  const Vector x = initial_limit(cfg.initial);
  const bool canonical = x.size() >= 1 && x(0) == 1.0 && (x.size() == 1 || x.tail(x.size() - 1).isZero());

  std::size_t index = 0;
  json groups = json::array();
  for (const auto& dname : cfg.grid.d)
    for (double lambda : cfg.grid.lambda)
      for (double thr : thresholds)
        for (double T : cfg.grid.T) {
          const RareEvent ev = by_eps ? RareEvent{kind, thr, 0} : RareEvent{kind, 0.0, static_cast<int>(thr)};
          // U_j and V_j sit at j − 2 extra jobs per server
          const double eps_eff = by_eps ? thr : thr - 2.0;
          const TiltSpec tilt = resolve_tilt(cfg.tilt, eps_eff, T);
          const bool theory = canonical && lambda == 1.0 && (by_eps || dname == "n");
          const double theory_rate = theory ? optimal_rate_F_eps(eps_eff, T).rate : NAN;
          const auto sched = DSchedule::parse(dname);

          std::vector<double> ns, logp;
          json group_points = json::array();
          for (std::int64_t n : cfg.grid.n) {
            json rec = {{"grid_index", index}, {"n", n},          {"d_schedule", dname}, {"lambda", lambda},
                        {"event", cfg.event},  {"T", T},          {"tilt_a", tilt.a},    {"tilt_b", tilt.b},
                        {"replications", cfg.replications}};
            if (by_eps)
              rec["epsilon"] = thr;
            else
              rec["j"] = static_cast<int>(thr);
            const std::uint64_t seed = point_seed(cfg.seed, index);
            rec["seed"] = seed;
            try {
              const std::int64_t d = sched(n);
              rec["d"] = d;
              const SystemParams params{n, d, lambda, T, InitialOccupancy::from_limit(n, x)};
              const auto est = estimate_probability(params, ev, tilt, cfg.replications, seed, 0, true);
              rec["p_hat"] = est.p_hat;
              rec["std_err"] = est.std_err;
              rec["neg_log_rate"] = num(est.neg_log_rate);
              rec["rel_std_err"] = num(est.rel_std_err);
              rec["hits"] = est.hits;
              rec["theory_rate"] = theory ? json(theory_rate) : json();
              rec["warning"] = est.warning;
              rec["status"] = "ok";
              if (!est.warning.empty()) st.failures.push_back("grid point " + std::to_string(index) + ": " + est.warning);
              for (const auto& r : est.records)
                st.replica_rows.push_back({std::to_string(index), std::to_string(r.replica), r.hit ? "1" : "0",
                                           r.hit ? fmt(r.hit_time) : std::string(), fmt(r.weight), std::to_string(r.arrivals),
                                           std::to_string(r.departures)});
              if (est.p_hat > 0.0) {
                ns.push_back(static_cast<double>(n));
                logp.push_back(std::log(est.p_hat));
              }
              log << "  n=" << n << " d=" << d << " p=" << fmt(est.p_hat) << " rate=" << est.neg_log_rate
                  << " rse=" << est.rel_std_err << "\n";
            } catch (const std::exception& e) {
              rec = error_record(rec, e);
              st.failures.push_back("grid point " + std::to_string(index) + ": " + e.what());
            }
            group_points.push_back(index);
            st.records.push_back(rec);
            ++index;
          }

          json g = {{"d_schedule", dname}, {"lambda", lambda}, {"T", T}, {"points", group_points}};
          g[by_eps ? "epsilon" : "j"] = by_eps ? json(thr) : json(static_cast<int>(thr));
          g["theory_rate"] = theory ? json(theory_rate) : json();
          if (ns.size() >= 2) {
            const auto fit = fit_line(ns, logp);
            g["slope"] = fit.slope;
            g["intercept"] = fit.intercept;
            if (theory) {
              const double rel = std::abs(fit.slope + theory_rate) / theory_rate;
              g["slope_rel_error"] = rel;
              g["slope_pass"] = rel <= tol(cfg, "slope_rel");
            }
          }
          groups.push_back(g);
        }

  // per-point windows apply only where the theory value is defined
  for (auto& rec : st.records) {
    if (rec["status"] != "ok" || rec["theory_rate"].is_null()) continue;
    const double r = as_double(rec["neg_log_rate"]), rse = as_double(rec["rel_std_err"]);
    rec["rate_pass"] = r >= tol(cfg, "rate_min") && r <= tol(cfg, "rate_max");
    rec["rse_pass"] = rse <= tol(cfg, "rel_std_err");
  }
  st.summary = {{"groups", groups}};
  return st;
}

// -- law of large numbers
Study lln(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  st.replica_header = {"grid_index", "replica", "sup_l1_distance"};
  const Vector x = initial_limit(cfg.initial);
  const auto points = as_int(cfg.options.at("report_points"), "options.report_points");
  const double dt = cfg.options.at("dt").get<double>();
  const auto trunc = as_int(cfg.options.at("truncation"), "options.truncation");
  const bool path_csv = cfg.options.at("path_csv").get<bool>();
  if (points < 2) throw ConfigError("options.report_points must be at least 2");
  if (!(dt > 0.0)) throw ConfigError("options.dt must be positive");

  std::size_t index = 0;
  for (const auto& dname : cfg.grid.d)
    for (double lambda : cfg.grid.lambda)
      for (double T : cfg.grid.T)
        for (std::int64_t n : cfg.grid.n) {
          json rec = {{"grid_index", index}, {"n", n}, {"d_schedule", dname}, {"lambda", lambda}, {"T", T},
                      {"replications", cfg.replications}};
          const std::uint64_t seed = point_seed(cfg.seed, index);
          rec["seed"] = seed;
          try {
            const std::int64_t d = DSchedule::parse(dname)(n);
            rec["d"] = d;
            const SystemParams params{n, d, lambda, T, InitialOccupancy::from_limit(n, x)};
            rec["initial_discrepancy"] = params.initial.discrepancy();
            const FluidSolution fluid = lln_trajectory(x, lambda, T, dt, trunc);
            rec["truncation"] = fluid.truncation;

            SimOptions opts;
            for (std::int64_t k = 0; k < points; ++k)
              opts.report_times.push_back(T * static_cast<double>(k) / static_cast<double>(points - 1));
            Matrix z(points, fluid.truncation);
            for (std::int64_t k = 0; k < points; ++k) z.row(k) = fluid.zeta.at(opts.report_times[k]).transpose();

            const auto routing = std::make_shared<const RoutingTable>(n, d);
            std::vector<double> sup(cfg.replications);
            std::optional<PiecewisePath> first_path;
            parallel_for(cfg.replications, worker_count(), [&](std::uint64_t r) {
              Rng rng = make_stream(seed, r);
              const SimResult res = simulate(params, TiltSpec::none(), std::nullopt, rng, opts, routing);
              const Matrix& v = res.path->values();
              const Eigen::Index w = std::max(v.cols(), z.cols());
              Matrix a = Matrix::Zero(points, w), b = Matrix::Zero(points, w);
              a.leftCols(v.cols()) = v;
              b.leftCols(z.cols()) = z;
              sup[r] = (a - b).cwiseAbs().rowwise().sum().maxCoeff();
              if (r == 0) first_path = res.path;
            });
            for (std::uint64_t r = 0; r < cfg.replications; ++r)
              st.replica_rows.push_back({std::to_string(index), std::to_string(r), fmt(sup[r])});
            double mean = 0.0;
            for (double s : sup) mean += s;
            mean /= static_cast<double>(sup.size());
            double var = 0.0;
            for (double s : sup) var += (s - mean) * (s - mean);
            const double q = quantile(sup, tol(cfg, "quantile"));
            rec["sup_distance_mean"] = mean;
            rec["sup_distance_std_err"] = std::sqrt(var / static_cast<double>(sup.size() - 1) / static_cast<double>(sup.size()));
            rec["sup_distance_quantile"] = q;
            rec["sup_distance_max"] = *std::max_element(sup.begin(), sup.end());
            rec["pass"] = q <= tol(cfg, "sup_distance");
            rec["status"] = "ok";
            if (path_csv) {
              std::ostringstream sim, fl;
              write_path_csv(sim, *first_path);
              write_path_csv(fl, PiecewisePath(first_path->times(), z, Interpolation::linear));
              st.extra_files.emplace_back("path_" + std::to_string(index) + "_sim.csv", sim.str());
              st.extra_files.emplace_back("path_" + std::to_string(index) + "_fluid.csv", fl.str());
            }
            log << "  n=" << n << " d=" << d << " lambda=" << lambda << " quantile sup distance=" << q << "\n";
          } catch (const std::exception& e) {
            rec = error_record(rec, e);
            st.failures.push_back("grid point " + std::to_string(index) + ": " + e.what());
          }
          st.records.push_back(rec);
          ++index;
        }
  return st;
}

// -- remark bound
Study remark(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  json series = json::array();
  for (const auto& dname : cfg.grid.d)
    for (double T : cfg.grid.T) {
      const auto sched = DSchedule::parse(dname);
      std::vector<double> rates;
      for (std::int64_t n : cfg.grid.n) {
        json rec = {{"n", n}, {"d_schedule", dname}, {"T", T}};
        try {
          const auto d = sched(n);
          const auto rb = remark_bound(n, d, T);
          rec["d"] = d;
          rec["log_lower_bound"] = rb.log_lower_bound;
          rec["per_n_rate"] = rb.per_n_rate;
          rec["log_binomial"] = rb.log_binomial;
          rec["log_c_n"] = rb.log_c_n;
          rec["status"] = "ok";
          rates.push_back(rb.per_n_rate);
          log << "  n=" << n << " d=" << d << " per_n_rate=" << fmt(rb.per_n_rate) << "\n";
        } catch (const std::exception& e) {
          rec = error_record(rec, e);
          st.failures.push_back(e.what());
        }
        st.records.push_back(rec);
      }
      bool shrinking = true;
      for (std::size_t k = 1; k < rates.size(); ++k) shrinking = shrinking && std::abs(rates[k]) < std::abs(rates[k - 1]);
      series.push_back({{"d_schedule", dname},
                        {"T", T},
                        {"magnitude_decreasing", shrinking},
                        {"final_magnitude", rates.empty() ? json() : json(std::abs(rates.back()))},
                        {"final_below_tolerance", !rates.empty() && std::abs(rates.back()) < tol(cfg, "final_rate")}});
    }
  st.summary = {{"series", series}};
  return st;
}

// -- Skorokhod self-test
PiecewisePath random_psi(std::mt19937_64& gen, Eigen::Index m, Eigen::Index segments) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector t(segments + 1);
  t(0) = 0.0;
  for (Eigen::Index k = 1; k <= segments; ++k) t(k) = t(k - 1) + 0.1 + u(gen);
  t /= t(segments);
  Matrix v(segments + 1, m);
  for (Eigen::Index i = 0; i < m; ++i) v(0, i) = 1.0 - u(gen);
  for (Eigen::Index k = 1; k <= segments; ++k)
    for (Eigen::Index i = 0; i < m; ++i) v(k, i) = v(k - 1, i) + 4.0 * (u(gen) - 0.4) * (t(k) - t(k - 1));
  return PiecewisePath(t, v, Interpolation::linear);
}

PiecewisePath refine_midpoints(const PiecewisePath& p) {
  Vector t(2 * p.size() - 1);
  Matrix v(t.size(), p.dimension());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    t(2 * k) = p.times()(k);
    v.row(2 * k) = p.values().row(k);
    if (k + 1 < p.size()) {
      t(2 * k + 1) = 0.5 * (p.times()(k) + p.times()(k + 1));
      v.row(2 * k + 1) = 0.5 * (p.values().row(k) + p.values().row(k + 1));
    }
  }
  return PiecewisePath(t, v, Interpolation::linear);
}

Study skorokhod_selftest(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  const auto paths = as_int(cfg.options.at("paths"), "options.paths");
  const auto max_m = as_int(cfg.options.at("max_dimension"), "options.max_dimension");
  const auto max_seg = as_int(cfg.options.at("max_segments"), "options.max_segments");
  if (paths < 1 || max_m < 1 || max_seg < 1) throw ConfigError("skorokhod-selftest options must be positive");
  std::mt19937_64 gen(point_seed(cfg.seed, 0));
  double worst_res = 0.0, worst_ref = 0.0, worst_id = 0.0;
  for (std::int64_t p = 0; p < paths; ++p) {
    const auto m = std::uniform_int_distribution<Eigen::Index>(1, max_m)(gen);
    const auto seg = std::uniform_int_distribution<Eigen::Index>(1, max_seg)(gen);
    const auto psi = random_psi(gen, m, seg);
    const auto sol = solve_skorokhod(psi);
    const auto fine = solve_skorokhod(refine_midpoints(psi));
    const double res = complementarity_residual(sol);
    const double ref = sup_l1_distance(sol.phi, fine.phi);
    const double id = reflection_identity_error(sol);
    worst_res = std::max(worst_res, res);
    worst_ref = std::max(worst_ref, ref);
    worst_id = std::max(worst_id, id);
    st.records.push_back({{"path", p},
                          {"dimension", m},
                          {"segments", seg},
                          {"grid_points", sol.phi.size()},
                          {"residual", res},
                          {"refinement", ref},
                          {"identity_error", id},
                          {"status", "ok"}});
  }
  const bool ok = worst_res <= tol(cfg, "residual") && worst_ref <= tol(cfg, "refinement") &&
                  worst_id <= tol(cfg, "identity");
  st.summary = {{"paths", paths},
                {"max_residual", worst_res},
                {"max_refinement", worst_ref},
                {"max_identity_error", worst_id},
                {"pass", ok}};
  log << "  max residual " << worst_res << ", refinement " << worst_ref << ", identity " << worst_id << "\n";
  if (!ok) {
    st.threshold_failed = true;
    st.failures.push_back("skorokhod self-test thresholds exceeded");
  }
  return st;
}

// -- fluid self-test
Study fluid_selftest(const ExperimentConfig& cfg, std::ostream& log) {
  Study st;
  const double dt = cfg.options.at("dt").get<double>();
  std::vector<double> dts;
  for (const auto& v : cfg.options.at("dt_list")) dts.push_back(as_real(v, "options.dt_list"));
  if (dts.size() < 2) throw ConfigError("options.dt_list needs at least two steps");
  bool ok = true;
  for (double eps : cfg.grid.epsilon)
    for (double T : cfg.grid.T) {
      json rec = {{"check", "optimal_trajectory"}, {"epsilon", eps}, {"T", T}, {"dt", dt}};
      try {
        const auto r = optimal_rate_F_eps(eps, T);
        const auto ctrl = MasterControl::constant(r.tilt.a_star, r.tilt.b_star, T);
        const auto sol = integrate_fluid(Vector::Ones(1), ctrl, 1.0, T, dt);
        const double mass = l1_norm(sol.zeta.at(T));
        const double pinned = (sol.zeta.values().col(0).array() - 1.0).abs().maxCoeff();
        const PiecewisePath zeta1(sol.zeta.times(), sol.zeta.values().leftCols(1), Interpolation::linear);
        const double cost = control_cost(ctrl, zeta1, {1.0});
        const bool pass = std::abs(mass - (1.0 + eps)) <= tol(cfg, "mass") && pinned <= tol(cfg, "pinned") &&
                          std::abs(cost - r.rate) <= tol(cfg, "cost");
        rec.update({{"final_mass", mass},
                    {"target_mass", 1.0 + eps},
                    {"pinned_error", pinned},
                    {"cost", cost},
                    {"rate", r.rate},
                    {"pass", pass},
                    {"status", "ok"}});
        ok = ok && pass;
        log << "  eps=" << eps << " T=" << T << " mass=" << fmt(mass) << " cost gap=" << std::abs(cost - r.rate) << "\n";
      } catch (const std::exception& e) {
        rec = error_record(rec, e);
        ok = false;
        st.failures.push_back(e.what());
      }
      st.records.push_back(rec);
    }

  // first-order convergence on a smooth run and across a control breakpoint
  Vector x0(2);
  x0 << 1.0, 0.5;
  // at lambda = 0.7 the first level leaves the barrier at once and never returns
  struct Run {
    std::string name;
    MasterControl ctrl;
    double lambda;
  };
  const std::vector<Run> runs{{"smooth", MasterControl::constant(1.0, 1.0, 1.0), 0.7},
                              {"breakpoint", MasterControl{{0.0, 0.5, 1.0}, {1.5, 0.5}, {0.8, 1.2}}, 0.9}};
  for (const auto& [name, ctrl, lambda] : runs) {
    json rec = {{"check", "convergence_" + name}, {"lambda", lambda}};
    try {
      const auto rep = wellposedness_check(x0, ctrl, lambda, 1.0, dts);
      bool pass = !rep.ratios.empty();
      for (double r : rep.ratios) pass = pass && r >= tol(cfg, "ratio_min") && r <= tol(cfg, "ratio_max");
      rec.update({{"dts", rep.dts}, {"errors", rep.errors}, {"ratios", rep.ratios}, {"pass", pass}, {"status", "ok"}});
      ok = ok && pass;
      log << "  " << name << " ratios:";
      for (double r : rep.ratios) log << " " << r;
      log << "\n";
    } catch (const std::exception& e) {
      rec = error_record(rec, e);
      ok = false;
      st.failures.push_back(e.what());
    }
    st.records.push_back(rec);
  }
  st.summary = {{"pass", ok}};
  if (!ok) {
    st.threshold_failed = true;
    st.failures.push_back("fluid self-test thresholds exceeded");
  }
  return st;
}

std::string summary_csv(const json& records) {
  std::vector<std::string> cols;
  for (const auto& rec : records)
    for (const auto& [k, v] : rec.items())
      if (!v.is_structured() && std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  std::sort(cols.begin(), cols.end());
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += "\n";
  for (const auto& rec : records) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ",";
      if (rec.contains(cols[c])) out += csv_cell(rec[cols[c]]);
    }
    out += "\n";
  }
  return out;
}

std::string rows_csv(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + r[c];
    out += "\n";
  }
  return out;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const json resolved = cfg.to_json();
  const std::string config_hash = sha256_hex(resolved.dump());
  log << "experiment " << to_string(cfg.kind) << " -> " << cfg.output_dir.string() << "\n";

  Study st;
  switch (cfg.kind) {
    case ExperimentKind::rate_table: st = rate_table(cfg, log); break;
    case ExperimentKind::rare_decay: st = rare_decay(cfg, log); break;
    case ExperimentKind::lln: st = lln(cfg, log); break;
    case ExperimentKind::remark_bound: st = remark(cfg, log); break;
    case ExperimentKind::skorokhod_selftest: st = skorokhod_selftest(cfg, log); break;
    case ExperimentKind::fluid_selftest: st = fluid_selftest(cfg, log); break;
  }

  fs::create_directories(cfg.output_dir);
  RunOutcome out;
  std::vector<std::pair<std::string, std::string>> files;
  json results = {{"experiment", to_string(cfg.kind)},
                  {"config_sha256", config_hash},
                  {"records", st.records},
                  {"summary", st.summary}};
  files.emplace_back("results.json", results.dump(2) + "\n");
  files.emplace_back("summary.csv", summary_csv(st.records));
  if (!st.replica_header.empty()) files.emplace_back("replicas.csv", rows_csv(st.replica_header, st.replica_rows));
  for (auto& f : st.extra_files) files.push_back(std::move(f));

  json listing = json::array();
  for (const auto& [name, bytes] : files) {
    write_file(cfg.output_dir / name, bytes);
    listing.push_back({{"file", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    out.files.push_back(cfg.output_dir / name);
  }
  const json manifest = {
      {"tool", "jsqd"},
      {"versions",
       {{"jsqd", JSQD_VERSION},
        {"compiler", __VERSION__},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
      {"config", resolved},
      {"config_sha256", config_hash},
      {"defaults", defaults_for(cfg.kind)},
      {"workers", worker_count()},
      {"files", listing},
      {"failures", st.failures}};
  write_file(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
  out.files.push_back(cfg.output_dir / "manifest.json");
  out.results = cfg.output_dir / "results.json";
  out.failures = st.failures;
  out.exit_code = st.threshold_failed ? kExitThreshold : kExitOk;
  for (const auto& f : st.failures) log << "  note: " << f << "\n";
  return out;
}

// ---------------------------------------------------------------- plot data

void emit_plot_data(const fs::path& results_path, const fs::path& out) {
  if (!fs::exists(results_path)) throw std::runtime_error("results file not found: " + results_path.string());
  json r;
  try {
    r = json::parse(read_file(results_path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed results file: " + std::string(e.what()));
  }
  if (!r.contains("experiment") || !r.contains("records")) throw std::runtime_error("malformed results file");
  const auto kind = experiment_kind_from_string(r["experiment"].get<std::string>());

  std::string csv = "series,x,y,stderr\n";
  auto row = [&csv](const std::string& series, double x, double y, std::optional<double> se) {
    json s = series;
    csv += csv_cell(s) + "," + fmt(x) + "," + fmt(y) + "," + (se ? fmt(*se) : std::string()) + "\n";
  };
  for (const auto& rec : r["records"]) {
    if (rec.value("status", "ok") != "ok") continue;
    switch (kind) {
      case ExperimentKind::rare_decay: {
        const std::string tag = "d=" + rec["d_schedule"].get<std::string>() + ",lambda=" + fmt(rec["lambda"]) +
                                (rec.contains("epsilon") ? ",eps=" + fmt(rec["epsilon"]) : ",j=" + std::to_string(rec["j"].get<int>())) +
                                ",T=" + fmt(rec["T"]);
        const double n = rec["n"].get<double>();
        const double rate = as_double(rec["neg_log_rate"]);
        if (std::isfinite(rate)) row("neg_log_rate vs n [" + tag + "]", n, rate, as_double(rec["rel_std_err"]) / n);
        if (!rec["theory_rate"].is_null()) row("theory_rate vs n [" + tag + "]", n, rec["theory_rate"].get<double>(), {});
        break;
      }
      case ExperimentKind::lln: {
        const std::string tag = "d=" + rec["d_schedule"].get<std::string>() + ",lambda=" + fmt(rec["lambda"]) +
                                ",T=" + fmt(rec["T"]);
        const double n = rec["n"].get<double>();
        row("sup l1 distance mean vs n [" + tag + "]", n, rec["sup_distance_mean"].get<double>(),
            rec["sup_distance_std_err"].get<double>());
        row("sup l1 distance quantile vs n [" + tag + "]", n, rec["sup_distance_quantile"].get<double>(), {});
        break;
      }
      case ExperimentKind::remark_bound:
        row("per_n_rate vs n [d=" + rec["d_schedule"].get<std::string>() + ",T=" + fmt(rec["T"]) + "]",
            rec["n"].get<double>(), rec["per_n_rate"].get<double>(), {});
        break;
      case ExperimentKind::rate_table: {
        const std::string tag = "[T=" + fmt(rec["T"]) + "]";
        const double eps = rec["epsilon"].get<double>();
        row("rate vs epsilon " + tag, eps, rec["rate"].get<double>(), {});
        row("brute_force_rate vs epsilon " + tag, eps, rec["brute_force_rate"].get<double>(), {});
        row("small_eps_rate vs epsilon " + tag, eps, rec["small_eps_rate"].get<double>(), {});
        break;
      }
      case ExperimentKind::skorokhod_selftest:
        row("residual vs path", rec["path"].get<double>(), rec["residual"].get<double>(), {});
        row("refinement vs path", rec["path"].get<double>(), rec["refinement"].get<double>(), {});
        break;
      case ExperimentKind::fluid_selftest:
        if (rec.contains("dts"))
          for (std::size_t k = 0; k < rec["dts"].size(); ++k)
            row("error vs dt [" + rec["check"].get<std::string>() + "]", rec["dts"][k].get<double>(),
                rec["errors"][k].get<double>(), {});
        break;
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file(out, csv);
}

// ----------------------------------------------------------------- self-test

int run_selftest(const fs::path& out_dir, std::ostream& log) {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& what) {
    log << (ok ? "ok    " : "FAIL  ") << what << "\n";
    if (!ok) failed.push_back(what);
  };
  auto run = [&](json j, const std::string& name) {
    j["output_dir"] = (out_dir / name).string();
    const auto cfg = ExperimentConfig::from_json(j);
    return run_experiment(cfg, log);
  };

  const auto sk = run({{"experiment", "skorokhod-selftest"}, {"seed", 1}}, "skorokhod");
  check(sk.exit_code == kExitOk, "skorokhod self-test thresholds");
  const auto fl = run({{"experiment", "fluid-selftest"}}, "fluid");
  check(fl.exit_code == kExitOk, "fluid self-test thresholds");

  const auto rt = run({{"experiment", "rate-table"}}, "rate-table");
  const json rt_res = json::parse(read_file(rt.results));
  check(rt_res["records"].size() == 6 && rt_res["summary"]["pass"].get<bool>(), "rate table gaps within 1e-6 T");

  const auto rb = run({{"experiment", "remark-bound"}}, "remark-bound");
  const json rb_res = json::parse(read_file(rb.results));
  check(rb_res["summary"]["series"][0]["magnitude_decreasing"].get<bool>() &&
            rb_res["summary"]["series"][0]["final_below_tolerance"].get<bool>(),
        "remark bound rate shrinks below 0.02 by n = 1e6");

  // the same stochastic config twice must give identical payloads
  const json decay = {{"experiment", "rare-decay"},
                      {"seed", 2024},
                      {"replications", 400},
                      {"grid", {{"n", {20, 40}}}}};
  const json law = {{"experiment", "lln"},
                    {"seed", 7},
                    {"replications", 8},
                    {"grid", {{"n", {500}}}},
                    {"options", {{"report_points", 21}}}};
  for (const auto& [j, name] : std::vector<std::pair<json, std::string>>{{decay, "rare-decay"}, {law, "lln"}}) {
    const auto a = run(j, name + "-a");
    const auto b = run(j, name + "-b");
    bool same = a.files.size() == b.files.size();
    for (std::size_t k = 0; same && k + 1 < a.files.size(); ++k)  // manifest excluded
      same = read_file(a.files[k]) == read_file(b.files[k]);
    check(same, name + " payloads byte-identical across runs");
    emit_plot_data(a.results, out_dir / (name + "-a") / "plot_data.csv");
    check(fs::file_size(out_dir / (name + "-a") / "plot_data.csv") > 20, name + " plot data written");
  }

  log << (failed.empty() ? "selftest passed" : "selftest FAILED: " + std::to_string(failed.size()) + " check(s)")
      << "\n";
  return failed.empty() ? kExitOk : kExitThreshold;
}

}  // namespace jsqd
