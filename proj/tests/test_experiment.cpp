#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jsqd/experiment.hpp"

using namespace jsqd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("jsqd_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig parse(json j) { return ExperimentConfig::from_json(j); }

RunOutcome run_quiet(const ExperimentConfig& cfg) {
  std::ostringstream log;
  return run_experiment(cfg, log);
}

}  // namespace

TEST_CASE("sha256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("least squares line") {
  const auto f = fit_line({1.0, 2.0, 3.0, 4.0}, {-1.0, -3.0, -5.0, -7.0});
  CHECK(f.slope == doctest::Approx(-2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  const auto g = fit_line({0.0, 1.0, 2.0}, {0.0, 1.0, 1.0});
  CHECK(g.slope == doctest::Approx(0.5));
  CHECK(g.intercept == doctest::Approx(1.0 / 6.0));
  CHECK_THROWS(fit_line({1.0}, {1.0}));
  CHECK_THROWS(fit_line({2.0, 2.0}, {1.0, 3.0}));
}

TEST_CASE("type 7 quantile") {
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4.0, 1.0, 3.0, 2.0}, 0.95) == doctest::Approx(3.85));
  CHECK(quantile({7.0}, 0.3) == 7.0);
  CHECK(quantile({1.0, 2.0}, 1.0) == 2.0);
  CHECK_THROWS(quantile({}, 0.5));
}

TEST_CASE("kind names round trip") {
  for (auto k : {ExperimentKind::lln, ExperimentKind::rate_table, ExperimentKind::rare_decay,
                 ExperimentKind::skorokhod_selftest, ExperimentKind::fluid_selftest, ExperimentKind::remark_bound})
    CHECK(experiment_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(experiment_kind_from_string("nope"), ConfigError);
}

TEST_CASE("config defaults are filled in") {
  const auto cfg = parse({{"experiment", "rare-decay"}, {"seed", 5}});
  CHECK(cfg.grid.n == std::vector<std::int64_t>{50, 100, 200});
  CHECK(cfg.grid.d == std::vector<std::string>{"n"});
  CHECK(cfg.replications == 10000);
  CHECK(cfg.event == "G_eps");
  CHECK(cfg.tilt["mode"] == "optimal");
  CHECK(cfg.tolerances["slope_rel"].get<double>() == 0.15);

  const auto partial = parse({{"experiment", "lln"}, {"seed", 1}, {"tolerances", {{"sup_distance", 0.1}}}});
  CHECK(partial.tolerances["sup_distance"].get<double>() == 0.1);
  CHECK(partial.tolerances["quantile"].get<double>() == 0.95);

  const auto scalar = parse({{"experiment", "rate-table"}, {"grid", {{"T", 3}}}});
  CHECK(scalar.grid.T == std::vector<double>{3.0});
  CHECK(scalar.grid.epsilon.size() == 3);

  const auto sched = parse({{"experiment", "remark-bound"}, {"grid", {{"d", {"sqrt", 4, "pow:0.5"}}}}});
  CHECK(sched.grid.d.size() == 3);

  const auto fixed = parse({{"experiment", "rare-decay"}, {"seed", 1}, {"tilt", {{"a", 2.0}, {"b", 0.5}}}});
  CHECK(fixed.tilt["mode"] == "fixed");
  CHECK(fixed.tilt["a"].get<double>() == 2.0);
}

TEST_CASE("resolved config round trips") {
  const auto cfg = parse({{"experiment", "rare-decay"},
                          {"seed", 9},
                          {"grid", {{"n", {30}}, {"d", {"log"}}, {"j", {4}}}},
                          {"event", "U_j"},
                          {"initial", {1.0, 0.5}},
                          {"output_dir", "somewhere"}});
  json j = cfg.to_json();
  j["output_dir"] = "somewhere";
  CHECK(parse(j).to_json() == cfg.to_json());
  CHECK(cfg.to_json()["grid"]["j"] == json::array({4}));
}

TEST_CASE("config errors") {
  auto bad = [](json j) { CHECK_THROWS_AS(parse(j), ConfigError); };
  bad(json::array());
  bad({{"seed", 1}});
  bad({{"experiment", "rate-table"}, {"colour", "red"}});
  bad({{"experiment", "rare-decay"}});  // no seed
  bad({{"experiment", "lln"}, {"seed", -1}});
  bad({{"experiment", "rate-table"}, {"seed", 1}});
  bad({{"experiment", "rate-table"}, {"replications", 10}});
  bad({{"experiment", "rate-table"}, {"grid", {{"epsilon", json::array()}}}});
  bad({{"experiment", "rate-table"}, {"grid", {{"n", {10}}}}});
  bad({{"experiment", "rate-table"}, {"grid", {{"q", {10}}}}});
  bad({{"experiment", "rate-table"}, {"grid", {{"T", {-1.0}}}}});
  bad({{"experiment", "rate-table"}, {"tolerances", {{"gap", 1.0}}}});
  bad({{"experiment", "rate-table"}, {"tolerances", {{"gap_per_T", "small"}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"grid", {{"n", {0}}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"grid", {{"n", {1.5}}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"grid", {{"d", {"cube"}}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"grid", {{"j", {2}}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"event", "H"}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"tilt", "best"}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"tilt", {{"a", 1.0}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"tilt", {{"a", 1.0}, {"b", 0.0}}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"initial", {0.5, 0.7}}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"initial", "half"}});
  bad({{"experiment", "rare-decay"}, {"seed", 1}, {"replications", 1}});
  bad({{"experiment", "lln"}, {"seed", 1}, {"output_dir", ""}});
}

TEST_CASE("config files") {
  const fs::path dir = scratch("config_files");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "ok.json") << R"({"experiment": "rate-table", "output_dir": "out"})";
    std::ofstream(dir / "broken.json") << R"({"experiment": "rate-table", )";
  }
  const auto cfg = load_config(dir / "ok.json");
  CHECK(cfg.output_dir == dir / "out");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("rate table run and manifest") {
  auto cfg = parse({{"experiment", "rate-table"}});
  cfg.output_dir = scratch("rate_table");
  const auto out = run_quiet(cfg);
  REQUIRE(out.exit_code == kExitOk);
  const json r = json::parse(slurp(out.results));
  REQUIRE(r["records"].size() == 6);
  for (const auto& rec : r["records"]) {
    for (const char* k : {"epsilon", "T", "a_star", "b_star", "rate", "brute_force_rate", "gap"}) CHECK(rec.contains(k));
    CHECK(rec["gap"].get<double>() <= 1e-6 * rec["T"].get<double>());
    CHECK(rec["a_star"].get<double>() * rec["b_star"].get<double>() == doctest::Approx(1.0).epsilon(1e-15));
  }
  // eps = 1, T = 1 and eps = 1, T = 2 (values frozen from an independent evaluation)
  CHECK(r["records"][2]["rate"].get<double>() == doctest::Approx(0.24514384755981375).epsilon(1e-14));
  CHECK(r["records"][5]["rate"].get<double>() == doctest::Approx(0.12436083592960290).epsilon(1e-13));
  CHECK(r["summary"]["pass"].get<bool>());

  const json m = json::parse(slurp(cfg.output_dir / "manifest.json"));
  CHECK(m["config_sha256"] == sha256_hex(cfg.to_json().dump()));
  CHECK(m["config_sha256"] == r["config_sha256"]);
  CHECK(m["defaults"] == experiment_defaults(ExperimentKind::rate_table));
  CHECK(m["config"]["options"]["grid_step"].get<double>() == 1e-4);
  CHECK(m["versions"].contains("compiler"));
  REQUIRE(m["files"].size() == 2);
  for (const auto& f : m["files"]) {
    const std::string bytes = slurp(cfg.output_dir / f["file"].get<std::string>());
    CHECK(f["bytes"].get<std::size_t>() == bytes.size());
    CHECK(f["sha256"] == sha256_hex(bytes));
  }
  const std::string csv = slurp(cfg.output_dir / "summary.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}

TEST_CASE("stochastic payloads are reproducible and worker independent") {
  const json j = {{"experiment", "rare-decay"},
                  {"seed", 77},
                  {"replications", 300},
                  {"grid", {{"n", {12, 24}}, {"epsilon", {0.5}}}}};
  auto a = parse(j), b = parse(j);
  a.output_dir = scratch("repro_a");
  b.output_dir = scratch("repro_b");
  ::setenv("JSQD_WORKERS", "1", 1);
  const auto ra = run_quiet(a);
  ::setenv("JSQD_WORKERS", "3", 1);
  const auto rb = run_quiet(b);
  ::unsetenv("JSQD_WORKERS");
  for (const char* f : {"results.json", "summary.csv", "replicas.csv"})
    CHECK(slurp(a.output_dir / f) == slurp(b.output_dir / f));
  const std::string reps = slurp(a.output_dir / "replicas.csv");
  CHECK(std::count(reps.begin(), reps.end(), '\n') == 1 + 2 * 300);

  json jc = j;
  jc["seed"] = 78;
  auto c = parse(jc);
  c.output_dir = scratch("repro_c");
  run_quiet(c);
  CHECK(slurp(a.output_dir / "results.json") != slurp(c.output_dir / "results.json"));

  const json r = json::parse(slurp(ra.results));
  const auto& g = r["summary"]["groups"][0];
  CHECK(g.contains("slope"));
  CHECK(g["theory_rate"].get<double>() == doctest::Approx(0.06218041796480145).epsilon(1e-12));
}

TEST_CASE("partial failures are recorded per grid point") {
  // above capacity the second level fills, and only one level is tracked
  auto cfg = parse({{"experiment", "lln"},
                    {"seed", 3},
                    {"replications", 4},
                    {"grid", {{"n", {50, 60}}, {"lambda", {1.5}}}},
                    {"options", {{"truncation", 1}, {"report_points", 11}}}});
  cfg.output_dir = scratch("partial");
  const auto out = run_quiet(cfg);
  CHECK(out.exit_code == kExitOk);
  const json r = json::parse(slurp(out.results));
  REQUIRE(r["records"].size() == 2);
  for (const auto& rec : r["records"]) {
    CHECK(rec["status"] == "error");
    CHECK_FALSE(rec["error"].get<std::string>().empty());
  }
  CHECK(out.failures.size() == 2);
}

TEST_CASE("self-test kinds exit 3 on a threshold failure") {
  auto sk = parse({{"experiment", "skorokhod-selftest"},
                   {"seed", 2},
                   {"options", {{"paths", 20}}},
                   {"tolerances", {{"residual", -1.0}}}});
  sk.output_dir = scratch("sk_fail");
  CHECK(run_quiet(sk).exit_code == kExitThreshold);
  sk.tolerances["residual"] = 1e-8;
  sk.output_dir = scratch("sk_ok");
  CHECK(run_quiet(sk).exit_code == kExitOk);

  auto fl = parse({{"experiment", "fluid-selftest"}, {"tolerances", {{"ratio_min", 0.55}}}});
  fl.output_dir = scratch("fl_fail");
  CHECK(run_quiet(fl).exit_code == kExitThreshold);
}

TEST_CASE("lln records") {
  auto cfg = parse({{"experiment", "lln"},
                    {"seed", 11},
                    {"replications", 6},
                    {"grid", {{"n", {400}}, {"lambda", {0.7}}, {"T", {1.0}}}},
                    {"options", {{"report_points", 11}, {"path_csv", true}}}});
  cfg.output_dir = scratch("lln");
  const auto out = run_quiet(cfg);
  const json r = json::parse(slurp(out.results));
  const auto& rec = r["records"][0];
  REQUIRE(rec["status"] == "ok");
  CHECK(rec["d"].get<int>() == 20);
  CHECK(rec["sup_distance_quantile"].get<double>() <= rec["sup_distance_max"].get<double>());
  CHECK(rec["sup_distance_mean"].get<double>() > 0.0);
  CHECK(fs::exists(cfg.output_dir / "path_0_sim.csv"));
  CHECK(fs::exists(cfg.output_dir / "path_0_fluid.csv"));
  const json m = json::parse(slurp(cfg.output_dir / "manifest.json"));
  CHECK(m["files"].size() == 5);
}

TEST_CASE("plot data") {
  auto rd = parse({{"experiment", "rare-decay"}, {"seed", 4}, {"replications", 200}, {"grid", {{"n", {10, 20}}}}});
  rd.output_dir = scratch("plot_rd");
  const auto out = run_quiet(rd);
  emit_plot_data(out.results, rd.output_dir / "plot.csv");
  const std::string csv = slurp(rd.output_dir / "plot.csv");
  CHECK(csv.rfind("series,x,y,stderr\n", 0) == 0);
  CHECK(csv.find("\"neg_log_rate vs n [d=n,lambda=1,eps=1,T=1]\",10,") != std::string::npos);
  CHECK(csv.find("theory_rate vs n") != std::string::npos);

  auto rb = parse({{"experiment", "remark-bound"}, {"grid", {{"d", {"sqrt", "log"}}}}});
  rb.output_dir = scratch("plot_rb");
  const auto rbo = run_quiet(rb);
  emit_plot_data(rbo.results, rb.output_dir / "plot.csv");
  const std::string rcsv = slurp(rb.output_dir / "plot.csv");
  CHECK(rcsv.find("per_n_rate vs n [d=sqrt,T=1]") != std::string::npos);
  CHECK(rcsv.find("per_n_rate vs n [d=log,T=1]") != std::string::npos);
  CHECK(std::count(rcsv.begin(), rcsv.end(), '\n') == 11);

  CHECK_THROWS_AS(emit_plot_data(rb.output_dir / "nothing.json", rb.output_dir / "p.csv"), std::runtime_error);
  std::ofstream(rb.output_dir / "junk.json") << "{\"a\": 1}";
  CHECK_THROWS_AS(emit_plot_data(rb.output_dir / "junk.json", rb.output_dir / "p.csv"), std::runtime_error);
}

TEST_CASE("remark bound summary") {
  auto cfg = parse({{"experiment", "remark-bound"}});
  cfg.output_dir = scratch("remark");
  const json r = json::parse(slurp(run_quiet(cfg).results));
  const auto& s = r["summary"]["series"][0];
  CHECK(s["magnitude_decreasing"].get<bool>());
  CHECK(s["final_below_tolerance"].get<bool>());
  CHECK(r["records"].size() == 5);
}
