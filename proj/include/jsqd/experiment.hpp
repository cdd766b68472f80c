#pragma once

// Batch studies driven by a JSON config file. Each run writes
//   results.json   one record per grid point plus a kind-specific summary
//   summary.csv    the scalar columns of every record
//   replicas.csv   per-replica records (stochastic kinds only)
//   manifest.json  resolved config with every default, its hash, versions,
//                  and the SHA-256 of each file above
// results.json, summary.csv and replicas.csv depend only on the config.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace jsqd {

enum class ExperimentKind { lln, rate_table, rare_decay, skorokhod_selftest, fluid_selftest, remark_bound };

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParameterGrid {
  std::vector<std::int64_t> n;
  std::vector<std::string> d;  ///< DSchedule names
  std::vector<double> lambda;
  std::vector<double> epsilon;
  std::vector<double> T;
  std::vector<int> j;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::rate_table;
  ParameterGrid grid;
  std::uint64_t replications = 0;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  /// "G_eps", "F_eps", "U_j" or "V_j" (rare-decay only).
  std::string event = "G_eps";
  /// {"mode": "optimal"|"none"|"fixed", "a": .., "b": ..}
  nlohmann::json tilt;
  /// "all_busy", "empty" or a list of tail values x_1 >= x_2 >= ...
  nlohmann::json initial;
  nlohmann::json tolerances;
  nlohmann::json options;

  /// Fills defaults for the kind and validates. Unknown keys are errors.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Fully resolved form, every default included.
  nlohmann::json to_json() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Defaults applied for `kind`, as printed in the manifest.
nlohmann::json experiment_defaults(ExperimentKind kind);

struct RunOutcome {
  int exit_code = 0;  ///< 0 ok, 3 a self-test threshold failed
  std::filesystem::path results;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> failures;  ///< failed checks and per-point errors
};

RunOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// Long-format series,x,y,stderr CSV derived from a results.json. Throws
/// std::runtime_error when the input is missing or malformed.
void emit_plot_data(const std::filesystem::path& results, const std::filesystem::path& out);

/// Runs a fixed battery of small studies into `out_dir`: both self-test
/// kinds, a rate table, the remark bound, and two-pass reproducibility checks
/// of short stochastic runs. Returns kExitOk or kExitThreshold.
int run_selftest(const std::filesystem::path& out_dir, std::ostream& log);

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Least-squares line y = intercept + slope x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Linear-interpolated empirical quantile (type 7).
double quantile(std::vector<double> v, double q);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitThreshold = 3;

}  // namespace jsqd
