#include "jsqd/path_io.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace jsqd {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    out.push_back(std::stod(cell, &used));
    if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos)
      throw std::invalid_argument("csv: malformed number '" + cell + "'");
  }
  return out;
}

}  // namespace

void write_path_csv(std::ostream& os, const PiecewisePath& path, const std::string& prefix) {
  os << "t";
  for (Eigen::Index i = 0; i < path.dimension(); ++i) os << ',' << prefix << (i + 1);
  os << '\n';
  for (Eigen::Index k = 0; k < path.size(); ++k) {
    os << fmt17(path.times()(k));
    for (Eigen::Index i = 0; i < path.dimension(); ++i) os << ',' << fmt17(path.values()(k, i));
    os << '\n';
  }
}

PiecewisePath read_path_csv(std::istream& is, Interpolation interp) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: missing header");
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (line.rfind("t", 0) != 0) throw std::invalid_argument("csv: header must start with 't'");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto r = split_doubles(line);
    if (static_cast<Eigen::Index>(r.size()) != columns)
      throw std::invalid_argument("csv: row width differs from header");
    rows.push_back(std::move(r));
  }
  Vector times(static_cast<Eigen::Index>(rows.size()));
  Matrix values(static_cast<Eigen::Index>(rows.size()), columns - 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    times(kk) = rows[k][0];
    for (Eigen::Index i = 1; i < columns; ++i) values(kk, i - 1) = rows[k][static_cast<std::size_t>(i)];
  }
  return PiecewisePath(std::move(times), std::move(values), interp);
}

nlohmann::json path_to_json(const PiecewisePath& path) {
  nlohmann::json j;
  j["interpolation"] = to_string(path.interpolation());
  j["dimension"] = path.dimension();
  j["times"] = std::vector<double>(path.times().data(), path.times().data() + path.size());
  auto rows = nlohmann::json::array();
  for (Eigen::Index k = 0; k < path.size(); ++k) {
    std::vector<double> r(static_cast<std::size_t>(path.dimension()));
    for (Eigen::Index i = 0; i < path.dimension(); ++i) r[static_cast<std::size_t>(i)] = path.values()(k, i);
    rows.push_back(std::move(r));
  }
  j["values"] = std::move(rows);
  return j;
}

PiecewisePath path_from_json(const nlohmann::json& j) {
  const auto times = j.at("times").get<std::vector<double>>();
  const auto dim = j.at("dimension").get<Eigen::Index>();
  const auto& rows = j.at("values");
  if (rows.size() != times.size()) throw std::invalid_argument("json path: times/values length mismatch");
  Matrix values(static_cast<Eigen::Index>(times.size()), dim);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = rows[k].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(r.size()) != dim) throw std::invalid_argument("json path: row dimension mismatch");
    for (Eigen::Index i = 0; i < dim; ++i) values(static_cast<Eigen::Index>(k), i) = r[static_cast<std::size_t>(i)];
  }
  Vector t = Eigen::Map<const Vector>(times.data(), static_cast<Eigen::Index>(times.size()));
  return PiecewisePath(std::move(t), std::move(values),
                       interpolation_from_string(j.value("interpolation", std::string("linear"))));
}

nlohmann::json state_to_json(const OccupancyState& s) {
  return {{"n", s.servers()}, {"counts", s.counts()}};
}

OccupancyState state_from_json(const nlohmann::json& j) {
  return OccupancyState(j.at("n").get<std::int64_t>(), j.at("counts").get<std::vector<std::int64_t>>());
}

nlohmann::json params_to_json(const SystemParams& p) {
  const Vector& x = p.initial.limit;
  return {{"n", p.n},
          {"d", p.d},
          {"lambda_n", p.lambda_n},
          {"T", p.horizon},
          {"initial", state_to_json(p.initial.state)},
          {"limit", std::vector<double>(x.data(), x.data() + x.size())}};
}

SystemParams params_from_json(const nlohmann::json& j) {
  SystemParams p;
  p.n = j.at("n").get<std::int64_t>();
  p.d = j.at("d").get<std::int64_t>();
  p.lambda_n = j.at("lambda_n").get<double>();
  p.horizon = j.at("T").get<double>();
  auto state = state_from_json(j.at("initial"));
  if (j.contains("limit")) {
    const auto lim = j.at("limit").get<std::vector<double>>();
    p.initial = {std::move(state), Eigen::Map<const Vector>(lim.data(), static_cast<Eigen::Index>(lim.size()))};
  } else {
    p.initial = InitialOccupancy::exact(std::move(state));
  }
  p.validate();
  return p;
}

nlohmann::json path_record(const SystemParams& p, const PiecewisePath& path) {
  return {{"params", params_to_json(p)}, {"path", path_to_json(path)}};
}

}  // namespace jsqd
