#pragma once

// Text formats for occupancy states and trajectories. See docs/formats.md.
//
// CSV: header "t,v1,...,vM" then one row per grid time. Values are printed
// with 17 significant digits so a write/read cycle is lossless.
// JSON: {"interpolation": "step"|"linear", "dimension": M,
//        "times": [...], "values": [[...], ...]}

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "jsqd/core.hpp"

namespace jsqd {

void write_path_csv(std::ostream& os, const PiecewisePath& path, const std::string& prefix = "x");
/// Interpolation is not stored in CSV; the caller supplies it.
PiecewisePath read_path_csv(std::istream& is, Interpolation interp = Interpolation::linear);

nlohmann::json path_to_json(const PiecewisePath& path);
PiecewisePath path_from_json(const nlohmann::json& j);

nlohmann::json state_to_json(const OccupancyState& s);
OccupancyState state_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const SystemParams& p);
SystemParams params_from_json(const nlohmann::json& j);

/// Parameters plus one path under "path".
nlohmann::json path_record(const SystemParams& p, const PiecewisePath& path);

}  // namespace jsqd
