#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "qroute/simulation.hpp"

namespace qroute {

/// Full config document. Every field is written.
nlohmann::json sim_config_to_json(const SimConfig& config);

/// Overlays `doc` onto `base`. Missing keys keep their base value; unknown
/// keys and type mismatches throw ConfigError with a dotted key path.
SimConfig sim_config_from_json(const nlohmann::json& doc, SimConfig base = {});

/// Reads and validates a config file.
SimConfig load_sim_config(const std::filesystem::path& path);

/// Sets one field by dotted key (e.g. "physics.lifetime") from its textual
/// value, as CLI flags do.
void set_config_field(SimConfig& config, const std::string& key, const std::string& value);

}  // namespace qroute
