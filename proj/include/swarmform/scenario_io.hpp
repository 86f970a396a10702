#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "swarmform/world.hpp"

namespace swarmform {

// Scenario files are JSON objects. `h` may be a number or the string "inf".
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

double parse_length_or_inf(const std::string& text);

}  // namespace swarmform
