#include "swarmform/scenario_io.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace swarmform {
namespace {

using nlohmann::json;

Vec2 vec_from(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) {
        throw ScenarioError(fmt::format("'{}' must be a two-element array", key));
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

Vec2 vec_or_zero(const json& j, const char* key) {
    return j.contains(key) ? vec_from(j, key) : Vec2::Zero();
}

json vec_to(const Vec2& v) { return json::array({v.x(), v.y()}); }

double number_or_inf(const json& j) {
    if (j.is_string()) return parse_length_or_inf(j.get<std::string>());
    return j.get<double>();
}

}  // namespace

double parse_length_or_inf(const std::string& text) {
    if (text == "inf" || text == "Inf" || text == "infinity") return kInfinity;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ScenarioError(fmt::format("cannot parse '{}' as a number or 'inf'", text));
    }
    if (used != text.size()) throw ScenarioError(fmt::format("trailing characters in '{}'", text));
    return v;
}

Scenario scenario_from_json(const json& j) {
    try {
        Scenario s;
        for (const auto& a : j.at("agents")) {
            AgentState st;
            st.id = a.at("id").get<int>();
            st.position = vec_from(a, "position");
            st.velocity = vec_or_zero(a, "velocity");
            s.agents.push_back(st);
        }
        for (const auto& g : j.at("goals")) {
            GoalSpec gs;
            gs.id = g.at("id").get<int>();
            gs.base = vec_from(g, "base");
            gs.drift = vec_or_zero(g, "drift");
            gs.amplitude = vec_or_zero(g, "amplitude");
            gs.omega = g.value("omega", 0.0);
            gs.phase = g.value("phase", 0.0);
            s.goals.push_back(gs);
        }
        s.h = number_or_inf(j.at("h"));
        s.R = j.at("R").get<double>();
        s.T = j.at("T").get<double>();
        s.v_min = j.value("v_min", 0.0);
        s.v_max = j.at("v_max").get<double>();
        s.u_min = j.value("u_min", 0.0);
        s.u_max = j.at("u_max").get<double>();
        s.duration = j.at("duration").get<double>();
        s.dt = j.at("dt").get<double>();
        return s;
    } catch (const json::exception& e) {
        throw ScenarioError(fmt::format("malformed scenario: {}", e.what()));
    }
}

json scenario_to_json(const Scenario& s) {
    json j;
    j["agents"] = json::array();
    for (const auto& a : s.agents) {
        j["agents"].push_back(
            {{"id", a.id}, {"position", vec_to(a.position)}, {"velocity", vec_to(a.velocity)}});
    }
    j["goals"] = json::array();
    for (const auto& g : s.goals) {
        j["goals"].push_back({{"id", g.id},
                              {"base", vec_to(g.base)},
                              {"drift", vec_to(g.drift)},
                              {"amplitude", vec_to(g.amplitude)},
                              {"omega", g.omega},
                              {"phase", g.phase}});
    }
    if (std::isinf(s.h)) {
        j["h"] = "inf";
    } else {
        j["h"] = s.h;
    }
    j["R"] = s.R;
    j["T"] = s.T;
    j["v_min"] = s.v_min;
    j["v_max"] = s.v_max;
    j["u_min"] = s.u_min;
    j["u_max"] = s.u_max;
    j["duration"] = s.duration;
    j["dt"] = s.dt;
    return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(fmt::format("cannot open scenario file '{}'", path.string()));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ScenarioError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
    }
    return scenario_from_json(j);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ScenarioError(fmt::format("cannot write '{}'", path.string()));
    out << scenario_to_json(s).dump(2) << '\n';
}

}  // namespace swarmform
