#include "swarmform/world.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace swarmform {

Vec2 goal_position(const GoalSpec& g, double t) {
    const double s = std::sin(g.omega * t + g.phase);
    return g.base + g.drift * t + g.amplitude * s;
}

Vec2 goal_velocity(const GoalSpec& g, double t) {
    const double c = std::cos(g.omega * t + g.phase);
    return g.drift + g.amplitude * (g.omega * c);
}

Vec2 goal_acceleration(const GoalSpec& g, double t) {
    const double s = std::sin(g.omega * t + g.phase);
    return g.amplitude * (-g.omega * g.omega * s);
}

double goal_tracking_energy(const GoalSpec& g, double t0, double t1) {
    if (g.omega == 0.0 || g.amplitude.isZero()) return 0.0;
    // |a|^2 = w^4 |A|^2 sin^2(w t + phi)
    const double w = g.omega;
    auto antiderivative = [&](double t) {
        const double th = w * t + g.phase;
        return 0.5 * t - std::sin(2.0 * th) / (4.0 * w);
    };
    const double scale = std::pow(w, 4) * g.amplitude.squaredNorm();
    return 0.5 * scale * (antiderivative(t1) - antiderivative(t0));
}

std::string to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::AgentOverlap: return "agent overlap";
        case ViolationKind::GoalOverlap: return "goal overlap";
        case ViolationKind::TooManyAgents: return "N <= M required";
        case ViolationKind::SensingRadiusTooSmall: return "sensing radius too small";
        case ViolationKind::NonPositiveStep: return "non-positive dt";
        case ViolationKind::NonPositiveDuration: return "non-positive duration";
        case ViolationKind::NonPositiveParameter: return "non-positive parameter";
        case ViolationKind::DuplicateId: return "duplicate id";
        case ViolationKind::NoAgents: return "no agents";
    }
    return "unknown";
}

std::vector<Violation> validate_scenario(const Scenario& s) {
    std::vector<Violation> out;
    auto report = [&](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

    if (s.agents.empty()) report(ViolationKind::NoAgents, "scenario has no agents");
    if (s.agents.size() > s.goals.size()) {
        report(ViolationKind::TooManyAgents,
               fmt::format("N <= M required (N={}, M={})", s.agents.size(), s.goals.size()));
    }

    std::set<AgentId> agent_ids;
    for (const auto& a : s.agents) {
        if (!agent_ids.insert(a.id).second) {
            report(ViolationKind::DuplicateId, fmt::format("duplicate agent id {}", a.id));
        }
    }
    std::set<GoalId> goal_ids;
    for (const auto& g : s.goals) {
        if (!goal_ids.insert(g.id).second) {
            report(ViolationKind::DuplicateId, fmt::format("duplicate goal id {}", g.id));
        }
    }

    if (!(s.R > 0.0)) report(ViolationKind::NonPositiveParameter, "R must be positive");
    if (!(s.T > 0.0)) report(ViolationKind::NonPositiveParameter, "T must be positive");
    if (!(s.v_max > 0.0)) report(ViolationKind::NonPositiveParameter, "v_max must be positive");
    if (!(s.u_max > 0.0)) report(ViolationKind::NonPositiveParameter, "u_max must be positive");
    if (!(s.dt > 0.0)) report(ViolationKind::NonPositiveStep, "dt must be positive");
    if (!(s.duration > 0.0)) report(ViolationKind::NonPositiveDuration, "duration must be positive");

    if (!(s.h >= kMinSensingFactor * s.R)) {
        report(ViolationKind::SensingRadiusTooSmall,
               fmt::format("h={} must be at least {}R={}", s.h, kMinSensingFactor,
                           kMinSensingFactor * s.R));
    } else if (s.h < kWarnSensingFactor * s.R) {
        spdlog::warn("sensing radius h={} is below {}R", s.h, kWarnSensingFactor);
    }
    if (s.v_min != 0.0 || s.u_min != 0.0) {
        spdlog::warn("nonzero v_min/u_min are accepted but not enforced");
    }

    const double two_r = 2.0 * s.R;
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
            const double d = (s.agents[i].position - s.agents[j].position).norm();
            if (!(d > two_r)) {
                report(ViolationKind::AgentOverlap,
                       fmt::format("agent overlap: agents {} and {} at distance {} <= 2R={}",
                                   s.agents[i].id, s.agents[j].id, d, two_r));
            }
        }
    }

    if (s.dt > 0.0 && s.duration > 0.0) {
        const auto steps = static_cast<long>(std::floor(s.duration / s.dt + 1e-9));
        for (std::size_t i = 0; i < s.goals.size(); ++i) {
            for (std::size_t j = i + 1; j < s.goals.size(); ++j) {
                for (long k = 0; k <= steps; ++k) {
                    const double t = static_cast<double>(k) * s.dt;
                    const double d =
                        (goal_position(s.goals[i], t) - goal_position(s.goals[j], t)).norm();
                    if (!(d > two_r)) {
                        report(ViolationKind::GoalOverlap,
                               fmt::format("goal overlap: goals {} and {} at distance {} <= 2R "
                                           "at t={}",
                                           s.goals[i].id, s.goals[j].id, d, t));
                        break;
                    }
                }
            }
        }
    }
    return out;
}

const GoalSpec& find_goal(const std::vector<GoalSpec>& goals, GoalId id) {
    auto it = std::find_if(goals.begin(), goals.end(), [id](const GoalSpec& g) { return g.id == id; });
    if (it == goals.end()) throw ScenarioError(fmt::format("unknown goal id {}", id));
    return *it;
}

}  // namespace swarmform
