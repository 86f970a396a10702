#include "swarmform/percept.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace swarmform {

void BannedGoalSet::ban(GoalId goal, BanLevel level) {
    parts_[static_cast<std::size_t>(level) - 1].insert(goal);
}

bool BannedGoalSet::contains(GoalId goal) const {
    return std::any_of(parts_.begin(), parts_.end(),
                       [goal](const auto& p) { return p.contains(goal); });
}

const std::set<GoalId>& BannedGoalSet::partition(BanLevel level) const {
    return parts_[static_cast<std::size_t>(level) - 1];
}

std::set<GoalId> BannedGoalSet::all() const {
    std::set<GoalId> out;
    for (const auto& p : parts_) out.insert(p.begin(), p.end());
    return out;
}

std::size_t BannedGoalSet::size() const { return all().size(); }

bool BannedGoalSet::includes(const BannedGoalSet& earlier) const {
    for (std::size_t k = 0; k < parts_.size(); ++k) {
        if (!std::includes(parts_[k].begin(), parts_[k].end(), earlier.parts_[k].begin(),
                           earlier.parts_[k].end())) {
            return false;
        }
    }
    return true;
}

UnknownAgentError::UnknownAgentError(AgentId id)
    : std::out_of_range(fmt::format("unknown agent id {}", id)), id_(id) {}

const AgentState& find_agent(std::span<const AgentState> states, AgentId id) {
    auto it = std::find_if(states.begin(), states.end(),
                           [id](const AgentState& a) { return a.id == id; });
    if (it == states.end()) throw UnknownAgentError(id);
    return *it;
}

Neighborhood neighborhood(AgentId i, std::span<const AgentState> states, double h, double now) {
    const Vec2 p = find_agent(states, i).position;
    Neighborhood n;
    n.owner = i;
    n.computed_at = now;
    for (const auto& a : states) {
        if ((a.position - p).norm() <= h) n.members.insert(a.id);
    }
    n.members.insert(i);
    return n;
}

double separating_distance(AgentId i, AgentId j, std::span<const AgentState> states) {
    return (find_agent(states, i).position - find_agent(states, j).position).norm();
}

std::set<AgentId> LocalView::members() const {
    std::set<AgentId> out;
    for (const auto& [id, _] : neighbor_states) out.insert(id);
    return out;
}

LocalView build_local_view(AgentId i, const WorldSnapshot& world) {
    const Neighborhood n = neighborhood(i, world.states, world.h, world.now);
    LocalView v;
    v.owner = i;
    v.now = world.now;
    v.goals = world.goals;
    for (AgentId j : n.members) {
        v.neighbor_states.emplace(j, find_agent(world.states, j));
        auto b = world.banned.find(j);
        v.neighbor_banned.emplace(j, b == world.banned.end() ? BannedGoalSet{} : b->second);
        auto d = world.deadlines.find(j);
        if (d == world.deadlines.end()) {
            throw UnknownAgentError(j);
        }
        v.neighbor_deadlines.emplace(j, d->second);
        v.neighbor_counts.emplace(j, neighborhood(j, world.states, world.h, world.now).size());
        if (auto l = world.locked_goals.find(j); l != world.locked_goals.end()) {
            v.locked_goals.emplace(j, l->second);
        }
    }
    return v;
}

}  // namespace swarmform
