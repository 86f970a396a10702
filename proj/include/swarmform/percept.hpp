#pragma once

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "swarmform/banned_set.hpp"
#include "swarmform/world.hpp"

namespace swarmform {

class UnknownAgentError : public std::out_of_range {
public:
    explicit UnknownAgentError(AgentId id);
    AgentId id() const { return id_; }

private:
    AgentId id_;
};

struct Neighborhood {
    AgentId owner = 0;
    std::set<AgentId> members;  // always contains owner
    double computed_at = 0.0;

    std::size_t size() const { return members.size(); }
    bool contains(AgentId id) const { return members.contains(id); }
};

const AgentState& find_agent(std::span<const AgentState> states, AgentId id);

/// Agents within distance h of agent i, boundary inclusive.
Neighborhood neighborhood(AgentId i, std::span<const AgentState> states, double h,
                          double now = 0.0);

double separating_distance(AgentId i, AgentId j, std::span<const AgentState> states);

/// Everything the swarm shares at one instant. Observation and broadcast are
/// modelled as a synchronous snapshot: every agent sees the exact state of
/// its neighbors with no delay or loss.
struct WorldSnapshot {
    std::vector<AgentState> states;
    std::map<AgentId, BannedGoalSet> banned;
    std::map<AgentId, double> deadlines;
    std::map<AgentId, GoalId> locked_goals;  // arrived agents hold their goal
    std::vector<GoalSpec> goals;
    double h = kInfinity;
    double now = 0.0;
};

/// What one agent knows when it plans: its neighbors' states, ban sets,
/// deadlines and neighborhood sizes, plus the globally known goal set.
struct LocalView {
    AgentId owner = 0;
    double now = 0.0;
    std::map<AgentId, AgentState> neighbor_states;
    std::map<AgentId, BannedGoalSet> neighbor_banned;
    std::map<AgentId, double> neighbor_deadlines;
    std::map<AgentId, std::size_t> neighbor_counts;  // |N_j| broadcast by each member
    std::map<AgentId, GoalId> locked_goals;          // subset of members
    std::vector<GoalSpec> goals;

    std::set<AgentId> members() const;
    std::size_t size() const { return neighbor_states.size(); }
};

LocalView build_local_view(AgentId i, const WorldSnapshot& world);

}  // namespace swarmform
