#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "swarmform/banned_set.hpp"
#include "swarmform/percept.hpp"
#include "swarmform/world.hpp"

namespace swarmform {

/// Binary local assignment of the owner's neighborhood members to goals.
struct AssignmentMatrix {
    AgentId owner = 0;
    std::vector<AgentId> agents;  // ascending
    std::vector<GoalId> goals;    // ascending
    std::map<std::pair<AgentId, GoalId>, int> entries;

    GoalId goal_of(AgentId k) const;
    int entry(AgentId k, GoalId j) const;
    double total_cost = 0.0;
};

class InfeasibleAssignment : public std::runtime_error {
public:
    InfeasibleAssignment(AgentId owner, std::size_t available_goals, std::size_t members);

    AgentId owner() const { return owner_; }
    std::size_t available_goals() const { return available_; }
    std::size_t members() const { return members_; }

private:
    AgentId owner_;
    std::size_t available_;
    std::size_t members_;
};

/// Per-agent record of the assignment protocol.
struct AgentAssignment {
    std::optional<GoalId> goal;  // prescribed goal
    double deadline = 0.0;       // T_i
    BannedGoalSet banned;
};

struct AssignmentState {
    std::map<AgentId, AgentAssignment> agents;
    std::map<AgentId, GoalId> locked;  // arrived agents; never re-assigned

    /// Fresh state: no goals, no bans, every deadline set to `deadline`.
    static AssignmentState initial(std::span<const AgentState> states, double deadline);

    std::map<AgentId, GoalId> prescribed() const;
};

struct ConflictSet {
    GoalId goal = 0;
    std::array<std::set<AgentId>, 3> levels;  // C1 ⊇ C2 ⊇ C3

    const std::set<AgentId>& competitors() const { return levels[0]; }
};

struct ConflictResolution {
    AgentId winner = 0;
    std::map<AgentId, BanLevel> bans;  // every non-winner, banned from the conflict goal
    ConflictSet conflict;              // with all tiebreaker levels filled in
};

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class RoundLimitExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Distances closer than this count as equal in the distance tiebreaker.
inline constexpr double kDistanceTieTol = 1e-9;

/// Builds the snapshot all agents share for the protocol at time `now`.
WorldSnapshot make_snapshot(std::span<const AgentState> states, const std::vector<GoalSpec>& goals,
                            double h, double now, const AssignmentState& assignment);

/// Minimum total distance assignment of every view member to a distinct,
/// non-banned goal. Agent k's cost to goal j is measured to the goal's
/// position at k's deadline. Ties resolve to the lexicographically smallest
/// goal vector in ascending agent order. Locked members keep their goal.
/// Throws InfeasibleAssignment when no matching covers every member.
AssignmentMatrix solve_local_assignment(const LocalView& view);

/// Goals banned for no member of the view.
std::set<GoalId> available_goals(const LocalView& view);

/// True iff at least as many goals are available to the whole view as
/// there are members.
bool check_feasibility(const LocalView& view);

/// Competing agents for agent i: its neighbors sharing its prescribed goal.
std::optional<ConflictSet> detect_conflict(AgentId i, const std::map<AgentId, GoalId>& prescribed,
                                           const LocalView& view);

/// Runs the neighborhood-size, distance-to-goal and index tiebreakers in turn.
/// Requires at least two competitors.
ConflictResolution resolve_conflict(const ConflictSet& c, const LocalView& view);

double update_deadline(double current, double now, double T, bool banned_grew);

/// Tiebreaker order used for trajectory priorities: larger neighborhood
/// first, then farther from its goal, then smaller index.
struct PriorityKey {
    std::size_t neighborhood_size = 0;
    double goal_distance = 0.0;
    AgentId id = 0;
};
bool outranks(const PriorityKey& a, const PriorityKey& b);

std::vector<AgentId> priority_order(const LocalView& view,
                                    const std::map<AgentId, GoalId>& prescribed);

struct IterationRecord {
    int iteration = 0;
    AgentId agent = 0;
    GoalId prescribed_goal = 0;
    std::vector<GoalId> banned;
    double deadline = 0.0;
};

using MatrixObserver = std::function<void(const LocalView&, const AssignmentMatrix&)>;

struct RoundResult {
    AssignmentState state;
    int iterations = 0;
    std::size_t new_bans = 0;
    std::set<AgentId> participants;
    std::vector<IterationRecord> records;
};

/// Solve, detect and resolve until every neighborhood is conflict free.
/// Only `participants` (or every unlocked agent, when empty) re-solve at the
/// start; agents drawn into a conflict join. Every iteration that ends with a
/// conflict bans at least one (agent, goal) pair, so the loop is bounded by
/// N*M iterations; exceeding it throws RoundLimitExceeded.
RoundResult assignment_round(std::span<const AgentState> states,
                             const std::vector<GoalSpec>& goals, double h, double now, double T,
                             AssignmentState state, std::set<AgentId> participants = {},
                             const MatrixObserver& observer = {});

/// True when no two agents in any common neighborhood share a goal.
bool is_conflict_free(std::span<const AgentState> states, double h,
                      const std::map<AgentId, GoalId>& prescribed);

}  // namespace swarmform
