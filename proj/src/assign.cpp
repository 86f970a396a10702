#include "swarmform/assign.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "swarmform/lsap.hpp"

namespace swarmform {

GoalId AssignmentMatrix::goal_of(AgentId k) const {
    for (GoalId j : goals) {
        if (entry(k, j) == 1) return j;
    }
    throw UnknownAgentError(k);
}

int AssignmentMatrix::entry(AgentId k, GoalId j) const {
    auto it = entries.find({k, j});
    return it == entries.end() ? 0 : it->second;
}

InfeasibleAssignment::InfeasibleAssignment(AgentId owner, std::size_t available_goals,
                                           std::size_t members)
    : std::runtime_error(fmt::format(
          "assignment infeasible for agent {}: {} commonly available goals, {} members", owner,
          available_goals, members)),
      owner_(owner),
      available_(available_goals),
      members_(members) {}

AssignmentState AssignmentState::initial(std::span<const AgentState> states, double deadline) {
    AssignmentState s;
    for (const auto& a : states) s.agents[a.id].deadline = deadline;
    return s;
}

std::map<AgentId, GoalId> AssignmentState::prescribed() const {
    std::map<AgentId, GoalId> out;
    for (const auto& [id, a] : agents) {
        if (a.goal) out[id] = *a.goal;
    }
    return out;
}

WorldSnapshot make_snapshot(std::span<const AgentState> states, const std::vector<GoalSpec>& goals,
                            double h, double now, const AssignmentState& assignment) {
    WorldSnapshot w;
    w.states.assign(states.begin(), states.end());
    w.goals = goals;
    w.h = h;
    w.now = now;
    w.locked_goals = assignment.locked;
    for (const auto& [id, a] : assignment.agents) {
        w.banned[id] = a.banned;
        w.deadlines[id] = a.deadline;
    }
    return w;
}

std::set<GoalId> available_goals(const LocalView& view) {
    std::set<GoalId> out;
    for (const auto& g : view.goals) {
        const bool banned_somewhere =
            std::any_of(view.neighbor_banned.begin(), view.neighbor_banned.end(),
                        [&](const auto& kv) { return kv.second.contains(g.id); });
        if (!banned_somewhere) out.insert(g.id);
    }
    return out;
}

bool check_feasibility(const LocalView& view) {
    return available_goals(view).size() >= view.size();
}

AssignmentMatrix solve_local_assignment(const LocalView& view) {
    AssignmentMatrix out;
    out.owner = view.owner;
    for (const auto& [id, _] : view.neighbor_states) out.agents.push_back(id);
    for (const auto& g : view.goals) out.goals.push_back(g.id);
    std::sort(out.goals.begin(), out.goals.end());

    std::map<GoalId, AgentId> holder;  // goals held by locked members
    for (const auto& [k, g] : view.locked_goals) holder[g] = k;

    const auto n = static_cast<Eigen::Index>(out.agents.size());
    const auto m = static_cast<Eigen::Index>(out.goals.size());
    Eigen::MatrixXd cost(n, m);
    for (Eigen::Index r = 0; r < n; ++r) {
        const AgentId k = out.agents[r];
        const Vec2 p = view.neighbor_states.at(k).position;
        const double deadline = view.neighbor_deadlines.at(k);
        const BannedGoalSet& banned = view.neighbor_banned.at(k);
        auto locked = view.locked_goals.find(k);
        for (Eigen::Index c = 0; c < m; ++c) {
            const GoalId j = out.goals[c];
            auto h = holder.find(j);
            const bool forbidden = banned.contains(j) ||
                                   (locked != view.locked_goals.end() && locked->second != j) ||
                                   (h != holder.end() && h->second != k);
            cost(r, c) = forbidden
                             ? kInfinity
                             : (p - goal_position(find_goal(view.goals, j), deadline)).norm();
        }
    }

    const auto sol = solve_lsap_lexicographic(cost);
    if (!sol) throw InfeasibleAssignment(view.owner, available_goals(view).size(), view.size());

    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < m; ++c) {
            out.entries[{out.agents[r], out.goals[c]}] = (sol->row_to_col[r] == c) ? 1 : 0;
        }
    }
    out.total_cost = sol->cost;
    return out;
}

std::optional<ConflictSet> detect_conflict(AgentId i, const std::map<AgentId, GoalId>& prescribed,
                                           const LocalView& view) {
    auto own = prescribed.find(i);
    if (own == prescribed.end()) return std::nullopt;
    ConflictSet c;
    c.goal = own->second;
    for (const auto& [k, _] : view.neighbor_states) {
        auto pk = prescribed.find(k);
        if (pk != prescribed.end() && pk->second == c.goal) c.levels[0].insert(k);
    }
    if (c.levels[0].size() <= 1) return std::nullopt;
    return c;
}

ConflictResolution resolve_conflict(const ConflictSet& c, const LocalView& view) {
    const auto& competitors = c.competitors();
    if (competitors.size() < 2) {
        throw ContractViolation(
            fmt::format("conflict on goal {} has {} competitor(s); at least two required", c.goal,
                        competitors.size()));
    }
    ConflictResolution res;
    res.conflict.goal = c.goal;
    res.conflict.levels[0] = competitors;

    auto decided = [&](const std::set<AgentId>& eligible) {
        if (eligible.size() != 1) return false;
        res.winner = *eligible.begin();
        return true;
    };

    // Level 1: largest neighborhood.
    std::size_t best_count = 0;
    for (AgentId k : competitors) best_count = std::max(best_count, view.neighbor_counts.at(k));
    std::set<AgentId> eligible;
    for (AgentId k : competitors) {
        if (view.neighbor_counts.at(k) == best_count) {
            eligible.insert(k);
        } else {
            res.bans[k] = BanLevel::NeighborhoodSize;
        }
    }
    if (decided(eligible)) return res;
    res.conflict.levels[1] = eligible;

    // Level 2: farthest from the conflict goal.
    const Vec2 goal_pos = goal_position(find_goal(view.goals, c.goal), view.now);
    std::map<AgentId, double> dist;
    double best_dist = -1.0;
    for (AgentId k : res.conflict.levels[1]) {
        dist[k] = (view.neighbor_states.at(k).position - goal_pos).norm();
        best_dist = std::max(best_dist, dist[k]);
    }
    eligible.clear();
    for (AgentId k : res.conflict.levels[1]) {
        if (dist[k] >= best_dist - kDistanceTieTol) {
            eligible.insert(k);
        } else {
            res.bans[k] = BanLevel::Distance;
        }
    }
    if (decided(eligible)) return res;
    res.conflict.levels[2] = eligible;

    // Level 3: smallest index.
    res.winner = *eligible.begin();
    for (AgentId k : eligible) {
        if (k != res.winner) res.bans[k] = BanLevel::Index;
    }
    return res;
}

double update_deadline(double current, double now, double T, bool banned_grew) {
    return banned_grew ? now + T : current;
}

bool outranks(const PriorityKey& a, const PriorityKey& b) {
    if (a.neighborhood_size != b.neighborhood_size) {
        return a.neighborhood_size > b.neighborhood_size;
    }
    if (std::abs(a.goal_distance - b.goal_distance) > kDistanceTieTol) {
        return a.goal_distance > b.goal_distance;
    }
    return a.id < b.id;
}

std::vector<AgentId> priority_order(const LocalView& view,
                                    const std::map<AgentId, GoalId>& prescribed) {
    std::vector<PriorityKey> keys;
    for (const auto& [k, st] : view.neighbor_states) {
        PriorityKey key;
        key.id = k;
        key.neighborhood_size = view.neighbor_counts.at(k);
        if (auto g = prescribed.find(k); g != prescribed.end()) {
            key.goal_distance =
                (st.position - goal_position(find_goal(view.goals, g->second), view.now)).norm();
        }
        keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end(), outranks);
    std::vector<AgentId> out;
    for (const auto& k : keys) out.push_back(k.id);
    return out;
}

bool is_conflict_free(std::span<const AgentState> states, double h,
                      const std::map<AgentId, GoalId>& prescribed) {
    for (const auto& a : states) {
        for (const auto& b : states) {
            if (a.id >= b.id) continue;
            auto ga = prescribed.find(a.id);
            auto gb = prescribed.find(b.id);
            if (ga == prescribed.end() || gb == prescribed.end()) continue;
            if (ga->second == gb->second && (a.position - b.position).norm() <= h) return false;
        }
    }
    return true;
}

RoundResult assignment_round(std::span<const AgentState> states,
                             const std::vector<GoalSpec>& goals, double h, double now, double T,
                             AssignmentState state, std::set<AgentId> participants,
                             const MatrixObserver& observer) {
    if (participants.empty()) {
        for (const auto& a : states) participants.insert(a.id);
    }
    for (const auto& [k, g] : state.locked) {
        participants.erase(k);
        state.agents[k].goal = g;
    }

    RoundResult result;
    const std::size_t bound = states.size() * goals.size();
    std::size_t initial_bans = 0;
    for (const auto& [_, a] : state.agents) initial_bans += a.banned.size();

    // An arrived agent never yields its goal, so an agent prescribed that goal
    // bans it for good once it sees the holder. Without this an agent could
    // walk towards the goal, see the holder, turn away, lose sight of it and
    // turn back forever.
    {
        const WorldSnapshot world = make_snapshot(states, goals, h, now, state);
        for (const auto& a : states) {
            if (state.locked.contains(a.id)) continue;
            const LocalView view = build_local_view(a.id, world);
            auto& own = state.agents[a.id];
            bool grew = false;
            for (const auto& [k, g] : view.locked_goals) {
                if (k == a.id || own.goal != g || own.banned.contains(g)) continue;
                own.banned.ban(g, BanLevel::NeighborhoodSize);
                grew = true;
                spdlog::debug("t={} agent {} banned from goal {} held by arrived agent {}", now,
                              a.id, g, k);
            }
            if (grew) {
                own.deadline = update_deadline(own.deadline, now, T, true);
                participants.insert(a.id);
            }
        }
    }

    for (int iteration = 1;; ++iteration) {
        if (static_cast<std::size_t>(iteration) > std::max<std::size_t>(bound, 1)) {
            throw RoundLimitExceeded(
                fmt::format("assignment round exceeded {} iterations at t={}", bound, now));
        }
        result.iterations = iteration;

        // Every participant solves on the same snapshot; results merge by id.
        const WorldSnapshot world = make_snapshot(states, goals, h, now, state);
        std::map<AgentId, GoalId> solved;
        for (AgentId i : participants) {
            const LocalView view = build_local_view(i, world);
            const AssignmentMatrix matrix = solve_local_assignment(view);
            if (observer) observer(view, matrix);
            solved[i] = matrix.goal_of(i);
        }
        for (const auto& [i, g] : solved) {
            state.agents[i].goal = g;
            result.records.push_back({iteration, i, g,
                                      [&] {
                                          auto b = state.agents[i].banned.all();
                                          return std::vector<GoalId>(b.begin(), b.end());
                                      }(),
                                      state.agents[i].deadline});
        }
        result.participants.insert(participants.begin(), participants.end());

        const auto prescribed = state.prescribed();
        const WorldSnapshot after = make_snapshot(states, goals, h, now, state);
        struct Pending {
            GoalId goal;
            AgentId owner;
            ConflictSet conflict;
        };
        std::vector<Pending> pending;
        for (const auto& a : states) {
            const LocalView view = build_local_view(a.id, after);
            if (auto c = detect_conflict(a.id, prescribed, view)) {
                pending.push_back({c->goal, a.id, *c});
            }
        }
        if (pending.empty()) break;

        std::sort(pending.begin(), pending.end(), [](const Pending& x, const Pending& y) {
            return std::pair(x.goal, x.owner) < std::pair(y.goal, y.owner);
        });

        std::set<AgentId> grew;
        for (const auto& p : pending) {
            for (AgentId k : p.conflict.competitors()) {
                if (!state.locked.contains(k)) participants.insert(k);
            }
            if (state.locked.contains(p.owner)) continue;
            const bool involves_locked =
                std::any_of(p.conflict.competitors().begin(), p.conflict.competitors().end(),
                            [&](AgentId k) { return state.locked.contains(k); });
            // A locked goal is never contested; the stale holder simply re-solves.
            if (involves_locked) continue;
            const ConflictResolution res = resolve_conflict(p.conflict, build_local_view(p.owner, after));
            // Each agent applies only the outcome it computes for itself.
            if (auto ban = res.bans.find(p.owner); ban != res.bans.end()) {
                auto& own = state.agents[p.owner].banned;
                const std::size_t before = own.size();
                own.ban(p.goal, ban->second);
                if (own.size() > before) grew.insert(p.owner);
                spdlog::debug("t={} agent {} banned from goal {} (level {})", now, p.owner, p.goal,
                              static_cast<int>(ban->second));
            }
        }
        for (AgentId k : grew) {
            state.agents[k].deadline = update_deadline(state.agents[k].deadline, now, T, true);
        }
    }

    std::size_t final_bans = 0;
    for (const auto& [_, a] : state.agents) final_bans += a.banned.size();
    result.new_bans = final_bans - initial_bans;
    result.state = std::move(state);
    return result;
}

}  // namespace swarmform
