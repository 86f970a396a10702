#include "swarmform/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "swarmform/percept.hpp"

namespace swarmform {
namespace {

constexpr double kTimeTol = 1e-9;
// Times one agent's plan may be dropped in favour of another's per replan.
constexpr int kMaxEvictions = 3;

AgentState& agent_ref(std::vector<AgentState>& agents, AgentId id) {
    auto it = std::find_if(agents.begin(), agents.end(),
                           [id](const AgentState& a) { return a.id == id; });
    if (it == agents.end()) throw UnknownAgentError(id);
    return *it;
}

std::map<AgentId, std::set<AgentId>> all_neighborhoods(const std::vector<AgentState>& agents,
                                                       double h) {
    std::map<AgentId, std::set<AgentId>> out;
    for (const auto& a : agents) out[a.id] = neighborhood(a.id, agents, h).members;
    return out;
}

PriorityKey key_of(const SimState& s, const Scenario& sc, AgentId id,
                   const std::map<AgentId, std::set<AgentId>>& nbrs) {
    PriorityKey k;
    k.id = id;
    k.neighborhood_size = nbrs.at(id).size();
    const auto& a = s.assignment.agents.at(id);
    if (a.goal) {
        k.goal_distance = (find_agent(s.agents, id).position -
                           goal_position(find_goal(sc.goals, *a.goal), s.t))
                              .norm();
    }
    return k;
}

// Plans `agent` with every trajectory in `fixed` pinned.
Trajectory plan_one(SimState& s, const Scenario& sc, const SimOptions& opt, AgentId agent,
                    const std::map<AgentId, Trajectory>& fixed, RunLog& log,
                    const std::set<AgentId>& yielding, bool evasive = false) {
    TrajectoryOptions topt = trajectory_options(sc, opt);
    topt.owner_only = true;
    topt.evasive = evasive;

    auto attempt = [&]() {
        const WorldSnapshot world = make_snapshot(s.agents, sc.goals, sc.h, s.t, s.assignment);
        const LocalView view = build_local_view(agent, world);
        std::map<AgentId, Trajectory> pinned;
        for (AgentId k : view.members()) {
            if (k == agent) continue;
            if (auto f = fixed.find(k); f != fixed.end()) pinned.emplace(k, f->second);
        }
        auto order = priority_order(view, s.assignment.prescribed());
        // Evicted blockers plan after this agent.
        std::stable_partition(order.begin(), order.end(),
                              [&](AgentId k) { return !yielding.contains(k); });
        return solve_constrained(view, s.assignment, order, topt, pinned).prescribed();
    };

    if (evasive) return attempt();
    auto& deadline = s.assignment.agents.at(agent).deadline;
    if (deadline <= s.t + sc.dt - kTimeTol) {
        // Too close to the deadline to steer anywhere.
        deadline = s.t + sc.T;
        ++log.deadline_extensions;
    }
    try {
        return attempt();
    } catch (const TrajectoryError& e) {
        if (deadline >= s.t + sc.T - kTimeTol) throw;
        spdlog::debug("t={} agent {}: {}; extending deadline to {}", s.t, agent, e.what(),
                      s.t + sc.T);
        deadline = s.t + sc.T;
        ++log.deadline_extensions;
        return attempt();
    }
}

// True if the predicted paths come closer than the planning separation
// before both settle on their goals.
bool plans_conflict(const Trajectory& a, const Trajectory& b, double now, double dt,
                    const TrajectoryOptions& topt) {
    const double end = std::max({std::isinf(a.tf()) ? now : a.tf(),
                                 std::isinf(b.tf()) ? now : b.tf(), now + dt});
    for (double t : planning_grid(now, end, topt)) {
        if ((a.predict_position(t) - b.predict_position(t)).norm() < topt.separation()) {
            return true;
        }
    }
    return false;
}

// The agent's current plan, if it has time left and still clears every
// neighbor's plan.
std::optional<Trajectory> keep_current(const SimState& s, const std::set<AgentId>& neighbors,
                                       AgentId id, const TrajectoryOptions& topt) {
    auto it = s.plans.find(id);
    if (it == s.plans.end()) return std::nullopt;
    const Trajectory& plan = it->second;
    if (plan.kind() == Trajectory::Kind::Tracking || s.t >= plan.tf() - kTimeTol) {
        return std::nullopt;
    }
    for (AgentId k : neighbors) {
        if (k == id) continue;
        if (plans_conflict(plan, s.plans.at(k), s.t, 0.0, topt)) return std::nullopt;
    }
    return plan;
}

void check_premise(const Trajectory& traj, const Scenario& sc, const SimOptions& opt,
                   RunLog& log) {
    if (!traj.goal() || traj.kind() == Trajectory::Kind::Tracking) return;
    const Vec2 target = goal_position(*traj.goal(), traj.tf());
    const auto grid = planning_grid(traj.t0(), traj.tf(), trajectory_options(sc, opt));
    const double rise = max_distance_increase(traj, target, grid);
    if (rise > opt.monotone_tol) {
        ++log.monotone_violations;
        spdlog::debug("agent {} moves away from its goal by up to {} m", traj.agent(), rise);
    }
}

// Assignment round for `triggered`, then trajectory replans for every agent
// whose goal, deadline or neighborhood changed, plus their moving neighbors.
void replan(SimState& s, const Scenario& sc, const SimOptions& opt,
            const std::set<AgentId>& triggered, RunLog& log) {
    const AssignmentState before = s.assignment;
    RoundResult round =
        assignment_round(s.agents, sc.goals, sc.h, s.t, sc.T, s.assignment, triggered,
                         opt.on_matrix);
    s.assignment = std::move(round.state);
    log.round_iterations.push_back(round.iterations);
    log.n_bans += round.new_bans;
    ++log.n_replans;
    for (auto& r : round.records) log.assignment_trace.push_back({s.t, std::move(r)});

    std::map<AgentId, BannedGoalSet> snapshot;
    std::set<AgentId> changed(triggered.begin(), triggered.end());
    for (const auto& [id, a] : s.assignment.agents) {
        snapshot[id] = a.banned;
        const auto& old = before.agents.at(id);
        if (a.goal != old.goal) {
            changed.insert(id);
            if (a.goal) log.goal_sequence[id].push_back({s.t, *a.goal});
        }
        if (a.deadline != old.deadline) changed.insert(id);
        for (GoalId g : a.banned.all()) {
            if (!old.banned.contains(g)) log.ban_events[id].push_back({s.t, g});
        }
    }
    log.ban_snapshots.push_back(std::move(snapshot));

    const auto nbrs = all_neighborhoods(s.agents, sc.h);
    std::set<AgentId> to_plan;
    for (AgentId id : changed) {
        if (s.arrived.contains(id)) continue;
        to_plan.insert(id);
        for (AgentId k : nbrs.at(id)) {
            if (!s.arrived.contains(k)) to_plan.insert(k);
        }
    }

    std::vector<PriorityKey> keys;
    for (AgentId id : to_plan) keys.push_back(key_of(s, sc, id, nbrs));
    std::sort(keys.begin(), keys.end(), outranks);

    std::map<AgentId, Trajectory> fixed;
    for (const auto& [id, traj] : s.plans) {
        if (!to_plan.contains(id)) fixed.emplace(id, traj);
    }
    std::deque<AgentId> queue;
    for (const auto& k : keys) queue.push_back(k.id);

    const TrajectoryOptions topt = trajectory_options(sc, opt);
    std::set<AgentId> done;
    std::map<AgentId, int> evictions;
    std::map<AgentId, std::set<AgentId>> yielding;
    while (!queue.empty()) {
        const AgentId id = queue.front();
        queue.pop_front();
        std::optional<Trajectory> traj;
        while (!traj) {
            try {
                traj = plan_one(s, sc, opt, id, fixed, log, yielding[id]);
            } catch (const TrajectoryInfeasible& e) {
                // A blocking plan made without this agent in view is dropped
                // and its owner plans again after this agent.
                const auto b = e.blocker();
                if (!b || s.arrived.contains(*b) || yielding[id].contains(*b) ||
                    evictions[*b] >= kMaxEvictions) {
                    // Nothing left to give way: keep clear for a short while
                    // without aiming at the goal, or failing that stop, then
                    // plan again once the plan runs out.
                    ++log.emergency_stops;
                    if (auto keep = keep_current(s, nbrs.at(id), id, topt)) {
                        spdlog::debug("t={} agent {} keeps its plan: {}", s.t, id, e.what());
                        traj = std::move(keep);
                        break;
                    }
                    try {
                        traj = plan_one(s, sc, opt, id, fixed, log, yielding[id], true);
                        spdlog::debug("t={} agent {} evades: {}", s.t, id, e.what());
                    } catch (const TrajectoryError&) {
                        spdlog::debug("t={} agent {} brakes: {}", s.t, id, e.what());
                        traj = braking_trajectory(id, find_agent(s.agents, id), s.t, topt);
                        if (const auto& g = s.assignment.agents.at(id).goal) {
                            traj->attach_goal(find_goal(sc.goals, *g));
                        }
                    }
                    break;
                }
                spdlog::debug("t={} agent {} blocked by {}; {} replans", s.t, id, *b, *b);
                ++evictions[*b];
                yielding[id].insert(*b);
                fixed.erase(*b);
                to_plan.insert(*b);
                done.erase(*b);
                if (std::find(queue.begin(), queue.end(), *b) == queue.end()) queue.push_back(*b);
            }
        }
        check_premise(*traj, sc, opt, log);
        fixed.insert_or_assign(id, *traj);
        s.plans.insert_or_assign(id, std::move(*traj));
        done.insert(id);

        // A neighbor that was not replanned must still clear the new plans;
        // otherwise it replans too.
        if (queue.empty()) {
            for (AgentId a : done) {
                for (AgentId k : nbrs.at(a)) {
                    if (to_plan.contains(k) || s.arrived.contains(k)) continue;
                    if (plans_conflict(s.plans.at(a), s.plans.at(k), s.t, sc.dt, topt)) {
                        to_plan.insert(k);
                        fixed.erase(k);
                        queue.push_back(k);
                    }
                }
            }
        }
    }
}

void integrate(SimState& s, const Scenario& sc, AgentId id, double t0, double t1) {
    AgentState& a = agent_ref(s.agents, id);
    Trajectory& plan = s.plans.at(id);
    double t = t0;
    if (plan.kind() != Trajectory::Kind::Tracking && t < plan.tf() - kTimeTol) {
        const double end = std::min(t1, plan.tf());
        const auto p0 = plan.sample(t);
        const auto p1 = plan.sample(end);
        const double span = end - t;
        a.position += a.velocity * span +
                      (p1.state.position - p0.state.position - p0.state.velocity * span);
        a.velocity += p1.state.velocity - p0.state.velocity;
        s.energy[id] += plan.energy_between(t, end);
        t = end;
    }
    if (t < t1 - kTimeTol) {
        if (plan.kind() != Trajectory::Kind::Tracking) {
            const auto& g = plan.goal() ? *plan.goal()
                                        : find_goal(sc.goals, *s.assignment.agents.at(id).goal);
            plan = Trajectory::tracking(id, t, a.position, g);
        }
        const auto p0 = plan.sample(t);
        const auto p1 = plan.sample(t1);
        a.position = p1.state.position;
        a.velocity += p1.state.velocity - p0.state.velocity;
        s.energy[id] += plan.energy_between(t, t1);
    }
}

Vec2 current_control(const SimState& s, AgentId id) {
    const Trajectory& plan = s.plans.at(id);
    if (s.t > plan.tf() + kTimeTol) return plan.goal() ? goal_acceleration(*plan.goal(), s.t) : Vec2::Zero();
    return plan.sample(std::min(s.t, plan.tf())).control;
}

void append_rows(const SimState& s, const Scenario& sc, std::vector<TraceRow>& rows) {
    const auto nbrs = all_neighborhoods(s.agents, sc.h);
    for (const auto& a : s.agents) {
        TraceRow r;
        r.t = s.t;
        r.agent = a.id;
        r.position = a.position;
        r.velocity = a.velocity;
        r.control = current_control(s, a.id);
        const auto& as = s.assignment.agents.at(a.id);
        r.goal = as.goal.value_or(-1);
        r.n_neighbors = nbrs.at(a.id).size();
        r.n_banned = as.banned.size();
        rows.push_back(r);
    }
}

}  // namespace

SafetyViolation::SafetyViolation(AgentId a, AgentId b, double t, double distance)
    : std::runtime_error(fmt::format("agents {} and {} at distance {} m at t={} s", a, b,
                                     distance, t)),
      a_(a),
      b_(b),
      t_(t),
      d_(distance) {}

TrajectoryOptions trajectory_options(const Scenario& s, const SimOptions& o) {
    TrajectoryOptions t;
    t.R = s.R;
    t.buffer = o.buffer_factor * s.R;
    t.v_max = s.v_max;
    t.u_max = s.u_max;
    t.substep = o.substep_factor * s.dt;
    t.min_points = o.min_grid_points;
    t.max_passes = o.max_passes;
    return t;
}

Separation min_separation(const std::vector<AgentState>& agents) {
    Separation out;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        for (std::size_t j = i + 1; j < agents.size(); ++j) {
            const double d = (agents[i].position - agents[j].position).norm();
            if (d < out.distance) out = {d, agents[i].id, agents[j].id};
        }
    }
    return out;
}

SimState initial_state(const Scenario& scenario, const SimOptions& options, RunLog& log) {
    SimState s;
    s.agents = scenario.agents;
    std::sort(s.agents.begin(), s.agents.end(),
              [](const AgentState& a, const AgentState& b) { return a.id < b.id; });
    s.assignment = AssignmentState::initial(s.agents, scenario.T);
    for (const auto& a : s.agents) s.energy[a.id] = 0.0;

    const auto nbrs = all_neighborhoods(s.agents, scenario.h);
    for (const auto& [id, m] : nbrs) {
        s.prev_neighborhood_sizes[id] = m.size();
        s.prev_members[id] = m;
    }
    std::set<AgentId> everyone;
    for (const auto& a : s.agents) everyone.insert(a.id);
    replan(s, scenario, options, everyone, log);
    log.min_separation = min_separation(s.agents).distance;
    return s;
}

SimState step(const SimState& state, const Scenario& scenario, const SimOptions& options,
              RunLog& log) {
    SimState s = state;
    const double t0 = s.t;
    const double t1 = static_cast<double>(s.step_index + 1) * scenario.dt;

    for (const auto& a : state.agents) integrate(s, scenario, a.id, t0, t1);
    s.step_index += 1;
    s.t = t1;

    const Separation sep = min_separation(s.agents);
    log.min_separation = std::min(log.min_separation, sep.distance);
    if (!(sep.distance > 2.0 * scenario.R)) {
        throw SafetyViolation(sep.a, sep.b, s.t, sep.distance);
    }

    for (const auto& a : s.agents) {
        if (s.arrived.contains(a.id)) continue;
        const auto& g = s.assignment.agents.at(a.id).goal;
        if (!g) continue;
        const GoalSpec& spec = find_goal(scenario.goals, *g);
        if ((a.position - goal_position(spec, s.t)).norm() < options.arrival_tol &&
            (a.velocity - goal_velocity(spec, s.t)).norm() < options.arrival_vel_tol) {
            s.arrived.insert(a.id);
            s.assignment.locked[a.id] = *g;
            log.arrival_time[a.id] = s.t;
            spdlog::debug("t={} agent {} arrived at goal {}", s.t, a.id, *g);
        }
    }

    const auto nbrs = all_neighborhoods(s.agents, scenario.h);
    std::set<AgentId> triggered;
    for (const auto& [id, members] : nbrs) {
        const bool size_changed = members.size() != s.prev_neighborhood_sizes[id];
        const bool members_changed = members != s.prev_members[id];
        s.prev_neighborhood_sizes[id] = members.size();
        s.prev_members[id] = members;
        if (s.arrived.contains(id)) continue;
        if (size_changed || (options.membership_trigger && members_changed)) triggered.insert(id);
        // A plan that ran out without arrival is stale.
        const auto& plan = s.plans.at(id);
        if (plan.kind() == Trajectory::Kind::Tracking || s.t >= plan.tf() - kTimeTol) {
            s.assignment.agents.at(id).deadline = s.t + scenario.T;
            ++log.deadline_extensions;
            triggered.insert(id);
        }
    }
    // Plans made before two agents saw each other may still cross.
    const TrajectoryOptions topt = trajectory_options(scenario, options);
    for (const auto& [id, members] : nbrs) {
        if (s.arrived.contains(id)) continue;
        for (AgentId k : members) {
            const bool k_arrived = s.arrived.contains(k);
            if (k == id || (k < id && !k_arrived)) continue;
            if (plans_conflict(s.plans.at(id), s.plans.at(k), s.t, scenario.dt, topt)) {
                spdlog::debug("t={} plans of agents {} and {} conflict", s.t, id, k);
                triggered.insert(id);
                if (!k_arrived) triggered.insert(k);
            }
        }
    }
    if (!triggered.empty()) replan(s, scenario, options, triggered, log);
    return s;
}

RunResult run(const Scenario& scenario, const SimOptions& options) {
    RunResult out;
    SimState s = initial_state(scenario, options, out.log);
    append_rows(s, scenario, out.trace);
    const double guard = options.guard_factor * scenario.duration;
    while (s.t < scenario.duration - kTimeTol || s.arrived.size() < s.agents.size()) {
        if (s.t >= guard - kTimeTol) {
            throw NonTermination(fmt::format("{} of {} agents arrived by the guard time {} s",
                                             s.arrived.size(), s.agents.size(), guard));
        }
        s = step(s, scenario, options, out.log);
        append_rows(s, scenario, out.trace);
    }
    out.metrics.h = scenario.h;
    out.metrics.min_separation_m = out.log.min_separation;
    double energy = 0.0;
    for (const auto& [_, e] : s.energy) energy += e;
    out.metrics.total_energy_kJ_per_kg = energy / 1000.0;
    out.metrics.t_f_s = s.t;
    out.metrics.n_replans = out.log.n_replans;
    out.metrics.n_bans = out.log.n_bans;
    out.final_state = std::move(s);
    return out;
}

}  // namespace swarmform
