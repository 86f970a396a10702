#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "swarmform/assign.hpp"
#include "swarmform/traj.hpp"
#include "swarmform/world.hpp"

namespace swarmform {

struct SimOptions {
    double arrival_tol = 0.01;      // m
    double arrival_vel_tol = 0.01;  // m/s
    double buffer_factor = 0.1;     // separation buffer as a multiple of R
    double substep_factor = 0.5;    // planning substep as a multiple of dt
    int min_grid_points = 40;
    int max_passes = 5;
    /// Replan when neighborhood membership changes, not only its size.
    bool membership_trigger = false;
    /// Give up when simulated time exceeds this multiple of the duration.
    double guard_factor = 10.0;
    /// Tolerance on the distance-to-goal monotonicity premise (logged only).
    double monotone_tol = 1e-6;
    /// Called with every local assignment solved during the run.
    std::function<void(const LocalView&, const AssignmentMatrix&)> on_matrix;
};

TrajectoryOptions trajectory_options(const Scenario& s, const SimOptions& o);

struct TraceRow {
    double t = 0.0;
    AgentId agent = 0;
    Vec2 position = Vec2::Zero();
    Vec2 velocity = Vec2::Zero();
    Vec2 control = Vec2::Zero();
    GoalId goal = -1;  // -1 while unassigned
    std::size_t n_neighbors = 0;
    std::size_t n_banned = 0;
};

struct AssignmentTraceRecord {
    double t = 0.0;
    IterationRecord record;
};

struct Metrics {
    double h = kInfinity;
    double min_separation_m = kInfinity;
    double total_energy_kJ_per_kg = 0.0;
    double t_f_s = 0.0;
    std::size_t n_replans = 0;
    std::size_t n_bans = 0;
};

struct SimState {
    long step_index = 0;
    double t = 0.0;
    std::vector<AgentState> agents;
    AssignmentState assignment;
    std::map<AgentId, Trajectory> plans;  // each agent's prescribed trajectory
    std::set<AgentId> arrived;
    std::map<AgentId, double> energy;  // J/kg, accumulated
    std::map<AgentId, std::size_t> prev_neighborhood_sizes;
    std::map<AgentId, std::set<AgentId>> prev_members;
};

/// Everything a run records beyond the per-step trace.
struct RunLog {
    std::vector<AssignmentTraceRecord> assignment_trace;
    std::vector<int> round_iterations;
    std::map<AgentId, std::vector<std::pair<double, GoalId>>> goal_sequence;  // (t, new goal)
    std::map<AgentId, std::vector<std::pair<double, GoalId>>> ban_events;
    std::vector<std::map<AgentId, BannedGoalSet>> ban_snapshots;  // after every round
    std::map<AgentId, double> arrival_time;
    std::size_t n_replans = 0;
    std::size_t n_bans = 0;
    std::size_t deadline_extensions = 0;
    std::size_t emergency_stops = 0;  // goal plans replaced by evading or braking
    std::size_t monotone_violations = 0;
    double min_separation = kInfinity;
};

class SafetyViolation : public std::runtime_error {
public:
    SafetyViolation(AgentId a, AgentId b, double t, double distance);
    AgentId first() const { return a_; }
    AgentId second() const { return b_; }
    double time() const { return t_; }
    double distance() const { return d_; }

private:
    AgentId a_, b_;
    double t_, d_;
};

class NonTermination : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Assignment and trajectory plan for every agent at t = 0.
SimState initial_state(const Scenario& scenario, const SimOptions& options, RunLog& log);

/// Advances one dt: integrates every agent exactly under its planned control,
/// accumulates energy, checks separation, detects arrivals and replans
/// agents whose neighborhood size changed.
SimState step(const SimState& state, const Scenario& scenario, const SimOptions& options,
              RunLog& log);

struct RunResult {
    std::vector<TraceRow> trace;
    Metrics metrics;
    RunLog log;
    SimState final_state;
};

/// Steps until both the duration has elapsed and every agent has arrived.
RunResult run(const Scenario& scenario, const SimOptions& options = {});

/// Minimum pairwise distance and the pair achieving it.
struct Separation {
    double distance = kInfinity;
    AgentId a = 0;
    AgentId b = 0;
};
Separation min_separation(const std::vector<AgentState>& agents);

}  // namespace swarmform
