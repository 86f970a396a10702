#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "swarmform/assign.hpp"
#include "swarmform/percept.hpp"
#include "swarmform/world.hpp"

namespace swarmform {

struct BoundaryConditions {
    Vec2 p0 = Vec2::Zero();
    Vec2 v0 = Vec2::Zero();
    Vec2 pf = Vec2::Zero();
    Vec2 vf = Vec2::Zero();
};

struct TrajectorySample {
    AgentState state;
    Vec2 control = Vec2::Zero();
};

class TrajectoryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Double-integrator motion over [t0, tf] in one of three forms:
///  - Analytic: affine control u(t) = alpha + beta (t - t0), cubic position.
///  - Sampled: piecewise-constant control on a uniform grid (zero-order hold).
///  - Tracking: follows a goal with a constant offset from t0 onwards
///    (control equals the goal acceleration, tf is infinite).
/// Past tf, analytic and sampled trajectories are extrapolated by tracking
/// their goal when one is attached.
class Trajectory {
public:
    enum class Kind { Analytic, Sampled, Tracking };

    static Trajectory analytic(AgentId agent, double t0, double tf, const BoundaryConditions& bc,
                               const Vec2& alpha, const Vec2& beta);
    static Trajectory sampled(AgentId agent, double t0, double tf, const Vec2& p0, const Vec2& v0,
                              std::vector<Vec2> controls);
    static Trajectory tracking(AgentId agent, double t0, const Vec2& p0, const GoalSpec& goal);

    Kind kind() const { return kind_; }
    AgentId agent() const { return agent_; }
    double t0() const { return t0_; }
    double tf() const { return tf_; }
    const BoundaryConditions& boundary() const { return bc_; }

    const std::optional<GoalSpec>& goal() const { return goal_; }
    void attach_goal(const GoalSpec& g) { goal_ = g; }

    /// Exact state and control at t; throws TrajectoryError outside [t0, tf].
    TrajectorySample sample(double t) const;

    /// Position at any t >= t0, tracking the attached goal past tf.
    Vec2 predict_position(double t) const;

    /// 0.5 * integral of |u|^2 over [a, b] ⊆ [t0, tf], exact for each kind.
    double energy_between(double a, double b) const;

    // Analytic branch
    const Vec2& alpha() const { return alpha_; }
    const Vec2& beta() const { return beta_; }

    // Sampled branch
    double step() const { return step_; }
    const std::vector<Vec2>& controls() const { return controls_; }
    const std::vector<Vec2>& grid_positions() const { return grid_p_; }
    const std::vector<Vec2>& grid_velocities() const { return grid_v_; }

private:
    Kind kind_ = Kind::Analytic;
    AgentId agent_ = 0;
    double t0_ = 0.0;
    double tf_ = 0.0;
    BoundaryConditions bc_;
    std::optional<GoalSpec> goal_;

    Vec2 alpha_ = Vec2::Zero();
    Vec2 beta_ = Vec2::Zero();

    double step_ = 0.0;
    std::vector<Vec2> controls_;
    std::vector<Vec2> grid_p_;
    std::vector<Vec2> grid_v_;

    Vec2 track_offset_ = Vec2::Zero();
};

/// Closed-form minimum-energy double-integrator transfer.
Trajectory min_energy_unconstrained(const Vec2& p0, const Vec2& v0, const Vec2& pf, const Vec2& vf,
                                    double t0, double tf, AgentId agent = 0);

/// 0.5 * integral of |u|^2 over the whole trajectory.
double trajectory_energy(const Trajectory& traj);

/// State and control at t.
TrajectorySample sample(const Trajectory& traj, double t);

struct TrajectoryBundle {
    AgentId owner = 0;
    std::map<AgentId, Trajectory> trajectories;

    const Trajectory& prescribed() const { return trajectories.at(owner); }
};

struct TrajectoryOptions {
    double R = 0.05;
    double buffer = -1.0;  // safety margin on 2R; negative selects 0.1 R
    double v_max = 1.0;
    double u_max = 1.0;
    double substep = 0.05;
    int min_points = 40;
    int max_passes = 5;
    int polygon_sides = 16;
    /// Grid points closer than 2R + buffer + this to an obstacle get a
    /// linearized separation row; negative selects max(2R, 4 v_max substep).
    double activation_margin = -1.0;
    /// Stop once the owner's trajectory is fixed (skip predicting the rest).
    bool owner_only = false;
    /// A member without a plan yet is assumed to brake to rest and hold for
    /// this long (s) before it plans; planned agents keep clear of that path.
    double yield_window = 1.0;
    /// Plan the owner to keep clear and match its goal's velocity over
    /// `evasive_horizon` seconds, leaving the end position free.
    bool evasive = false;
    double evasive_horizon = 2.0;

    double separation() const { return 2.0 * R + (buffer < 0.0 ? 0.1 * R : buffer); }
};

/// A moving disk the planned agent must keep clear of during [from, until].
struct Obstacle {
    AgentId id = 0;
    std::function<Vec2(double)> position;
    double from = -kInfinity;
    double until = kInfinity;
};

/// Path of an agent braking along its velocity at the largest deceleration
/// the planner allows, then holding still.
Vec2 braking_position(const AgentState& s, double t0, double t, const TrajectoryOptions& options);
/// Time needed to come to rest under braking_position.
double braking_time(const AgentState& s, const TrajectoryOptions& options);
/// braking_position as a sampled plan, held for the yield window after rest.
Trajectory braking_trajectory(AgentId agent, const AgentState& s, double t0,
                              const TrajectoryOptions& options);

class TrajectoryInfeasible : public TrajectoryError {
public:
    TrajectoryInfeasible(AgentId agent, std::optional<AgentId> blocker, const std::string& why);
    AgentId agent() const { return agent_; }
    std::optional<AgentId> blocker() const { return blocker_; }

private:
    AgentId agent_;
    std::optional<AgentId> blocker_;
};

class DegenerateHorizon : public TrajectoryError {
public:
    using TrajectoryError::TrajectoryError;
};

/// Minimum-energy trajectory for one agent under speed, control and
/// separation constraints. Returns the closed-form solution when it already
/// satisfies every constraint at the grid points; otherwise solves a
/// sequence of convex QPs with separation rows linearized about the
/// previous pass.
Trajectory solve_single(AgentId agent, const AgentState& start, double t0, double tf,
                        const Vec2& pf, const Vec2& vf, const std::vector<Obstacle>& obstacles,
                        const TrajectoryOptions& options);

/// Minimum-energy trajectory over [t0, tf] ending at velocity vf anywhere,
/// under the same constraints as solve_single.
Trajectory solve_evasive(AgentId agent, const AgentState& start, double t0, double tf,
                         const Vec2& vf, const std::vector<Obstacle>& obstacles,
                         const TrajectoryOptions& options);

/// Plans every view member in `priorities` order. Each agent keeps clear of
/// `pinned` trajectories, of members already planned, and of the goal tracks
/// that lower-priority members will follow after their deadlines.
TrajectoryBundle solve_constrained(const LocalView& view, const AssignmentState& assignment,
                                   const std::vector<AgentId>& priorities,
                                   const TrajectoryOptions& options,
                                   const std::map<AgentId, Trajectory>& pinned = {});

/// Grid times t0 + k delta, k = 0..K, used by the constrained solve.
std::vector<double> planning_grid(double t0, double tf, const TrajectoryOptions& options);

/// Largest increase of the distance to `target` between consecutive grid
/// points; values above a tolerance mean the trajectory moved away.
double max_distance_increase(const Trajectory& traj, const Vec2& target,
                             const std::vector<double>& times);

}  // namespace swarmform
