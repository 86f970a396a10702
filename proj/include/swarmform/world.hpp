#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace swarmform {

using Vec2 = Eigen::Vector2d;

using AgentId = int;
using GoalId = int;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Position and velocity of one agent at an instant (unit mass, SI units).
struct AgentState {
    AgentId id = 0;
    Vec2 position = Vec2::Zero();
    Vec2 velocity = Vec2::Zero();
};

/// A formation point that drifts with constant velocity and oscillates
/// sinusoidally per axis with a shared angular frequency and phase.
struct GoalSpec {
    GoalId id = 0;
    Vec2 base = Vec2::Zero();
    Vec2 drift = Vec2::Zero();
    Vec2 amplitude = Vec2::Zero();
    double omega = 0.0;
    double phase = 0.0;
};

Vec2 goal_position(const GoalSpec& g, double t);
Vec2 goal_velocity(const GoalSpec& g, double t);
Vec2 goal_acceleration(const GoalSpec& g, double t);

/// Exact value of 0.5 * integral of |goal_acceleration|^2 over [t0, t1].
double goal_tracking_energy(const GoalSpec& g, double t0, double t1);

struct Scenario {
    std::vector<AgentState> agents;
    std::vector<GoalSpec> goals;
    double h = kInfinity;  // sensing / communication radius, m
    double R = 0.05;       // agent disk radius, m
    double T = 10.0;       // deadline parameter, s
    double v_min = 0.0;
    double v_max = 1.0;
    double u_min = 0.0;
    double u_max = 1.0;
    double duration = 20.0;
    double dt = 0.1;
};

enum class ViolationKind {
    AgentOverlap,
    GoalOverlap,
    TooManyAgents,
    SensingRadiusTooSmall,
    NonPositiveStep,
    NonPositiveDuration,
    NonPositiveParameter,
    DuplicateId,
    NoAgents,
};

struct Violation {
    ViolationKind kind;
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

std::string to_string(ViolationKind kind);

/// Minimum sensing radius accepted, as a multiple of the agent radius.
inline constexpr double kMinSensingFactor = 4.0;
/// Below this multiple a warning is logged but the scenario is accepted.
inline constexpr double kWarnSensingFactor = 10.0;

/// Returns every violated scenario invariant; an empty list means valid.
/// Goal spacing is checked at every multiple of dt in [0, duration].
std::vector<Violation> validate_scenario(const Scenario& s);

const GoalSpec& find_goal(const std::vector<GoalSpec>& goals, GoalId id);

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace swarmform
