#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "swarmform/sim.hpp"
#include "swarmform/world.hpp"

namespace swarmform {

inline constexpr const char* kTraceHeader =
    "t,agent_id,px,py,vx,vy,ux,uy,goal_id,n_neighbors,n_banned";
inline constexpr const char* kSweepHeader =
    "h_m,min_separation_cm,total_energy_kJ_per_kg,t_f_s,status";

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out);
nlohmann::json metrics_to_json(const Metrics& m);
void write_assignment_trace(const std::vector<AssignmentTraceRecord>& records, std::ostream& out);

/// Static plot of agent paths, goal paths and start/end markers.
std::string render_svg(const Scenario& scenario, const std::vector<TraceRow>& trace);

std::string format_h(double h);

/// Property checks over a finished run.
struct RunAudit {
    bool safe = false;              // every trace step keeps pairs > 2R apart
    bool all_arrived = false;
    bool no_banned_revisit = false;
    bool rounds_bounded = false;    // every round within N*M iterations
    bool bans_monotone = false;
    /// Arrival <= (distinct goals + 1) T. Only holds when no deadline was
    /// extended for a failed or expired plan, so it is reported, not required.
    bool arrival_bounded = false;
    double min_separation = kInfinity;
    int max_round_iterations = 0;
    std::vector<std::string> failures;
    std::vector<std::string> notes;

    bool ok() const {
        return safe && all_arrived && no_banned_revisit && rounds_bounded && bans_monotone;
    }
};
RunAudit audit_run(const Scenario& scenario, const RunResult& result);

struct SweepRow {
    double h = kInfinity;
    bool ok = false;
    double min_separation_cm = 0.0;
    double total_energy_kJ_per_kg = 0.0;
    double t_f_s = 0.0;
    std::string error;
    std::optional<RunAudit> audit;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

/// Runs `base` once per sensing radius; a failing run marks its row and the
/// sweep continues.
SweepResult run_sweep(const Scenario& base, const std::vector<double>& hs,
                      const SimOptions& options = {});
void write_sweep_csv(const SweepResult& sweep, std::ostream& out);

/// Random instance compared against brute-force enumeration of all
/// injective agent-to-goal maps.
struct OracleReport {
    int n = 0;
    int m = 0;
    std::uint64_t seed = 0;
    bool equal = false;
    double decentralized_cost = 0.0;
    double brute_force_cost = 0.0;
    std::vector<int> decentralized_matching;  // goal index per agent
    std::vector<int> brute_force_matching;
};
OracleReport oracle_check(int n, int m, std::uint64_t seed);

/// Brute-force optimum over all injective maps from rows to columns.
std::pair<double, std::vector<int>> brute_force_assignment(
    const std::vector<std::vector<double>>& cost);

struct GeneratorParams {
    int n = 10;
    int m = 10;
    double h = kInfinity;
    double R = 0.05;
    double T = 10.0;
    double v_max = 1.5;
    double u_max = 2.0;
    double duration = 20.0;
    double dt = 0.1;
    double agent_spacing = 1.0;
    double goal_spacing = 0.7;
};

/// Agents on a jittered grid (pairwise spacing at least 3R), goals on a line
/// whose centroid drifts at constant velocity; the three leftmost and three
/// rightmost goals also oscillate. The seed fixes the instance.
Scenario random_scenario(std::uint64_t seed, const GeneratorParams& params = {});

}  // namespace swarmform
