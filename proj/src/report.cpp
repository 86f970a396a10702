#include "swarmform/report.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "swarmform/assign.hpp"

namespace swarmform {
namespace {

// Shortest representation that parses back to the same double.
std::string num(double x) { return fmt::format("{}", x); }

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string format_h(double h) { return std::isinf(h) ? "inf" : num(h); }

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out) {
    out << kTraceHeader << '\n';
    for (const auto& r : rows) {
        out << num(r.t) << ',' << r.agent << ',' << num(r.position.x()) << ','
            << num(r.position.y()) << ',' << num(r.velocity.x()) << ',' << num(r.velocity.y())
            << ',' << num(r.control.x()) << ',' << num(r.control.y()) << ',' << r.goal << ','
            << r.n_neighbors << ',' << r.n_banned << '\n';
    }
}

nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    if (std::isinf(m.h)) {
        j["h"] = "inf";
    } else {
        j["h"] = m.h;
    }
    j["min_separation_m"] = m.min_separation_m;
    j["total_energy_kJ_per_kg"] = m.total_energy_kJ_per_kg;
    j["t_f_s"] = m.t_f_s;
    j["n_replans"] = m.n_replans;
    j["n_bans"] = m.n_bans;
    return j;
}

void write_assignment_trace(const std::vector<AssignmentTraceRecord>& records,
                            std::ostream& out) {
    for (const auto& r : records) {
        nlohmann::json j;
        j["t"] = r.t;
        j["iteration"] = r.record.iteration;
        j["agent"] = r.record.agent;
        j["prescribed_goal"] = r.record.prescribed_goal;
        j["banned"] = r.record.banned;
        j["deadline"] = r.record.deadline;
        out << j.dump() << '\n';
    }
}

std::string render_svg(const Scenario& scenario, const std::vector<TraceRow>& trace) {
    std::map<AgentId, std::vector<Vec2>> paths;
    double t_end = 0.0;
    for (const auto& r : trace) {
        paths[r.agent].push_back(r.position);
        t_end = std::max(t_end, r.t);
    }
    std::map<GoalId, std::vector<Vec2>> goal_paths;
    const int samples = 200;
    for (const auto& g : scenario.goals) {
        for (int k = 0; k <= samples; ++k) {
            goal_paths[g.id].push_back(goal_position(g, t_end * k / samples));
        }
    }

    Vec2 lo = Vec2::Constant(kInfinity);
    Vec2 hi = -lo;
    auto grow = [&](const Vec2& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    };
    for (const auto& [_, pts] : paths) std::for_each(pts.begin(), pts.end(), grow);
    for (const auto& [_, pts] : goal_paths) std::for_each(pts.begin(), pts.end(), grow);
    if (!std::isfinite(lo.x())) {
        lo = Vec2::Zero();
        hi = Vec2::Ones();
    }
    const double margin = 0.5;
    lo -= Vec2::Constant(margin);
    hi += Vec2::Constant(margin);
    const double width = 800.0;
    const double scale = width / std::max(hi.x() - lo.x(), 1e-6);
    const double height = std::max(1.0, (hi.y() - lo.y()) * scale);
    // SVG y grows downward.
    auto px = [&](const Vec2& p) {
        return fmt::format("{:.2f},{:.2f}", (p.x() - lo.x()) * scale, (hi.y() - p.y()) * scale);
    };

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
        "viewBox=\"0 0 {:.0f} {:.0f}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        "<title>Agent trajectories (h = {} m)</title>\n",
        width, height, width, height, format_h(scenario.h));

    for (const auto& [id, pts] : goal_paths) {
        std::string points;
        for (const auto& p : pts) points += px(p) + ' ';
        svg += fmt::format(
            "<polyline class=\"goal\" data-goal=\"{}\" points=\"{}\" fill=\"none\" "
            "stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
            id, points);
    }
    std::size_t color = 0;
    for (const auto& [id, pts] : paths) {
        const char* c = kPalette[color++ % std::size(kPalette)];
        std::string points;
        for (const auto& p : pts) points += px(p) + ' ';
        svg += fmt::format(
            "<polyline class=\"agent\" data-agent=\"{}\" points=\"{}\" fill=\"none\" "
            "stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            id, points, c);
        const auto start = px(pts.front());
        const auto comma = start.find(',');
        svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n",
                           start.substr(0, comma), start.substr(comma + 1), c);
        const Vec2 e = pts.back();
        svg += fmt::format(
            "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"8\" height=\"8\" fill=\"none\" "
            "stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            (e.x() - lo.x()) * scale - 4, (hi.y() - e.y()) * scale - 4, c);
    }
    svg += "</svg>\n";
    return svg;
}

RunAudit audit_run(const Scenario& scenario, const RunResult& result) {
    RunAudit a;
    const RunLog& log = result.log;

    // Safety, per trace step.
    a.safe = true;
    std::map<double, std::vector<Vec2>> by_time;
    for (const auto& r : result.trace) by_time[r.t].push_back(r.position);
    for (const auto& [t, pts] : by_time) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t j = i + 1; j < pts.size(); ++j) {
                const double d = (pts[i] - pts[j]).norm();
                a.min_separation = std::min(a.min_separation, d);
                if (!(d > 2.0 * scenario.R)) {
                    a.safe = false;
                    a.failures.push_back(fmt::format("separation {} m at t={}", d, t));
                }
            }
        }
    }

    a.all_arrived = result.final_state.arrived.size() == scenario.agents.size();
    if (!a.all_arrived) {
        a.failures.push_back(fmt::format("{} of {} agents arrived",
                                         result.final_state.arrived.size(),
                                         scenario.agents.size()));
    }

    // A goal may not be (re)assigned at or after the time it was banned.
    a.no_banned_revisit = true;
    for (const auto& [id, seq] : log.goal_sequence) {
        auto bans = log.ban_events.find(id);
        if (bans == log.ban_events.end()) continue;
        for (const auto& [t_assign, g] : seq) {
            for (const auto& [t_ban, b] : bans->second) {
                if (b == g && t_ban <= t_assign) {
                    a.no_banned_revisit = false;
                    a.failures.push_back(
                        fmt::format("agent {} assigned banned goal {} at t={}", id, g, t_assign));
                }
            }
        }
    }
    for (const auto& [id, as] : result.final_state.assignment.agents) {
        if (as.goal && as.banned.contains(*as.goal)) {
            a.no_banned_revisit = false;
            a.failures.push_back(fmt::format("agent {} ends on banned goal {}", id, *as.goal));
        }
    }

    const int bound = static_cast<int>(scenario.agents.size() * scenario.goals.size());
    a.max_round_iterations = log.round_iterations.empty()
                                 ? 0
                                 : *std::max_element(log.round_iterations.begin(),
                                                     log.round_iterations.end());
    a.rounds_bounded = a.max_round_iterations <= bound;
    if (!a.rounds_bounded) {
        a.failures.push_back(
            fmt::format("assignment round took {} iterations (> {})", a.max_round_iterations, bound));
    }

    a.arrival_bounded = true;
    for (const auto& [id, t] : log.arrival_time) {
        std::set<GoalId> distinct;
        if (auto it = log.goal_sequence.find(id); it != log.goal_sequence.end()) {
            for (const auto& [_, g] : it->second) distinct.insert(g);
        }
        const double limit = static_cast<double>(distinct.size() + 1) * scenario.T;
        if (t > limit + 1e-9) {
            a.arrival_bounded = false;
            a.notes.push_back(fmt::format("agent {} arrived at {} s (bound {} s)", id, t, limit));
        }
    }

    a.bans_monotone = true;
    for (std::size_t k = 1; k < log.ban_snapshots.size(); ++k) {
        for (const auto& [id, now] : log.ban_snapshots[k]) {
            auto prev = log.ban_snapshots[k - 1].find(id);
            if (prev != log.ban_snapshots[k - 1].end() && !now.includes(prev->second)) {
                a.bans_monotone = false;
                a.failures.push_back(fmt::format("agent {} ban set shrank", id));
            }
        }
    }
    return a;
}

SweepResult run_sweep(const Scenario& base, const std::vector<double>& hs,
                      const SimOptions& options) {
    std::vector<std::future<SweepRow>> jobs;
    for (double h : hs) {
        jobs.push_back(std::async(std::launch::async, [&base, &options, h] {
            SweepRow row;
            row.h = h;
            Scenario sc = base;
            sc.h = h;
            try {
                const auto violations = validate_scenario(sc);
                if (!violations.empty()) throw ScenarioError(violations.front().message);
                const RunResult r = run(sc, options);
                row.audit = audit_run(sc, r);
                row.min_separation_cm = r.metrics.min_separation_m * 100.0;
                row.total_energy_kJ_per_kg = r.metrics.total_energy_kJ_per_kg;
                row.t_f_s = r.metrics.t_f_s;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
                spdlog::warn("sweep h={}: {}", format_h(h), e.what());
            }
            return row;
        }));
    }
    SweepResult out;
    for (auto& j : jobs) out.rows.push_back(j.get());
    return out;
}

void write_sweep_csv(const SweepResult& sweep, std::ostream& out) {
    out << kSweepHeader << '\n';
    for (const auto& r : sweep.rows) {
        if (r.ok) {
            out << format_h(r.h) << ',' << fmt::format("{:.4f}", r.min_separation_cm) << ','
                << fmt::format("{:.6f}", r.total_energy_kJ_per_kg) << ','
                << fmt::format("{:.2f}", r.t_f_s) << ",ok\n";
        } else {
            out << format_h(r.h) << ",,,,failed\n";
        }
    }
}

std::pair<double, std::vector<int>> brute_force_assignment(
    const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    const std::size_t m = n == 0 ? 0 : cost.front().size();
    std::vector<int> cols(m);
    std::iota(cols.begin(), cols.end(), 0);
    double best = kInfinity;
    std::vector<int> best_match;
    // Every permutation prefix of length n is an injective map; permutations
    // that differ only past n repeat a prefix and are skipped by the order.
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i][cols[i]];
        if (c < best) {
            best = c;
            best_match.assign(cols.begin(), cols.begin() + static_cast<long>(n));
        }
        std::reverse(cols.begin() + static_cast<long>(n), cols.end());
    } while (std::next_permutation(cols.begin(), cols.end()));
    return {best, best_match};
}

OracleReport oracle_check(int n, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(0.0, 10.0);
    Scenario sc;
    sc.h = kInfinity;
    for (int i = 0; i < n; ++i) {
        sc.agents.push_back({i + 1, Vec2(coord(rng), coord(rng)), Vec2::Zero()});
    }
    for (int j = 0; j < m; ++j) {
        GoalSpec g;
        g.id = j + 1;
        g.base = Vec2(coord(rng), coord(rng));
        sc.goals.push_back(g);
    }

    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            cost[i][j] = (sc.agents[i].position - sc.goals[j].base).norm();
        }
    }

    OracleReport rep;
    rep.n = n;
    rep.m = m;
    rep.seed = seed;
    const auto round = assignment_round(sc.agents, sc.goals, sc.h, 0.0, sc.T,
                                        AssignmentState::initial(sc.agents, sc.T));
    const auto prescribed = round.state.prescribed();
    rep.decentralized_cost = 0.0;
    for (int i = 0; i < n; ++i) {
        const int col = prescribed.at(i + 1) - 1;
        rep.decentralized_matching.push_back(col);
        rep.decentralized_cost += cost[i][col];
    }
    std::tie(rep.brute_force_cost, rep.brute_force_matching) = brute_force_assignment(cost);
    rep.equal = std::abs(rep.decentralized_cost - rep.brute_force_cost) <=
                1e-12 * std::max(1.0, rep.brute_force_cost);
    return rep;
}

Scenario random_scenario(std::uint64_t seed, const GeneratorParams& p) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

    Scenario sc;
    sc.h = p.h;
    sc.R = p.R;
    sc.T = p.T;
    sc.v_max = p.v_max;
    sc.u_max = p.u_max;
    sc.duration = p.duration;
    sc.dt = p.dt;

    // Two rows of agents; jitter stays small enough to keep 3R spacing.
    const int per_row = (p.n + 1) / 2;
    const double jitter = std::max(0.0, std::min(0.25 * p.agent_spacing,
                                                 0.5 * (p.agent_spacing - 3.0 * p.R)));
    for (int i = 0; i < p.n; ++i) {
        const int row = i / per_row;
        const int col = i % per_row;
        const Vec2 nominal((col - 0.5 * (per_row - 1)) * p.agent_spacing, row * p.agent_spacing);
        const Vec2 offset(uniform(-jitter, jitter), uniform(-jitter, jitter));
        sc.agents.push_back({i + 1, nominal + offset, Vec2::Zero()});
    }

    // Goals on a line ahead of the agents, drifting together.
    const double cx = uniform(-1.0, 1.0);
    const double cy = per_row > 0 ? uniform(4.0, 5.0) + p.agent_spacing : 5.0;
    const Vec2 drift(uniform(0.05, 0.2), uniform(-0.05, 0.05));
    const double omega = 2.0 * M_PI / uniform(6.0, 10.0);
    const double amp = uniform(0.15, 0.3);
    for (int j = 0; j < p.m; ++j) {
        GoalSpec g;
        g.id = j + 1;
        g.base = Vec2(cx + (j - 0.5 * (p.m - 1)) * p.goal_spacing, cy);
        g.drift = drift;
        if (j < 3 || j >= p.m - 3) {
            g.amplitude = Vec2(0.0, amp);
            g.omega = omega;
            g.phase = j < 3 ? 0.0 : M_PI;
        }
        sc.goals.push_back(g);
    }
    return sc;
}

}  // namespace swarmform
