#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "swarmform/assign.hpp"
#include "swarmform/report.hpp"
#include "swarmform/scenario_io.hpp"
#include "swarmform/sim.hpp"
#include "swarmform/traj.hpp"

namespace fs = std::filesystem;
using namespace swarmform;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kInvalid = 3, kUnsafe = 4, kFailed = 5 };

int fail(int code, const json& err, const fs::path& out_dir) {
    std::cout << err.dump() << '\n';
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        std::ofstream(out_dir / "error.json") << err.dump(2) << '\n';
    }
    return code;
}

json violations_json(const std::vector<Violation>& vs) {
    json arr = json::array();
    for (const auto& v : vs) arr.push_back({{"kind", to_string(v.kind)}, {"message", v.message}});
    return arr;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

std::vector<double> parse_h_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_length_or_inf(item));
    }
    return out;
}

struct RunArgs {
    std::string scenario;
    std::string out;
    std::string h;
    double dt = 0.0;
    bool plot = false;
    bool assign_trace = false;
    bool membership_trigger = false;
};

int cmd_run(const RunArgs& a) {
    const fs::path out_dir = a.out;
    Scenario sc;
    try {
        sc = load_scenario(a.scenario);
        if (!a.h.empty()) sc.h = parse_length_or_inf(a.h);
        if (a.dt > 0.0) sc.dt = a.dt;
    } catch (const std::exception& e) {
        return fail(kUsage, {{"error", "bad_scenario"}, {"message", e.what()}}, out_dir);
    }
    if (auto vs = validate_scenario(sc); !vs.empty()) {
        return fail(kInvalid,
                    {{"error", "invalid_scenario"}, {"violations", violations_json(vs)}}, out_dir);
    }

    SimOptions opt;
    opt.membership_trigger = a.membership_trigger;
    RunResult r;
    try {
        r = run(sc, opt);
    } catch (const SafetyViolation& e) {
        return fail(kUnsafe,
                    {{"error", "safety_violation"},
                     {"message", e.what()},
                     {"agents", {e.first(), e.second()}},
                     {"t", e.time()},
                     {"distance", e.distance()}},
                    out_dir);
    } catch (const InfeasibleAssignment& e) {
        return fail(kFailed,
                    {{"error", "infeasible_assignment"},
                     {"message", e.what()},
                     {"agent", e.owner()},
                     {"available_goals", e.available_goals()},
                     {"members", e.members()}},
                    out_dir);
    } catch (const TrajectoryInfeasible& e) {
        json err = {{"error", "infeasible_trajectory"}, {"message", e.what()}, {"agent", e.agent()}};
        if (e.blocker()) err["blocker"] = *e.blocker();
        return fail(kFailed, err, out_dir);
    } catch (const std::exception& e) {
        return fail(kFailed, {{"error", "simulation_failed"}, {"message", e.what()}}, out_dir);
    }

    fs::create_directories(out_dir);
    std::ostringstream trace;
    write_trace_csv(r.trace, trace);
    write_file(out_dir / "trace.csv", trace.str());
    write_file(out_dir / "metrics.json", metrics_to_json(r.metrics).dump(2) + "\n");
    if (a.plot) write_file(out_dir / "plot.svg", render_svg(sc, r.trace));
    if (a.assign_trace) {
        std::ostringstream at;
        write_assignment_trace(r.log.assignment_trace, at);
        write_file(out_dir / "assignment_trace.jsonl", at.str());
    }
    std::cout << metrics_to_json(r.metrics).dump() << '\n';
    return kOk;
}

int cmd_sweep(const std::string& path, const std::string& hs, const std::string& out) {
    const fs::path out_dir = out;
    Scenario sc;
    std::vector<double> h_list;
    try {
        sc = load_scenario(path);
        h_list = parse_h_list(hs);
    } catch (const std::exception& e) {
        return fail(kUsage, {{"error", "bad_arguments"}, {"message", e.what()}}, out_dir);
    }
    if (h_list.empty()) {
        return fail(kUsage, {{"error", "bad_arguments"}, {"message", "empty h list"}}, out_dir);
    }
    const SweepResult sweep = run_sweep(sc, h_list);
    fs::create_directories(out_dir);
    std::ostringstream csv;
    write_sweep_csv(sweep, csv);
    write_file(out_dir / "sweep.csv", csv.str());
    std::cout << csv.str();
    bool all_ok = true;
    for (const auto& row : sweep.rows) {
        if (!row.ok) {
            all_ok = false;
            std::cerr << "h=" << format_h(row.h) << ": " << row.error << '\n';
        }
    }
    return all_ok ? kOk : kFailed;
}

int cmd_oracle(int n, int m, int seeds) {
    if (n < 1 || n > m || m > 8) {
        return fail(kUsage, {{"error", "bad_arguments"}, {"message", "need 1 <= n <= m <= 8"}},
                    {});
    }
    int unequal = 0;
    for (int s = 0; s < seeds; ++s) {
        const OracleReport r = oracle_check(n, m, static_cast<std::uint64_t>(s));
        if (!r.equal) ++unequal;
        json j = {{"seed", s},
                  {"n", n},
                  {"m", m},
                  {"equal", r.equal},
                  {"decentralized_cost", r.decentralized_cost},
                  {"brute_force_cost", r.brute_force_cost},
                  {"decentralized_matching", r.decentralized_matching},
                  {"brute_force_matching", r.brute_force_matching}};
        std::cout << j.dump() << '\n';
    }
    std::cout << json{{"seeds", seeds}, {"unequal", unequal}}.dump() << '\n';
    return unequal == 0 ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("swarmform");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* lvl = std::getenv("SWARM_LOG")) spdlog::cfg::helpers::load_levels(lvl);

    CLI::App app{"Decentralized goal assignment and trajectory planning for agent swarms"};
    app.require_subcommand(1);
    // --h is the sensing radius, so help is long-form only.
    app.set_help_flag("--help", "Print this help message and exit");

    RunArgs ra;
    auto* run_cmd = app.add_subcommand("run", "Simulate one scenario");
    run_cmd->add_option("scenario", ra.scenario, "Scenario JSON file")->required();
    run_cmd->add_option("--out", ra.out, "Output directory")->required();
    run_cmd->add_option("--h", ra.h, "Sensing radius override in m, or inf");
    run_cmd->add_option("--dt", ra.dt, "Time step override in s");
    run_cmd->add_flag("--plot", ra.plot, "Also write plot.svg");
    run_cmd->add_flag("--assign-trace", ra.assign_trace,
                      "Also write assignment_trace.jsonl (one line per protocol iteration)");
    run_cmd->add_flag("--membership-trigger", ra.membership_trigger,
                      "Replan on neighborhood membership change, not only size change");

    std::string sweep_path, sweep_h, sweep_out;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run one scenario at several sensing radii");
    sweep_cmd->add_option("scenario", sweep_path, "Scenario JSON file")->required();
    sweep_cmd->add_option("--h", sweep_h, "Comma separated radii in m (inf allowed)")->required();
    sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

    int on = 1, om = 1, oseeds = 1;
    auto* oracle_cmd =
        app.add_subcommand("oracle-check", "Compare h=inf assignment with brute force");
    oracle_cmd->add_option("--n", on, "Agents")->required();
    oracle_cmd->add_option("--m", om, "Goals")->required();
    oracle_cmd->add_option("--seeds", oseeds, "Number of seeds, starting at 0")->default_val(1);

    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_h = "inf";
    auto* gen_cmd = app.add_subcommand("generate", "Write a random N=M=10 scenario");
    gen_cmd->add_option("--seed", gen_seed, "Generator seed")->default_val(0);
    gen_cmd->add_option("--h", gen_h, "Sensing radius in m, or inf")->default_val("inf");
    gen_cmd->add_option("--out", gen_out, "Scenario file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    if (*run_cmd) return cmd_run(ra);
    if (*sweep_cmd) return cmd_sweep(sweep_path, sweep_h, sweep_out);
    if (*gen_cmd) {
        GeneratorParams params;
        params.h = parse_length_or_inf(gen_h);
        save_scenario(random_scenario(gen_seed, params), gen_out);
        return kOk;
    }
    return cmd_oracle(on, om, oseeds);
}
