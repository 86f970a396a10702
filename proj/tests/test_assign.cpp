#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "swarmform/assign.hpp"

using namespace swarmform;
using testsupport::Gen;

namespace {

// View over explicit members; counts default to the member count.
LocalView make_view(AgentId owner, const std::vector<AgentState>& members,
                    const std::vector<GoalSpec>& goals, double deadline = 10.0) {
    LocalView v;
    v.owner = owner;
    v.goals = goals;
    for (const auto& s : members) {
        v.neighbor_states[s.id] = s;
        v.neighbor_banned[s.id];
        v.neighbor_deadlines[s.id] = deadline;
        v.neighbor_counts[s.id] = members.size();
    }
    return v;
}

std::vector<AgentState> two_agents() {
    return testsupport::agents_at({Vec2(0, 0), Vec2(1, 0)});
}
std::vector<GoalSpec> two_goals() { return testsupport::static_goals({Vec2(0, 1), Vec2(1, 1)}); }

// Row sum one, column sum at most one, zero on the row agent's bans.
void check_matrix(const LocalView& v, const AssignmentMatrix& m) {
    for (AgentId k : m.agents) {
        int row = 0;
        for (GoalId j : m.goals) {
            row += m.entry(k, j);
            if (v.neighbor_banned.at(k).contains(j)) CHECK(m.entry(k, j) == 0);
        }
        CHECK(row == 1);
    }
    for (GoalId j : m.goals) {
        int col = 0;
        for (AgentId k : m.agents) col += m.entry(k, j);
        CHECK(col <= 1);
    }
}

}  // namespace

TEST_CASE("local assignment examples") {
    SUBCASE("single agent single goal") {
        const auto v = make_view(0, {two_agents()[0]}, {two_goals()[1]});
        CHECK(solve_local_assignment(v).goal_of(0) == 1);
    }
    SUBCASE("straight beats crossed") {
        const auto v = make_view(0, two_agents(), two_goals());
        const auto m = solve_local_assignment(v);
        CHECK(m.goal_of(0) == 0);
        CHECK(m.goal_of(1) == 1);
        CHECK(m.total_cost == doctest::Approx(2.0));
        CHECK(2.0 < 2 * std::numbers::sqrt2);
        check_matrix(v, m);
    }
    SUBCASE("a ban forces the crossing") {
        auto v = make_view(0, two_agents(), two_goals());
        v.neighbor_banned[0].ban(0, BanLevel::Distance);
        const auto m = solve_local_assignment(v);
        CHECK(m.goal_of(0) == 1);
        CHECK(m.goal_of(1) == 0);
        CHECK(m.total_cost == doctest::Approx(2 * std::numbers::sqrt2));
        check_matrix(v, m);
    }
    SUBCASE("locked member keeps its goal") {
        auto v = make_view(0, two_agents(), two_goals());
        v.locked_goals[1] = 0;
        const auto m = solve_local_assignment(v);
        CHECK(m.goal_of(1) == 0);
        CHECK(m.goal_of(0) == 1);
    }
    SUBCASE("too few goals") {
        auto v = make_view(1, two_agents(), two_goals());
        v.neighbor_banned[0].ban(0, BanLevel::Index);
        v.neighbor_banned[1].ban(0, BanLevel::Index);
        try {
            solve_local_assignment(v);
            FAIL("expected InfeasibleAssignment");
        } catch (const InfeasibleAssignment& e) {
            CHECK(e.owner() == 1);
            CHECK(e.available_goals() == 1);
            CHECK(e.members() == 2);
        }
    }
}

TEST_CASE("local assignment cost is measured at each deadline") {
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
        Gen g(seed);
        const int n = g.integer(1, 5), m = g.integer(n, 6);
        const auto agents = testsupport::agents_at(testsupport::spaced_points(g, n, 0, 5, 0.2));
        auto goals = testsupport::static_goals(testsupport::spaced_points(g, m, 0, 5, 0.2));
        for (auto& goal : goals) goal.drift = g.point(-0.2, 0.2);
        auto v = make_view(agents[g.integer(0, n - 1)].id, agents, goals);
        for (auto& [k, d] : v.neighbor_deadlines) d = g.uniform(0, 20);
        for (auto& [k, b] : v.neighbor_banned) {
            if (g.integer(0, 3) == 0) b.ban(g.integer(0, m - 1), BanLevel::Distance);
        }
        std::vector<std::vector<double>> c(n, std::vector<double>(m));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const Vec2 at = goals[j].base + goals[j].drift * v.neighbor_deadlines.at(i);
                c[i][j] = v.neighbor_banned.at(i).contains(j) ? kInfinity
                                                              : (agents[i].position - at).norm();
            }
        const double oracle = testsupport::brute_min_cost(c);
        if (!std::isfinite(oracle)) {
            CHECK_THROWS_AS(solve_local_assignment(v), InfeasibleAssignment);
            continue;
        }
        const auto mat = solve_local_assignment(v);
        check_matrix(v, mat);
        double cost = 0;
        for (int i = 0; i < n; ++i) cost += c[i][mat.goal_of(i)];
        CHECK(cost == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(mat.total_cost == doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("feasibility check") {
    auto v = make_view(0, two_agents(), two_goals());
    CHECK(check_feasibility(v));
    v.neighbor_banned[1].ban(1, BanLevel::Index);
    CHECK(available_goals(v) == std::set<GoalId>{0});
    CHECK_FALSE(check_feasibility(v));

    const auto three = testsupport::agents_at({Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)});
    auto w = make_view(0, three,
                       testsupport::static_goals(
                           {Vec2(0, 1), Vec2(1, 1), Vec2(2, 1), Vec2(3, 1), Vec2(4, 1)}));
    w.neighbor_banned[0].ban(1, BanLevel::Index);
    w.neighbor_banned[2].ban(4, BanLevel::Distance);
    CHECK(available_goals(w).size() == 3);
    CHECK(check_feasibility(w));
}

TEST_CASE("conflict detection") {
    const auto three = testsupport::agents_at({Vec2(0, 0), Vec2(1, 0), Vec2(2, 0)});
    const auto v = make_view(0, three, two_goals());
    CHECK_FALSE(detect_conflict(0, {{0, 0}, {1, 1}, {2, 2}}, v).has_value());
    const auto c = detect_conflict(0, {{0, 5}, {1, 5}, {2, 2}}, v);
    REQUIRE(c);
    CHECK(c->goal == 5);
    CHECK(c->competitors() == std::set<AgentId>{0, 1});
    CHECK_FALSE(detect_conflict(2, {{0, 5}, {1, 5}, {2, 2}}, v).has_value());
}

TEST_CASE("tiebreakers") {
    const GoalSpec g = testsupport::static_goals({Vec2(0, 0)})[0];
    SUBCASE("larger neighborhood wins") {
        auto v = make_view(1, testsupport::agents_at({Vec2(9, 9), Vec2(1, 0), Vec2(0, 1)}), {g});
        v.neighbor_counts[1] = 3;
        v.neighbor_counts[2] = 2;
        ConflictSet c;
        c.goal = 0;
        c.levels[0] = {1, 2};
        const auto r = resolve_conflict(c, v);
        CHECK(r.winner == 1);
        CHECK(r.bans == std::map<AgentId, BanLevel>{{2, BanLevel::NeighborhoodSize}});
    }
    SUBCASE("farther agent wins on equal neighborhoods") {
        auto v = make_view(1, testsupport::agents_at({Vec2(9, 9), Vec2(4, 0), Vec2(0, 2)}), {g});
        ConflictSet c;
        c.goal = 0;
        c.levels[0] = {1, 2};
        const auto r = resolve_conflict(c, v);
        CHECK(r.winner == 1);
        CHECK(r.bans == std::map<AgentId, BanLevel>{{2, BanLevel::Distance}});
        CHECK(r.conflict.levels[1] == std::set<AgentId>{1, 2});
    }
    SUBCASE("smaller index wins a symmetric pair") {
        LocalView v = make_view(3, {{3, Vec2(1, 0), Vec2::Zero()}, {7, Vec2(-1, 0), Vec2::Zero()}},
                                {g});
        ConflictSet c;
        c.goal = 0;
        c.levels[0] = {3, 7};
        const auto r = resolve_conflict(c, v);
        CHECK(r.winner == 3);
        CHECK(r.bans == std::map<AgentId, BanLevel>{{7, BanLevel::Index}});
        CHECK(r.conflict.levels[2] == std::set<AgentId>{3, 7});

        BannedGoalSet b;
        b.ban(0, r.bans.at(7));
        CHECK(b.partition(BanLevel::Index) == std::set<GoalId>{0});
        CHECK(b.partition(BanLevel::Distance).empty());
        CHECK(b.partition(BanLevel::NeighborhoodSize).empty());
    }
    SUBCASE("single competitor is a contract error") {
        const auto v = make_view(0, two_agents(), {g});
        ConflictSet c;
        c.levels[0] = {0};
        CHECK_THROWS_AS(resolve_conflict(c, v), ContractViolation);
    }
}

TEST_CASE("deadline update") {
    CHECK(update_deadline(7.0, 3.0, 10.0, false) == 7.0);
    CHECK(update_deadline(7.0, 3.0, 10.0, true) == 13.0);
    double d = 10.0;
    for (int k = 0; k < 5; ++k) d = update_deadline(d, k, 10.0, false);
    CHECK(d == 10.0);
}

TEST_CASE("banned set only grows") {
    BannedGoalSet b;
    CHECK(b.empty());
    b.ban(2, BanLevel::Distance);
    const BannedGoalSet before = b;
    b.ban(2, BanLevel::Index);  // already banned: stays where it is
    b.ban(5, BanLevel::NeighborhoodSize);
    CHECK(b.includes(before));
    CHECK_FALSE(before.includes(b));
    CHECK(b.size() == 2);
    CHECK(b.all() == std::set<GoalId>{2, 5});
    CHECK(b.partition(BanLevel::Distance) == std::set<GoalId>{2});
}

TEST_CASE("priority order") {
    CHECK(outranks({3, 0.0, 5}, {2, 9.0, 0}));
    CHECK(outranks({2, 2.0, 5}, {2, 1.0, 0}));
    CHECK(outranks({2, 1.0, 0}, {2, 1.0, 5}));
    CHECK_FALSE(outranks({2, 1.0, 5}, {2, 1.0, 5}));

    auto v = make_view(0, testsupport::agents_at({Vec2(0, 0), Vec2(3, 0), Vec2(1, 0)}),
                       testsupport::static_goals({Vec2(0, 1), Vec2(1, 1), Vec2(2, 1)}));
    v.neighbor_counts[0] = 2;
    // agent 1 is 1.41 m from goal 2, agent 2 is 1 m from goal 1
    CHECK(priority_order(v, {{0, 0}, {1, 2}, {2, 1}}) == std::vector<AgentId>{1, 2, 0});
}

TEST_CASE("round with infinite radius is one centralized solve") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Gen g(seed);
        const int n = g.integer(2, 7), m = g.integer(n, 8);
        const auto agents = testsupport::agents_at(testsupport::spaced_points(g, n, 0, 5, 0.2));
        const auto goals = testsupport::static_goals(testsupport::spaced_points(g, m, 0, 5, 0.2));
        const auto r = assignment_round(agents, goals, kInfinity, 0.0, 10.0,
                                        AssignmentState::initial(agents, 10.0));
        CHECK(r.iterations == 1);
        CHECK(r.new_bans == 0);
        std::vector<std::vector<double>> c(n, std::vector<double>(m));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) c[i][j] = (agents[i].position - goals[j].base).norm();
        double cost = 0;
        for (const auto& [k, goal] : r.state.prescribed()) cost += c[k][goal];
        CHECK(cost == doctest::Approx(testsupport::brute_min_cost(c)).epsilon(1e-12));
    }
}

TEST_CASE("stale goal conflict settles in two iterations") {
    const auto agents = two_agents();
    auto st = AssignmentState::initial(agents, 10.0);
    st.agents[1].goal = 0;
    const auto r = assignment_round(agents, two_goals(), kInfinity, 2.0, 10.0, st, {0});
    CHECK(r.iterations == 2);
    CHECK(r.new_bans == 1);
    CHECK(r.state.agents.at(0).banned.partition(BanLevel::Distance) == std::set<GoalId>{0});
    CHECK(r.state.agents.at(0).deadline == 12.0);
    CHECK(r.state.agents.at(1).deadline == 10.0);
    CHECK(r.state.prescribed() == std::map<AgentId, GoalId>{{0, 1}, {1, 0}});
}

TEST_CASE("disjoint clusters solve independently") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Gen g(seed);
        std::vector<AgentState> all, left, right;
        for (int i = 0; i < 8; ++i) {
            const Vec2 base = i < 4 ? Vec2(0, 0) : Vec2(30, 0);
            all.push_back({i, base + g.point(0, 2), Vec2::Zero()});
            (i < 4 ? left : right).push_back(all.back());
        }
        std::vector<Vec2> gp;
        for (int j = 0; j < 8; ++j) gp.push_back(Vec2(j < 4 ? 0 : 30, 0) + Vec2(j % 4, 3));
        const auto goals = testsupport::static_goals(gp);
        const double h = 3.0;
        const auto whole =
            assignment_round(all, goals, h, 0, 10, AssignmentState::initial(all, 10)).state;
        const auto a =
            assignment_round(left, goals, h, 0, 10, AssignmentState::initial(left, 10)).state;
        const auto b =
            assignment_round(right, goals, h, 0, 10, AssignmentState::initial(right, 10)).state;
        for (const auto& s : all) {
            const auto& part = s.id < 4 ? a : b;
            CHECK(whole.agents.at(s.id).goal == part.agents.at(s.id).goal);
            CHECK(whole.agents.at(s.id).banned == part.agents.at(s.id).banned);
        }
    }
}

TEST_CASE("round properties over random swarms") {
    int rounds = 0, infeasible = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Gen g(seed);
        const int n = g.integer(2, 9), m = g.integer(n, 10);
        const auto agents = testsupport::agents_at(testsupport::spaced_points(g, n, 0, 4, 0.2));
        auto goals = testsupport::static_goals(testsupport::spaced_points(g, m, 0, 4, 0.2));
        const double h = g.uniform(0.5, 3.0);

        // Start from stale goals and a few old bans, as a replan mid-run would.
        auto st = AssignmentState::initial(agents, 10.0);
        for (auto& [k, a] : st.agents) {
            a.goal = g.integer(0, m - 1);
            if (g.integer(0, 4) == 0) a.banned.ban(g.integer(0, m - 1), BanLevel::Index);
            if (a.banned.contains(*a.goal)) a.goal.reset();
        }
        const auto before = st;
        std::set<AgentId> participants;
        for (const auto& a : agents)
            if (g.integer(0, 1)) participants.insert(a.id);

        auto observer = [&](const LocalView& v, const AssignmentMatrix& mat) { check_matrix(v, mat); };
        try {
            const auto r = assignment_round(agents, goals, h, 1.0, 10.0, st, participants, observer);
            ++rounds;
            CHECK(r.iterations <= n * m);
            CHECK(is_conflict_free(agents, h, r.state.prescribed()));
            for (const auto& [k, a] : r.state.agents) {
                CHECK(a.banned.includes(before.agents.at(k).banned));
                if (a.goal) CHECK_FALSE(a.banned.contains(*a.goal));
                const bool grew = a.banned.size() > before.agents.at(k).banned.size();
                CHECK(a.deadline == (grew ? 11.0 : 10.0));
            }
            for (const auto& a : agents) {
                if (participants.contains(a.id)) CHECK(r.state.agents.at(a.id).goal.has_value());
            }
        } catch (const InfeasibleAssignment&) {
            ++infeasible;
        }
    }
    MESSAGE(rounds << " rounds completed, " << infeasible << " infeasible");
    CHECK(rounds > 150);
}

TEST_CASE("every winner sees itself win") {
    // All contestants compute the same winner from their own views when they
    // share a neighborhood.
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Gen g(seed);
        const auto agents = testsupport::agents_at(testsupport::spaced_points(g, 5, 0, 2, 0.2));
        const auto goals = testsupport::static_goals({Vec2(1, 1)});
        WorldSnapshot w;
        w.states = agents;
        w.goals = goals;
        w.h = kInfinity;
        for (const auto& a : agents) {
            w.banned[a.id];
            w.deadlines[a.id] = 10;
        }
        ConflictSet c;
        c.goal = 0;
        for (const auto& a : agents)
            if (g.integer(0, 1)) c.levels[0].insert(a.id);
        if (c.levels[0].size() < 2) continue;
        std::set<AgentId> winners;
        for (AgentId k : c.levels[0]) winners.insert(resolve_conflict(c, build_local_view(k, w)).winner);
        CHECK(winners.size() == 1);
        const auto r = resolve_conflict(c, build_local_view(*c.levels[0].begin(), w));
        CHECK(r.bans.size() == c.levels[0].size() - 1);
        CHECK_FALSE(r.bans.contains(r.winner));
    }
}
