#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "swarmform/assign.hpp"
#include "swarmform/percept.hpp"

using namespace swarmform;
using testsupport::Gen;

namespace {

std::vector<AgentState> line(std::initializer_list<double> xs) {
    std::vector<AgentState> out;
    int id = 0;
    for (double x : xs) out.push_back({id++, Vec2(x, 0), Vec2::Zero()});
    return out;
}

WorldSnapshot snapshot(const std::vector<AgentState>& states, double h) {
    WorldSnapshot w;
    w.states = states;
    w.h = h;
    for (const auto& s : states) {
        w.banned[s.id];
        w.deadlines[s.id] = 10.0;
    }
    return w;
}

}  // namespace

TEST_CASE("neighborhood examples") {
    const auto agents = line({0.0, 3.0, 7.5});
    CHECK(neighborhood(1, agents, kInfinity).members == std::set<AgentId>{0, 1, 2});
    // boundary distance counts
    CHECK(neighborhood(0, agents, 3.0).members == std::set<AgentId>{0, 1});
    CHECK(neighborhood(1, agents, 3.0).members == std::set<AgentId>{0, 1});
    CHECK(neighborhood(2, agents, 3.0).members == std::set<AgentId>{2});
    CHECK_THROWS_AS(neighborhood(9, agents, 1.0), UnknownAgentError);
}

TEST_CASE("separating distance") {
    std::vector<AgentState> a{{0, Vec2(0, 0), Vec2::Zero()}, {1, Vec2(3, 4), Vec2::Zero()}};
    CHECK(separating_distance(0, 0, a) == 0.0);
    CHECK(separating_distance(0, 1, a) == doctest::Approx(5.0));
    CHECK_THROWS_AS(separating_distance(0, 4, a), UnknownAgentError);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Gen g(seed);
        a[0].position = g.point(-10, 10);
        a[1].position = g.point(-10, 10);
        const double dx = a[0].position.x() - a[1].position.x();
        const double dy = a[0].position.y() - a[1].position.y();
        CHECK(separating_distance(1, 0, a) == doctest::Approx(std::sqrt(dx * dx + dy * dy)));
    }
}

TEST_CASE("neighborhood properties") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Gen g(seed);
        const auto agents = testsupport::agents_at(testsupport::spaced_points(g, 12, 0, 6, 0.2));
        const double h1 = g.uniform(0.5, 3.0);
        const double h2 = h1 + g.uniform(0.0, 2.0);
        for (const auto& a : agents) {
            const auto n1 = neighborhood(a.id, agents, h1);
            const auto n2 = neighborhood(a.id, agents, h2);
            CHECK(n1.contains(a.id));
            CHECK(std::includes(n2.members.begin(), n2.members.end(), n1.members.begin(),
                                n1.members.end()));
            for (AgentId k : n1.members) CHECK(neighborhood(k, agents, h1).contains(a.id));
            CHECK(neighborhood(a.id, agents, kInfinity).size() == agents.size());
        }
    }
}

TEST_CASE("local views") {
    SUBCASE("isolated agent sees itself") {
        const auto agents = line({0.0, 5.0});
        const LocalView v = build_local_view(0, snapshot(agents, 1.0));
        CHECK(v.members() == std::set<AgentId>{0});
        CHECK(v.neighbor_counts.at(0) == 1);
    }
    SUBCASE("infinite radius sees everything") {
        const auto agents = line({0.0, 5.0, 9.0});
        WorldSnapshot w = snapshot(agents, kInfinity);
        w.banned[2].ban(4, BanLevel::Distance);
        const LocalView v = build_local_view(1, w);
        CHECK(v.members() == std::set<AgentId>{0, 1, 2});
        CHECK(v.neighbor_banned.at(2).contains(4));
        CHECK(v.neighbor_counts.at(0) == 3);
    }
    SUBCASE("clusters never mix") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Gen g(seed);
            std::vector<AgentState> agents;
            for (int i = 0; i < 10; ++i) {
                const Vec2 base = i < 5 ? Vec2(0, 0) : Vec2(20, 0);
                agents.push_back({i, base + g.point(0, 1.5), Vec2::Zero()});
            }
            const WorldSnapshot w = snapshot(agents, 3.0);
            for (const auto& a : agents) {
                for (AgentId k : build_local_view(a.id, w).members()) {
                    CHECK((k < 5) == (a.id < 5));
                }
            }
        }
    }
    SUBCASE("locked goals are visible for members only") {
        const auto agents = line({0.0, 1.0, 9.0});
        WorldSnapshot w = snapshot(agents, 2.0);
        w.locked_goals = {{1, 3}, {2, 4}};
        const LocalView v = build_local_view(0, w);
        CHECK(v.locked_goals == std::map<AgentId, GoalId>{{1, 3}});
    }
    CHECK_THROWS_AS(build_local_view(7, snapshot(line({0.0}), 1.0)), UnknownAgentError);
}
