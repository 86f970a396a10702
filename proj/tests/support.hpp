#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "swarmform/world.hpp"

namespace testsupport {

using swarmform::AgentState;
using swarmform::GoalSpec;
using swarmform::Vec2;

// Small deterministic generator; every property test seeds one per case.
struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed * 0x9e3779b97f4a7c15ULL + 1) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    Vec2 point(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi)}; }
};

// Points in [lo, hi]^2 with pairwise distance > min_gap (rejection sampling).
inline std::vector<Vec2> spaced_points(Gen& g, int n, double lo, double hi, double min_gap) {
    std::vector<Vec2> pts;
    while (static_cast<int>(pts.size()) < n) {
        const Vec2 p = g.point(lo, hi);
        bool ok = true;
        for (const auto& q : pts) ok = ok && (p - q).norm() > min_gap;
        if (ok) pts.push_back(p);
    }
    return pts;
}

inline std::vector<AgentState> agents_at(const std::vector<Vec2>& pts) {
    std::vector<AgentState> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        out.push_back({static_cast<int>(i), pts[i], Vec2::Zero()});
    }
    return out;
}

inline std::vector<GoalSpec> static_goals(const std::vector<Vec2>& pts) {
    std::vector<GoalSpec> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        GoalSpec g;
        g.id = static_cast<int>(i);
        g.base = pts[i];
        out.push_back(g);
    }
    return out;
}

// Minimum over every injective row -> column map, by plain recursion.
// Written independently of the library's brute force on purpose.
inline double brute_min_cost(const std::vector<std::vector<double>>& c) {
    const std::size_t n = c.size();
    const std::size_t m = n ? c[0].size() : 0;
    std::vector<bool> used(m, false);
    double best = std::numeric_limits<double>::infinity();
    auto rec = [&](auto&& self, std::size_t row, double acc) -> void {
        if (acc >= best) return;
        if (row == n) {
            best = acc;
            return;
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (used[j] || !std::isfinite(c[row][j])) continue;
            used[j] = true;
            self(self, row + 1, acc + c[row][j]);
            used[j] = false;
        }
    };
    rec(rec, 0, 0.0);
    return best;
}

// Discretized energy oracle: K equal steps of constant control, exact
// double-integrator update, least-norm controls hitting the end state.
// Each axis is independent.
inline double discrete_energy(const Vec2& p0, const Vec2& v0, const Vec2& pf, const Vec2& vf,
                              double tau, int K = 1000) {
    const double dt = tau / K;
    Eigen::MatrixXd A(2, K);
    for (int k = 0; k < K; ++k) {
        A(0, k) = dt;
        A(1, k) = dt * (tau - (k + 1) * dt) + 0.5 * dt * dt;
    }
    double energy = 0;
    for (int ax = 0; ax < 2; ++ax) {
        Eigen::Vector2d b(vf[ax] - v0[ax], pf[ax] - p0[ax] - v0[ax] * tau);
        const Eigen::VectorXd u = A.transpose() * (A * A.transpose()).ldlt().solve(b);
        energy += 0.5 * dt * u.squaredNorm();
    }
    return energy;
}

inline bool rel_close(double a, double b, double rel) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testsupport
