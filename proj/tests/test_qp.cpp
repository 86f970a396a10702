#include <doctest.h>

#include <set>

#include <Eigen/Dense>

#include "support.hpp"
#include "swarmform/qp.hpp"

using namespace swarmform;
using testsupport::Gen;

namespace {

// Fixed list of rows handed out most-violated first.
class ListOracle : public CutOracle {
public:
    explicit ListOracle(std::vector<Cut> rows) : rows_(std::move(rows)) {}
    std::optional<Cut> most_violated(const Eigen::VectorXd& x, double tol) override {
        std::optional<Cut> best;
        double worst = tol;
        for (const auto& c : rows_) {
            const double v = (c.normal.dot(x) - c.bound) / c.normal.norm();
            if (v > worst) {
                worst = v;
                best = c;
            }
        }
        return best;
    }

private:
    std::vector<Cut> rows_;
};

Eigen::VectorXd least_norm(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    return A.completeOrthogonalDecomposition().solve(b);
}

// Least-norm point of every face; the smallest feasible one is the optimum.
std::optional<Eigen::VectorXd> enumerate(const Eigen::MatrixXd& Aeq, const Eigen::VectorXd& beq,
                                         const std::vector<Cut>& rows) {
    const int n = static_cast<int>(Aeq.cols());
    std::optional<Eigen::VectorXd> best;
    for (unsigned mask = 0; mask < (1u << rows.size()); ++mask) {
        std::vector<int> act;
        for (std::size_t r = 0; r < rows.size(); ++r)
            if (mask >> r & 1u) act.push_back(static_cast<int>(r));
        Eigen::MatrixXd A(Aeq.rows() + act.size(), n);
        Eigen::VectorXd b(A.rows());
        A.topRows(Aeq.rows()) = Aeq;
        b.head(Aeq.rows()) = beq;
        for (std::size_t k = 0; k < act.size(); ++k) {
            A.row(Aeq.rows() + k) = rows[act[k]].normal.transpose();
            b(Aeq.rows() + k) = rows[act[k]].bound;
        }
        const Eigen::VectorXd x = least_norm(A, b);
        if ((A * x - b).norm() > 1e-9) continue;  // face is empty
        bool ok = true;
        for (const auto& c : rows) ok = ok && c.normal.dot(x) <= c.bound + 1e-9;
        if (ok && (!best || x.norm() < best->norm() - 1e-12)) best = x;
    }
    return best;
}

}  // namespace

TEST_CASE("equalities only give the pseudo-inverse solution") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Gen g(seed);
        const int n = g.integer(2, 8), m = g.integer(1, n);
        Eigen::MatrixXd A(m, n);
        Eigen::VectorXd b(m);
        for (int i = 0; i < m; ++i) {
            b(i) = g.uniform(-3, 3);
            for (int j = 0; j < n; ++j) A(i, j) = g.uniform(-1, 1);
        }
        ListOracle none({});
        const auto r = solve_least_norm_qp(A, b, none);
        const Eigen::VectorXd ref = least_norm(A, b);
        CHECK((r.x - ref).norm() <= 1e-8 * (1.0 + ref.norm()));
        CHECK(r.active_inequalities == 0);
    }
}

TEST_CASE("small problems agree with active set enumeration") {
    int solved = 0;
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Gen g(seed);
        const int n = g.integer(2, 4);
        const int m = g.integer(0, 1);
        Eigen::MatrixXd A(m, n);
        Eigen::VectorXd b(m);
        for (int i = 0; i < m; ++i) {
            b(i) = g.uniform(-2, 2);
            for (int j = 0; j < n; ++j) A(i, j) = g.uniform(-1, 1);
        }
        std::vector<Cut> rows;
        const int k = g.integer(1, 6);
        for (int r = 0; r < k; ++r) {
            Cut c;
            c.normal = Eigen::VectorXd(n);
            for (int j = 0; j < n; ++j) c.normal(j) = g.uniform(-1, 1);
            c.bound = g.uniform(-1.5, 0.5);
            c.key = r;
            rows.push_back(c);
        }
        const auto oracle = enumerate(A, b, rows);
        ListOracle lo(rows);
        if (!oracle) {
            CHECK_THROWS_AS(solve_least_norm_qp(A, b, lo), QpInfeasible);
            continue;
        }
        ++solved;
        const auto r = solve_least_norm_qp(A, b, lo);
        CHECK((r.x - *oracle).norm() < 1e-7);
        CHECK((A * r.x - b).norm() < 1e-9);
        for (const auto& c : rows) CHECK(c.normal.dot(r.x) <= c.bound + 1e-8);
    }
    CHECK(solved > 200);
}

TEST_CASE("contradictory rows are reported") {
    Cut upper{Eigen::VectorXd::Ones(1), -1.0, 7};   // x <= -1
    Cut lower{-Eigen::VectorXd::Ones(1), -1.0, 9};  // x >= 1
    ListOracle lo({upper, lower});
    try {
        solve_least_norm_qp(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), lo);
        FAIL("expected QpInfeasible");
    } catch (const QpInfeasible& e) {
        REQUIRE_FALSE(e.keys().empty());
        std::set<long> keys(e.keys().begin(), e.keys().end());
        CHECK(keys == std::set<long>{7, 9});
    }
}

TEST_CASE("single half-space projection") {
    // min |x|^2 with x0 + x1 >= 2 lands on (1, 1).
    Cut c{-Eigen::Vector2d(1, 1), -2.0, 0};
    ListOracle lo({c});
    const auto r = solve_least_norm_qp(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), lo);
    CHECK(r.x(0) == doctest::Approx(1.0));
    CHECK(r.x(1) == doctest::Approx(1.0));
    CHECK(r.active_inequalities == 1);
}
