#include "swarmform/lsap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace swarmform {
namespace {

bool augment(const Eigen::MatrixXd& cost, int row, std::vector<char>& seen,
             std::vector<int>& col_owner) {
    for (int c = 0; c < cost.cols(); ++c) {
        if (!std::isfinite(cost(row, c)) || seen[c]) continue;
        seen[c] = 1;
        if (col_owner[c] < 0 || augment(cost, col_owner[c], seen, col_owner)) {
            col_owner[c] = row;
            return true;
        }
    }
    return false;
}

// Kuhn's augmenting paths on the finite-cost pairs.
bool has_complete_matching(const Eigen::MatrixXd& cost) {
    std::vector<int> col_owner(cost.cols(), -1);
    for (int r = 0; r < cost.rows(); ++r) {
        std::vector<char> seen(cost.cols(), 0);
        if (!augment(cost, r, seen, col_owner)) return false;
    }
    return true;
}

}  // namespace

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (std::size_t r = 0; r < row_to_col.size(); ++r) {
        total += cost(static_cast<Eigen::Index>(r), row_to_col[r]);
    }
    return total;
}

std::optional<LsapSolution> solve_lsap(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    if (n == 0) return LsapSolution{};
    if (n > m || !has_complete_matching(cost)) return std::nullopt;

    // Forbidden pairs get a cost no complete finite assignment can reach.
    double finite_max = 0.0;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) {
            if (std::isfinite(cost(r, c))) finite_max = std::max(finite_max, std::abs(cost(r, c)));
        }
    }
    const double big = (finite_max + 1.0) * (n + 1);
    auto a = [&](int r, int c) {
        const double v = cost(r, c);
        return std::isfinite(v) ? v : big;
    };

    // 1-based potentials formulation; column 0 is a virtual source.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    LsapSolution sol;
    sol.row_to_col.assign(n, -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) sol.row_to_col[p[j] - 1] = j - 1;
    }
    sol.cost = assignment_cost(cost, sol.row_to_col);
    return sol;
}

std::optional<LsapSolution> solve_lsap_lexicographic(const Eigen::MatrixXd& cost,
                                                     double rel_tol) {
    auto best = solve_lsap(cost);
    if (!best) return std::nullopt;
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    const double target = best->cost;
    const double tol = rel_tol * std::max(1.0, std::abs(target));

    std::vector<int> fixed;
    std::vector<char> col_used(m, 0);
    double fixed_cost = 0.0;
    for (int r = 0; r < n; ++r) {
        bool placed = false;
        for (int c = 0; c < m && !placed; ++c) {
            if (col_used[c] || !std::isfinite(cost(r, c))) continue;
            // Optimum of the remaining rows over the remaining columns.
            std::vector<int> free_cols;
            for (int k = 0; k < m; ++k) {
                if (!col_used[k] && k != c) free_cols.push_back(k);
            }
            const int rest = n - r - 1;
            Eigen::MatrixXd sub(rest, static_cast<Eigen::Index>(free_cols.size()));
            for (int rr = 0; rr < rest; ++rr) {
                for (std::size_t k = 0; k < free_cols.size(); ++k) {
                    sub(rr, static_cast<Eigen::Index>(k)) = cost(r + 1 + rr, free_cols[k]);
                }
            }
            auto tail = solve_lsap(sub);
            if (!tail) continue;
            if (fixed_cost + cost(r, c) + tail->cost <= target + tol) {
                fixed.push_back(c);
                col_used[c] = 1;
                fixed_cost += cost(r, c);
                placed = true;
            }
        }
        if (!placed) return best;  // numerical corner; fall back to the plain optimum
    }
    LsapSolution sol;
    sol.row_to_col = std::move(fixed);
    sol.cost = assignment_cost(cost, sol.row_to_col);
    return sol;
}

}  // namespace swarmform
