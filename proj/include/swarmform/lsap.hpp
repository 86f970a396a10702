#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

namespace swarmform {

// Rectangular linear sum assignment (rows <= cols). Entries equal to
// +infinity are forbidden pairs. Every row receives a distinct column.
struct LsapSolution {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

/// Exact minimum-cost assignment via the shortest augmenting path (Hungarian)
/// method with potentials. Returns nullopt if no assignment avoids every
/// forbidden pair.
std::optional<LsapSolution> solve_lsap(const Eigen::MatrixXd& cost);

/// Among all minimum-cost assignments, the one whose row_to_col vector is
/// lexicographically smallest. Costs within `rel_tol` of the optimum count as
/// ties.
std::optional<LsapSolution> solve_lsap_lexicographic(const Eigen::MatrixXd& cost,
                                                     double rel_tol = 1e-9);

/// Sum of cost(r, row_to_col[r]) in row order.
double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col);

}  // namespace swarmform
