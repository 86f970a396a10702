#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace swarmform {

/// One inequality row a^T x <= b. `key` identifies the row so it is never
/// added to the active set twice.
struct Cut {
    Eigen::VectorXd normal;
    double bound = 0.0;
    long key = 0;
};

/// Supplies inequality rows on demand. Problems here have thousands of rows
/// of which only a handful bind, so rows are produced lazily.
class CutOracle {
public:
    virtual ~CutOracle() = default;
    /// Most violated row at x (violation measured after scaling the row to
    /// unit normal), or nullopt if none exceeds `tol`.
    virtual std::optional<Cut> most_violated(const Eigen::VectorXd& x, double tol) = 0;
};

class QpInfeasible : public std::runtime_error {
public:
    explicit QpInfeasible(const std::string& what, std::vector<long> keys = {})
        : std::runtime_error(what), keys_(std::move(keys)) {}
    /// Keys of the rows involved: the row that could not be added first,
    /// then the active inequality rows.
    const std::vector<long>& keys() const { return keys_; }

private:
    std::vector<long> keys_;
};

struct QpResult {
    Eigen::VectorXd x;
    int iterations = 0;
    int active_inequalities = 0;
};

struct QpOptions {
    double tol = 1e-9;
    int max_iterations = 20000;
};

/// min 0.5 |x|^2  s.t.  A_eq x = b_eq,  cuts from `oracle`.
/// Dual active-set method (Goldfarb-Idnani) specialised to the identity
/// Hessian: starts from the least-norm point of the equalities and adds the
/// most violated row until none remain, dropping rows whose multipliers would
/// turn negative.
QpResult solve_least_norm_qp(const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                             CutOracle& oracle, const QpOptions& options = {});

}  // namespace swarmform
