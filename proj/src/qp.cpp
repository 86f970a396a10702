#include "swarmform/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <fmt/format.h>

namespace swarmform {
namespace {

struct ActiveRow {
    Eigen::VectorXd n;  // unit normal, row reads n^T x >= b
    double b = 0.0;
    double multiplier = 0.0;
    bool equality = false;
    long key = 0;
};

class ActiveSet {
public:
    explicit ActiveSet(Eigen::Index dim) : dim_(dim) {}

    std::size_t size() const { return rows_.size(); }
    const ActiveRow& operator[](std::size_t k) const { return rows_[k]; }
    ActiveRow& operator[](std::size_t k) { return rows_[k]; }

    void add(ActiveRow row) {
        const auto q = static_cast<Eigen::Index>(rows_.size());
        Eigen::MatrixXd g(q + 1, q + 1);
        g.topLeftCorner(q, q) = gram_;
        for (Eigen::Index k = 0; k < q; ++k) {
            const double d = rows_[k].n.dot(row.n);
            g(k, q) = d;
            g(q, k) = d;
        }
        g(q, q) = row.n.squaredNorm();
        gram_ = std::move(g);
        rows_.push_back(std::move(row));
    }

    void drop(std::size_t k) {
        const auto q = static_cast<Eigen::Index>(rows_.size());
        const auto kk = static_cast<Eigen::Index>(k);
        Eigen::MatrixXd g(q - 1, q - 1);
        for (Eigen::Index i = 0, ii = 0; i < q; ++i) {
            if (i == kk) continue;
            for (Eigen::Index j = 0, jj = 0; j < q; ++j) {
                if (j == kk) continue;
                g(ii, jj++) = gram_(i, j);
            }
            ++ii;
        }
        gram_ = std::move(g);
        rows_.erase(rows_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    bool has_key(long key) const {
        return std::any_of(rows_.begin(), rows_.end(),
                           [key](const ActiveRow& r) { return !r.equality && r.key == key; });
    }

    // r = (N^T N)^-1 N^T v,  z = v - N r
    void project(const Eigen::VectorXd& v, Eigen::VectorXd& r, Eigen::VectorXd& z) const {
        const auto q = static_cast<Eigen::Index>(rows_.size());
        z = v;
        r.resize(q);
        if (q == 0) return;
        Eigen::VectorXd nt_v(q);
        for (Eigen::Index k = 0; k < q; ++k) nt_v(k) = rows_[k].n.dot(v);
        r = gram_.ldlt().solve(nt_v);
        for (Eigen::Index k = 0; k < q; ++k) z -= r(k) * rows_[k].n;
    }

private:
    Eigen::Index dim_;
    std::vector<ActiveRow> rows_;
    Eigen::MatrixXd gram_;
};

}  // namespace

QpResult solve_least_norm_qp(const Eigen::MatrixXd& A_eq, const Eigen::VectorXd& b_eq,
                             CutOracle& oracle, const QpOptions& options) {
    const Eigen::Index dim = A_eq.cols();
    ActiveSet active(dim);

    // Least-norm point of the equality system.
    for (Eigen::Index k = 0; k < A_eq.rows(); ++k) {
        const double scale = A_eq.row(k).norm();
        if (scale == 0.0) throw QpInfeasible("equality row with zero normal");
        ActiveRow row;
        row.n = A_eq.row(k).transpose() / scale;
        row.b = b_eq(k) / scale;
        row.equality = true;
        row.key = -1 - k;
        active.add(std::move(row));
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    if (active.size() > 0) {
        Eigen::MatrixXd n(dim, static_cast<Eigen::Index>(active.size()));
        Eigen::VectorXd b(static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            n.col(static_cast<Eigen::Index>(k)) = active[k].n;
            b(static_cast<Eigen::Index>(k)) = active[k].b;
        }
        const Eigen::MatrixXd gram = n.transpose() * n;
        x = n * gram.ldlt().solve(b);
    }

    QpResult result;
    Eigen::VectorXd r, z;
    while (true) {
        auto cut = oracle.most_violated(x, options.tol);
        if (!cut) break;
        if (active.has_key(cut->key)) break;  // active rows are satisfied to rounding

        const double scale = cut->normal.norm();
        if (scale == 0.0) throw QpInfeasible("violated row with zero normal");
        ActiveRow p;
        p.n = -cut->normal / scale;
        p.b = -cut->bound / scale;
        p.key = cut->key;
        double u_p = 0.0;

        while (true) {
            if (++result.iterations > options.max_iterations) {
                throw QpInfeasible(
                    fmt::format("active-set iteration limit {} reached", options.max_iterations));
            }
            active.project(p.n, r, z);

            // Largest step keeping inequality multipliers non-negative.
            double t1 = std::numeric_limits<double>::infinity();
            std::size_t drop = active.size();
            for (std::size_t k = 0; k < active.size(); ++k) {
                if (active[k].equality) continue;
                const double rk = r(static_cast<Eigen::Index>(k));
                if (rk > 0.0) {
                    const double ratio = active[k].multiplier / rk;
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = k;
                    }
                }
            }

            const double slack = p.n.dot(x) - p.b;  // < 0 while violated
            const double t2 = -slack / z.dot(p.n);
            // A step direction almost orthogonal to the row counts as dependent.
            const bool dependent = z.norm() <= 1e-10 || !std::isfinite(t2) || t2 < 0.0;
            if (dependent) {
                if (drop == active.size()) {
                    std::vector<long> keys{p.key};
                    for (std::size_t k = 0; k < active.size(); ++k) {
                        if (!active[k].equality) keys.push_back(active[k].key);
                    }
                    throw QpInfeasible(fmt::format("constraint {} cannot be satisfied", p.key),
                                       std::move(keys));
                }
                for (std::size_t k = 0; k < active.size(); ++k) {
                    active[k].multiplier -= t1 * r(static_cast<Eigen::Index>(k));
                }
                u_p += t1;
                active.drop(drop);
                continue;
            }

            const double t = std::min(t1, t2);
            x += t * z;
            for (std::size_t k = 0; k < active.size(); ++k) {
                active[k].multiplier -= t * r(static_cast<Eigen::Index>(k));
            }
            u_p += t;
            if (t2 <= t1) {
                p.multiplier = u_p;
                active.add(std::move(p));
                break;
            }
            active.drop(drop);
        }
    }

    result.x = std::move(x);
    for (std::size_t k = 0; k < active.size(); ++k) {
        if (!active[k].equality) ++result.active_inequalities;
    }
    return result;
}

}  // namespace swarmform
