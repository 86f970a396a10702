#include "swarmform/traj.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "swarmform/qp.hpp"

namespace swarmform {
namespace {

constexpr double kTimeTol = 1e-9;

void check_range(const Trajectory& traj, double t) {
    if (t < traj.t0() - kTimeTol || t > traj.tf() + kTimeTol) {
        throw TrajectoryError(fmt::format("t={} outside trajectory of agent {} on [{}, {}]", t,
                                          traj.agent(), traj.t0(), traj.tf()));
    }
}

Vec2 rotate_left(const Vec2& v) { return {-v.y(), v.x()}; }

}  // namespace

Trajectory Trajectory::analytic(AgentId agent, double t0, double tf, const BoundaryConditions& bc,
                                const Vec2& alpha, const Vec2& beta) {
    Trajectory t;
    t.kind_ = Kind::Analytic;
    t.agent_ = agent;
    t.t0_ = t0;
    t.tf_ = tf;
    t.bc_ = bc;
    t.alpha_ = alpha;
    t.beta_ = beta;
    return t;
}

Trajectory Trajectory::sampled(AgentId agent, double t0, double tf, const Vec2& p0, const Vec2& v0,
                               std::vector<Vec2> controls) {
    if (controls.empty()) throw TrajectoryError("sampled trajectory needs at least one control");
    Trajectory t;
    t.kind_ = Kind::Sampled;
    t.agent_ = agent;
    t.t0_ = t0;
    t.tf_ = tf;
    t.step_ = (tf - t0) / static_cast<double>(controls.size());
    t.controls_ = std::move(controls);
    t.grid_p_.reserve(t.controls_.size() + 1);
    t.grid_v_.reserve(t.controls_.size() + 1);
    Vec2 p = p0;
    Vec2 v = v0;
    t.grid_p_.push_back(p);
    t.grid_v_.push_back(v);
    const double d = t.step_;
    for (const Vec2& u : t.controls_) {
        p = p + v * d + u * (0.5 * d * d);
        v = v + u * d;
        t.grid_p_.push_back(p);
        t.grid_v_.push_back(v);
    }
    t.bc_ = {p0, v0, p, v};
    return t;
}

Trajectory Trajectory::tracking(AgentId agent, double t0, const Vec2& p0, const GoalSpec& goal) {
    Trajectory t;
    t.kind_ = Kind::Tracking;
    t.agent_ = agent;
    t.t0_ = t0;
    t.tf_ = kInfinity;
    t.goal_ = goal;
    t.track_offset_ = p0 - goal_position(goal, t0);
    t.bc_ = {p0, goal_velocity(goal, t0), Vec2::Zero(), Vec2::Zero()};
    return t;
}

TrajectorySample Trajectory::sample(double t) const {
    check_range(*this, t);
    TrajectorySample out;
    out.state.id = agent_;
    switch (kind_) {
        case Kind::Analytic: {
            const double s = std::clamp(t, t0_, tf_) - t0_;
            out.control = alpha_ + beta_ * s;
            out.state.velocity = bc_.v0 + alpha_ * s + beta_ * (0.5 * s * s);
            out.state.position =
                bc_.p0 + bc_.v0 * s + alpha_ * (0.5 * s * s) + beta_ * (s * s * s / 6.0);
            break;
        }
        case Kind::Sampled: {
            const double s = std::clamp(t, t0_, tf_) - t0_;
            const auto last = static_cast<long>(controls_.size()) - 1;
            const long k = std::clamp(static_cast<long>(std::floor(s / step_)), 0L, last);
            const double r = s - static_cast<double>(k) * step_;
            const Vec2& u = controls_[k];
            out.control = u;
            out.state.velocity = grid_v_[k] + u * r;
            out.state.position = grid_p_[k] + grid_v_[k] * r + u * (0.5 * r * r);
            break;
        }
        case Kind::Tracking: {
            out.control = goal_acceleration(*goal_, t);
            out.state.velocity = goal_velocity(*goal_, t);
            out.state.position = goal_position(*goal_, t) + track_offset_;
            break;
        }
    }
    return out;
}

Vec2 Trajectory::predict_position(double t) const {
    if (t <= tf_) return sample(std::max(t, t0_)).state.position;
    const TrajectorySample end = sample(tf_);
    const double s = t - tf_;
    if (!goal_) return end.state.position + end.state.velocity * s;
    const Vec2 dv = end.state.velocity - goal_velocity(*goal_, tf_);
    return end.state.position + dv * s + goal_position(*goal_, t) - goal_position(*goal_, tf_);
}

double Trajectory::energy_between(double a, double b) const {
    check_range(*this, a);
    check_range(*this, b);
    a = std::clamp(a, t0_, tf_);
    b = std::clamp(b, t0_, tf_);
    if (b <= a) return 0.0;
    switch (kind_) {
        case Kind::Analytic: {
            const double sa = a - t0_;
            const double sb = b - t0_;
            return 0.5 * (alpha_.squaredNorm() * (sb - sa) + alpha_.dot(beta_) * (sb * sb - sa * sa) +
                          beta_.squaredNorm() * (sb * sb * sb - sa * sa * sa) / 3.0);
        }
        case Kind::Sampled: {
            double e = 0.0;
            for (std::size_t k = 0; k < controls_.size(); ++k) {
                const double lo = t0_ + static_cast<double>(k) * step_;
                const double hi = (k + 1 == controls_.size()) ? tf_ : lo + step_;
                const double overlap = std::min(hi, b) - std::max(lo, a);
                if (overlap > 0.0) e += 0.5 * controls_[k].squaredNorm() * overlap;
            }
            return e;
        }
        case Kind::Tracking:
            return goal_tracking_energy(*goal_, a, b);
    }
    return 0.0;
}

Trajectory min_energy_unconstrained(const Vec2& p0, const Vec2& v0, const Vec2& pf, const Vec2& vf,
                                    double t0, double tf, AgentId agent) {
    if (!(tf > t0)) {
        throw DegenerateHorizon(fmt::format("horizon [{}, {}] is empty", t0, tf));
    }
    const double tau = tf - t0;
    const Vec2 dp = pf - p0 - v0 * tau;
    const Vec2 dv = vf - v0;
    // u(s) = alpha + beta s solves v(tau) = vf, p(tau) = pf.
    const Vec2 beta = (dv * (6.0 * tau) - dp * 12.0) / (tau * tau * tau);
    const Vec2 alpha = dv / tau - beta * (0.5 * tau);
    return Trajectory::analytic(agent, t0, tf, {p0, v0, pf, vf}, alpha, beta);
}

double trajectory_energy(const Trajectory& traj) {
    if (traj.kind() == Trajectory::Kind::Tracking) {
        throw TrajectoryError("tracking trajectories have no finite end");
    }
    return traj.energy_between(traj.t0(), traj.tf());
}

TrajectorySample sample(const Trajectory& traj, double t) { return traj.sample(t); }

TrajectoryInfeasible::TrajectoryInfeasible(AgentId agent, std::optional<AgentId> blocker,
                                           const std::string& why)
    : TrajectoryError(blocker ? fmt::format("no trajectory for agent {} (blocked by agent {}): {}",
                                            agent, *blocker, why)
                              : fmt::format("no trajectory for agent {}: {}", agent, why)),
      agent_(agent),
      blocker_(blocker) {}

std::vector<double> planning_grid(double t0, double tf, const TrajectoryOptions& options) {
    const double span = tf - t0;
    const long by_step = static_cast<long>(std::ceil(span / options.substep - 1e-9));
    const long k = std::max<long>(options.min_points, by_step);
    std::vector<double> out(static_cast<std::size_t>(k) + 1);
    const double d = span / static_cast<double>(k);
    for (long i = 0; i <= k; ++i) out[i] = t0 + static_cast<double>(i) * d;
    out.back() = tf;
    return out;
}

double max_distance_increase(const Trajectory& traj, const Vec2& target,
                             const std::vector<double>& times) {
    double worst = -kInfinity;
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double before = (traj.sample(times[k - 1]).state.position - target).norm();
        const double after = (traj.sample(times[k]).state.position - target).norm();
        worst = std::max(worst, after - before);
    }
    return worst;
}

namespace {

constexpr int kMaxFlips = 2;
constexpr std::array<double, 3> kBufferScales{1.0, 0.25, 0.02};

// Linearized separation row: n . p_k >= n . q_k + sep.
struct SeparationRow {
    long step = 0;
    Vec2 normal = Vec2::Zero();
    Vec2 other = Vec2::Zero();
    AgentId obstacle = 0;
};

class TrajectoryCuts : public CutOracle {
public:
    TrajectoryCuts(long steps, double delta, const Vec2& p0, const Vec2& v0,
                   const TrajectoryOptions& opt, std::vector<SeparationRow> rows)
        : k_(steps),
          delta_(delta),
          p0_(p0),
          v0_(v0),
          sides_(opt.polygon_sides),
          sep_(opt.separation()),
          rows_(std::move(rows)) {
        const double inscribe = std::cos(std::numbers::pi / sides_);
        u_face_ = opt.u_max * inscribe;
        v_face_ = opt.v_max * inscribe;
        pos_weight_norm_.assign(k_ + 1, 0.0);
        for (long k = 1; k <= k_; ++k) {
            double s = 0.0;
            for (long j = 0; j < k; ++j) {
                const double w = weight(k, j);
                s += w * w;
            }
            pos_weight_norm_[k] = std::sqrt(s);
        }
    }

    std::optional<Cut> most_violated(const Eigen::VectorXd& x, double tol) override {
        std::vector<Vec2> p(k_ + 1), v(k_ + 1);
        p[0] = p0_;
        v[0] = v0_;
        for (long k = 0; k < k_; ++k) {
            const Vec2 u = control(x, k);
            p[k + 1] = p[k] + v[k] * delta_ + u * (0.5 * delta_ * delta_);
            v[k + 1] = v[k] + u * delta_;
        }

        enum class Family { None, Control, Speed, Separation };
        Family family = Family::None;
        double worst = tol;
        long where = 0;
        int face = 0;

        for (long k = 0; k < k_; ++k) {
            const Vec2 u = control(x, k);
            if (u.norm() <= u_face_) continue;
            const int m = nearest_face(u);
            const double viol = face_normal(m).dot(u) - u_face_;
            if (viol > worst) {
                worst = viol;
                family = Family::Control;
                where = k;
                face = m;
            }
        }
        for (long k = 1; k < k_; ++k) {
            if (v[k].norm() <= v_face_) continue;
            const int m = nearest_face(v[k]);
            const double viol = (face_normal(m).dot(v[k]) - v_face_) / (delta_ * std::sqrt(k));
            if (viol > worst) {
                worst = viol;
                family = Family::Speed;
                where = k;
                face = m;
            }
        }
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto& row = rows_[r];
            const double viol = (row.normal.dot(row.other) + sep_ - row.normal.dot(p[row.step])) /
                                pos_weight_norm_[row.step];
            if (viol > worst) {
                worst = viol;
                family = Family::Separation;
                where = static_cast<long>(r);
            }
        }

        if (family == Family::None) return std::nullopt;
        Cut cut;
        cut.normal = Eigen::VectorXd::Zero(2 * k_);
        switch (family) {
            case Family::Control: {
                const Vec2 c = face_normal(face);
                cut.normal(2 * where) = c.x();
                cut.normal(2 * where + 1) = c.y();
                cut.bound = u_face_;
                cut.key = where * sides_ + face;
                break;
            }
            case Family::Speed: {
                const Vec2 c = face_normal(face);
                for (long j = 0; j < where; ++j) {
                    cut.normal(2 * j) = delta_ * c.x();
                    cut.normal(2 * j + 1) = delta_ * c.y();
                }
                cut.bound = v_face_ - c.dot(v0_);
                cut.key = (k_ + where) * sides_ + face;
                break;
            }
            case Family::Separation: {
                const auto& row = rows_[where];
                for (long j = 0; j < row.step; ++j) {
                    const double w = weight(row.step, j);
                    cut.normal(2 * j) = -w * row.normal.x();
                    cut.normal(2 * j + 1) = -w * row.normal.y();
                }
                const Vec2 drift = p0_ + v0_ * (delta_ * static_cast<double>(row.step));
                cut.bound = row.normal.dot(drift) - row.normal.dot(row.other) - sep_;
                cut.key = 2 * k_ * sides_ + where;
                break;
            }
            case Family::None:
                break;
        }
        return cut;
    }

    /// Obstacle behind a separation row key, if the key is one.
    std::optional<AgentId> obstacle_of(long key) const {
        const long first = 2 * k_ * sides_;
        if (key < first || key - first >= static_cast<long>(rows_.size())) return std::nullopt;
        return rows_[key - first].obstacle;
    }

    // Influence of u_j on p_k.
    double weight(long k, long j) const {
        return (static_cast<double>(k - j) - 0.5) * delta_ * delta_;
    }

private:
    static Vec2 control(const Eigen::VectorXd& x, long k) { return {x(2 * k), x(2 * k + 1)}; }

    Vec2 face_normal(int m) const {
        const double th = 2.0 * std::numbers::pi * m / sides_;
        return {std::cos(th), std::sin(th)};
    }

    int nearest_face(const Vec2& w) const {
        const double th = std::atan2(w.y(), w.x());
        const long m = std::lround(th / (2.0 * std::numbers::pi / sides_));
        return static_cast<int>(((m % sides_) + sides_) % sides_);
    }

    long k_;
    double delta_;
    Vec2 p0_, v0_;
    int sides_;
    double sep_;
    double u_face_ = 0.0;
    double v_face_ = 0.0;
    std::vector<SeparationRow> rows_;
    std::vector<double> pos_weight_norm_;
};

struct Clearance {
    double margin = kInfinity;  // min distance minus required separation
    std::optional<AgentId> blocker;
};

Clearance clearance(const std::vector<Vec2>& path, const std::vector<double>& times,
                    const std::vector<Obstacle>& obstacles, double sep) {
    Clearance c;
    for (const auto& o : obstacles) {
        for (std::size_t k = 1; k < times.size(); ++k) {
            if (times[k] < o.from - kTimeTol || times[k] > o.until + kTimeTol) continue;
            const double m = (path[k] - o.position(times[k])).norm() - sep;
            if (m < c.margin) {
                c.margin = m;
                c.blocker = o.id;
            }
        }
    }
    return c;
}

// Obstacles in `flipped` are passed on the side opposite to the one the
// reference path suggests.
std::vector<SeparationRow> linearize(const std::vector<Vec2>& ref, const std::vector<double>& times,
                                     const std::vector<Obstacle>& obstacles, double sep,
                                     double margin, const std::set<AgentId>& flipped) {
    std::vector<SeparationRow> rows;
    const std::size_t n = times.size();
    for (const auto& o : obstacles) {
        std::vector<Vec2> q(n, Vec2::Zero());
        std::vector<char> live(n, 0);
        double closest = kInfinity;
        std::size_t k_star = 0;
        for (std::size_t k = 1; k < n; ++k) {
            if (times[k] < o.from - kTimeTol || times[k] > o.until + kTimeTol) continue;
            live[k] = 1;
            q[k] = o.position(times[k]);
            const double d = (ref[k] - q[k]).norm();
            if (d < closest) {
                closest = d;
                k_star = k;
            }
        }
        const bool flip = flipped.contains(o.id);
        if (closest >= sep + margin && !flip) continue;

        // When the reference path already collides, the per-point normals
        // flip sides across the encounter. Instead pick a passing side s
        // across the relative motion m and bend every normal towards it, as
        // if the reference were pushed at least `sep` onto that side.
        std::optional<std::pair<Vec2, Vec2>> frame;  // (m, s)
        if (closest < sep || flip) {
            const Vec2 d = ref[k_star] - q[k_star];
            const std::size_t a = k_star > 1 ? k_star - 1 : k_star;
            const std::size_t b = std::min(k_star + 1, n - 1);
            const Vec2 rel = (ref[b] - ref[a]) - (q[b] - q[a]);
            Vec2 m, side;
            if (rel.norm() > 1e-9) {
                m = rel.normalized();
                side = rotate_left(m);
                if (d.dot(side) < 0.0) side = -side;
            } else {
                side = d.norm() > 1e-9 ? Vec2(d.normalized()) : Vec2(0.0, 1.0);
                m = -rotate_left(side);
            }
            if (flip) side = -side;
            frame = {m, side};
        }
        for (std::size_t k = 1; k < n; ++k) {
            if (!live[k]) continue;
            const Vec2 d = ref[k] - q[k];
            if (d.norm() >= sep + margin && !flip) continue;
            SeparationRow row;
            row.step = static_cast<long>(k);
            if (frame) {
                const auto& [m, side] = *frame;
                row.normal = (d.dot(m) * m + std::max(d.dot(side), sep) * side).normalized();
            } else {
                row.normal = d.normalized();
            }
            row.other = q[k];
            row.obstacle = o.id;
            rows.push_back(row);
        }
    }
    return rows;
}

bool analytic_admissible(const Trajectory& traj, const std::vector<double>& times,
                         const std::vector<Obstacle>& obstacles, const TrajectoryOptions& opt) {
    const double slack = 1.0 + 1e-12;
    if (traj.sample(traj.t0()).control.norm() > opt.u_max * slack) return false;
    if (traj.sample(traj.tf()).control.norm() > opt.u_max * slack) return false;
    std::vector<Vec2> path(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto s = traj.sample(times[k]);
        path[k] = s.state.position;
        if (k > 0 && k + 1 < times.size() && s.state.velocity.norm() > opt.v_max * slack) {
            return false;
        }
    }
    return clearance(path, times, obstacles, opt.separation()).margin >= 0.0;
}

// Without `pf` only the terminal velocity is fixed.
Trajectory solve_with_buffer(AgentId agent, const AgentState& start, double t0, double tf,
                             const std::optional<Vec2>& pf, const Vec2& vf,
                             const std::vector<Obstacle>& obstacles,
                             const TrajectoryOptions& options) {
    const std::vector<double> times = planning_grid(t0, tf, options);
    const long steps = static_cast<long>(times.size()) - 1;
    const double delta = (tf - t0) / static_cast<double>(steps);
    const Trajectory closed =
        pf ? min_energy_unconstrained(start.position, start.velocity, *pf, vf, t0, tf, agent)
           : Trajectory::sampled(agent, t0, tf, start.position, start.velocity,
                                 std::vector<Vec2>(static_cast<std::size_t>(steps),
                                                   (vf - start.velocity) / (tf - t0)));
    if (analytic_admissible(closed, times, obstacles, options)) return closed;

    const double sep = options.separation();
    const double margin = options.activation_margin >= 0.0
                              ? options.activation_margin
                              : std::max(2.0 * options.R, 4.0 * options.v_max * delta);

    // Terminal velocity (and position) rows of the exact ZOH discretization.
    const long rows_eq = pf ? 4 : 2;
    Eigen::MatrixXd a_eq = Eigen::MatrixXd::Zero(rows_eq, 2 * steps);
    Eigen::VectorXd b_eq(rows_eq);
    const Vec2 dv = vf - start.velocity;
    for (long j = 0; j < steps; ++j) {
        a_eq(0, 2 * j) = delta;
        a_eq(1, 2 * j + 1) = delta;
        if (pf) {
            const double w = (static_cast<double>(steps - j) - 0.5) * delta * delta;
            a_eq(2, 2 * j) = w;
            a_eq(3, 2 * j + 1) = w;
        }
    }
    b_eq(0) = dv.x();
    b_eq(1) = dv.y();
    if (pf) {
        const Vec2 dp = *pf - start.position - start.velocity * (tf - t0);
        b_eq(2) = dp.x();
        b_eq(3) = dp.y();
    }

    std::vector<Vec2> closed_path(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        closed_path[k] = closed.sample(times[k]).state.position;
    }

    std::optional<Trajectory> best;
    double best_energy = kInfinity;
    Clearance last;
    std::set<AgentId> flipped;
    // An infeasible linearization is retried with the blocking obstacle
    // passed on its other side.
    for (int attempt = 0; attempt <= kMaxFlips && !best; ++attempt) {
        std::vector<Vec2> ref = closed_path;
        bool retry = false;
        for (int pass = 1; pass <= options.max_passes; ++pass) {
            auto rows = linearize(ref, times, obstacles, sep, margin, flipped);
            const bool has_rows = !rows.empty();
            TrajectoryCuts cuts(steps, delta, start.position, start.velocity, options,
                                std::move(rows));
            QpResult qp;
            try {
                qp = solve_least_norm_qp(a_eq, b_eq, cuts);
            } catch (const QpInfeasible& e) {
                if (best) break;
                std::optional<AgentId> blocker;
                for (long key : e.keys()) {
                    if ((blocker = cuts.obstacle_of(key))) break;
                }
                if (!blocker) blocker = clearance(ref, times, obstacles, sep).blocker;
                if (blocker && !flipped.contains(*blocker) && attempt < kMaxFlips) {
                    flipped.insert(*blocker);
                    retry = true;
                    break;
                }
                if (spdlog::should_log(spdlog::level::trace)) {
                    spdlog::trace("agent {} infeasible on [{}, {}]: p0=({}, {}) v0=({}, {})",
                                  agent, t0, tf, start.position.x(), start.position.y(),
                                  start.velocity.x(), start.velocity.y());
                    for (const auto& o : obstacles) {
                        for (std::size_t k = 0; k < std::min<std::size_t>(times.size(), 12); ++k) {
                            if (times[k] < o.from || times[k] > o.until) continue;
                            const Vec2 q = o.position(times[k]);
                            spdlog::trace("  obstacle {} t={:.3f} q=({:.3f}, {:.3f}) ref=({:.3f}, {:.3f}) d={:.3f}",
                                          o.id, times[k], q.x(), q.y(), ref[k].x(), ref[k].y(),
                                          (q - ref[k]).norm());
                        }
                    }
                    for (long key : e.keys()) spdlog::trace("  key {}", key);
                }
                throw TrajectoryInfeasible(agent, blocker, e.what());
            }
            std::vector<Vec2> controls(static_cast<std::size_t>(steps));
            for (long k = 0; k < steps; ++k) controls[k] = {qp.x(2 * k), qp.x(2 * k + 1)};
            Trajectory traj = Trajectory::sampled(agent, t0, tf, start.position, start.velocity,
                                                  std::move(controls));
            ref = traj.grid_positions();
            last = clearance(ref, times, obstacles, sep);
            spdlog::trace("agent {} pass {}: {} QP iterations, {} active rows, clearance {}",
                          agent, pass, qp.iterations, qp.active_inequalities, last.margin);
            if (last.margin < -1e-9) continue;

            const double e = trajectory_energy(traj);
            const bool converged = best && e >= best_energy * (1.0 - 1e-6);
            if (e < best_energy) {
                best_energy = e;
                best = std::move(traj);
            }
            if (converged || !has_rows) break;
        }
        if (!retry) break;
    }
    if (!best) {
        throw TrajectoryInfeasible(
            agent, last.blocker,
            fmt::format("separation still short by {} m after {} passes", -last.margin,
                        options.max_passes));
    }
    return *best;
}

}  // namespace

namespace {

Trajectory solve_relaxing(AgentId agent, const AgentState& start, double t0, double tf,
                          const std::optional<Vec2>& pf, const Vec2& vf,
                          const std::vector<Obstacle>& obstacles,
                          const TrajectoryOptions& options) {
    if (!(tf > t0 + kTimeTol)) {
        throw DegenerateHorizon(
            fmt::format("agent {} deadline {} is not after the planning time {}", agent, tf, t0));
    }
    // The buffer above 2R is given up gradually before declaring failure;
    // this only happens when a neighbor is already closer than the full
    // separation.
    const double full = options.separation() - 2.0 * options.R;
    TrajectoryOptions relaxed = options;
    for (double scale : kBufferScales) {
        relaxed.buffer = full * scale;
        try {
            return solve_with_buffer(agent, start, t0, tf, pf, vf, obstacles, relaxed);
        } catch (const TrajectoryInfeasible& e) {
            if (scale == kBufferScales.back()) throw;
            spdlog::debug("agent {}: {}; shrinking separation buffer", agent, e.what());
        }
    }
    throw TrajectoryError("unreachable");
}

}  // namespace

Trajectory solve_single(AgentId agent, const AgentState& start, double t0, double tf,
                        const Vec2& pf, const Vec2& vf, const std::vector<Obstacle>& obstacles,
                        const TrajectoryOptions& options) {
    return solve_relaxing(agent, start, t0, tf, pf, vf, obstacles, options);
}

Trajectory solve_evasive(AgentId agent, const AgentState& start, double t0, double tf,
                         const Vec2& vf, const std::vector<Obstacle>& obstacles,
                         const TrajectoryOptions& options) {
    return solve_relaxing(agent, start, t0, tf, std::nullopt, vf, obstacles, options);
}

double braking_time(const AgentState& s, const TrajectoryOptions& options) {
    const double decel = options.u_max * std::cos(std::numbers::pi / options.polygon_sides);
    return s.velocity.norm() / decel;
}

Vec2 braking_position(const AgentState& s, double t0, double t, const TrajectoryOptions& options) {
    const double speed = s.velocity.norm();
    if (speed == 0.0) return s.position;
    const double decel = options.u_max * std::cos(std::numbers::pi / options.polygon_sides);
    const double tau = std::clamp(t - t0, 0.0, speed / decel);
    return s.position + s.velocity * tau - s.velocity / speed * (0.5 * decel * tau * tau);
}

Trajectory braking_trajectory(AgentId agent, const AgentState& s, double t0,
                              const TrajectoryOptions& options) {
    const double decel = options.u_max * std::cos(std::numbers::pi / options.polygon_sides);
    const double step = options.substep;
    const auto steps = static_cast<std::size_t>(
        std::ceil((braking_time(s, options) + options.yield_window) / step - 1e-9));
    std::vector<Vec2> controls;
    controls.reserve(std::max<std::size_t>(steps, 1));
    double speed = s.velocity.norm();
    const Vec2 dir = speed > 0.0 ? Vec2(s.velocity / speed) : Vec2::Zero();
    for (std::size_t k = 0; k < std::max<std::size_t>(steps, 1); ++k) {
        const double u = std::min(decel, speed / step);
        controls.push_back(-dir * u);
        speed = std::max(0.0, speed - u * step);
    }
    const double tf = t0 + step * static_cast<double>(controls.size());
    return Trajectory::sampled(agent, t0, tf, s.position, s.velocity, std::move(controls));
}

TrajectoryBundle solve_constrained(const LocalView& view, const AssignmentState& assignment,
                                   const std::vector<AgentId>& priorities,
                                   const TrajectoryOptions& options,
                                   const std::map<AgentId, Trajectory>& pinned) {
    TrajectoryBundle bundle;
    bundle.owner = view.owner;
    const double now = view.now;

    auto goal_of = [&](AgentId k) -> const GoalSpec& {
        const auto& a = assignment.agents.at(k);
        if (!a.goal) throw TrajectoryError(fmt::format("agent {} has no prescribed goal", k));
        return find_goal(view.goals, *a.goal);
    };

    std::map<AgentId, Trajectory>& planned = bundle.trajectories;
    for (const auto& [k, st] : view.neighbor_states) {
        if (auto p = pinned.find(k); p != pinned.end()) {
            planned.emplace(k, p->second);
        } else if (auto l = view.locked_goals.find(k); l != view.locked_goals.end()) {
            planned.emplace(k, Trajectory::tracking(k, now, st.position,
                                                    find_goal(view.goals, l->second)));
        } else if (!(assignment.agents.at(k).deadline > now + kTimeTol)) {
            throw DegenerateHorizon(fmt::format("agent {} deadline {} is not after now={}", k,
                                                assignment.agents.at(k).deadline, now));
        }
    }

    for (AgentId m : priorities) {
        if (!view.neighbor_states.contains(m) || planned.contains(m)) continue;
        std::vector<Obstacle> obstacles;
        std::vector<Obstacle> courtesy;  // braking paths of members planning later
        for (const auto& [k, st] : view.neighbor_states) {
            if (k == m) continue;
            if (auto p = planned.find(k); p != planned.end()) {
                const Trajectory* traj = &p->second;
                obstacles.push_back({k, [traj](double t) { return traj->predict_position(t); },
                                     now, kInfinity});
            } else {
                // Not yet planned: it can always brake, and it ends on its goal.
                const double deadline = assignment.agents.at(k).deadline;
                const double hold = now + braking_time(st, options) + options.yield_window;
                courtesy.push_back(
                    {k, [st, now, options](double t) {
                         return braking_position(st, now, t, options);
                     },
                     now, std::min(hold, deadline)});
                const GoalSpec g = goal_of(k);
                obstacles.push_back(
                    {k, [g](double t) { return goal_position(g, t); }, deadline, kInfinity});
            }
        }
        const GoalSpec& g = goal_of(m);
        const double deadline = assignment.agents.at(m).deadline;
        auto solve = [&](const std::vector<Obstacle>& obs) {
            if (options.evasive && m == view.owner) {
                const double end = now + options.evasive_horizon;
                return solve_evasive(m, view.neighbor_states.at(m), now, end,
                                     goal_velocity(g, end), obs, options);
            }
            return solve_single(m, view.neighbor_states.at(m), now, deadline,
                                goal_position(g, deadline), goal_velocity(g, deadline), obs,
                                options);
        };
        std::vector<Obstacle> all = obstacles;
        all.insert(all.end(), courtesy.begin(), courtesy.end());
        std::optional<Trajectory> found;
        try {
            try {
                found = solve(all);
            } catch (const TrajectoryInfeasible&) {
                // The braking allowance is a courtesy to lower-priority members,
                // which keep clear of this plan when their turn comes.
                if (courtesy.empty()) throw;
                found = solve(obstacles);
            }
        } catch (const TrajectoryInfeasible& e) {
            // Another member's prediction failing is no reason to fail the
            // owner; later members treat it as unplanned.
            if (m == view.owner) throw;
            spdlog::debug("agent {} skips predicting agent {}: {}", view.owner, m, e.what());
            continue;
        }
        Trajectory traj = std::move(*found);
        traj.attach_goal(g);
        planned.emplace(m, std::move(traj));
        if (options.owner_only && m == view.owner) break;
    }
    if (!planned.contains(view.owner)) {
        throw TrajectoryError(fmt::format("owner {} missing from priority order", view.owner));
    }
    return bundle;
}

}  // namespace swarmform
