#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "gigwms/config.hpp"
#include "gigwms/plant.hpp"
#include "gigwms/worker_model.hpp"

namespace gigwms {

/// Dense LP in the form: minimize c'x subject to A x <= b, x >= 0.
struct LinearProgram {
    std::vector<double> c;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;

    int num_vars() const { return static_cast<int>(c.size()); }
    int num_rows() const { return static_cast<int>(rows.size()); }
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;
    double objective = 0.0;
};

/// Offer sequence over the horizon together with its total wage and the
/// epsilon the hour caps were built with.
struct OfferPlan {
    std::vector<double> hours;
    std::vector<double> wages;
    double objective = 0.0;
    double epsilon_used = 0.0;

    int horizon() const { return static_cast<int>(hours.size()); }
};

namespace detail {

constexpr double kLpTol = 1e-9;

// Tableau simplex with Bland's rule (lowest-index entering and leaving
// variable). Bland's rule is slower than Dantzig pricing but cannot cycle
// and makes the pivot sequence, and therefore the returned vertex,
// deterministic for identical input.
class SimplexTableau {
public:
    SimplexTableau(const LinearProgram& lp)
        : m_(lp.num_rows()), n_(lp.num_vars()) {
        // Columns: n structural, m slack, up to m artificial, then RHS.
        art_offset_ = n_ + m_;
        int width = n_ + m_ + m_ + 1;
        t_.assign(static_cast<size_t>(m_ + 1), std::vector<double>(static_cast<size_t>(width), 0.0));
        basis_.resize(static_cast<size_t>(m_));
        num_art_ = 0;
        for (int i = 0; i < m_; ++i) {
            const double flip = lp.rhs[static_cast<size_t>(i)] < 0.0 ? -1.0 : 1.0;
            for (int j = 0; j < n_; ++j)
                t_[static_cast<size_t>(i)][static_cast<size_t>(j)] = flip * lp.rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
            t_[static_cast<size_t>(i)][static_cast<size_t>(n_ + i)] = flip; // slack
            t_[static_cast<size_t>(i)].back() = flip * lp.rhs[static_cast<size_t>(i)];
            if (flip < 0.0) {
                t_[static_cast<size_t>(i)][static_cast<size_t>(art_offset_ + i)] = 1.0;
                basis_[static_cast<size_t>(i)] = art_offset_ + i;
                ++num_art_;
            } else {
                basis_[static_cast<size_t>(i)] = n_ + i;
            }
        }
    }

    LpSolution solve(const LinearProgram& lp) {
        if (num_art_ > 0) {
            // Phase 1: minimize the sum of artificial variables.
            set_phase1_costs();
            if (!iterate()) return {LpStatus::unbounded, {}, 0.0}; // cannot happen: phase 1 is bounded
            if (t_.back().back() < -kLpTol) return {LpStatus::infeasible, {}, 0.0};
            pivot_out_artificials();
        }
        set_costs(lp.c);
        if (!iterate()) return {LpStatus::unbounded, {}, 0.0};
        LpSolution sol;
        sol.status = LpStatus::optimal;
        sol.x.assign(static_cast<size_t>(n_), 0.0);
        for (int i = 0; i < m_; ++i) {
            if (basis_[static_cast<size_t>(i)] < n_)
                sol.x[static_cast<size_t>(basis_[static_cast<size_t>(i)])] = t_[static_cast<size_t>(i)].back();
        }
        sol.objective = 0.0;
        for (int j = 0; j < n_; ++j) sol.objective += lp.c[static_cast<size_t>(j)] * sol.x[static_cast<size_t>(j)];
        return sol;
    }

private:
    int m_, n_, art_offset_, num_art_;
    std::vector<std::vector<double>> t_; // m constraint rows + cost row
    std::vector<int> basis_;

    int width() const { return n_ + 2 * m_ + 1; }

    void set_phase1_costs() {
        auto& cost = t_.back();
        std::fill(cost.begin(), cost.end(), 0.0);
        for (int j = art_offset_; j < art_offset_ + m_; ++j) cost[static_cast<size_t>(j)] = 1.0;
        phase1_ = true;
        reduce_cost_row();
    }

    void set_costs(const std::vector<double>& c) {
        auto& cost = t_.back();
        std::fill(cost.begin(), cost.end(), 0.0);
        for (int j = 0; j < n_; ++j) cost[static_cast<size_t>(j)] = c[static_cast<size_t>(j)];
        // Artificial columns are never allowed to re-enter.
        phase1_ = false;
        reduce_cost_row();
    }

    void reduce_cost_row() {
        auto& cost = t_.back();
        for (int i = 0; i < m_; ++i) {
            const double cb = cost[static_cast<size_t>(basis_[static_cast<size_t>(i)])];
            if (cb == 0.0) continue;
            for (int j = 0; j < width(); ++j)
                cost[static_cast<size_t>(j)] -= cb * t_[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }
    }

    bool column_allowed(int j) const {
        if (j >= art_offset_) return phase1_;
        return true;
    }

    // Returns false on unboundedness.
    bool iterate() {
        for (;;) {
            const auto& cost = t_.back();
            int enter = -1;
            for (int j = 0; j < n_ + 2 * m_; ++j) {
                if (!column_allowed(j)) continue;
                if (cost[static_cast<size_t>(j)] < -kLpTol) { enter = j; break; }
            }
            if (enter < 0) return true;
            int leave = -1;
            double best_ratio = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double a = t_[static_cast<size_t>(i)][static_cast<size_t>(enter)];
                if (a > kLpTol) {
                    const double ratio = t_[static_cast<size_t>(i)].back() / a;
                    if (leave < 0 || ratio < best_ratio - kLpTol ||
                        (ratio < best_ratio + kLpTol &&
                         basis_[static_cast<size_t>(i)] < basis_[static_cast<size_t>(leave)])) {
                        leave = i;
                        best_ratio = ratio;
                    }
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
    }

    void pivot(int row, int col) {
        auto& r = t_[static_cast<size_t>(row)];
        const double p = r[static_cast<size_t>(col)];
        for (auto& v : r) v /= p;
        for (int i = 0; i <= m_; ++i) {
            if (i == row) continue;
            auto& q = t_[static_cast<size_t>(i)];
            const double f = q[static_cast<size_t>(col)];
            if (f == 0.0) continue;
            for (int j = 0; j < width(); ++j)
                q[static_cast<size_t>(j)] -= f * r[static_cast<size_t>(j)];
        }
        basis_[static_cast<size_t>(row)] = col;
    }

    // After phase 1, swap any artificial still in the basis (at zero level)
    // for a structural or slack column, or leave the degenerate row alone.
    void pivot_out_artificials() {
        for (int i = 0; i < m_; ++i) {
            if (basis_[static_cast<size_t>(i)] < art_offset_) continue;
            for (int j = 0; j < art_offset_; ++j) {
                if (std::fabs(t_[static_cast<size_t>(i)][static_cast<size_t>(j)]) > kLpTol) {
                    pivot(i, j);
                    break;
                }
            }
        }
    }

    bool phase1_ = false;
};

} // namespace detail

/// Deterministic two-phase simplex. Feasibility of returned vertices is
/// within 1e-9 on the (scaled) input data.
inline LpSolution solve_lp(const LinearProgram& lp) {
    if (lp.c.empty()) throw std::invalid_argument("solve_lp: no variables");
    for (const auto& row : lp.rows)
        if (static_cast<int>(row.size()) != lp.num_vars())
            throw std::invalid_argument("solve_lp: inconsistent row width");
    if (lp.rhs.size() != lp.rows.size())
        throw std::invalid_argument("solve_lp: rhs/rows size mismatch");
    detail::SimplexTableau tableau(lp);
    return tableau.solve(lp);
}

namespace detail {

// Wage variables are scaled to kilo-JPY inside the LP; kappa and lambda
// differ by three orders of magnitude and this keeps basis entries near 1.
constexpr double kWageScale = 1e-3;

struct Problem2Geometry {
    double hours_per_wage = 0.0;  // -lambda/kappa
    double free_hours = 0.0;      // cap at zero wage, may be negative
    double required = 0.0;        // growth-weighted reduction needed
    std::vector<double> weights;  // A^(N-1-t)
};

inline Problem2Geometry problem2_geometry(double x0, const PlantModel& model,
                                          const WorkerParams& worker, int n,
                                          const MpcConfig& cfg, double epsilon) {
    if (worker.kappa >= 0.0) throw std::invalid_argument("problem2: kappa must be negative");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("problem2: epsilon must be in (0,1)");
    cfg.validate();
    if (n < 1) throw std::invalid_argument("problem2: n must be >= 1");
    Problem2Geometry g;
    const int N = cfg.horizon;
    g.weights.resize(static_cast<size_t>(N));
    double w = 1.0;
    for (int t = N - 1; t >= 0; --t) {
        g.weights[static_cast<size_t>(t)] = w;
        w *= model.growth;
    }
    // w is now A^N.
    double inflow_sum = 0.0;
    for (double wt : g.weights) inflow_sum += wt * model.inflow;
    g.required = w * x0 + inflow_sum - cfg.x_ref;
    const double threshold = std::log(std::expm1(-std::log(epsilon) / n));
    g.hours_per_wage = -worker.lambda / worker.kappa;
    g.free_hours = -(worker.nu - threshold) / worker.kappa;
    return g;
}

} // namespace detail

/// Deterministic LP for one worker and one tightening level epsilon:
/// minimize total wages subject to the terminal workload constraint (all
/// offers assumed accepted) and the per-step hour caps
/// u(t) <= (-lambda/kappa) p(t) + c0. Variables are ordered wages first,
/// then hours; wages are expressed in kilo-JPY.
inline LinearProgram build_problem2(double x0, const PlantModel& model, const WorkerParams& worker,
                                    int n, const MpcConfig& cfg, double epsilon) {
    const auto g = detail::problem2_geometry(x0, model, worker, n, cfg, epsilon);
    const int N = cfg.horizon;
    LinearProgram lp;
    lp.c.assign(static_cast<size_t>(2 * N), 0.0);
    for (int t = 0; t < N; ++t) lp.c[static_cast<size_t>(t)] = 1.0 / detail::kWageScale;

    // Terminal: -sum_t w_t u_t <= x_ref - A^N x0 - sum w_t d.
    std::vector<double> terminal(static_cast<size_t>(2 * N), 0.0);
    for (int t = 0; t < N; ++t) terminal[static_cast<size_t>(N + t)] = -g.weights[static_cast<size_t>(t)];
    lp.rows.push_back(std::move(terminal));
    lp.rhs.push_back(-g.required);

    // Coupling per step: u_t - (hours_per_wage / kWageScale) p_t <= free_hours.
    for (int t = 0; t < N; ++t) {
        std::vector<double> row(static_cast<size_t>(2 * N), 0.0);
        row[static_cast<size_t>(N + t)] = 1.0;
        row[static_cast<size_t>(t)] = -g.hours_per_wage / detail::kWageScale;
        lp.rows.push_back(std::move(row));
        lp.rhs.push_back(g.free_hours);
    }
    return lp;
}

/// Plain-text dump of the LP for debugging.
inline std::string to_tableau_string(const LinearProgram& lp) {
    std::string out = "minimize:";
    char buf[64];
    for (double v : lp.c) {
        std::snprintf(buf, sizeof buf, " %.6g", v);
        out += buf;
    }
    out += "\nsubject to (rows: coeffs <= rhs):\n";
    for (int i = 0; i < lp.num_rows(); ++i) {
        for (double v : lp.rows[static_cast<size_t>(i)]) {
            std::snprintf(buf, sizeof buf, " %10.6g", v);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "  <= %.6g\n", lp.rhs[static_cast<size_t>(i)]);
        out += buf;
    }
    out += "x >= 0\n";
    return out;
}

namespace detail {

// Canonical representative of the optimal face.
//
// With growth factor exactly 1 every time step trades reduction for wages at
// the same rate, so the LP optimum is massively degenerate. We return the
// plan that reaches the reference at the earliest step of the horizon and
// then holds the workload level (hours = inflow), which is the plan the
// receding-horizon loop would actually realize step by step. Steps whose
// hours fall below the zero-wage cap hand the unused free capacity to later
// steps so the wage total stays at the LP optimum.
inline OfferPlan canonical_plan_unit_growth(double x0, const PlantModel& model,
                                            const Problem2Geometry& g, const MpcConfig& cfg,
                                            double epsilon) {
    const int N = cfg.horizon;
    OfferPlan plan;
    plan.epsilon_used = epsilon;
    plan.hours.assign(static_cast<size_t>(N), 0.0);
    plan.wages.assign(static_cast<size_t>(N), 0.0);
    double x = x0;
    for (int t = 0; t < N; ++t) {
        const double need = x + model.inflow - cfg.x_ref;
        plan.hours[static_cast<size_t>(t)] = need > 0.0 ? need : 0.0;
        x = x + model.inflow - plan.hours[static_cast<size_t>(t)];
    }
    if (g.free_hours > 0.0) {
        // Shift hours into unused free capacity so every step exhausts its
        // zero-wage cap before any step pays. Receivers are filled earliest
        // first, donors drained latest first. Only the wage total changes;
        // the growth factor is 1 so the terminal state is untouched.
        for (int t = 0; t < N; ++t) {
            double deficit = g.free_hours - plan.hours[static_cast<size_t>(t)];
            if (deficit <= 0.0) continue;
            for (int s = N - 1; s >= 0 && deficit > 0.0; --s) {
                if (s == t) continue;
                const double surplus = plan.hours[static_cast<size_t>(s)] - g.free_hours;
                if (surplus <= 0.0) continue;
                const double moved = std::min(surplus, deficit);
                plan.hours[static_cast<size_t>(s)] -= moved;
                plan.hours[static_cast<size_t>(t)] += moved;
                deficit -= moved;
            }
        }
    }
    plan.objective = 0.0;
    for (int t = 0; t < N; ++t) {
        const double paid = plan.hours[static_cast<size_t>(t)] - g.free_hours;
        plan.wages[static_cast<size_t>(t)] = paid > 0.0 ? paid / g.hours_per_wage : 0.0;
        plan.objective += plan.wages[static_cast<size_t>(t)];
    }
    return plan;
}

// Zero-wage optima for growth > 1: spend the free per-step capacity
// earliest-first until the required reduction is covered.
inline OfferPlan canonical_plan_free_only(const Problem2Geometry& g, const MpcConfig& cfg,
                                          double epsilon) {
    const int N = cfg.horizon;
    OfferPlan plan;
    plan.epsilon_used = epsilon;
    plan.hours.assign(static_cast<size_t>(N), 0.0);
    plan.wages.assign(static_cast<size_t>(N), 0.0);
    double remaining = g.required;
    for (int t = 0; t < N && remaining > 0.0; ++t) {
        const double w = g.weights[static_cast<size_t>(t)];
        const double take = std::min(g.free_hours, remaining / w);
        plan.hours[static_cast<size_t>(t)] = take;
        remaining -= w * take;
    }
    return plan;
}

} // namespace detail

/// Build and solve the per-worker deterministic problem, then canonicalize
/// degenerate optima (growth factor exactly 1). The returned plan satisfies
/// the terminal constraint with all offers accepted and every hour cap, and
/// its wage total matches the LP optimum.
inline OfferPlan solve_problem2(double x0, const PlantModel& model, const WorkerParams& worker,
                                int n, const MpcConfig& cfg, double epsilon) {
    const auto g = detail::problem2_geometry(x0, model, worker, n, cfg, epsilon);
    const int N = cfg.horizon;
    const LinearProgram lp = build_problem2(x0, model, worker, n, cfg, epsilon);
    const LpSolution sol = solve_lp(lp);
    if (sol.status == LpStatus::infeasible) throw std::runtime_error("solve_problem2: infeasible");
    if (sol.status == LpStatus::unbounded) throw std::runtime_error("solve_problem2: unbounded");

    OfferPlan plan;
    if (g.required <= 0.0) {
        plan.hours.assign(static_cast<size_t>(N), 0.0);
        plan.wages.assign(static_cast<size_t>(N), 0.0);
        plan.objective = 0.0;
        plan.epsilon_used = epsilon;
        if (g.free_hours < 0.0) {
            // A negative zero-wage cap forces a base wage at every step even
            // when no hours are requested.
            for (int t = 0; t < N; ++t) {
                plan.wages[static_cast<size_t>(t)] = -g.free_hours / g.hours_per_wage;
                plan.objective += plan.wages[static_cast<size_t>(t)];
            }
        }
        const double zscale = std::max(1.0, std::fabs(sol.objective));
        if (std::fabs(plan.objective - sol.objective) > 1e-6 * zscale)
            throw std::logic_error("solve_problem2: canonical plan diverged from LP optimum");
        return plan;
    }
    if (model.growth == 1.0) {
        plan = detail::canonical_plan_unit_growth(x0, model, g, cfg, epsilon);
    } else if (sol.objective <= detail::kLpTol && g.free_hours > 0.0) {
        plan = detail::canonical_plan_free_only(g, cfg, epsilon);
    } else {
        plan.hours.assign(sol.x.begin() + N, sol.x.end());
        plan.wages.resize(static_cast<size_t>(N));
        plan.objective = 0.0;
        for (int t = 0; t < N; ++t) {
            plan.wages[static_cast<size_t>(t)] = sol.x[static_cast<size_t>(t)] / detail::kWageScale;
            plan.objective += plan.wages[static_cast<size_t>(t)];
        }
        plan.epsilon_used = epsilon;
    }
    const double scale = std::max(1.0, std::fabs(sol.objective));
    if (std::fabs(plan.objective - sol.objective) > 1e-6 * scale)
        throw std::logic_error("solve_problem2: canonical plan diverged from LP optimum");
    return plan;
}

} // namespace gigwms
