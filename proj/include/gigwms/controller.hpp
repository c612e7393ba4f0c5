#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gigwms/config.hpp"
#include "gigwms/lp_solver.hpp"
#include "gigwms/plant.hpp"
#include "gigwms/rng.hpp"
#include "gigwms/verifier.hpp"
#include "gigwms/worker_model.hpp"

namespace gigwms {

namespace detail {
// Seed-derivation tags; values are arbitrary but fixed for reproducibility.
constexpr uint64_t kTagVerify = 0xA1;
constexpr uint64_t kTagWorker = 0xA2;
constexpr uint64_t kTagPlanStep = 0xA3;
constexpr uint64_t kTagBeta = 0xA4;
constexpr uint64_t kTagPopulation = 0xA5;
constexpr uint64_t kTagRun = 0xA6;
} // namespace detail

/// First-step offer to apply now, plus the plan and verification evidence it
/// came from. epsilon_final = gamma^l_star * epsilon0.
struct ControlDecision {
    TaskOffer offer;
    OfferPlan plan;
    std::optional<VerificationOutcome> outcome; // empty for the baseline
    int worker_index = 0;
    double epsilon_final = 0.0;
    int l_star = 0; // number of epsilon reductions before acceptance
};

class PlanningError : public std::runtime_error {
public:
    PlanningError(std::string msg, int worker_index, std::optional<VerificationOutcome> last)
        : std::runtime_error(std::move(msg)), worker_index(worker_index), last_outcome(last) {}

    int worker_index;
    std::optional<VerificationOutcome> last_outcome;
};

struct TightenRecord {
    int iteration = 0; // verification index l
    double epsilon = 0.0;
    double objective = 0.0;
    VerificationOutcome outcome;
};

/// Solve-verify-tighten loop for one worker's candidate: solve the
/// deterministic problem at epsilon, verify it against the full group, and
/// shrink epsilon by gamma until the verifier accepts. The first
/// verification runs at iteration l = 1; the schedule of Eqs. m_l/M_l is
/// undefined at l = 0.
inline ControlDecision plan_verified(double x0, const PlantModel& model, const WorkerPopulation& pop,
                                     const MpcConfig& cfg, int worker_index, uint64_t seed,
                                     std::vector<TightenRecord>* trace = nullptr, int threads = 1) {
    cfg.validate();
    if (worker_index < 0 || worker_index >= pop.size())
        throw std::invalid_argument("plan_verified: worker_index out of range");
    const WorkerParams worker = pop.worker(worker_index);
    double epsilon = cfg.epsilon0;
    for (int tightenings = 0;; ++tightenings) {
        const OfferPlan plan = solve_problem2(x0, model, worker, pop.size(), cfg, epsilon);
        const int l = tightenings + 1;
        // Early exit is decision-equivalent to the full evaluation; accepted
        // plans always carry a complete trial count.
        const VerificationOutcome outcome =
            verify(plan, l, x0, model, pop, cfg.x_ref, cfg.verifier,
                   derive_seed(seed, detail::kTagVerify, static_cast<uint64_t>(l)),
                   VerifyOptions{threads, true});
        if (trace) trace->push_back({l, epsilon, plan.objective, outcome});
        if (outcome.accepted) {
            ControlDecision d;
            d.offer = TaskOffer{plan.hours.front(), plan.wages.front()};
            d.plan = plan;
            d.outcome = outcome;
            d.worker_index = worker_index;
            d.epsilon_final = epsilon;
            d.l_star = tightenings;
            return d;
        }
        if (tightenings >= cfg.max_tighten_iters) {
            throw PlanningError("plan_verified: worker " + std::to_string(worker_index) +
                                    " exhausted " + std::to_string(cfg.max_tighten_iters) +
                                    " tightening iterations (last failures " +
                                    std::to_string(outcome.failures) + "/" +
                                    std::to_string(outcome.trials) + ")",
                                worker_index, outcome);
        }
        epsilon *= cfg.gamma;
    }
}

/// Verified candidate per worker, then the cheapest wage total wins. Ties go
/// to the lowest worker index.
inline ControlDecision select_offer(double x0, const PlantModel& model, const WorkerPopulation& pop,
                                    const MpcConfig& cfg, uint64_t seed, int threads = 1) {
    if (pop.size() < 1) throw std::invalid_argument("select_offer: empty population");
    std::optional<ControlDecision> best;
    std::optional<PlanningError> last_error;
    for (int i = 0; i < pop.size(); ++i) {
        try {
            ControlDecision d = plan_verified(x0, model, pop, cfg, i,
                                              derive_seed(seed, detail::kTagWorker, static_cast<uint64_t>(i)),
                                              nullptr, threads);
            if (!best || d.plan.objective < best->plan.objective) best = std::move(d);
        } catch (const PlanningError& e) {
            last_error = e;
        }
    }
    if (!best) throw *last_error;
    return *best;
}

/// Unverified controller: one deterministic solve per worker at epsilon0,
/// minimum wage selected, no feasibility check.
inline ControlDecision plan_baseline(double x0, const PlantModel& model, const WorkerPopulation& pop,
                                     const MpcConfig& cfg) {
    cfg.validate();
    if (pop.size() < 1) throw std::invalid_argument("plan_baseline: empty population");
    std::optional<ControlDecision> best;
    for (int i = 0; i < pop.size(); ++i) {
        OfferPlan plan = solve_problem2(x0, model, pop.worker(i), pop.size(), cfg, cfg.epsilon0);
        if (!best || plan.objective < best->plan.objective) {
            ControlDecision d;
            d.offer = TaskOffer{plan.hours.front(), plan.wages.front()};
            d.plan = std::move(plan);
            d.outcome = std::nullopt;
            d.worker_index = i;
            d.epsilon_final = cfg.epsilon0;
            d.l_star = 0;
            best = std::move(d);
        }
    }
    return *best;
}

enum class Policy { verified, baseline };

inline const char* policy_name(Policy p) { return p == Policy::verified ? "verified" : "baseline"; }

enum class BetaOverride { none, always_accept, always_reject };

struct LoopOptions {
    BetaOverride beta_override = BetaOverride::none;
    int threads = 1;
    std::span<const double> inflow_sequence{}; // per-step d(k); last value repeats
    bool stop_at_target = false;               // end the run once x <= x_ref
};

struct StepRecord {
    int k = 0;
    double x = 0.0; // state the decision was computed from
    int worker_index = 0;
    double hours = 0.0;
    double wage = 0.0;
    int beta = 0;
    double epsilon_final = 0.0;
    int l_star = 0;
    long trials = 0;
    long failures = 0;
};

struct Trajectory {
    std::vector<double> x; // x(0..K)
    std::vector<StepRecord> steps;
};

/// Receding-horizon closed loop: plan from the current state, apply only the
/// first offer, draw the group response, advance the plant. Deterministic
/// given the seed; both policies consume the same acceptance stream.
inline Trajectory run_closed_loop(double x0, const PlantModel& model, const WorkerPopulation& pop,
                                  const MpcConfig& cfg, int steps, Policy policy, uint64_t seed,
                                  const LoopOptions& opts = {}) {
    if (steps < 1) throw std::invalid_argument("run_closed_loop: steps must be >= 1");
    Trajectory traj;
    traj.x.reserve(static_cast<size_t>(steps) + 1);
    traj.x.push_back(x0);
    double x = x0;
    for (int k = 0; k < steps; ++k) {
        if (opts.stop_at_target && x <= cfg.x_ref) break;
        PlantModel step_model = model;
        if (!opts.inflow_sequence.empty()) {
            const size_t idx = std::min(static_cast<size_t>(k), opts.inflow_sequence.size() - 1);
            step_model.inflow = opts.inflow_sequence[idx];
        }
        const ControlDecision decision =
            policy == Policy::verified
                ? select_offer(x, step_model, pop, cfg,
                               derive_seed(seed, detail::kTagPlanStep, static_cast<uint64_t>(k)),
                               opts.threads)
                : plan_baseline(x, step_model, pop, cfg);

        int beta = 0;
        switch (opts.beta_override) {
        case BetaOverride::always_accept: beta = 1; break;
        case BetaOverride::always_reject: beta = 0; break;
        case BetaOverride::none: {
            SplitMix64 rng(derive_seed(seed, detail::kTagBeta, static_cast<uint64_t>(k)));
            beta = sample_group_acceptance(decision.offer, pop, rng);
            break;
        }
        }

        StepRecord rec;
        rec.k = k;
        rec.x = x;
        rec.worker_index = decision.worker_index;
        rec.hours = decision.offer.hours;
        rec.wage = decision.offer.wage;
        rec.beta = beta;
        rec.epsilon_final = decision.epsilon_final;
        rec.l_star = decision.l_star;
        rec.trials = decision.outcome ? decision.outcome->trials : 0;
        rec.failures = decision.outcome ? decision.outcome->failures : 0;
        traj.steps.push_back(rec);

        x = gigwms::step(WorkloadState{x, k}, beta ? decision.offer.hours : 0.0, step_model).x;
        traj.x.push_back(x);
    }
    return traj;
}

} // namespace gigwms
