#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gigwms/config.hpp"
#include "gigwms/lp_solver.hpp"
#include "gigwms/plant.hpp"
#include "gigwms/rng.hpp"
#include "gigwms/worker_model.hpp"

namespace gigwms {

/// Result of one randomized feasibility check at iteration l: the plan is
/// accepted iff at most m_l of the M_l sampled rollouts violated the
/// terminal constraint.
struct VerificationOutcome {
    bool accepted = false;
    int iteration = 0;  // l
    long trials = 0;    // M_l
    long failures = 0;
    long level = 0;     // m_l
};

/// Riemann zeta. Closed form for alpha == 2; Euler-Maclaurin summation with
/// remainder below 1e-12 otherwise.
inline double riemann_zeta(double alpha) {
    if (alpha == 2.0) return std::numbers::pi * std::numbers::pi / 6.0;
    if (!(alpha > 1.0)) throw std::invalid_argument("riemann_zeta: alpha must be > 1");
    thread_local double cached_alpha = 0.0;
    thread_local double cached_value = 0.0;
    if (alpha == cached_alpha) return cached_value;
    constexpr int kTerms = 1024;
    double sum = 0.0;
    for (int k = kTerms; k >= 1; --k) sum += std::pow(static_cast<double>(k), -alpha);
    const double K = static_cast<double>(kTerms);
    const double tail = std::pow(K, 1.0 - alpha) / (alpha - 1.0)
                      - 0.5 * std::pow(K, -alpha)
                      + alpha / 12.0 * std::pow(K, -alpha - 1.0)
                      - alpha * (alpha + 1.0) * (alpha + 2.0) / 720.0 * std::pow(K, -alpha - 3.0);
    cached_alpha = alpha;
    cached_value = sum + tail;
    return cached_value;
}

/// Allowed failures at iteration l: m_l = floor(b*l).
inline long level_count(int l, double b) {
    if (l < 1) throw std::invalid_argument("level_count: l must be >= 1");
    if (!(b > 0.0)) throw std::invalid_argument("level_count: b must be > 0");
    return static_cast<long>(std::floor(b * static_cast<double>(l)));
}

/// Required trials at iteration l:
/// M_l = ceil( (1/eta) (m_l + t + sqrt(2 m_l t)) ), t = ln(zeta(alpha) l^alpha / delta).
inline long sample_count(int l, const VerifierConfig& cfg) {
    cfg.validate();
    const long m = level_count(l, cfg.b);
    const double t = std::log(riemann_zeta(cfg.alpha)) + cfg.alpha * std::log(static_cast<double>(l))
                   - std::log(cfg.delta);
    const double raw = (static_cast<double>(m) + t + std::sqrt(2.0 * static_cast<double>(m) * t)) / cfg.eta;
    return static_cast<long>(std::ceil(raw));
}

/// One sampled rollout of the plan: draw the group acceptance bit for every
/// step of the horizon, roll the plant forward, return 1 iff the terminal
/// workload meets the target.
inline int run_trial(const OfferPlan& plan, double x0, const PlantModel& model,
                     const WorkerPopulation& pop, double x_ref, SplitMix64& rng) {
    if (plan.horizon() < 1) throw std::invalid_argument("run_trial: empty plan");
    double x = x0;
    for (int t = 0; t < plan.horizon(); ++t) {
        const TaskOffer offer{plan.hours[static_cast<size_t>(t)], plan.wages[static_cast<size_t>(t)]};
        const int beta = sample_group_acceptance(offer, pop, rng);
        x = model.growth * x - (beta ? offer.hours : 0.0) + model.inflow;
    }
    return x <= x_ref ? 1 : 0;
}

namespace detail {

// Per-(step, worker) acceptance probabilities of a plan, prescaled by 2^53
// so a raw 53-bit draw can be compared directly.
struct AcceptanceTable {
    int horizon = 0;
    int n = 0;
    std::vector<double> thr53;
    std::vector<double> hours;
};

inline AcceptanceTable build_acceptance_table(const OfferPlan& plan, const WorkerPopulation& pop) {
    AcceptanceTable tab;
    tab.horizon = plan.horizon();
    tab.n = pop.size();
    tab.hours = plan.hours;
    tab.thr53.resize(static_cast<size_t>(tab.horizon) * static_cast<size_t>(tab.n));
    for (int t = 0; t < tab.horizon; ++t) {
        const TaskOffer offer{plan.hours[static_cast<size_t>(t)], plan.wages[static_cast<size_t>(t)]};
        for (int i = 0; i < tab.n; ++i) {
            tab.thr53[static_cast<size_t>(t) * static_cast<size_t>(tab.n) + static_cast<size_t>(i)] =
                std::ldexp(accept_prob(offer, pop.worker(i)), 53);
        }
    }
    return tab;
}

// Draw-for-draw identical to run_trial/sample_group_acceptance for the same
// seed: the per-worker comparison u < prob is evaluated as a 53-bit integer
// against the prescaled threshold, and once the group outcome is decided the
// remaining draws of the step are skipped in O(1).
inline int run_trial_fast(const AcceptanceTable& tab, double x0, const PlantModel& model,
                          double x_ref, SplitMix64& rng) {
    double x = x0;
    for (int t = 0; t < tab.horizon; ++t) {
        const double* thr = tab.thr53.data() + static_cast<size_t>(t) * static_cast<size_t>(tab.n);
        int any = 0;
        int consumed = 0;
        while (consumed < tab.n) {
            const double y = static_cast<double>(rng.next() >> 11);
            ++consumed;
            if (y < thr[consumed - 1]) { any = 1; break; }
        }
        rng.skip(static_cast<uint64_t>(tab.n - consumed));
        x = model.growth * x - (any ? tab.hours[static_cast<size_t>(t)] : 0.0) + model.inflow;
    }
    return x <= x_ref ? 1 : 0;
}

} // namespace detail

struct VerifyOptions {
    int threads = 1;
    bool early_exit = false; // stop once the failure budget is exhausted
};

/// Sample-based feasibility check of a candidate plan at iteration l. Trial
/// seeds derive from `seed` by trial index, so the failure count is
/// independent of execution order and the outcome is reproducible.
inline VerificationOutcome verify(const OfferPlan& plan, int l, double x0, const PlantModel& model,
                                  const WorkerPopulation& pop, double x_ref,
                                  const VerifierConfig& cfg, uint64_t seed,
                                  const VerifyOptions& opts = {}) {
    if (l < 1) throw std::invalid_argument("verify: l must be >= 1");
    if (pop.size() < 1) throw std::invalid_argument("verify: empty population");
    const long m = level_count(l, cfg.b);
    const long M = sample_count(l, cfg);
    const auto tab = detail::build_acceptance_table(plan, pop);

    long failures = 0;
    const int threads = opts.threads > 1 ? opts.threads : 1;
    if (threads == 1) {
        for (long j = 0; j < M; ++j) {
            SplitMix64 rng(derive_seed(seed, static_cast<uint64_t>(j)));
            failures += 1 - detail::run_trial_fast(tab, x0, model, x_ref, rng);
            if (opts.early_exit && failures > m) break;
        }
    } else {
        std::vector<long> partial(static_cast<size_t>(threads), 0);
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                long local = 0;
                for (long j = w; j < M; j += threads) {
                    SplitMix64 rng(derive_seed(seed, static_cast<uint64_t>(j)));
                    local += 1 - detail::run_trial_fast(tab, x0, model, x_ref, rng);
                }
                partial[static_cast<size_t>(w)] = local;
            });
        }
        for (auto& th : pool) th.join();
        for (long p : partial) failures += p;
    }

    VerificationOutcome out;
    out.iteration = l;
    out.trials = M;
    out.level = m;
    out.failures = failures;
    out.accepted = failures <= m;
    return out;
}

} // namespace gigwms
