#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gigwms/rng.hpp"

namespace gigwms {

/// Utility coefficients of a single gig-worker: score = kappa*hours +
/// lambda*wage + nu. kappa < 0 (longer tasks are less attractive),
/// lambda > 0 (higher pay is more attractive).
struct WorkerParams {
    double kappa = 0.0;  // per hour
    double lambda = 0.0; // per JPY
    double nu = 0.0;     // individual offset
};

/// A group of workers sharing kappa/lambda; only the offset nu varies.
struct WorkerPopulation {
    double kappa = 0.0;
    double lambda = 0.0;
    std::vector<double> nu;

    int size() const { return static_cast<int>(nu.size()); }

    WorkerParams worker(int i) const {
        return WorkerParams{kappa, lambda, nu.at(static_cast<size_t>(i))};
    }
};

/// A single task offer: requested hours and total wage (JPY).
struct TaskOffer {
    double hours = 0.0;
    double wage = 0.0;
};

/// Overflow-free logistic function, exact for |v| up to DBL_MAX.
inline double sigmoid(double v) {
    if (v >= 0.0) {
        const double e = std::exp(-v);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

/// log(1 + exp(v)) without overflow.
inline double softplus(double v) {
    if (v > 0.0) return v + std::log1p(std::exp(-v));
    return std::log1p(std::exp(v));
}

inline double utility(const TaskOffer& offer, const WorkerParams& w) {
    return w.kappa * offer.hours + w.lambda * offer.wage + w.nu;
}

/// Probability that one worker accepts the offer.
inline double accept_prob(const TaskOffer& offer, const WorkerParams& w) {
    return sigmoid(utility(offer, w));
}

/// Probability that at least one worker in the group accepts:
/// 1 - prod_i 1/(1 + exp(V_i)). Evaluated in log space so tiny group
/// rejection probabilities (n large) keep full precision.
inline double group_accept_prob(const TaskOffer& offer, const WorkerPopulation& pop) {
    if (pop.nu.empty()) throw std::invalid_argument("group_accept_prob: empty population");
    if (pop.nu.size() == 1) return accept_prob(offer, pop.worker(0));
    const double base = pop.kappa * offer.hours + pop.lambda * offer.wage;
    double log_reject = 0.0;
    for (double nu : pop.nu) log_reject -= softplus(base + nu);
    return -std::expm1(log_reject);
}

/// Log of the exact group rejection probability, sum_i -log(1+exp(V_i)).
inline double group_reject_log(const TaskOffer& offer, const WorkerPopulation& pop) {
    if (pop.nu.empty()) throw std::invalid_argument("group_reject_log: empty population");
    const double base = pop.kappa * offer.hours + pop.lambda * offer.wage;
    double log_reject = 0.0;
    for (double nu : pop.nu) log_reject -= softplus(base + nu);
    return log_reject;
}

/// Draw the group acceptance bit: each worker decides independently, the
/// group accepts if anyone does. Always consumes exactly n draws from the
/// stream so replays stay aligned regardless of the outcome.
inline int sample_group_acceptance(const TaskOffer& offer, const WorkerPopulation& pop,
                                   SplitMix64& rng) {
    if (pop.nu.empty()) throw std::invalid_argument("sample_group_acceptance: empty population");
    int any = 0;
    for (int i = 0; i < pop.size(); ++i) {
        const double u = rng.next_double();
        if (u < accept_prob(offer, pop.worker(i))) any = 1;
    }
    return any;
}

/// Largest task hours such that the worker's individual rejection
/// probability stays at or below epsilon^(1/n):
///   ubar(p) = -(1/kappa) * [lambda*p + nu - ln(epsilon^(-1/n) - 1)].
/// If every worker i satisfies hours <= ubar(p; nu_i), the group rejection
/// probability is at most epsilon.
inline double max_hours_bound(double wage, const WorkerParams& w, double epsilon, int n) {
    if (w.kappa >= 0.0) throw std::invalid_argument("max_hours_bound: kappa must be negative");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("max_hours_bound: epsilon must be in (0,1)");
    if (n < 1) throw std::invalid_argument("max_hours_bound: n must be >= 1");
    // epsilon^(-1/n) - 1 == expm1(-ln(epsilon)/n), accurate for large n.
    const double threshold = std::log(std::expm1(-std::log(epsilon) / n));
    return -(w.lambda * wage + w.nu - threshold) / w.kappa;
}

/// Sample a population with shared kappa/lambda and i.i.d. offsets
/// nu_i ~ Uniform[nu_mean - 100*lambda, nu_mean + 100*lambda].
inline WorkerPopulation sample_population(double kappa, double lambda, double nu_mean, int n,
                                          SplitMix64& rng) {
    if (n < 1) throw std::invalid_argument("sample_population: n must be >= 1");
    WorkerPopulation pop;
    pop.kappa = kappa;
    pop.lambda = lambda;
    pop.nu.resize(static_cast<size_t>(n));
    const double half_width = 100.0 * lambda;
    for (auto& nu : pop.nu) {
        nu = rng.next_double_in(nu_mean - half_width, nu_mean + half_width);
    }
    return pop;
}

} // namespace gigwms
