#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gigwms/controller.hpp"
#include "support/oracles.hpp"

using namespace gigwms;

namespace {

MpcConfig table_config() {
    MpcConfig cfg;
    cfg.horizon = 3;
    cfg.x_ref = 10.0;
    cfg.eta = 0.05;
    cfg.epsilon0 = 0.01;
    cfg.gamma = 0.5;
    cfg.verifier = VerifierConfig{0.05, 1e-8, 2.0, 1.0};
    cfg.max_tighten_iters = 50;
    return cfg;
}

// Lighter verification schedule for fast unit runs.
MpcConfig small_config() {
    MpcConfig cfg = table_config();
    cfg.verifier = VerifierConfig{0.2, 1e-4, 2.0, 1.0};
    cfg.eta = 0.2;
    return cfg;
}

WorkerPopulation table_population(uint64_t seed, int n = 100) {
    SplitMix64 rng(seed);
    return sample_population(-7.253, 0.006385, -1.216, n, rng);
}

} // namespace

TEST_CASE("trivially satisfiable target accepts at zero tightenings") {
    MpcConfig cfg = small_config();
    cfg.x_ref = 1e9;
    // Offsets above the epsilon threshold keep the zero-wage cap positive,
    // so the all-zero plan is feasible and free.
    WorkerPopulation pop{-7.253, 0.006385, {2.0, 1.5, 1.8, 2.2, 1.7}};
    const auto d = plan_verified(30.0, PlantModel{1.0, 5.0}, pop, cfg, 0, 99);
    CHECK(d.l_star == 0);
    CHECK(d.epsilon_final == cfg.epsilon0);
    CHECK(d.plan.objective == 0.0);
    REQUIRE(d.outcome.has_value());
    CHECK(d.outcome->accepted);
    CHECK(d.outcome->failures == 0);
    CHECK(d.offer.hours == d.plan.hours[0]);
    CHECK(d.offer.wage == d.plan.wages[0]);
}

TEST_CASE("plan_verified terminates on the reference instance") {
    const MpcConfig cfg = table_config();
    const PlantModel model{1.0, 5.0};
    const auto pop = table_population(2);
    std::vector<TightenRecord> trace;
    const auto d = plan_verified(30.0, model, pop, cfg, 0, 7, &trace);

    REQUIRE(d.outcome.has_value());
    CHECK(d.outcome->accepted);
    CHECK(d.l_star <= cfg.max_tighten_iters);
    CHECK(d.epsilon_final == Catch::Approx(cfg.epsilon0 * std::pow(cfg.gamma, d.l_star)).epsilon(1e-12));

    // Terminal workload with every offer accepted sits at the target.
    const std::vector<int> ones(static_cast<size_t>(cfg.horizon), 1);
    CHECK(predict_terminal(30.0, d.plan.hours, ones, model) == Catch::Approx(cfg.x_ref).margin(1e-6));

    // The accepted plan's exact violation probability honors eta.
    const double violation =
        oracles::exact_violation_probability(d.plan, 30.0, model, pop, cfg.x_ref);
    CHECK(violation <= cfg.eta);

    // Tightening only ever raises the wage total.
    for (size_t i = 1; i < trace.size(); ++i) {
        CHECK(trace[i].objective >= trace[i - 1].objective - 1e-9);
        CHECK(trace[i].epsilon == Catch::Approx(trace[i - 1].epsilon * cfg.gamma));
    }
    REQUIRE(!trace.empty());
    CHECK(trace.back().outcome.accepted);
}

TEST_CASE("plan_verified throws after exhausting the tightening budget") {
    // A single worker at a loose epsilon0 rejects each binding step with
    // probability epsilon (Proposition 1 with n = 1), far above what the
    // schedule tolerates, and two tightenings are not enough to recover.
    MpcConfig cfg = small_config();
    cfg.epsilon0 = 0.5;
    cfg.max_tighten_iters = 2;
    WorkerPopulation solo{-7.253, 0.006385, {-1.216}};
    const PlantModel model{1.0, 5.0};
    CHECK_THROWS_AS(plan_verified(30.0, model, solo, cfg, 0, 3), PlanningError);
    try {
        plan_verified(30.0, model, solo, cfg, 0, 3);
    } catch (const PlanningError& e) {
        CHECK(e.worker_index == 0);
        REQUIRE(e.last_outcome.has_value());
        CHECK_FALSE(e.last_outcome->accepted);
    }
    // select_offer propagates when every worker fails.
    CHECK_THROWS_AS(select_offer(30.0, model, solo, cfg, 4), PlanningError);
}

TEST_CASE("select_offer picks the cheapest verified candidate") {
    const MpcConfig cfg = small_config();
    const PlantModel model{1.0, 5.0};

    // Identical workers give identical objectives; the tie goes to the
    // lowest index. Certain acceptance makes every verification outcome
    // deterministic, and the baseline tie needs no such care.
    WorkerPopulation sure{-7.253, 0.006385, {1e4, 1e4, 1e4}};
    const auto tie = select_offer(30.0, model, sure, cfg, 11);
    CHECK(tie.worker_index == 0);
    WorkerPopulation same{-7.253, 0.006385, {2.0, 2.0, 2.0}};
    const auto base_tie = plan_baseline(30.0, model, same, cfg);
    CHECK(base_tie.worker_index == 0);

    // An eager worker (larger nu) supports the same hours at a lower wage.
    WorkerPopulation mixed{-7.253, 0.006385, {2.0, 5.0}};
    const auto d = select_offer(30.0, model, mixed, cfg, 12);
    CHECK(d.worker_index == 1);
    const auto eager = solve_problem2(30.0, model, mixed.worker(1), 2, cfg, d.epsilon_final);
    CHECK(d.plan.objective <= eager.objective + 1e-9);

    // n = 1 reduces to plan_verified with the derived per-worker seed.
    WorkerPopulation solo{-7.253, 0.006385, {2.0}};
    const auto via_select = select_offer(30.0, model, solo, cfg, 13);
    const auto direct = plan_verified(30.0, model, solo, cfg, 0,
                                      derive_seed(13, detail::kTagWorker, 0));
    CHECK(via_select.plan.objective == direct.plan.objective);
    CHECK(via_select.l_star == direct.l_star);
    CHECK(via_select.offer.hours == direct.offer.hours);
    CHECK(via_select.offer.wage == direct.offer.wage);
}

TEST_CASE("baseline solves once per worker at epsilon0") {
    const MpcConfig cfg = table_config();
    const PlantModel model{1.0, 5.0};
    const auto pop = table_population(3, 30);

    const auto base = plan_baseline(30.0, model, pop, cfg);
    CHECK_FALSE(base.outcome.has_value());
    CHECK(base.epsilon_final == cfg.epsilon0);
    CHECK(base.l_star == 0);
    CHECK(base.offer.hours == base.plan.hours[0]);

    // The baseline winner is the cheapest worker at epsilon0.
    double best = std::numeric_limits<double>::infinity();
    int best_index = -1;
    for (int i = 0; i < pop.size(); ++i) {
        const double obj = solve_problem2(30.0, model, pop.worker(i), pop.size(), cfg, cfg.epsilon0).objective;
        if (obj < best) { best = obj; best_index = i; }
    }
    CHECK(base.worker_index == best_index);
    CHECK(base.plan.objective == Catch::Approx(best));

    // Trivially satisfied target: the zero plan.
    MpcConfig easy = cfg;
    easy.x_ref = 1e9;
    CHECK(plan_baseline(30.0, model, pop, easy).plan.objective == 0.0);
}

TEST_CASE("verified wage total is never below the baseline's") {
    const MpcConfig cfg = small_config();
    const PlantModel model{1.0, 5.0};
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto pop = table_population(100 + seed, 20);
        const auto base = plan_baseline(30.0, model, pop, cfg);
        const auto ver = select_offer(30.0, model, pop, cfg, seed);
        CHECK(base.plan.objective <= ver.plan.objective + 1e-9);
        // Emitted offer satisfies the hour cap at its final epsilon.
        const double cap = max_hours_bound(ver.offer.wage, pop.worker(ver.worker_index),
                                           ver.epsilon_final, pop.size());
        CHECK(ver.offer.hours <= cap + 1e-9);
    }
}

TEST_CASE("closed loop with certain acceptance tracks the target") {
    MpcConfig cfg = small_config();
    const PlantModel model{1.0, 5.0};
    WorkerPopulation eager{-7.253, 0.006385, std::vector<double>(5, 1e4)};
    const auto traj = run_closed_loop(30.0, model, eager, cfg, 6, Policy::verified, 21);
    REQUIRE(traj.x.size() == 7);
    CHECK(traj.x.back() <= cfg.x_ref + 1e-9);
    for (const auto& s : traj.steps) CHECK(s.beta == 1);
    // Only the first plan element is ever applied.
    CHECK(traj.steps.front().x == 30.0);
    CHECK(traj.steps.front().k == 0);
}

TEST_CASE("closed loop under forced rejection grows uncontrolled") {
    MpcConfig cfg = small_config();
    const PlantModel model{1.2, 3.0};
    const auto pop = table_population(4, 5);
    LoopOptions opts;
    opts.beta_override = BetaOverride::always_reject;
    const int K = 5;
    const auto traj = run_closed_loop(20.0, model, pop, cfg, K, Policy::baseline, 5, opts);
    double expected = 20.0;
    for (int k = 0; k < K; ++k) expected = 1.2 * expected + 3.0;
    CHECK(traj.x.back() == Catch::Approx(expected).epsilon(1e-12));
    for (const auto& s : traj.steps) CHECK(s.beta == 0);
}

TEST_CASE("closed loop is deterministic in the seed") {
    const MpcConfig cfg = small_config();
    const PlantModel model{1.0, 5.0};
    const auto pop = table_population(6, 10);
    const auto a = run_closed_loop(30.0, model, pop, cfg, 4, Policy::verified, 77);
    const auto b = run_closed_loop(30.0, model, pop, cfg, 4, Policy::verified, 77);
    CHECK(a.x == b.x);
    REQUIRE(a.steps.size() == b.steps.size());
    for (size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].wage == b.steps[i].wage);
        CHECK(a.steps[i].beta == b.steps[i].beta);
        CHECK(a.steps[i].worker_index == b.steps[i].worker_index);
    }
}

TEST_CASE("threshold stop ends the run once the target is reached") {
    MpcConfig cfg = small_config();
    const PlantModel model{1.0, 5.0};
    WorkerPopulation eager{-7.253, 0.006385, std::vector<double>(5, 1e4)};
    LoopOptions opts;
    opts.stop_at_target = true;
    const auto traj = run_closed_loop(30.0, model, eager, cfg, 10, Policy::verified, 3, opts);
    CHECK(traj.x.size() < 11);
    CHECK(traj.x.back() <= cfg.x_ref);
}

TEST_CASE("time-varying inflow sequence feeds both planning and stepping") {
    MpcConfig cfg = small_config();
    cfg.horizon = 1;
    WorkerPopulation eager{-7.253, 0.006385, std::vector<double>(3, 1e4)};
    const std::vector<double> inflow{5.0, 2.0, 7.0};
    LoopOptions opts;
    opts.inflow_sequence = inflow;
    opts.beta_override = BetaOverride::always_accept;
    const auto traj = run_closed_loop(30.0, PlantModel{1.0, 5.0}, eager, cfg, 3, Policy::baseline, 9, opts);
    // With horizon 1 and certain acceptance each step lands on the target.
    CHECK(traj.x[1] == Catch::Approx(cfg.x_ref));
    CHECK(traj.x[2] == Catch::Approx(cfg.x_ref));
    CHECK(traj.x[3] == Catch::Approx(cfg.x_ref));
}
