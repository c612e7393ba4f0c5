// Command-line front end: survey fitting, acceptance surfaces, one-shot
// planning, closed-loop simulation, candidate verification and the
// Monte-Carlo experiment batch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gigwms/calibration.hpp"
#include "gigwms/harness.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPlanning = 2;

void write_text(const std::string& path, const std::string& contents) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << contents;
}

ordered_json model_to_json(const gigwms::FittedModel& m) {
    ordered_json j;
    j["kappa"] = m.kappa;
    j["lambda"] = m.lambda;
    j["nu"] = m.nu;
    j["residual"] = m.residual;
    j["point_count"] = m.point_count;
    return j;
}

gigwms::FittedModel model_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw gigwms::ConfigError("cannot open model file " + path);
    nlohmann::json j;
    in >> j;
    gigwms::FittedModel m;
    m.kappa = j.at("kappa").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.nu = j.at("nu").get<double>();
    m.residual = j.value("residual", 0.0);
    m.point_count = j.value("point_count", 0);
    m.signs_ok = m.kappa < 0.0 && m.lambda > 0.0;
    return m;
}

gigwms::ExperimentConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return gigwms::parse_experiment_config(nlohmann::json::object());
    return gigwms::load_experiment_config(path);
}

gigwms::WorkerPopulation population_from_config(const gigwms::ExperimentConfig& cfg, uint64_t seed) {
    if (!cfg.nu_values.empty())
        return gigwms::WorkerPopulation{cfg.kappa, cfg.lambda, cfg.nu_values};
    gigwms::SplitMix64 rng(gigwms::derive_seed(seed, gigwms::detail::kTagPopulation));
    return gigwms::sample_population(cfg.kappa, cfg.lambda, cfg.nu_mean, cfg.workers, rng);
}

ordered_json decision_to_json(const gigwms::ControlDecision& d) {
    ordered_json j;
    j["worker_index"] = d.worker_index;
    j["u_hat"] = d.offer.hours;
    j["p"] = d.offer.wage;
    j["objective"] = d.plan.objective;
    j["epsilon_final"] = d.epsilon_final;
    j["l_star"] = d.l_star;
    if (d.outcome) {
        j["verification"] = {{"accepted", d.outcome->accepted},
                             {"iteration", d.outcome->iteration},
                             {"M_l", d.outcome->trials},
                             {"failures", d.outcome->failures},
                             {"level", d.outcome->level}};
    }
    j["plan"] = {{"hours", d.plan.hours}, {"wages", d.plan.wages}};
    return j;
}

ordered_json step_to_json(const gigwms::StepRecord& s) {
    return ordered_json{{"k", s.k},
                        {"x", s.x},
                        {"worker_index", s.worker_index},
                        {"u_hat", s.hours},
                        {"p", s.wage},
                        {"beta", s.beta},
                        {"epsilon_final", s.epsilon_final},
                        {"l_star", s.l_star},
                        {"M_l", s.trials},
                        {"failures", s.failures}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gig-work management system: chance-constrained task pricing"};
    app.require_subcommand(1);

    // --- fit ---
    auto* fit_cmd = app.add_subcommand("fit", "Fit worker coefficients from a survey CSV");
    std::string fit_survey, fit_out = ".";
    int fit_respondents = 500;
    bool fit_refine = false;
    fit_cmd->add_option("--survey", fit_survey, "survey CSV (aggregated or raw)")->required();
    fit_cmd->add_option("--out", fit_out, "output directory");
    fit_cmd->add_option("--respondents", fit_respondents, "respondent count behind each cell");
    fit_cmd->add_flag("--refine", fit_refine, "also report a probability-space refinement");

    // --- surface ---
    auto* surface_cmd = app.add_subcommand("surface", "Emit the acceptance-probability grid");
    std::string surface_model, surface_out = ".";
    double s_hours_lo = 0.25, s_hours_hi = 3.0, s_wage_lo = 0.0, s_wage_hi = 4000.0;
    int s_hours_n = 12, s_wage_n = 41;
    surface_cmd->add_option("--model", surface_model, "fitted model JSON (default: bundled)");
    surface_cmd->add_option("--out", surface_out, "output directory");
    surface_cmd->add_option("--hours-min", s_hours_lo);
    surface_cmd->add_option("--hours-max", s_hours_hi);
    surface_cmd->add_option("--hours-steps", s_hours_n);
    surface_cmd->add_option("--wage-min", s_wage_lo);
    surface_cmd->add_option("--wage-max", s_wage_hi);
    surface_cmd->add_option("--wage-steps", s_wage_n);

    // Shared options for the control verbs.
    std::string config_path;
    std::string population_path;
    uint64_t seed_override = 0;
    bool seed_given = false;
    std::string policy_name_arg; // empty: keep the config's policy list
    std::string out_dir;

    auto add_common = [&](CLI::App* cmd, bool with_policy) {
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--population", population_path,
                        "worker-population JSON {kappa,lambda,nu_mean,nu_values}");
        cmd->add_option_function<uint64_t>(
               "--seed", [&](uint64_t v) { seed_override = v; seed_given = true; },
               "master seed override");
        if (with_policy) cmd->add_option("--policy", policy_name_arg, "verified|baseline|both");
    };

    // --- plan ---
    auto* plan_cmd = app.add_subcommand("plan", "One-shot decision for a given workload state");
    double plan_x = std::numeric_limits<double>::quiet_NaN();
    bool plan_dump_lp = false;
    add_common(plan_cmd, true);
    plan_cmd->add_option("--x", plan_x, "current workload (default: config x0)");
    plan_cmd->add_option("--out", out_dir, "write decision.json here");
    plan_cmd->add_flag("--dump-lp", plan_dump_lp, "print the deterministic LP tableau");

    // --- simulate ---
    auto* sim_cmd = app.add_subcommand("simulate", "Run one closed-loop trajectory");
    add_common(sim_cmd, true);
    sim_cmd->add_option("--out", out_dir, "write decisions.jsonl here");

    // --- verify ---
    auto* verify_cmd = app.add_subcommand("verify", "Verify a candidate plan from a JSON file");
    std::string verify_plan_path;
    int verify_level = 1;
    add_common(verify_cmd, false);
    verify_cmd->add_option("--plan", verify_plan_path, "plan JSON {hours:[],wages:[]}")->required();
    verify_cmd->add_option("--level", verify_level, "verification iteration l (>= 1)");

    // --- experiment ---
    auto* exp_cmd = app.add_subcommand("experiment", "Monte-Carlo controller comparison");
    int exp_runs = 0, exp_steps = 0, exp_threads = -1;
    bool exp_fixed_pop = false, exp_traj = false;
    add_common(exp_cmd, true);
    exp_cmd->add_option("--out", out_dir, "output directory")->required();
    exp_cmd->add_option("--runs", exp_runs, "override run count");
    exp_cmd->add_option("--steps", exp_steps, "override step count");
    exp_cmd->add_option("--threads", exp_threads, "worker pool size (0 = auto)");
    exp_cmd->add_flag("--fixed-population", exp_fixed_pop, "one population for all runs");
    exp_cmd->add_flag("--trajectories", exp_traj, "export per-run trajectories");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit_cmd) {
            const auto points = gigwms::load_survey_csv(fit_survey);
            const auto model = gigwms::fit(points, fit_respondents);
            if (!model.signs_ok)
                std::cerr << "warning: fitted coefficients have unexpected signs "
                             "(kappa >= 0 or lambda <= 0)\n";
            write_text(fit_out + "/fitted_model.json", model_to_json(model).dump(2) + "\n");
            std::cout << model_to_json(model).dump(2) << "\n";
            if (fit_refine) {
                const auto refined = gigwms::refine_probability_space(model, points);
                write_text(fit_out + "/fitted_model_refined.json",
                           model_to_json(refined).dump(2) + "\n");
                std::cout << "refined: " << model_to_json(refined).dump(2) << "\n";
            }
            return kExitOk;
        }

        if (*surface_cmd) {
            const auto model = surface_model.empty() ? gigwms::default_fitted_model()
                                                     : model_from_json_file(surface_model);
            std::string csv = "hours,wage,probability\n";
            char buf[128];
            for (int i = 0; i < s_hours_n; ++i) {
                const double h = s_hours_lo + (s_hours_hi - s_hours_lo) * i / std::max(1, s_hours_n - 1);
                for (int j = 0; j < s_wage_n; ++j) {
                    const double w = s_wage_lo + (s_wage_hi - s_wage_lo) * j / std::max(1, s_wage_n - 1);
                    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", h, w,
                                  gigwms::predict_ratio(model, h, w));
                    csv += buf;
                }
            }
            write_text(surface_out + "/surface.csv", csv);
            return kExitOk;
        }

        if (*plan_cmd || *sim_cmd || *verify_cmd || *exp_cmd) {
            auto cfg = load_config_or_default(config_path);
            if (seed_given) cfg.master_seed = seed_override;
            if (!population_path.empty()) {
                const auto pop = gigwms::load_population_file(population_path, cfg.workers,
                                                              cfg.master_seed);
                cfg.kappa = pop.kappa;
                cfg.lambda = pop.lambda;
                cfg.nu_values = pop.nu;
                cfg.workers = pop.size();
            }

            if (*plan_cmd) {
                const double x = std::isnan(plan_x) ? cfg.x0 : plan_x;
                const auto pop = population_from_config(cfg, cfg.master_seed);
                if (plan_dump_lp) {
                    const auto lp = gigwms::build_problem2(x, cfg.plant, pop.worker(0), pop.size(),
                                                           cfg.mpc, cfg.mpc.epsilon0);
                    std::cout << gigwms::to_tableau_string(lp);
                }
                const auto decision =
                    policy_name_arg == "baseline"
                        ? gigwms::plan_baseline(x, cfg.plant, pop, cfg.mpc)
                        : gigwms::select_offer(x, cfg.plant, pop, cfg.mpc, cfg.master_seed);
                ordered_json j = decision_to_json(decision);
                j["x"] = x;
                std::cout << j.dump(2) << "\n";
                if (!out_dir.empty()) write_text(out_dir + "/decision.json", j.dump(2) + "\n");
                return kExitOk;
            }

            if (*sim_cmd) {
                const auto pop = population_from_config(cfg, cfg.master_seed);
                gigwms::LoopOptions opts;
                opts.inflow_sequence = cfg.inflow_sequence;
                const auto policy = policy_name_arg == "baseline" ? gigwms::Policy::baseline
                                                                  : gigwms::Policy::verified;
                const auto traj = gigwms::run_closed_loop(cfg.x0, cfg.plant, pop, cfg.mpc,
                                                          cfg.steps, policy, cfg.master_seed, opts);
                std::string jsonl;
                for (const auto& s : traj.steps) jsonl += step_to_json(s).dump() + "\n";
                if (!out_dir.empty()) write_text(out_dir + "/decisions.jsonl", jsonl);
                ordered_json summary;
                summary["policy"] = gigwms::policy_name(policy);
                summary["x"] = traj.x;
                summary["x_final"] = traj.x.back();
                summary["violated"] = traj.x.back() > cfg.mpc.x_ref;
                std::cout << summary.dump(2) << "\n";
                return kExitOk;
            }

            if (*verify_cmd) {
                std::ifstream in(verify_plan_path);
                if (!in) throw gigwms::ConfigError("cannot open plan file " + verify_plan_path);
                nlohmann::json pj;
                in >> pj;
                gigwms::OfferPlan plan;
                plan.hours = pj.at("hours").get<std::vector<double>>();
                plan.wages = pj.at("wages").get<std::vector<double>>();
                plan.epsilon_used = pj.value("epsilon", cfg.mpc.epsilon0);
                for (double w : plan.wages) plan.objective += w;
                const auto pop = population_from_config(cfg, cfg.master_seed);
                const auto out = gigwms::verify(plan, verify_level, cfg.x0, cfg.plant, pop,
                                                cfg.mpc.x_ref, cfg.mpc.verifier, cfg.master_seed);
                ordered_json j{{"accepted", out.accepted}, {"iteration", out.iteration},
                               {"M_l", out.trials},        {"failures", out.failures},
                               {"level", out.level}};
                std::cout << j.dump(2) << "\n";
                return kExitOk;
            }

            // experiment
            if (exp_runs > 0) cfg.runs = exp_runs;
            if (exp_steps > 0) cfg.steps = exp_steps;
            if (exp_threads >= 0) cfg.threads = exp_threads;
            if (exp_fixed_pop) cfg.fixed_population = true;
            if (exp_traj) cfg.record_trajectories = true;
            if (policy_name_arg == "verified") cfg.policies = {gigwms::Policy::verified};
            else if (policy_name_arg == "baseline") cfg.policies = {gigwms::Policy::baseline};
            else if (policy_name_arg == "both")
                cfg.policies = {gigwms::Policy::verified, gigwms::Policy::baseline};
            else if (!policy_name_arg.empty())
                throw gigwms::ConfigError("unknown policy '" + policy_name_arg + "'");
            cfg.validate();

            const auto report = gigwms::run_experiment(cfg);
            gigwms::export_report(report, out_dir);
            int failed = 0;
            for (const auto& stats : report.policies) failed += stats.failed;
            for (const auto& stats : report.policies) {
                std::printf("%s: violations %d/%d%s\n", gigwms::policy_name(stats.policy),
                            stats.violations, cfg.runs,
                            stats.failed ? (" (failed runs: " + std::to_string(stats.failed) + ")").c_str()
                                         : "");
            }
            std::printf("report written to %s (%.1f s)\n", out_dir.c_str(),
                        static_cast<double>(report.wall_ms) / 1000.0);
            return failed > 0 ? kExitPlanning : kExitOk;
        }
    } catch (const gigwms::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const gigwms::PlanningError& e) {
        std::cerr << "planning failed: " << e.what() << "\n";
        return kExitPlanning;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
