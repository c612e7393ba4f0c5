#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gigwms/calibration.hpp"
#include "gigwms/controller.hpp"

namespace gigwms {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Complete experiment description: controller, plant, population,
/// replication counts and seeding.
struct ExperimentConfig {
    MpcConfig mpc{};
    PlantModel plant{1.0, 5.0};
    double x0 = 30.0;

    double kappa = -7.253;
    double lambda = 0.006385;
    double nu_mean = -1.216;
    int workers = 100;
    std::vector<double> nu_values;       // explicit offsets override sampling
    std::vector<double> inflow_sequence; // optional time-varying d(k)

    int runs = 200;
    int steps = 10;
    uint64_t master_seed = 1;
    std::vector<Policy> policies{Policy::verified, Policy::baseline};
    bool fixed_population = false;
    int threads = 1;
    bool record_trajectories = false;

    void validate() const {
        mpc.validate();
        if (plant.growth < 1.0) throw ConfigError("config: growth must be >= 1");
        if (plant.inflow < 0.0) throw ConfigError("config: inflow must be >= 0");
        if (workers < 1 && nu_values.empty()) throw ConfigError("config: workers must be >= 1");
        if (runs < 1) throw ConfigError("config: runs must be >= 1");
        if (steps < 1) throw ConfigError("config: steps must be >= 1");
        if (policies.empty()) throw ConfigError("config: at least one policy required");
        if (threads < 0) throw ConfigError("config: threads must be >= 0");
    }
};

inline Policy policy_from_name(const std::string& name) {
    if (name == "verified") return Policy::verified;
    if (name == "baseline") return Policy::baseline;
    throw ConfigError("config: unknown policy '" + name + "'");
}

/// Parse an experiment config from JSON, starting from the shipped defaults.
/// Unknown keys are rejected so typos surface as errors.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    static const std::vector<std::string> known{
        "kappa", "lambda", "nu_mean", "workers", "nu_values", "x0", "growth", "inflow",
        "horizon", "x_ref", "eta", "epsilon0", "gamma", "delta", "alpha", "level_slope",
        "max_tighten_iters", "runs", "steps", "master_seed", "policies", "fixed_population",
        "threads", "record_trajectories"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("config: unknown key '" + key + "'");
    }
    try {
        if (j.contains("kappa")) cfg.kappa = j.at("kappa").get<double>();
        if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
        if (j.contains("nu_mean")) cfg.nu_mean = j.at("nu_mean").get<double>();
        if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
        if (j.contains("nu_values")) cfg.nu_values = j.at("nu_values").get<std::vector<double>>();
        if (j.contains("x0")) cfg.x0 = j.at("x0").get<double>();
        if (j.contains("growth")) cfg.plant.growth = j.at("growth").get<double>();
        if (j.contains("inflow")) {
            const auto& d = j.at("inflow");
            if (d.is_array()) {
                cfg.inflow_sequence = d.get<std::vector<double>>();
                if (cfg.inflow_sequence.empty()) throw ConfigError("config: inflow array is empty");
                cfg.plant.inflow = cfg.inflow_sequence.front();
            } else {
                cfg.plant.inflow = d.get<double>();
            }
        }
        if (j.contains("horizon")) cfg.mpc.horizon = j.at("horizon").get<int>();
        if (j.contains("x_ref")) cfg.mpc.x_ref = j.at("x_ref").get<double>();
        if (j.contains("eta")) {
            cfg.mpc.eta = j.at("eta").get<double>();
            cfg.mpc.verifier.eta = cfg.mpc.eta;
        }
        if (j.contains("epsilon0")) cfg.mpc.epsilon0 = j.at("epsilon0").get<double>();
        if (j.contains("gamma")) cfg.mpc.gamma = j.at("gamma").get<double>();
        if (j.contains("delta")) cfg.mpc.verifier.delta = j.at("delta").get<double>();
        if (j.contains("alpha")) cfg.mpc.verifier.alpha = j.at("alpha").get<double>();
        if (j.contains("level_slope")) cfg.mpc.verifier.b = j.at("level_slope").get<double>();
        if (j.contains("max_tighten_iters")) cfg.mpc.max_tighten_iters = j.at("max_tighten_iters").get<int>();
        if (j.contains("runs")) cfg.runs = j.at("runs").get<int>();
        if (j.contains("steps")) cfg.steps = j.at("steps").get<int>();
        if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<uint64_t>();
        if (j.contains("policies")) {
            cfg.policies.clear();
            for (const auto& p : j.at("policies")) cfg.policies.push_back(policy_from_name(p.get<std::string>()));
        }
        if (j.contains("fixed_population")) cfg.fixed_population = j.at("fixed_population").get<bool>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<int>();
        if (j.contains("record_trajectories")) cfg.record_trajectories = j.at("record_trajectories").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

/// Worker-population file: {kappa, lambda, nu_mean, nu_values: [..]}.
/// Explicit nu_values take precedence; otherwise n offsets are sampled from
/// the seeded stream.
inline WorkerPopulation load_population_file(const std::string& path, int n, uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("population: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("population: parse error in " + path + ": " + e.what());
    }
    try {
        const double kappa = j.at("kappa").get<double>();
        const double lambda = j.at("lambda").get<double>();
        if (j.contains("nu_values") && !j.at("nu_values").empty()) {
            return WorkerPopulation{kappa, lambda, j.at("nu_values").get<std::vector<double>>()};
        }
        const double nu_mean = j.at("nu_mean").get<double>();
        SplitMix64 rng(derive_seed(seed, detail::kTagPopulation));
        return sample_population(kappa, lambda, nu_mean, n, rng);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("population: ") + e.what());
    }
}

inline nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["kappa"] = cfg.kappa;
    j["lambda"] = cfg.lambda;
    j["nu_mean"] = cfg.nu_mean;
    j["workers"] = cfg.workers;
    if (!cfg.nu_values.empty()) j["nu_values"] = cfg.nu_values;
    j["x0"] = cfg.x0;
    j["growth"] = cfg.plant.growth;
    if (!cfg.inflow_sequence.empty())
        j["inflow"] = cfg.inflow_sequence;
    else
        j["inflow"] = cfg.plant.inflow;
    j["horizon"] = cfg.mpc.horizon;
    j["x_ref"] = cfg.mpc.x_ref;
    j["eta"] = cfg.mpc.eta;
    j["epsilon0"] = cfg.mpc.epsilon0;
    j["gamma"] = cfg.mpc.gamma;
    j["delta"] = cfg.mpc.verifier.delta;
    j["alpha"] = cfg.mpc.verifier.alpha;
    j["level_slope"] = cfg.mpc.verifier.b;
    j["max_tighten_iters"] = cfg.mpc.max_tighten_iters;
    j["runs"] = cfg.runs;
    j["steps"] = cfg.steps;
    j["master_seed"] = cfg.master_seed;
    nlohmann::ordered_json pol = nlohmann::ordered_json::array();
    for (Policy p : cfg.policies) pol.push_back(policy_name(p));
    j["policies"] = pol;
    j["fixed_population"] = cfg.fixed_population;
    j["threads"] = cfg.threads;
    j["record_trajectories"] = cfg.record_trajectories;
    return j;
}

struct ArmResult {
    bool failed = false;
    std::string error;
    double x_final = 0.0;
    Trajectory trajectory;
};

struct RunResult {
    uint64_t seed = 0;
    std::vector<ArmResult> arms; // aligned with config.policies
};

struct PolicyStats {
    Policy policy = Policy::verified;
    int violations = 0; // runs with x(K) > x_ref
    int failed = 0;
    std::vector<long> histogram;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunResult> runs;
    std::vector<PolicyStats> policies;
    double hist_left = 0.0;
    int hist_bins = 0;
    long long wall_ms = 0;
};

/// Monte-Carlo batch: every run draws a fresh population (unless pinned),
/// executes the closed loop once per policy with a shared acceptance stream,
/// and the terminal workloads are tallied against the target. Fully
/// reproducible from the master seed; the worker pool only changes wall
/// time, never the report.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentReport report;
    report.config = cfg;
    report.runs.resize(static_cast<size_t>(cfg.runs));

    std::optional<WorkerPopulation> pinned;
    if (!cfg.nu_values.empty()) {
        pinned = WorkerPopulation{cfg.kappa, cfg.lambda, cfg.nu_values};
    } else if (cfg.fixed_population) {
        SplitMix64 rng(derive_seed(cfg.master_seed, detail::kTagPopulation, 0));
        pinned = sample_population(cfg.kappa, cfg.lambda, cfg.nu_mean, cfg.workers, rng);
    }

    const auto execute_run = [&](int r) {
        RunResult& result = report.runs[static_cast<size_t>(r)];
        result.seed = derive_seed(cfg.master_seed, detail::kTagRun, static_cast<uint64_t>(r));
        WorkerPopulation pop;
        if (pinned) {
            pop = *pinned;
        } else {
            SplitMix64 rng(derive_seed(result.seed, detail::kTagPopulation));
            pop = sample_population(cfg.kappa, cfg.lambda, cfg.nu_mean, cfg.workers, rng);
        }
        LoopOptions opts;
        opts.inflow_sequence = cfg.inflow_sequence;
        result.arms.resize(cfg.policies.size());
        for (size_t a = 0; a < cfg.policies.size(); ++a) {
            ArmResult& arm = result.arms[a];
            try {
                Trajectory traj = run_closed_loop(cfg.x0, cfg.plant, pop, cfg.mpc, cfg.steps,
                                                  cfg.policies[a], result.seed, opts);
                arm.x_final = traj.x.back();
                if (cfg.record_trajectories) arm.trajectory = std::move(traj);
            } catch (const std::exception& e) {
                arm.failed = true;
                arm.error = e.what();
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int threads = cfg.threads == 0 ? static_cast<int>(hw)
                                         : std::min(cfg.threads, cfg.runs);
    if (threads <= 1) {
        for (int r = 0; r < cfg.runs; ++r) execute_run(r);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (int r = w; r < cfg.runs; r += threads) execute_run(r);
            });
        }
        for (auto& th : pool) th.join();
    }

    // Shared unit-width binning across all policies.
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& run : report.runs) {
        for (const auto& arm : run.arms) {
            if (arm.failed) continue;
            if (!any) { lo = hi = arm.x_final; any = true; }
            lo = std::min(lo, arm.x_final);
            hi = std::max(hi, arm.x_final);
        }
    }
    report.hist_left = any ? std::floor(lo) : 0.0;
    report.hist_bins = any ? std::max(1, static_cast<int>(std::ceil(hi - report.hist_left + 1e-12))) : 0;

    for (size_t a = 0; a < cfg.policies.size(); ++a) {
        PolicyStats stats;
        stats.policy = cfg.policies[a];
        stats.histogram.assign(static_cast<size_t>(report.hist_bins), 0);
        for (const auto& run : report.runs) {
            const auto& arm = run.arms[a];
            if (arm.failed) {
                ++stats.failed;
                continue;
            }
            if (arm.x_final > cfg.mpc.x_ref) ++stats.violations;
            if (report.hist_bins > 0) {
                int bin = static_cast<int>(std::floor(arm.x_final - report.hist_left));
                bin = std::clamp(bin, 0, report.hist_bins - 1);
                ++stats.histogram[static_cast<size_t>(bin)];
            }
        }
        report.policies.push_back(std::move(stats));
    }

    report.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline nlohmann::ordered_json report_summary_json(const ExperimentReport& report) {
    nlohmann::ordered_json j;
    j["config"] = experiment_config_to_json(report.config);
    nlohmann::ordered_json policies = nlohmann::ordered_json::array();
    for (const auto& stats : report.policies) {
        nlohmann::ordered_json p;
        p["policy"] = policy_name(stats.policy);
        p["violations"] = stats.violations;
        p["failed_runs"] = stats.failed;
        p["histogram"] = {{"left", report.hist_left}, {"bin_width", 1.0}, {"counts", stats.histogram}};
        policies.push_back(p);
    }
    j["policies"] = policies;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (size_t r = 0; r < report.runs.size(); ++r) {
        nlohmann::ordered_json rec;
        rec["run"] = r;
        rec["seed"] = report.runs[r].seed;
        for (size_t a = 0; a < report.config.policies.size(); ++a) {
            const auto& arm = report.runs[r].arms[a];
            nlohmann::ordered_json aj;
            aj["failed"] = arm.failed;
            if (arm.failed)
                aj["error"] = arm.error;
            else
                aj["x_final"] = arm.x_final;
            rec[policy_name(report.config.policies[a])] = aj;
        }
        runs.push_back(rec);
    }
    j["runs"] = runs;
    return j;
}

/// Write summary.json, histogram.csv, optional trajectories.jsonl and
/// timing.txt under `dir`. Everything except timing.txt is a pure function
/// of the report contents, so re-exports are byte-identical.
inline void export_report(const ExperimentReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("export: cannot create directory " + dir + ": " + ec.message());

    const auto write_file = [&](const std::string& name, const std::string& contents) {
        const std::string path = dir + "/" + name;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("export: cannot open " + path);
        out << contents;
        if (!out) throw std::runtime_error("export: write failed for " + path);
    };

    write_file("summary.json", report_summary_json(report).dump(2) + "\n");

    std::string csv = "bin_left,bin_right";
    for (const auto& stats : report.policies) csv += std::string(",count_") + policy_name(stats.policy);
    csv += "\n";
    char buf[128];
    for (int bin = 0; bin < report.hist_bins; ++bin) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", report.hist_left + bin, report.hist_left + bin + 1);
        csv += buf;
        for (const auto& stats : report.policies) {
            std::snprintf(buf, sizeof buf, ",%ld", stats.histogram[static_cast<size_t>(bin)]);
            csv += buf;
        }
        csv += "\n";
    }
    write_file("histogram.csv", csv);

    if (report.config.record_trajectories) {
        std::string jsonl;
        for (size_t r = 0; r < report.runs.size(); ++r) {
            for (size_t a = 0; a < report.config.policies.size(); ++a) {
                const auto& arm = report.runs[r].arms[a];
                if (arm.failed) continue;
                nlohmann::ordered_json line;
                line["run"] = r;
                line["policy"] = policy_name(report.config.policies[a]);
                line["x"] = arm.trajectory.x;
                nlohmann::ordered_json steps = nlohmann::ordered_json::array();
                for (const auto& s : arm.trajectory.steps) {
                    steps.push_back({{"k", s.k}, {"x", s.x}, {"worker_index", s.worker_index},
                                     {"u_hat", s.hours}, {"p", s.wage}, {"beta", s.beta},
                                     {"epsilon_final", s.epsilon_final}, {"l_star", s.l_star},
                                     {"M_l", s.trials}, {"failures", s.failures}});
                }
                line["steps"] = steps;
                jsonl += line.dump() + "\n";
            }
        }
        write_file("trajectories.jsonl", jsonl);
    }

    std::snprintf(buf, sizeof buf, "wall_ms %lld\n", static_cast<long long>(report.wall_ms));
    write_file("timing.txt", buf);
}

} // namespace gigwms
