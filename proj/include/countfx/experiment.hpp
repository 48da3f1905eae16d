#pragma once

#include "countfx/control_function.hpp"
#include "countfx/dgp.hpp"
#include "countfx/matching.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace countfx {

struct ExperimentOptions {
    int reps = 100;
    int jobs = 1;
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    bool psm = true;
    PsmOptions psm_options;
    ModelOptions model;
    /// Strategy whose fit also gets the dispersion LR test and the stability check.
    Strategy test_strategy = Strategy::s5;
    bool dispersion_test = false;
    bool stability_check = false;
    bool record_wall_time = false;

    /// Everything except `jobs` and `record_wall_time`, which do not change results.
    nlohmann::json to_json() const;
    /// Starts from `base`; unknown keys and bad values raise ConfigError with an
    /// "experiment.<key>" field path.
    static ExperimentOptions from_json(const nlohmann::json& doc, ExperimentOptions base);
    static ExperimentOptions from_json(const nlohmann::json& doc) { return from_json(doc, ExperimentOptions{}); }
};

struct ExperimentConfig {
    DGPConfig dgp;
    ExperimentOptions options;
};

/// Accepts either a bare simulator document or {"dgp": {...}, "experiment": {...}}.
ExperimentConfig load_experiment_config(const nlohmann::json& doc);

struct StrategyDraw {
    double omega_hat = 0.0;
    double se = 0.0;
    double implied = 0.0;
    std::optional<bool> sig_xi, sig_t_xi, sig_xi_s;
};

struct ReplicationOutcome {
    int rep = 0;
    std::optional<std::string> error;
    OracleEffects oracle;
    std::vector<std::optional<StrategyDraw>> strategies;
    std::optional<double> psm_ate;
    std::optional<double> psm_se;
    std::optional<double> dispersion_p;
    std::optional<double> stability_p;
};

/// One simulate → fit (each strategy) → PSM → compare cycle. Failures are captured.
ReplicationOutcome run_replication(const DGPConfig& cfg, const ExperimentOptions& opts, int rep);

struct StrategySummary {
    Strategy id;
    int n = 0;
    double mean_bias = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;
    double mean_implied_bias = 0.0;
    std::optional<double> reject_xi, reject_t_xi, reject_xi_s;
    /// Share of replications where |PSM − oracle| > |implied − oracle|.
    std::optional<double> psm_worse;
};

struct ExperimentReport {
    nlohmann::json config;
    int replications = 0;
    int failures = 0;
    std::vector<std::string> failure_messages;
    std::vector<StrategySummary> strategies;
    std::optional<nlohmann::json> psm;
    OracleEffects oracle;
    std::optional<double> dispersion_rejection;
    std::optional<double> stability_rejection;
    std::optional<double> wall_seconds;

    nlohmann::json to_json() const;
};

/// Aggregates outcomes in replication order.
ExperimentReport summarize(const DGPConfig& cfg, const ExperimentOptions& opts,
                           const std::vector<ReplicationOutcome>& outcomes);

/// Runs replications 0..reps-1 on `jobs` threads. The report depends only on (cfg, opts
/// apart from jobs). Throws ParameterError for reps < 1 or jobs < 1.
ExperimentReport run_experiment(const DGPConfig& cfg, const ExperimentOptions& opts);

}  // namespace countfx
