#pragma once

#include "countfx/data.hpp"
#include "countfx/distributions.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace countfx {

/// Covariates generated by the simulator, in design order.
inline const std::vector<std::string> kDgpCovariates{"age",         "female",      "rural",   "cg_dementia",
                                                     "cg_learning", "cg_physical", "comorbid"};
inline const std::vector<std::string> kDgpInstruments{"council_share", "simd_decile"};

struct IndexEquation {
    double intercept = 0.0;
    std::map<std::string, double> covariates;
    /// Coefficient on the week index t.
    double trend = 0.0;
};

struct DGPConfig {
    int n_persons = 500;
    int weeks = 10;
    std::optional<int> census_week;

    /// Log-mean equation: intercept and covariate coefficients.
    double beta0 = -0.2;
    std::map<std::string, double> beta;
    /// Coefficient on t1 in the log mean.
    double outcome_trend = 0.0;

    double omega = -0.5656338602609858;
    double hetero_scale = 0.0;
    /// Per-week change of the treatment effect on the log scale (ω + drift·t).
    double omega_drift = 0.0;

    double endowment_sd = 0.0;
    double endow_loading_t = 0.0;
    double endow_loading_s = 0.0;
    /// μ's direct effect on the log mean.
    double endow_loading_y = -1.0;

    IndexEquation treatment;
    std::vector<double> instrument_strength{8.0, 0.0};

    bool selection_enabled = true;
    IndexEquation selection;
    std::vector<double> selection_instruments{0.0, -0.25};

    CountKind family = CountKind::nb2;
    double alpha = 1.142;
    double p_inflate = 0.0;
    /// "unobserved": structural-zero rows are never selected; "recorded": they are kept as zeros.
    std::string structural_zeros = "unobserved";

    std::uint64_t seed = 20240101;

    int effective_census_week() const { return census_week.value_or(weeks); }

    /// Throws ConfigError naming the offending field path.
    void validate() const;
    static DGPConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
    /// The confounded world.
    static DGPConfig defaults();
};

struct SimulatedPanel {
    PanelDataset data;
    /// Hidden truth, one entry per person or per row.
    std::vector<double> mu;
    std::vector<std::int64_t> y0;
    std::vector<std::int64_t> y1;
    std::vector<double> mean0;
    std::vector<double> mean1;
    std::vector<double> p_treat;
    std::vector<double> p_select;
    std::vector<int> structural_zero;
};

Schema dgp_schema(const DGPConfig& cfg);

/// Engine for replication `rep` of a run seeded with `seed`.
std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t rep);

SimulatedPanel simulate_panel(const DGPConfig& cfg, std::uint64_t replication = 0);

struct OracleEffects {
    double ate_overall = 0.0;
    double ate_selected = 0.0;
    double upsilon = 0.0;
    nlohmann::json to_json() const;
};

OracleEffects oracle_effects(const SimulatedPanel& panel);

/// Draws from a count family with mean λ. α = 0 draws Poisson; ztnb rejects zeros.
std::int64_t draw_count(std::mt19937_64& rng, CountKind kind, double lambda, double alpha);

/// Writes the truth sidecar (one row per panel row).
void emit_truth(const SimulatedPanel& panel, std::ostream& out);

}  // namespace countfx
