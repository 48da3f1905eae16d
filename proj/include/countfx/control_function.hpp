#pragma once

#include "countfx/data.hpp"
#include "countfx/distributions.hpp"
#include "countfx/inference.hpp"
#include "countfx/mle.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace countfx {

enum class Strategy { s1, s2, s3, s4, s5 };
inline constexpr std::array<Strategy, 5> kAllStrategies{Strategy::s1, Strategy::s2, Strategy::s3, Strategy::s4,
                                                       Strategy::s5};
std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view name);

/// Names of the derived columns.
namespace cols {
inline constexpr const char* treatment = "T";
inline constexpr const char* treatment_hat = "T_hat";
inline constexpr const char* selection = "I";
inline constexpr const char* trend = "t";
inline constexpr const char* trend1 = "t1";
inline constexpr const char* xi = "xi";
inline constexpr const char* t_xi = "T*xi";
inline constexpr const char* xi_s = "xi_s";
}  // namespace cols

struct StrategySpec {
    Strategy id = Strategy::s5;
    CountKind family = CountKind::nb2;
    /// Fit the α = 0 member of the family (Poisson, ZIP, ZTP).
    bool poisson_limit = false;
};

struct ModelOptions {
    /// Covariates that enter the first-stage probits together with their square.
    std::vector<std::string> first_stage_squares;
    FitOptions fit;
    double level = kDefaultLevel;
};

/// A first-stage probit together with its index and generalized residual on every row.
struct FirstStage {
    FitResult fit;
    std::vector<Term> terms;
    /// x'γ on every row whose regressors are complete.
    OptColumn index;
    /// Generalized residual where the indicator is also observed.
    OptColumn residual;
};

/// ξ, T·ξ, ξ_s, I, t, t1 aligned to every dataset row (missing where undefined).
struct ControlColumns {
    OptColumn xi;
    OptColumn t_xi;
    OptColumn xi_s;
    OptColumn i_flag;
    OptColumn trend;
    OptColumn trend1;
    OptColumn t_hat;
};

/// Probit of T on X, Z and t over every row with T observed.
/// Throws SchemaError without instruments; fit errors propagate.
FirstStage fit_reduced_form_treatment(const PanelDataset& data, const ModelOptions& opts = {});

/// Probit of I on X, Z and t over every row.
FirstStage fit_selection_model(const PanelDataset& data, const ModelOptions& opts = {});

/// φ/Φ where the indicator is 1 and −φ/(1−Φ) where it is 0, from the stored linear
/// predictors of a probit fit. Throws UnsupportedLinkError for other links.
Eigen::VectorXd generalized_residuals(const FitResult& fit, std::span<const int> indicator);

ControlColumns control_columns(const PanelDataset& data, const FirstStage* treatment, const FirstStage* selection);

/// Terms of the main equation for a strategy (without the intercept).
std::vector<Term> strategy_terms(const Schema& schema, Strategy s);

struct AssembledModel {
    StrategySpec spec;
    DesignMatrix design;
    std::vector<std::int64_t> y;
    std::vector<int> cluster;
    ControlColumns controls;
};

/// Main-equation design on the selection = 1 rows. Throws SchemaError when the strategy
/// needs a first stage that was not supplied.
AssembledModel assemble_strategy(const PanelDataset& data, const StrategySpec& spec, const FirstStage* treatment,
                                 const FirstStage* selection);

/// Fits an assembled model with its family.
FitResult fit_assembled(const AssembledModel& model, const FitOptions& opts = {});

/// Average over the estimation rows of E[Y | T = 1] − E[Y | T = 0] implied by a main fit.
/// Control-function terms are integrated over their empirical distribution on the same
/// rows rather than held at each row's value.
double implied_treatment_effect(const AssembledModel& model, const FitResult& fit);

struct PipelineOptions {
    ModelOptions model;
    StrategySpec spec;
    /// Also fit the α = 0 model for the dispersion LR test (NB families only).
    bool dispersion_test = true;
    bool stability_check = false;
};

struct PipelineResult {
    StrategySpec spec;
    std::optional<FirstStage> treatment;
    std::optional<FirstStage> selection;
    FitResult main;
    std::vector<RatioRow> irr;
    std::vector<MarginalEffect> treatment_ame;
    std::vector<MarginalEffect> selection_ame;
    /// All mean slopes jointly zero.
    std::optional<TestResult> model_wald;
    std::optional<TestResult> weak_instruments;
    std::optional<TestResult> dispersion;
    std::optional<StabilityResult> stability;
    std::vector<DroppedColumn> dropped;
    double implied_effect = 0.0;
    std::size_t n_persons = 0;

    nlohmann::json to_json() const;
};

/// First stages (as the strategy needs), the main fit and its derived statistics. Stage
/// failures are rethrown as StageError tagged "treatment_probit", "selection_probit",
/// "assemble", "main_fit", "model_wald", "weak_instrument_test", "dispersion_test" or "stability_check".
PipelineResult run_2sri_pipeline(const PanelDataset& data, const PipelineOptions& opts = {});

/// All stage fits share the first stages; used by the Monte Carlo harness.
std::vector<PipelineResult> run_strategies(const PanelDataset& data, std::span<const Strategy> strategies,
                                           CountKind family, const ModelOptions& opts = {});

}  // namespace countfx
