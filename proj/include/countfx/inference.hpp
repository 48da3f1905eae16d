#pragma once

#include "countfx/data.hpp"
#include "countfx/distributions.hpp"
#include "countfx/mle.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace countfx {

inline constexpr double kDefaultLevel = 0.05;

struct TestResult {
    double statistic = 0.0;
    int dof = 0;
    /// p-value from ½χ²₀ + ½χ²₁ rather than χ²(dof).
    bool boundary_mixture = false;
    double p_value = 1.0;
    std::vector<std::string> restriction;

    bool rejects(double level = kDefaultLevel) const { return p_value < level; }
    nlohmann::json to_json() const;
    static TestResult from_json(const nlohmann::json& doc);
};

struct RatioRow {
    std::string name;
    double irr;
    double z;
    double p_value;
    bool significant;
};

/// exp(β) for the mean coefficients of a count fit; z is the coefficient-scale z.
/// Throws ParameterError for binary fits.
std::vector<RatioRow> incidence_rate_ratios(const FitResult& fit, double level = kDefaultLevel);

struct MarginalEffect {
    std::string name;
    double ame;
    /// z of the variable's own coefficient.
    double z;
    bool binary;
};

/// Average marginal effects of a probit or logit fit on its estimation rows.
///
/// Every variable that appears as a factor of some term gets one effect. A term's
/// contribution is chained through squares and products (so age with age^2 yields
/// φ(xβ)(β_age + 2β_age² age)). Variables taking only the values 0 and 1 on the fit rows
/// use the mean discrete difference F(xβ | v=1) − F(xβ | v=0). Terms dropped from the
/// design contribute nothing. Throws SchemaError for a term naming an unknown variable.
std::vector<MarginalEffect> average_marginal_effects(const FitResult& fit, const PanelDataset& data,
                                                     const std::vector<Term>& terms, const ColumnMap& extra = {});

/// W = b'V⁻¹b over the named coefficients, χ² with |names| degrees of freedom.
/// Throws SchemaError for unknown names and SingularMatrixError for a singular submatrix.
TestResult wald_joint(const FitResult& fit, const std::vector<std::string>& names);
TestResult wald_test(const Eigen::VectorXd& b, const Eigen::MatrixXd& v, std::vector<std::string> names);

/// Joint Wald test over coefficients drawn from several fits on overlapping rows of one
/// dataset. The cross-fit covariance is the stacked clustered sandwich with block-diagonal
/// bread; `cluster` gives the cluster code of every dataset row. Restricted names are
/// reported as "<label>:<name>".
TestResult wald_joint_stacked(const std::vector<const FitResult*>& fits, const std::vector<std::string>& labels,
                              const std::vector<std::vector<std::string>>& names, std::span<const int> cluster);

/// LR = 2(ll_nb − ll_pois) against the boundary mixture ½χ²₀ + ½χ²₁.
/// Throws NestingError when ll_nb < ll_pois − 1e-6 or the observation counts differ.
TestResult lr_dispersion(const FitResult& fit_nb, const FitResult& fit_pois);

struct StabilityResult {
    TestResult joint;
    std::vector<RatioRow> interactions;
    /// Interactions jointly insignificant, or every interaction IRR within 1% of 1.
    bool stable = false;
    FitResult fit;

    nlohmann::json to_json() const;
};

struct StabilityInput {
    DesignMatrix design;
    std::vector<std::int64_t> y;
    std::vector<int> cluster;
    CountKind family = CountKind::nb2;
    FitOptions options;
    /// Trend values aligned to design rows.
    Eigen::VectorXd trend;
    std::string trend_name = "t1";
    /// Design columns to interact with the trend.
    std::vector<std::string> interact;
};

/// Refits with every `interact` column multiplied by the trend (and the trend itself when
/// absent) and tests the interactions jointly.
StabilityResult stability_interactions(const StabilityInput& input, double level = kDefaultLevel);

}  // namespace countfx
