#pragma once

#include "countfx/data.hpp"
#include "countfx/distributions.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace countfx {

/// A log-likelihood over a parameter vector.
///
/// Implementations provide the log-likelihood and per-observation scores; the gradient
/// defaults to the column sums of the scores and the Hessian to central differences of
/// the gradient. Index models override both with analytic versions.
class Objective {
public:
    struct Evaluation {
        double loglik;
        Eigen::VectorXd gradient;
        Eigen::MatrixXd hessian;
    };

    virtual ~Objective() = default;

    virtual Eigen::Index dim() const = 0;
    virtual double loglik(const Eigen::VectorXd& theta) const = 0;
    /// n × k matrix of per-observation gradients.
    virtual Eigen::MatrixXd scores(const Eigen::VectorXd& theta) const = 0;
    virtual Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const;
    virtual Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const;
    virtual Evaluation evaluate(const Eigen::VectorXd& theta) const;
};

struct OptimOptions {
    double tol = 1e-8;
    int max_iter = 200;
    /// Stop (unconverged, diverged = true) once any |theta_j| exceeds this bound.
    double divergence_bound = std::numeric_limits<double>::infinity();
};

struct OptimResult {
    Eigen::VectorXd theta;
    double loglik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
    bool converged = false;
    bool diverged = false;
    int iterations = 0;
    /// Log-likelihood after each accepted step, starting with the start value.
    std::vector<double> trace;
};

/// Damped Newton ascent. Each step halves until the log-likelihood does not decrease
/// (at most 50 halvings). A Hessian that is not negative definite has its eigenvalues
/// clipped at -1e-8; if that direction cannot ascend, steepest ascent is tried.
/// Converges when ||gradient||_inf < tol, or when the Newton-predicted gain is below the
/// floating-point resolution of the log-likelihood.
/// Throws OptimizationError if the start value is not finite.
OptimResult maximize_loglik(const Objective& obj, const Eigen::VectorXd& start, const OptimOptions& opts = {});

/// Worst central-difference discrepancy of obj.gradient at theta, measured as
/// |analytic - fd| / max(1, |fd|) with step 1e-6 (1 + |theta_j|).
double check_gradient(const Objective& obj, const Eigen::VectorXd& theta);

// ---------------------------------------------------------------------------

enum class BinaryLink { probit, logit };
std::string_view to_string(BinaryLink link);
BinaryLink binary_link_from_string(std::string_view name);

/// Everything about a fitted model that later stages need.
struct FitResult {
    /// "probit", "logit", "poisson", "nb2", "zinb", "ztnb", "zip", "ztp".
    std::string model;
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    /// Clustered sandwich covariance.
    Eigen::MatrixXd vcov;
    /// Inverse of the negative Hessian.
    Eigen::MatrixXd naive_vcov;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> trace;
    std::size_t n_obs = 0;
    int n_clusters = 0;
    /// Number of leading entries of coef that belong to the mean (or probit index) design.
    Eigen::Index n_mean_coef = 0;
    std::vector<std::string> warnings;
    /// Parameters that ran to the edge of the space ("log_alpha", "inflation").
    std::vector<std::string> boundary;

    // Retained for residuals, marginal effects and stacked covariance.
    std::vector<std::size_t> rows;
    Eigen::VectorXd linear_predictor;
    Eigen::MatrixXd scores;
    Eigen::MatrixXd hessian;

    Eigen::VectorXd se() const;
    Eigen::VectorXd z() const;
    /// Throws SchemaError if absent.
    Eigen::Index index_of(std::string_view name) const;
    bool has(std::string_view name) const;
    bool is_binary() const { return model == "probit" || model == "logit"; }
    bool at_boundary(std::string_view what) const;

    nlohmann::json to_json() const;
    /// Restores the serialized summary (names, estimates, vcov, diagnostics).
    static FitResult from_json(const nlohmann::json& doc);
};

/// bread · (Σ_g s_g s_gᵀ) · bread with s_g the within-cluster score sums.
Eigen::MatrixXd clustered_sandwich_vcov(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& bread,
                                        std::span<const int> cluster);

/// Inverse of -H after symmetrization; throws SingularMatrixError if -H is not invertible.
Eigen::MatrixXd inverse_negative_hessian(const Eigen::MatrixXd& hessian);

struct FitOptions {
    OptimOptions optim;
    /// Fix α = 0 inside an NB-based family: zinb becomes ZIP, ztnb becomes ZTP.
    bool poisson_limit = false;
};

/// Probit or logit MLE from a zero start. `cluster` is aligned to design rows.
/// Throws DegenerateSampleError when y has one class and SeparationError when a
/// regressor separates the classes or a coefficient exceeds 1e3 in magnitude.
FitResult fit_binary(const DesignMatrix& design, std::span<const int> y, BinaryLink link, std::span<const int> cluster,
                     const FitOptions& opts = {});

/// Count-model MLE. Mean coefficients first, then log α (NB kinds), then the zero-inflation
/// logit coefficients (zinb, named "inflate:<column>"). Starts from a Poisson fit.
/// Throws DomainError for ztnb with zero counts; non-convergence is reported, not thrown.
FitResult fit_count(const DesignMatrix& design, std::span<const std::int64_t> y, CountKind kind,
                    std::span<const int> cluster, const DesignMatrix* inflation_design = nullptr,
                    const FitOptions& opts = {});

/// Log-likelihood of a binary or count index model; exposed for gradient checks.
class IndexModelObjective final : public Objective {
public:
    static IndexModelObjective binary(Eigen::MatrixXd x, std::vector<int> y, BinaryLink link);
    static IndexModelObjective count(Eigen::MatrixXd x, std::vector<std::int64_t> y, CountKind kind,
                                     std::optional<Eigen::MatrixXd> inflation = std::nullopt, bool poisson_limit = false);

    Eigen::Index dim() const override;
    double loglik(const Eigen::VectorXd& theta) const override;
    Eigen::MatrixXd scores(const Eigen::VectorXd& theta) const override;
    Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const override;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const override;
    Evaluation evaluate(const Eigen::VectorXd& theta) const override;

    bool has_alpha() const { return has_alpha_; }
    Eigen::Index n_mean() const { return x_.cols(); }
    Eigen::Index n_inflation() const { return z_ ? z_->cols() : 0; }

private:
    enum class Kind { probit, logit, count };

    struct Pass {
        double loglik = 0.0;
        Eigen::MatrixXd index_grad;  // n × 3
        Eigen::MatrixXd index_hess;  // n × 6 (ηη, ηa, ηζ, aa, aζ, ζζ)
    };

    IndexModelObjective() = default;
    Pass run(const Eigen::VectorXd& theta, bool want_grad, bool want_hess) const;

    Kind kind_ = Kind::probit;
    CountKind count_kind_ = CountKind::poisson;
    bool has_alpha_ = false;
    Eigen::MatrixXd x_;
    std::optional<Eigen::MatrixXd> z_;
    std::vector<double> y_;
    std::vector<std::int64_t> counts_;
};

}  // namespace countfx
