#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <string_view>

namespace countfx {

enum class CountKind { poisson, nb2, zinb, ztnb };

std::string_view to_string(CountKind kind);
/// Throws ParameterError on unknown names.
CountKind count_kind_from_string(std::string_view name);

/// One outcome law: mean λ of the (untruncated, non-inflated) count process,
/// NB2 dispersion α with Var = λ(1 + αλ), and zero-inflation probability p.
struct CountFamily {
    CountKind kind = CountKind::poisson;
    double mean = 1.0;
    double alpha = 0.0;      // ignored for poisson
    double inflation = 0.0;  // zinb only

    /// Throws ParameterError if λ <= 0, α < 0, p outside (0,1), or anything non-finite.
    void validate() const;
};

/// log P(Y = y). Evaluated through log-gamma and log1p identities, stable for large y
/// and for α down to 0.
double count_logpmf(const CountFamily& family, std::int64_t y);

/// Gradient of count_logpmf in the unconstrained coordinates
/// (log λ [, log α] [, logit p]); length 1 (poisson), 2 (nb2, ztnb) or 3 (zinb).
Eigen::VectorXd count_logpmf_grad(const CountFamily& family, std::int64_t y);

struct TruncatedMoments {
    double mean;
    double variance;
};

/// Mean and variance of the zero-truncated NB2 law (zero-truncated Poisson at α = 0).
TruncatedMoments ztnb_moments(double lambda, double alpha);

/// log P_NB(0) = -log(1 + αλ)/α, continuous at α = 0 where it equals -λ.
double nb_log_zero_mass(double lambda, double alpha);

/// Log-likelihood contribution with first and second derivatives in index space
/// (η = log λ, a = log α, ζ = logit p). Unused coordinates carry zeros.
struct IndexDerivatives {
    double value = 0.0;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

/// `log_alpha = -inf` gives the Poisson limit of every NB-based kind (ZIP, ZTP).
IndexDerivatives count_index_derivatives(CountKind kind, double eta, double log_alpha, double logit_p,
                                         std::int64_t y);

// Standard normal and logistic kernels.

struct NormalEval {
    double pdf;
    double cdf;
    double log_cdf;
};

NormalEval std_normal(double x);
double normal_pdf(double x);
/// Clamped to [1e-300, 1 - 2^-53].
double normal_cdf(double x);
/// Continued-fraction tail for x < -8.
double normal_log_cdf(double x);
/// φ(x)/Φ(x), finite for every finite x (≈ -x for x → -∞).
double inverse_mills(double x);
double logistic_cdf(double x);

/// Generalized residual of a binary probit observation: φ/Φ(η) if d = 1, -φ/(1-Φ(η)) if d = 0.
double probit_generalized_residual(double eta, int d);

}  // namespace countfx
