#include "countfx/distributions.hpp"

#include "countfx/errors.hpp"
#include "countfx/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace countfx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kDirectSumLimit = 100000;

/// log1p(u)/u, continuous at 0.
double log1p_ratio(double u) {
    if (u < 1e-8) return 1.0 - u * (0.5 - u / 3.0);
    return std::log1p(u) / u;
}

/// Pieces of the NB2 log-pmf and its index derivatives that depend on y.
struct NbSums {
    double s0;  // Σ_{j<y} log1p(αj)
    double s1;  // Σ_{j<y} 1/(1+αj)
    double s2;  // Σ_{j<y} αj/(1+αj)²
};

NbSums nb_sums(double alpha, std::int64_t y) {
    NbSums out{0.0, 0.0, 0.0};
    if (y <= kDirectSumLimit || alpha < 1e-6) {
        for (std::int64_t j = 0; j < y; ++j) {
            const double aj = alpha * static_cast<double>(j);
            const double inv = 1.0 / (1.0 + aj);
            out.s0 += std::log1p(aj);
            out.s1 += inv;
            out.s2 += aj * inv * inv;
        }
        return out;
    }
    const double r = 1.0 / alpha;
    const double yd = static_cast<double>(y);
    const double dpsi = special::digamma(yd + r) - special::digamma(r);
    out.s0 = std::lgamma(yd + r) - std::lgamma(r) + yd * std::log(alpha);
    out.s1 = r * dpsi;
    out.s2 = r * dpsi - r * r * (special::trigamma(r) - special::trigamma(yd + r));
    return out;
}

/// NB2 in (η, a); fills the top-left 2×2 block.
IndexDerivatives nb2_derivatives(double eta, double log_alpha, std::int64_t y) {
    const double lambda = std::exp(eta);
    const double alpha = std::exp(log_alpha);
    const double u = alpha * lambda;
    const double d = 1.0 + u;
    const double l1 = lambda * log1p_ratio(u);  // log(1+αλ)/α
    const double yd = static_cast<double>(y);
    const NbSums s = nb_sums(alpha, y);

    IndexDerivatives out;
    out.value = s.s0 - std::lgamma(yd + 1.0) + yd * eta - l1 - yd * std::log1p(u);
    const double resid = (yd - lambda) / d;
    out.grad(0) = resid;
    out.grad(1) = l1 - s.s1 + resid;
    out.hess(0, 0) = -lambda * (1.0 + alpha * yd) / (d * d);
    out.hess(0, 1) = out.hess(1, 0) = -(yd - lambda) * u / (d * d);
    out.hess(1, 1) = lambda / d - l1 + s.s2 - (yd - lambda) * u / (d * d);
    return out;
}

/// log P_NB(0) in (η, a) with derivatives.
IndexDerivatives nb_zero_derivatives(double eta, double log_alpha) {
    const double lambda = std::exp(eta);
    const double alpha = std::exp(log_alpha);
    const double u = alpha * lambda;
    const double d = 1.0 + u;
    const double l1 = lambda * log1p_ratio(u);
    IndexDerivatives out;
    out.value = -l1;
    out.grad(0) = -lambda / d;
    out.grad(1) = l1 - lambda / d;
    out.hess(0, 0) = -lambda / (d * d);
    out.hess(0, 1) = out.hess(1, 0) = lambda * u / (d * d);
    out.hess(1, 1) = lambda / d - l1 + lambda * u / (d * d);
    return out;
}

IndexDerivatives poisson_derivatives(double eta, std::int64_t y) {
    const double lambda = std::exp(eta);
    const double yd = static_cast<double>(y);
    IndexDerivatives out;
    out.value = yd * eta - lambda - std::lgamma(yd + 1.0);
    out.grad(0) = yd - lambda;
    out.hess(0, 0) = -lambda;
    return out;
}

IndexDerivatives zinb_derivatives(double eta, double log_alpha, double logit_p, std::int64_t y) {
    const double log_p = -special::softplus(-logit_p);
    const double log_q = -special::softplus(logit_p);
    const double p = std::exp(log_p);
    const double pq = p * std::exp(log_q);
    if (y > 0) {
        IndexDerivatives out = nb2_derivatives(eta, log_alpha, y);
        out.value += log_q;
        out.grad(2) = -p;
        out.hess(2, 2) = -pq;
        return out;
    }
    // Two-component log-sum-exp: A1 = log p, A2 = log(1-p) + log NB(0).
    const IndexDerivatives zero = nb_zero_derivatives(eta, log_alpha);
    Eigen::Vector3d g1(0.0, 0.0, 1.0 - p);
    Eigen::Matrix3d h1 = Eigen::Matrix3d::Zero();
    h1(2, 2) = -pq;
    Eigen::Vector3d g2 = zero.grad;
    g2(2) = -p;
    Eigen::Matrix3d h2 = zero.hess;
    h2(2, 2) = -pq;

    const double a1 = log_p;
    const double a2 = log_q + zero.value;
    IndexDerivatives out;
    out.value = special::logaddexp(a1, a2);
    const double w2 = std::exp(a2 - out.value);
    const double w1 = std::exp(a1 - out.value);
    out.grad = w1 * g1 + w2 * g2;
    out.hess = w1 * (h1 + g1 * g1.transpose()) + w2 * (h2 + g2 * g2.transpose()) - out.grad * out.grad.transpose();
    return out;
}

IndexDerivatives ztnb_derivatives(double eta, double log_alpha, std::int64_t y) {
    if (y < 1) throw DomainError("zero-truncated count model: y must be >= 1");
    IndexDerivatives out = nb2_derivatives(eta, log_alpha, y);
    const IndexDerivatives zero = nb_zero_derivatives(eta, log_alpha);
    // M = log(1 - f0); dM = -q dL0, d²M = -q d²L0 - q(1+q) dL0 dL0'
    const double q = 1.0 / std::expm1(-zero.value);
    out.value -= special::log1mexp(zero.value);
    out.grad += q * zero.grad;
    out.hess += q * zero.hess + q * (1.0 + q) * zero.grad * zero.grad.transpose();
    return out;
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ParameterError(std::string(what) + " must be finite");
}

}  // namespace

std::string_view to_string(CountKind kind) {
    switch (kind) {
        case CountKind::poisson: return "poisson";
        case CountKind::nb2: return "nb2";
        case CountKind::zinb: return "zinb";
        case CountKind::ztnb: return "ztnb";
    }
    return "unknown";
}

CountKind count_kind_from_string(std::string_view name) {
    if (name == "poisson") return CountKind::poisson;
    if (name == "nb2") return CountKind::nb2;
    if (name == "zinb") return CountKind::zinb;
    if (name == "ztnb") return CountKind::ztnb;
    throw ParameterError("unknown count family '" + std::string(name) + "'");
}

void CountFamily::validate() const {
    check_finite(mean, "mean");
    if (mean <= 0.0) throw ParameterError("mean must be > 0");
    if (kind != CountKind::poisson) {
        check_finite(alpha, "alpha");
        if (alpha < 0.0) throw ParameterError("alpha must be >= 0");
    }
    if (kind == CountKind::zinb) {
        check_finite(inflation, "inflation");
        if (inflation <= 0.0 || inflation >= 1.0) throw ParameterError("inflation must lie in (0, 1)");
    }
}

IndexDerivatives count_index_derivatives(CountKind kind, double eta, double log_alpha, double logit_p,
                                         std::int64_t y) {
    if (y < 0) throw DomainError("count outcome must be >= 0");
    switch (kind) {
        case CountKind::poisson: return poisson_derivatives(eta, y);
        case CountKind::nb2: return nb2_derivatives(eta, log_alpha, y);
        case CountKind::zinb: return zinb_derivatives(eta, log_alpha, logit_p, y);
        case CountKind::ztnb: return ztnb_derivatives(eta, log_alpha, y);
    }
    return {};
}

namespace {

struct IndexPoint {
    double eta;
    double log_alpha;
    double logit_p;
};

IndexPoint to_index(const CountFamily& f) {
    f.validate();
    const double log_alpha = f.alpha > 0.0 ? std::log(f.alpha) : -kInf;
    const double logit_p = f.kind == CountKind::zinb ? std::log(f.inflation) - std::log1p(-f.inflation) : 0.0;
    return {std::log(f.mean), log_alpha, logit_p};
}

}  // namespace

double count_logpmf(const CountFamily& family, std::int64_t y) {
    const IndexPoint ip = to_index(family);
    if (family.kind == CountKind::ztnb && y < 1) throw DomainError("zero-truncated count model: y must be >= 1");
    return count_index_derivatives(family.kind, ip.eta, ip.log_alpha, ip.logit_p, y).value;
}

Eigen::VectorXd count_logpmf_grad(const CountFamily& family, std::int64_t y) {
    const IndexPoint ip = to_index(family);
    const IndexDerivatives d = count_index_derivatives(family.kind, ip.eta, ip.log_alpha, ip.logit_p, y);
    switch (family.kind) {
        case CountKind::poisson: return d.grad.head<1>();
        case CountKind::nb2:
        case CountKind::ztnb: return d.grad.head<2>();
        case CountKind::zinb: return d.grad;
    }
    return {};
}

double nb_log_zero_mass(double lambda, double alpha) {
    return -lambda * log1p_ratio(alpha * lambda);
}

TruncatedMoments ztnb_moments(double lambda, double alpha) {
    CountFamily{CountKind::nb2, lambda, alpha, 0.0}.validate();
    const double positive_mass = -std::expm1(nb_log_zero_mass(lambda, alpha));
    const double mean = lambda / positive_mass;
    const double second = (lambda * (1.0 + alpha * lambda) + lambda * lambda) / positive_mass;
    return {mean, second - mean * mean};
}

// ---------------------------------------------------------------------------

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

namespace {

/// Φ(-t)/φ(t) for t > 8 by backward evaluation of the Laplace continued fraction.
double mills_tail(double t) {
    double f = t;
    for (int k = 60; k >= 1; --k) f = t + k / f;
    return 1.0 / f;
}

}  // namespace

double normal_cdf(double x) {
    const double v = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    constexpr double hi = 1.0 - 1.0 / 9007199254740992.0;
    if (v < 1e-300) return 1e-300;
    if (v > hi) return hi;
    return v;
}

double normal_log_cdf(double x) {
    if (x < -8.0) return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(mills_tail(-x));
    if (x > 8.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
    return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
}

NormalEval std_normal(double x) {
    return {normal_pdf(x), normal_cdf(x), normal_log_cdf(x)};
}

double inverse_mills(double x) {
    if (x < -8.0) return 1.0 / mills_tail(-x);
    return normal_pdf(x) / (0.5 * std::erfc(-x / std::numbers::sqrt2));
}

double logistic_cdf(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double probit_generalized_residual(double eta, int d) {
    return d == 1 ? inverse_mills(eta) : -inverse_mills(-eta);
}

}  // namespace countfx
