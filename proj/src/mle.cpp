#include "countfx/mle.hpp"

#include "countfx/errors.hpp"
#include "countfx/special.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace countfx {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Objective defaults

Eigen::VectorXd Objective::gradient(const Eigen::VectorXd& theta) const {
    return scores(theta).colwise().sum().transpose();
}

Eigen::MatrixXd Objective::hessian(const Eigen::VectorXd& theta) const {
    const Eigen::Index k = dim();
    Eigen::MatrixXd h(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double step = 1e-5 * (1.0 + std::abs(theta(j)));
        Eigen::VectorXd up = theta, down = theta;
        up(j) += step;
        down(j) -= step;
        h.col(j) = (gradient(up) - gradient(down)) / (2.0 * step);
    }
    return 0.5 * (h + h.transpose());
}

Objective::Evaluation Objective::evaluate(const Eigen::VectorXd& theta) const {
    return {loglik(theta), gradient(theta), hessian(theta)};
}

// ---------------------------------------------------------------------------
// Optimizer

namespace {

Eigen::VectorXd ascent_direction(const Eigen::VectorXd& g, const Eigen::MatrixXd& h) {
    const Eigen::MatrixXd neg = -0.5 * (h + h.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(neg);
    if (llt.info() == Eigen::Success) {
        Eigen::VectorXd d = llt.solve(g);
        if (d.allFinite()) return d;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-neg);
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = std::min(lam(i), -1e-8);
    const Eigen::MatrixXd& v = es.eigenvectors();
    return -(v * (v.transpose() * g).cwiseQuotient(lam));
}

struct LineSearch {
    bool accepted = false;
    bool saw_finite = false;
    Eigen::VectorXd theta;
    double loglik = 0.0;
};

LineSearch search(const Objective& obj, const Eigen::VectorXd& theta, double ll, const Eigen::VectorXd& dir, double step0) {
    LineSearch out;
    double step = step0;
    for (int halving = 0; halving <= 50; ++halving, step *= 0.5) {
        Eigen::VectorXd cand = theta + step * dir;
        if (!cand.allFinite()) continue;
        const double v = obj.loglik(cand);
        if (!std::isfinite(v)) continue;
        out.saw_finite = true;
        if (v >= ll) {
            out.accepted = true;
            out.theta = std::move(cand);
            out.loglik = v;
            return out;
        }
    }
    return out;
}

}  // namespace

OptimResult maximize_loglik(const Objective& obj, const Eigen::VectorXd& start, const OptimOptions& opts) {
    OptimResult r;
    if (!start.allFinite()) throw OptimizationError("start value is not finite", {});
    r.theta = start;
    Objective::Evaluation ev = obj.evaluate(start);
    if (!std::isfinite(ev.loglik)) throw OptimizationError("log-likelihood is not finite at the start value", {});
    r.trace.push_back(ev.loglik);

    int stalls = 0;
    for (int it = 0; it < opts.max_iter; ++it) {
        if (!ev.gradient.allFinite() || !ev.hessian.allFinite())
            throw OptimizationError("gradient or Hessian is not finite", r.trace);
        if (ev.gradient.lpNorm<Eigen::Infinity>() < opts.tol) {
            r.converged = true;
            break;
        }
        const Eigen::VectorXd dir = ascent_direction(ev.gradient, ev.hessian);
        const double predicted_gain = std::abs(ev.gradient.dot(dir));
        const double resolution = 1e-8 * (1.0 + std::abs(ev.loglik));

        LineSearch ls = search(obj, r.theta, ev.loglik, dir, 1.0);
        if (!ls.accepted) {
            const double gmax = ev.gradient.lpNorm<Eigen::Infinity>();
            LineSearch steep = search(obj, r.theta, ev.loglik, ev.gradient, 1.0 / std::max(1.0, gmax));
            steep.saw_finite = steep.saw_finite || ls.saw_finite;
            ls = std::move(steep);
        }
        if (!ls.accepted) {
            if (!ls.saw_finite) throw OptimizationError("log-likelihood is not finite at any step size", r.trace);
            // No representable ascent left along either direction.
            r.converged = predicted_gain < resolution;
            break;
        }
        const double gain = ls.loglik - ev.loglik;
        r.theta = std::move(ls.theta);
        ev = obj.evaluate(r.theta);
        r.trace.push_back(ev.loglik);
        ++r.iterations;

        if (r.theta.lpNorm<Eigen::Infinity>() > opts.divergence_bound) {
            r.diverged = true;
            break;
        }
        stalls = gain <= 16 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(ev.loglik)) ? stalls + 1 : 0;
        if (stalls >= 3) {
            r.converged = predicted_gain < resolution;
            break;
        }
    }
    r.loglik = ev.loglik;
    r.gradient = ev.gradient;
    r.hessian = ev.hessian;
    return r;
}

double check_gradient(const Objective& obj, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd g = obj.gradient(theta);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double step = 1e-6 * (1.0 + std::abs(theta(j)));
        Eigen::VectorXd up = theta, down = theta;
        up(j) += step;
        down(j) -= step;
        const double fd = (obj.loglik(up) - obj.loglik(down)) / (2.0 * step);
        worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Index models

IndexModelObjective IndexModelObjective::binary(Eigen::MatrixXd x, std::vector<int> y, BinaryLink link) {
    if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DataError("outcome length does not match design rows");
    IndexModelObjective o;
    o.kind_ = link == BinaryLink::probit ? Kind::probit : Kind::logit;
    o.x_ = std::move(x);
    o.y_.assign(y.begin(), y.end());
    return o;
}

IndexModelObjective IndexModelObjective::count(Eigen::MatrixXd x, std::vector<std::int64_t> y, CountKind kind,
                                               std::optional<Eigen::MatrixXd> inflation, bool poisson_limit) {
    if (static_cast<Eigen::Index>(y.size()) != x.rows()) throw DataError("outcome length does not match design rows");
    IndexModelObjective o;
    o.kind_ = Kind::count;
    o.count_kind_ = kind;
    o.has_alpha_ = kind != CountKind::poisson && !poisson_limit;
    o.x_ = std::move(x);
    o.counts_ = std::move(y);
    if (kind == CountKind::zinb) {
        o.z_ = inflation ? std::move(*inflation) : o.x_;
        if (o.z_->rows() != o.x_.rows()) throw DataError("inflation design rows do not match the mean design");
    }
    return o;
}

Eigen::Index IndexModelObjective::dim() const {
    return x_.cols() + (has_alpha_ ? 1 : 0) + n_inflation();
}

IndexModelObjective::Pass IndexModelObjective::run(const Eigen::VectorXd& theta, bool want_grad, bool want_hess) const {
    const Eigen::Index n = x_.rows();
    const Eigen::Index kx = x_.cols();
    const Eigen::VectorXd eta = x_ * theta.head(kx);
    Pass p;
    if (want_grad) p.index_grad.setZero(n, 3);
    if (want_hess) p.index_hess.setZero(n, 6);

    if (kind_ != Kind::count) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double e = eta(i);
            double g, h;
            if (kind_ == Kind::probit) {
                const int d = y_[static_cast<std::size_t>(i)] > 0.5 ? 1 : 0;
                p.loglik += d ? normal_log_cdf(e) : normal_log_cdf(-e);
                g = probit_generalized_residual(e, d);
                h = -g * (g + e);
            } else {
                const double yi = y_[static_cast<std::size_t>(i)];
                const double pr = logistic_cdf(e);
                p.loglik += yi * e - special::softplus(e);
                g = yi - pr;
                h = -pr * (1.0 - pr);
            }
            if (want_grad) p.index_grad(i, 0) = g;
            if (want_hess) p.index_hess(i, 0) = h;
        }
        return p;
    }

    const double log_alpha = has_alpha_ ? theta(kx) : kNegInf;
    Eigen::VectorXd zeta;
    if (z_) zeta = *z_ * theta.tail(z_->cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const IndexDerivatives d = count_index_derivatives(count_kind_, eta(i), log_alpha, z_ ? zeta(i) : 0.0,
                                                           counts_[static_cast<std::size_t>(i)]);
        p.loglik += d.value;
        if (want_grad) p.index_grad.row(i) = d.grad.transpose();
        if (want_hess) {
            p.index_hess(i, 0) = d.hess(0, 0);
            p.index_hess(i, 1) = d.hess(0, 1);
            p.index_hess(i, 2) = d.hess(0, 2);
            p.index_hess(i, 3) = d.hess(1, 1);
            p.index_hess(i, 4) = d.hess(1, 2);
            p.index_hess(i, 5) = d.hess(2, 2);
        }
    }
    return p;
}

double IndexModelObjective::loglik(const Eigen::VectorXd& theta) const {
    return run(theta, false, false).loglik;
}

Eigen::MatrixXd IndexModelObjective::scores(const Eigen::VectorXd& theta) const {
    const Pass p = run(theta, true, false);
    const Eigen::Index kx = x_.cols();
    Eigen::MatrixXd s(x_.rows(), dim());
    s.leftCols(kx) = x_.array().colwise() * p.index_grad.col(0).array();
    Eigen::Index off = kx;
    if (has_alpha_) s.col(off++) = p.index_grad.col(1);
    if (z_) s.rightCols(z_->cols()) = z_->array().colwise() * p.index_grad.col(2).array();
    return s;
}

Eigen::VectorXd IndexModelObjective::gradient(const Eigen::VectorXd& theta) const {
    return evaluate(theta).gradient;
}

Eigen::MatrixXd IndexModelObjective::hessian(const Eigen::VectorXd& theta) const {
    return evaluate(theta).hessian;
}

Objective::Evaluation IndexModelObjective::evaluate(const Eigen::VectorXd& theta) const {
    const Pass p = run(theta, true, true);
    const Eigen::Index kx = x_.cols();
    const Eigen::Index k = dim();
    Evaluation ev;
    ev.loglik = p.loglik;
    ev.gradient.resize(k);
    ev.hessian.setZero(k, k);

    ev.gradient.head(kx) = x_.transpose() * p.index_grad.col(0);
    ev.hessian.topLeftCorner(kx, kx) = x_.transpose() * (x_.array().colwise() * p.index_hess.col(0).array()).matrix();
    Eigen::Index off = kx;
    if (has_alpha_) {
        ev.gradient(off) = p.index_grad.col(1).sum();
        const Eigen::VectorXd cross = x_.transpose() * p.index_hess.col(1);
        ev.hessian.block(0, off, kx, 1) = cross;
        ev.hessian.block(off, 0, 1, kx) = cross.transpose();
        ev.hessian(off, off) = p.index_hess.col(3).sum();
        ++off;
    }
    if (z_) {
        const Eigen::MatrixXd& z = *z_;
        const Eigen::Index kz = z.cols();
        ev.gradient.tail(kz) = z.transpose() * p.index_grad.col(2);
        const Eigen::MatrixXd xz = x_.transpose() * (z.array().colwise() * p.index_hess.col(2).array()).matrix();
        ev.hessian.block(0, off, kx, kz) = xz;
        ev.hessian.block(off, 0, kz, kx) = xz.transpose();
        if (has_alpha_) {
            const Eigen::VectorXd az = z.transpose() * p.index_hess.col(4);
            ev.hessian.block(kx, off, 1, kz) = az.transpose();
            ev.hessian.block(off, kx, kz, 1) = az;
        }
        ev.hessian.bottomRightCorner(kz, kz) = z.transpose() * (z.array().colwise() * p.index_hess.col(5).array()).matrix();
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Covariance

Eigen::MatrixXd clustered_sandwich_vcov(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& bread,
                                        std::span<const int> cluster) {
    if (static_cast<Eigen::Index>(cluster.size()) != scores.rows())
        throw DataError("cluster ids must cover every score row");
    const int n_groups = cluster.empty() ? 0 : *std::max_element(cluster.begin(), cluster.end()) + 1;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_groups, scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const int g = cluster[static_cast<std::size_t>(i)];
        if (g < 0) throw DataError("cluster ids must be nonnegative");
        sums.row(g) += scores.row(i);
    }
    const Eigen::MatrixXd meat = sums.transpose() * sums;
    Eigen::MatrixXd v = bread * meat * bread;
    return 0.5 * (v + v.transpose());
}

Eigen::MatrixXd inverse_negative_hessian(const Eigen::MatrixXd& hessian) {
    const Eigen::MatrixXd neg = -0.5 * (hessian + hessian.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(neg);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("negative Hessian is not positive definite");
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(neg.rows(), neg.cols()));
    if (!inv.allFinite()) throw SingularMatrixError("negative Hessian is singular");
    return 0.5 * (inv + inv.transpose());
}

namespace {

Eigen::MatrixXd bread_or_pseudo(const Eigen::MatrixXd& hessian, std::vector<std::string>& warnings) {
    try {
        return inverse_negative_hessian(hessian);
    } catch (const SingularMatrixError&) {
        warnings.push_back("negative Hessian is not positive definite; covariance uses a pseudo-inverse");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-0.5 * (hessian + hessian.transpose()));
        Eigen::VectorXd lam = es.eigenvalues();
        const double cut = 1e-12 * std::max(1.0, lam.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = lam(i) > cut ? 1.0 / lam(i) : 0.0;
        return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    }
}

void finalize(FitResult& fit, const Objective& obj, const OptimResult& opt, std::span<const int> cluster) {
    fit.coef = opt.theta;
    fit.loglik = opt.loglik;
    fit.converged = opt.converged;
    fit.iterations = opt.iterations;
    fit.trace = opt.trace;
    fit.hessian = opt.hessian;
    fit.scores = obj.scores(opt.theta);
    fit.naive_vcov = bread_or_pseudo(opt.hessian, fit.warnings);
    fit.vcov = clustered_sandwich_vcov(fit.scores, fit.naive_vcov, cluster);
    fit.n_clusters = static_cast<int>(std::set<int>(cluster.begin(), cluster.end()).size());
    if (fit.coef.size() > fit.n_clusters)
        fit.warnings.push_back("more parameters (" + std::to_string(fit.coef.size()) + ") than clusters (" +
                               std::to_string(fit.n_clusters) + "); clustered covariance is rank deficient");
    if (!fit.converged) fit.warnings.push_back("optimizer did not converge");
}

void check_cluster(const DesignMatrix& design, std::span<const int> cluster) {
    if (static_cast<Eigen::Index>(cluster.size()) != design.x.rows())
        throw DataError("cluster ids must align with design rows");
}

}  // namespace

std::string_view to_string(BinaryLink link) {
    return link == BinaryLink::probit ? "probit" : "logit";
}

BinaryLink binary_link_from_string(std::string_view name) {
    if (name == "probit") return BinaryLink::probit;
    if (name == "logit") return BinaryLink::logit;
    throw UnsupportedLinkError("unknown binary link '" + std::string(name) + "'");
}

FitResult fit_binary(const DesignMatrix& design, std::span<const int> y, BinaryLink link, std::span<const int> cluster,
                     const FitOptions& opts) {
    check_cluster(design, cluster);
    if (static_cast<Eigen::Index>(y.size()) != design.x.rows()) throw DataError("outcome length does not match design rows");
    std::size_t ones = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw DataError("binary outcome must be 0 or 1");
        ones += static_cast<std::size_t>(v);
    }
    if (ones == 0 || ones == y.size()) throw DegenerateSampleError("binary outcome has a single class");

    // A two-valued regressor with one outcome class at either level separates the data.
    for (Eigen::Index j = 1; j < design.x.cols(); ++j) {
        const auto col = design.x.col(j);
        const double lo = col.minCoeff(), hi = col.maxCoeff();
        if (((col.array() == lo) || (col.array() == hi)).all()) {
            for (double level : {lo, hi}) {
                int seen0 = 0, seen1 = 0;
                for (Eigen::Index i = 0; i < col.size(); ++i)
                    if (col(i) == level) (y[static_cast<std::size_t>(i)] ? seen1 : seen0) = 1;
                if (seen0 + seen1 == 1)
                    throw SeparationError("regressor '" + design.names[static_cast<std::size_t>(j)] +
                                              "' perfectly predicts the outcome at one of its levels",
                                          design.names[static_cast<std::size_t>(j)]);
            }
        }
    }

    const IndexModelObjective obj = IndexModelObjective::binary(design.x, std::vector<int>(y.begin(), y.end()), link);
    OptimOptions oo = opts.optim;
    oo.divergence_bound = std::min(oo.divergence_bound, 1e3);
    const OptimResult opt = maximize_loglik(obj, Eigen::VectorXd::Zero(obj.dim()), oo);
    // A near-zero log-likelihood means every outcome is predicted with certainty.
    const bool perfect = opt.loglik > -1e-6 * static_cast<double>(y.size());
    if (opt.diverged || perfect) {
        Eigen::Index culprit = 0;
        if (opt.theta.size() > 1) {
            opt.theta.tail(opt.theta.size() - 1).cwiseAbs().maxCoeff(&culprit);
            ++culprit;
        }
        const std::string& name = design.names[static_cast<std::size_t>(culprit)];
        throw SeparationError("coefficient of '" + name + (perfect ? "' separates the outcome perfectly" : "' grew beyond 1e3 (perfect separation)"), name);
    }
    FitResult fit;
    fit.model = std::string(to_string(link));
    fit.names = design.names;
    fit.n_obs = static_cast<std::size_t>(design.x.rows());
    fit.n_mean_coef = design.x.cols();
    fit.rows = design.rows;
    finalize(fit, obj, opt, cluster);
    fit.linear_predictor = design.x * fit.coef;
    return fit;
}

FitResult fit_count(const DesignMatrix& design, std::span<const std::int64_t> y, CountKind kind,
                    std::span<const int> cluster, const DesignMatrix* inflation_design, const FitOptions& opts) {
    check_cluster(design, cluster);
    if (static_cast<Eigen::Index>(y.size()) != design.x.rows()) throw DataError("outcome length does not match design rows");
    double total = 0.0;
    std::size_t zeros = 0;
    for (auto v : y) {
        if (v < 0) throw DomainError("count outcome must be >= 0");
        total += static_cast<double>(v);
        zeros += v == 0 ? 1 : 0;
    }
    if (kind == CountKind::ztnb && zeros > 0)
        throw DomainError("zero-truncated model requires every count >= 1 (" + std::to_string(zeros) + " zeros found)");
    if (total == 0.0) throw DegenerateSampleError("every count is zero");
    if (inflation_design && inflation_design->rows != design.rows)
        throw DataError("inflation design must cover the same rows as the mean design");

    const std::vector<std::int64_t> counts(y.begin(), y.end());
    const double mean_y = total / static_cast<double>(y.size());

    const IndexModelObjective pois_obj = IndexModelObjective::count(design.x, counts, CountKind::poisson);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(pois_obj.dim());
    start(0) = std::log(mean_y);
    const OptimResult pois = maximize_loglik(pois_obj, start, opts.optim);

    const bool effectively_poisson = kind == CountKind::poisson || (kind == CountKind::nb2 && opts.poisson_limit);
    FitResult fit;
    fit.names = design.names;
    fit.n_obs = counts.size();
    fit.n_mean_coef = design.x.cols();
    fit.rows = design.rows;
    if (effectively_poisson) {
        fit.model = "poisson";
        finalize(fit, pois_obj, pois, cluster);
        fit.linear_predictor = design.x * fit.coef;
        return fit;
    }

    std::optional<Eigen::MatrixXd> z;
    if (kind == CountKind::zinb) z = inflation_design ? inflation_design->x : design.x;
    const IndexModelObjective obj = IndexModelObjective::count(design.x, counts, kind, z, opts.poisson_limit);

    Eigen::VectorXd theta0(obj.dim());
    theta0.head(design.x.cols()) = pois.theta;
    Eigen::Index off = design.x.cols();
    if (obj.has_alpha()) theta0(off++) = 0.0;
    if (z) {
        theta0.tail(z->cols()).setZero();
        const Eigen::VectorXd lambda = (design.x * pois.theta).array().exp();
        const double alpha0 = obj.has_alpha() ? 1.0 : 0.0;
        double implied = 0.0;
        for (Eigen::Index i = 0; i < lambda.size(); ++i) implied += std::exp(nb_log_zero_mass(lambda(i), alpha0));
        implied /= static_cast<double>(lambda.size());
        const double excess = std::clamp(static_cast<double>(zeros) / static_cast<double>(counts.size()) - implied, 0.01, 0.99);
        theta0(off) = std::log(excess / (1.0 - excess));
    }
    OptimResult opt = maximize_loglik(obj, theta0, opts.optim);
    if (kind == CountKind::nb2 && opt.loglik < pois.loglik) {
        // NB2 nests the Poisson at α -> 0; restart next to that edge.
        Eigen::VectorXd edge = theta0;
        edge(design.x.cols()) = -30.0;
        OptimResult alt = maximize_loglik(obj, edge, opts.optim);
        if (alt.loglik > opt.loglik) opt = std::move(alt);
    }

    if (kind == CountKind::zinb) fit.model = opts.poisson_limit ? "zip" : "zinb";
    else if (kind == CountKind::ztnb) fit.model = opts.poisson_limit ? "ztp" : "ztnb";
    else fit.model = "nb2";
    if (obj.has_alpha()) fit.names.push_back("log_alpha");
    if (z) {
        const auto& zn = inflation_design ? inflation_design->names : design.names;
        for (const auto& n : zn) fit.names.push_back("inflate:" + n);
    }
    finalize(fit, obj, opt, cluster);
    fit.linear_predictor = design.x * fit.coef.head(design.x.cols());

    if (obj.has_alpha() && fit.coef(design.x.cols()) < -10.0) fit.boundary.push_back("log_alpha");
    if (z) {
        const Eigen::VectorXd zeta = *z * fit.coef.tail(z->cols());
        if (logistic_cdf(zeta.maxCoeff()) < 1e-4) fit.boundary.push_back("inflation");
    }
    return fit;
}

// ---------------------------------------------------------------------------
// FitResult

Eigen::VectorXd FitResult::se() const {
    return vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::VectorXd FitResult::z() const {
    return coef.cwiseQuotient(se());
}

Eigen::Index FitResult::index_of(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return static_cast<Eigen::Index>(j);
    throw SchemaError("coefficient '" + std::string(name) + "' is not in the " + model + " fit");
}

bool FitResult::has(std::string_view name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
}

bool FitResult::at_boundary(std::string_view what) const {
    return std::find(boundary.begin(), boundary.end(), what) != boundary.end();
}

nlohmann::json FitResult::to_json() const {
    const Eigen::VectorXd s = se();
    nlohmann::json coefs = nlohmann::json::array();
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        const double zz = coef(jj) / s(jj);
        nlohmann::json c = {{"name", names[j]}, {"estimate", coef(jj)}, {"se", s(jj)}};
        if (std::isfinite(zz)) {
            c["z"] = zz;
            c["p"] = std::erfc(std::abs(zz) / std::numbers::sqrt2);
        } else {
            c["z"] = nullptr;
            c["p"] = nullptr;
        }
        if (names[j] == "log_alpha" && at_boundary("log_alpha")) c["boundary"] = "-inf";
        coefs.push_back(std::move(c));
    }
    nlohmann::json v = nlohmann::json::array();
    for (Eigen::Index i = 0; i < vcov.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < vcov.cols(); ++j) row.push_back(vcov(i, j));
        v.push_back(std::move(row));
    }
    return {
        {"model", model},
        {"coefficients", std::move(coefs)},
        {"vcov", std::move(v)},
        {"loglik", loglik},
        {"n_obs", n_obs},
        {"n_clusters", n_clusters},
        {"n_mean_coef", n_mean_coef},
        {"convergence", {{"converged", converged}, {"iterations", iterations}}},
        {"warnings", warnings},
        {"boundary", boundary},
    };
}

FitResult FitResult::from_json(const nlohmann::json& doc) {
    try {
        FitResult f;
        f.model = doc.at("model").get<std::string>();
        const auto& coefs = doc.at("coefficients");
        const auto k = static_cast<Eigen::Index>(coefs.size());
        f.coef.resize(k);
        for (Eigen::Index j = 0; j < k; ++j) {
            f.names.push_back(coefs[static_cast<std::size_t>(j)].at("name").get<std::string>());
            f.coef(j) = coefs[static_cast<std::size_t>(j)].at("estimate").get<double>();
        }
        const auto& v = doc.at("vcov");
        f.vcov.resize(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j) f.vcov(i, j) = v.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).get<double>();
        f.loglik = doc.at("loglik").get<double>();
        f.n_obs = doc.at("n_obs").get<std::size_t>();
        f.n_clusters = doc.at("n_clusters").get<int>();
        f.n_mean_coef = doc.value("n_mean_coef", static_cast<Eigen::Index>(k));
        f.converged = doc.at("convergence").at("converged").get<bool>();
        f.iterations = doc.at("convergence").at("iterations").get<int>();
        f.warnings = doc.value("warnings", std::vector<std::string>{});
        f.boundary = doc.value("boundary", std::vector<std::string>{});
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(std::string("malformed fit document: ") + e.what());
    }
}

}  // namespace countfx
