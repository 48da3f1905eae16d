#include "countfx/inference.hpp"

#include "countfx/errors.hpp"
#include "countfx/special.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace countfx {

namespace {

double two_sided_p(double z) {
    return std::isfinite(z) ? std::erfc(std::abs(z) / std::numbers::sqrt2) : std::nan("");
}

}  // namespace

nlohmann::json TestResult::to_json() const {
    nlohmann::json doc = {{"statistic", statistic}, {"p_value", p_value}, {"restriction", restriction}};
    if (boundary_mixture) doc["dof"] = "chibar2(01)";
    else doc["dof"] = dof;
    return doc;
}

TestResult TestResult::from_json(const nlohmann::json& doc) {
    try {
        TestResult t;
        t.statistic = doc.at("statistic").get<double>();
        t.p_value = doc.at("p_value").get<double>();
        t.restriction = doc.value("restriction", std::vector<std::string>{});
        const auto& dof = doc.at("dof");
        if (dof.is_string()) {
            t.boundary_mixture = true;
            t.dof = 1;
        } else {
            t.dof = dof.get<int>();
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(std::string("malformed test document: ") + e.what());
    }
}

std::vector<RatioRow> incidence_rate_ratios(const FitResult& fit, double level) {
    if (fit.is_binary()) throw ParameterError("incidence rate ratios need a count model, got " + fit.model);
    const Eigen::VectorXd z = fit.z();
    std::vector<RatioRow> out;
    for (Eigen::Index j = 0; j < fit.n_mean_coef; ++j) {
        const double p = two_sided_p(z(j));
        out.push_back({fit.names[static_cast<std::size_t>(j)], std::exp(fit.coef(j)), z(j), p, p < level});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Marginal effects

std::vector<MarginalEffect> average_marginal_effects(const FitResult& fit, const PanelDataset& data,
                                                     const std::vector<Term>& terms, const ColumnMap& extra) {
    if (!fit.is_binary()) throw UnsupportedLinkError("marginal effects need a probit or logit fit, got " + fit.model);
    const bool probit = fit.model == "probit";
    if (static_cast<std::size_t>(fit.linear_predictor.size()) != fit.rows.size())
        throw DataError("fit does not carry linear predictors for its rows");

    auto value = [&](const std::string& name, std::size_t row) -> double {
        if (auto it = extra.find(name); it != extra.end()) {
            const auto& v = it->second[row];
            return v ? *v : std::nan("");
        }
        const auto v = data.value(name, row);
        return v ? *v : std::nan("");
    };

    std::vector<std::string> variables;
    for (const auto& t : terms) {
        for (const auto& f : t.factors) {
            if (!extra.count(f) && !data.has_variable(f))
                throw SchemaError("term '" + t.name() + "' references unknown variable '" + f + "'");
            if (std::find(variables.begin(), variables.end(), f) == variables.end()) variables.push_back(f);
        }
    }

    struct Present {
        const Term* term;
        double beta;
    };
    std::vector<Present> present;
    for (const auto& t : terms)
        if (fit.has(t.name())) present.push_back({&t, fit.coef(fit.index_of(t.name()))});

    const Eigen::VectorXd z = fit.z();
    auto cdf = [&](double e) { return probit ? normal_cdf(e) : logistic_cdf(e); };
    auto pdf = [&](double e) {
        if (probit) return normal_pdf(e);
        const double p = logistic_cdf(e);
        return p * (1.0 - p);
    };
    auto term_value = [&](const Term& t, std::size_t row, const std::string& var, std::optional<double> fixed) {
        double prod = 1.0;
        for (const auto& f : t.factors) prod *= (fixed && f == var) ? *fixed : value(f, row);
        return prod;
    };

    std::vector<MarginalEffect> out;
    const auto n = fit.rows.size();
    for (const auto& var : variables) {
        bool binary = true;
        for (auto r : fit.rows) {
            const double v = value(var, r);
            if (v != 0.0 && v != 1.0) {
                binary = false;
                break;
            }
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t r = fit.rows[i];
            const double eta = fit.linear_predictor(static_cast<Eigen::Index>(i));
            if (binary) {
                double shift1 = 0.0, shift0 = 0.0;
                for (const auto& p : present) {
                    if (std::find(p.term->factors.begin(), p.term->factors.end(), var) == p.term->factors.end()) continue;
                    const double now = term_value(*p.term, r, var, std::nullopt);
                    shift1 += p.beta * (term_value(*p.term, r, var, 1.0) - now);
                    shift0 += p.beta * (term_value(*p.term, r, var, 0.0) - now);
                }
                sum += cdf(eta + shift1) - cdf(eta + shift0);
            } else {
                double slope = 0.0;
                for (const auto& p : present) {
                    const auto& fs = p.term->factors;
                    for (std::size_t a = 0; a < fs.size(); ++a) {
                        if (fs[a] != var) continue;
                        double others = 1.0;
                        for (std::size_t b = 0; b < fs.size(); ++b)
                            if (b != a) others *= value(fs[b], r);
                        slope += p.beta * others;
                    }
                }
                sum += pdf(eta) * slope;
            }
        }
        const double own_z = fit.has(var) ? z(fit.index_of(var)) : std::nan("");
        out.push_back({var, n ? sum / static_cast<double>(n) : std::nan(""), own_z, binary});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Wald and LR tests

TestResult wald_test(const Eigen::VectorXd& b, const Eigen::MatrixXd& v, std::vector<std::string> names) {
    if (b.size() == 0) throw SchemaError("Wald test needs at least one coefficient");
    const Eigen::MatrixXd sym = 0.5 * (v + v.transpose());
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
    const double scale = std::max(sym.diagonal().cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-13 * scale)
        throw SingularMatrixError("covariance of the restricted coefficients is singular");
    TestResult t;
    t.statistic = std::max(0.0, b.dot(ldlt.solve(b)));
    t.dof = static_cast<int>(b.size());
    t.p_value = std::clamp(special::chi2_sf(t.statistic, t.dof), 0.0, 1.0);
    t.restriction = std::move(names);
    return t;
}

TestResult wald_joint(const FitResult& fit, const std::vector<std::string>& names) {
    const auto k = static_cast<Eigen::Index>(names.size());
    Eigen::VectorXd b(k);
    Eigen::MatrixXd v(k, k);
    std::vector<Eigen::Index> idx;
    for (const auto& n : names) idx.push_back(fit.index_of(n));
    for (Eigen::Index a = 0; a < k; ++a) {
        b(a) = fit.coef(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index c = 0; c < k; ++c) v(a, c) = fit.vcov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    }
    return wald_test(b, v, names);
}

TestResult wald_joint_stacked(const std::vector<const FitResult*>& fits, const std::vector<std::string>& labels,
                              const std::vector<std::vector<std::string>>& names, std::span<const int> cluster) {
    if (fits.size() != names.size() || fits.size() != labels.size())
        throw SchemaError("one label and one restriction list are needed per fit");
    Eigen::Index total = 0;
    std::vector<Eigen::Index> offset;
    for (const auto* f : fits) {
        offset.push_back(total);
        total += f->coef.size();
    }
    const int n_groups = cluster.empty() ? 0 : *std::max_element(cluster.begin(), cluster.end()) + 1;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_groups, total);
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(total, total);
    for (std::size_t f = 0; f < fits.size(); ++f) {
        const FitResult& fit = *fits[f];
        const Eigen::Index k = fit.coef.size();
        if (static_cast<std::size_t>(fit.scores.rows()) != fit.rows.size())
            throw DataError("fit '" + fit.model + "' does not carry per-row scores");
        bread.block(offset[f], offset[f], k, k) = fit.naive_vcov;
        for (std::size_t i = 0; i < fit.rows.size(); ++i) {
            const std::size_t r = fit.rows[i];
            if (r >= cluster.size()) throw DataError("fit rows exceed the cluster map");
            sums.block(cluster[r], offset[f], 1, k) += fit.scores.row(static_cast<Eigen::Index>(i));
        }
    }
    const Eigen::MatrixXd vcov = bread * (sums.transpose() * sums) * bread;

    std::vector<Eigen::Index> idx;
    std::vector<std::string> restricted;
    for (std::size_t f = 0; f < fits.size(); ++f) {
        for (const auto& n : names[f]) {
            idx.push_back(offset[f] + fits[f]->index_of(n));
            restricted.push_back(labels[f] + ":" + n);
        }
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd b(k);
    Eigen::MatrixXd v(k, k);
    Eigen::VectorXd all(total);
    for (std::size_t f = 0; f < fits.size(); ++f) all.segment(offset[f], fits[f]->coef.size()) = fits[f]->coef;
    for (Eigen::Index a = 0; a < k; ++a) {
        b(a) = all(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index c = 0; c < k; ++c) v(a, c) = vcov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(c)]);
    }
    return wald_test(b, v, std::move(restricted));
}

TestResult lr_dispersion(const FitResult& fit_nb, const FitResult& fit_pois) {
    if (fit_nb.n_obs != fit_pois.n_obs)
        throw NestingError("dispersion test needs both fits on the same rows (" + std::to_string(fit_nb.n_obs) + " vs " +
                           std::to_string(fit_pois.n_obs) + ")");
    const double diff = fit_nb.loglik - fit_pois.loglik;
    if (diff < -1e-6)
        throw NestingError("restricted fit has the higher log-likelihood (difference " + std::to_string(diff) +
                           "); the unrestricted optimum was not reached");
    TestResult t;
    t.statistic = std::max(0.0, 2.0 * diff);
    t.dof = 1;
    t.boundary_mixture = true;
    t.p_value = 0.5 * special::chi2_sf(t.statistic, 1.0);
    t.restriction = {"log_alpha"};
    return t;
}

// ---------------------------------------------------------------------------
// Stability

nlohmann::json StabilityResult::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : interactions)
        rows.push_back({{"name", r.name}, {"irr", r.irr}, {"z", r.z}, {"p_value", r.p_value}, {"significant", r.significant}});
    return {{"joint", joint.to_json()}, {"interactions", std::move(rows)}, {"stable", stable}};
}

StabilityResult stability_interactions(const StabilityInput& input, double level) {
    const DesignMatrix& base = input.design;
    if (input.trend.size() != base.x.rows()) throw DataError("trend values must align with design rows");
    std::vector<Eigen::VectorXd> added;
    std::vector<std::string> added_names;
    if (!base.has_column(input.trend_name)) {
        added.push_back(input.trend);
        added_names.push_back(input.trend_name);
    }
    std::vector<std::string> interaction_names;
    for (const auto& name : input.interact) {
        const Eigen::Index j = base.column(name);
        if (j < 0) throw SchemaError("stability check: design has no column '" + name + "'");
        added.push_back(base.x.col(j).cwiseProduct(input.trend));
        added_names.push_back(name + "*" + input.trend_name);
        interaction_names.push_back(added_names.back());
    }
    Eigen::MatrixXd columns(base.x.rows(), base.x.cols() - 1 + static_cast<Eigen::Index>(added.size()));
    columns.leftCols(base.x.cols() - 1) = base.x.rightCols(base.x.cols() - 1);
    std::vector<std::string> names(base.names.begin() + 1, base.names.end());
    for (std::size_t a = 0; a < added.size(); ++a) {
        columns.col(base.x.cols() - 1 + static_cast<Eigen::Index>(a)) = added[a];
        names.push_back(added_names[a]);
    }
    const DesignMatrix d = make_design(std::move(names), columns, base.rows);

    StabilityResult out;
    out.fit = fit_count(d, input.y, input.family, input.cluster, nullptr, input.options);
    std::vector<std::string> tested;
    for (const auto& r : incidence_rate_ratios(out.fit, level)) {
        if (std::find(interaction_names.begin(), interaction_names.end(), r.name) == interaction_names.end()) continue;
        out.interactions.push_back(r);
        tested.push_back(r.name);
    }
    out.joint = wald_joint(out.fit, tested);
    const bool near_one = std::all_of(out.interactions.begin(), out.interactions.end(),
                                      [](const RatioRow& r) { return std::abs(r.irr - 1.0) < 0.01; });
    out.stable = !out.joint.rejects(level) || near_one;
    return out;
}

}  // namespace countfx
