#include "countfx/matching.hpp"

#include "countfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace countfx {

PropensityModel estimate_propensity(const PanelDataset& data, BinaryLink link) {
    std::vector<Term> terms;
    for (const auto& c : data.schema().covariates) terms.push_back(Term::var(c));
    const DesignMatrix design = build_design(
        data, terms, [&](std::size_t r) { return data.selection(r) == 1 && data.treatment(r).has_value(); });
    std::vector<int> y, cluster;
    for (auto r : design.rows) {
        y.push_back(*data.treatment(r));
        cluster.push_back(data.cluster_codes()[r]);
    }
    PropensityModel pm;
    pm.fit = fit_binary(design, y, link, cluster);

    pm.scores.resize(data.rows());
    const double intercept = pm.fit.coef(0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        double eta = intercept;
        bool ok = true;
        for (std::size_t j = 1; j < pm.fit.names.size(); ++j) {
            const auto v = data.value(pm.fit.names[j], r);
            if (!v) {
                ok = false;
                break;
            }
            eta += pm.fit.coef(static_cast<Eigen::Index>(j)) * *v;
        }
        if (ok) pm.scores[r] = link == BinaryLink::probit ? normal_cdf(eta) : logistic_cdf(eta);
    }
    return pm;
}

OptColumn impute_propensity(const OptColumn& scores, const PanelDataset& data, std::span<const std::size_t> rows,
                            std::size_t k) {
    if (k == 0) throw ParameterError("imputation needs k >= 1");
    OptColumn out = scores;
    const auto& covs = data.schema().covariates;

    std::vector<double> mean(covs.size(), 0.0), sd(covs.size(), 1.0);
    for (std::size_t j = 0; j < covs.size(); ++j) {
        double s = 0.0, ss = 0.0;
        std::size_t n = 0;
        for (auto r : rows)
            if (const auto v = data.value(covs[j], r)) {
                s += *v;
                ss += *v * *v;
                ++n;
            }
        if (n > 1) {
            mean[j] = s / static_cast<double>(n);
            const double var = (ss - static_cast<double>(n) * mean[j] * mean[j]) / static_cast<double>(n - 1);
            sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    }

    for (auto r : rows) {
        if (scores[r]) continue;
        const auto t = data.treatment(r);
        if (!t) continue;
        struct Candidate {
            double dist;
            std::size_t row;
        };
        std::vector<Candidate> cand;
        for (auto c : rows) {
            const auto tc = data.treatment(c);
            if (!scores[c] || !tc || *tc == *t) continue;
            double d2 = 0.0;
            for (std::size_t j = 0; j < covs.size(); ++j) {
                const auto a = data.value(covs[j], r);
                const auto b = data.value(covs[j], c);
                if (!a || !b) continue;
                const double diff = (*a - *b) / sd[j];
                d2 += diff * diff;
            }
            cand.push_back({d2, c});
        }
        if (cand.empty()) throw DataError("no opposite-group row with a score to impute row " + std::to_string(r));
        if (cand.size() < k)
            throw DataError("only " + std::to_string(cand.size()) + " opposite-group rows available to impute row " +
                            std::to_string(r) + " with k = " + std::to_string(k));
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                          [](const Candidate& a, const Candidate& b) {
                              return a.dist != b.dist ? a.dist < b.dist : a.row < b.row;
                          });
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += *scores[cand[i].row];
        out[r] = s / static_cast<double>(k);
    }
    return out;
}

MatchResult match_nearest(const OptColumn& scores, const PanelDataset& data, std::span<const std::size_t> rows) {
    struct Control {
        double score;
        std::size_t row;
    };
    std::vector<Control> controls;
    std::vector<std::size_t> treated;
    for (auto r : rows) {
        const auto t = data.treatment(r);
        if (!t) continue;
        if (*t == 1) treated.push_back(r);
        else if (scores[r]) controls.push_back({*scores[r], r});
    }
    if (controls.empty()) throw DataError("matching needs at least one control with a score");
    std::sort(controls.begin(), controls.end(),
              [](const Control& a, const Control& b) { return a.score != b.score ? a.score < b.score : a.row < b.row; });
    std::sort(treated.begin(), treated.end());

    auto first_at = [&](double s) {
        return std::lower_bound(controls.begin(), controls.end(), s,
                                [](const Control& c, double v) { return c.score < v; });
    };

    MatchResult m;
    for (auto r : treated) {
        if (!scores[r]) {
            m.unmatched.push_back(r);
            continue;
        }
        const double s = *scores[r];
        auto it = first_at(s);
        // Nearest score below and at/above s; each is the lowest-index member of its run.
        std::optional<Control> best;
        double best_gap = 0.0;
        auto consider = [&](const Control& c) {
            const double gap = std::abs(c.score - s);
            if (!best || gap < best_gap || (gap == best_gap && c.row < best->row)) {
                best = c;
                best_gap = gap;
            }
        };
        if (it != controls.end()) consider(*it);
        if (it != controls.begin()) consider(*first_at(std::prev(it)->score));
        m.pairs.push_back({r, best->row, best_gap});
    }
    return m;
}

void estimate_ate(MatchResult& match, const PanelDataset& data) {
    const std::size_t n = match.pairs.size();
    if (n < 2) throw DataError("ATE needs at least two matched pairs");
    std::vector<double> d;
    d.reserve(n);
    for (const auto& p : match.pairs) {
        const auto yt = data.outcome(p.treated), yc = data.outcome(p.control);
        if (!yt || !yc) throw DataError("matched rows must have observed outcomes");
        d.push_back(static_cast<double>(*yt) - static_cast<double>(*yc));
    }
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    match.ate = mean;
    match.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    if (match.se > 0.0) match.p_value = std::erfc(std::abs(mean / match.se) / std::numbers::sqrt2);
    else match.p_value = mean == 0.0 ? 1.0 : 0.0;
}

MatchResult run_psm(const PanelDataset& data, const PsmOptions& opts) {
    const PropensityModel pm = estimate_propensity(data, opts.link);
    const std::vector<std::size_t> rows = data.selected_rows();
    const OptColumn scores = impute_propensity(pm.scores, data, rows, opts.impute_k);
    MatchResult m = match_nearest(scores, data, rows);
    for (auto r : rows)
        if (!pm.scores[r] && scores[r]) ++m.n_imputed;
    m.score_model = pm.fit;
    estimate_ate(m, data);
    return m;
}

nlohmann::json MatchResult::to_json() const {
    nlohmann::json pairs_json = nlohmann::json::array();
    for (const auto& p : pairs) pairs_json.push_back({{"treated", p.treated}, {"control", p.control}, {"gap", p.gap}});
    nlohmann::json doc = {
        {"kind", "psm"},
        {"ate", ate},
        {"se", se},
        {"p_value", p_value},
        {"n_pairs", pairs.size()},
        {"n_imputed", n_imputed},
        {"unmatched", unmatched},
        {"pairs", std::move(pairs_json)},
    };
    if (score_model) doc["score_model"] = score_model->to_json();
    return doc;
}

}  // namespace countfx
