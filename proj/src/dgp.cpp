#include "countfx/dgp.hpp"

#include "countfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <charconv>

namespace countfx {

namespace {

double number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
}

int integer(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
}

std::map<std::string, double> coefficient_map(const nlohmann::json& v, const std::string& path) {
    if (!v.is_object()) throw ConfigError(path, "expected an object of covariate coefficients");
    std::map<std::string, double> out;
    for (const auto& [k, val] : v.items()) {
        if (std::find(kDgpCovariates.begin(), kDgpCovariates.end(), k) == kDgpCovariates.end())
            throw ConfigError(path + "." + k, "unknown covariate");
        out[k] = number(val, path + "." + k);
    }
    return out;
}

std::vector<double> number_list(const nlohmann::json& v, const std::string& path, std::size_t size) {
    if (!v.is_array()) throw ConfigError(path, "expected an array");
    if (v.size() != size) throw ConfigError(path, "expected " + std::to_string(size) + " entries");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

void read_equation(const nlohmann::json& v, const std::string& path, IndexEquation& eq,
                   std::vector<double>* instruments, bool* enabled) {
    if (!v.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [k, val] : v.items()) {
        const std::string p = path + "." + k;
        if (k == "intercept") eq.intercept = number(val, p);
        else if (k == "trend") eq.trend = number(val, p);
        else if (k == "covariates") eq.covariates = coefficient_map(val, p);
        else if (k == "instruments" && instruments) *instruments = number_list(val, p, kDgpInstruments.size());
        else if (k == "enabled" && enabled) {
            if (!val.is_boolean()) throw ConfigError(p, "expected true or false");
            *enabled = val.get<bool>();
        } else
            throw ConfigError(p, "unknown field");
    }
}

nlohmann::json equation_json(const IndexEquation& eq) {
    return {{"intercept", eq.intercept}, {"trend", eq.trend}, {"covariates", eq.covariates}};
}

double lookup(const std::map<std::string, double>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
}

}  // namespace

DGPConfig DGPConfig::defaults() {
    DGPConfig c;
    c.beta = {{"age", 0.01},          {"female", -0.12},      {"rural", 0.22},     {"cg_dementia", -0.67},
              {"cg_learning", 0.53},  {"cg_physical", -0.04}, {"comorbid", 0.97}};
    c.endowment_sd = 1.0;
    c.endow_loading_t = 1.0;
    c.endow_loading_s = 0.5;
    c.hetero_scale = 0.3;
    c.treatment.intercept = -5.0;
    c.treatment.covariates = {{"age", 0.01}, {"female", 0.1}, {"rural", 0.2}, {"cg_dementia", 0.3}, {"comorbid", 0.2}};
    c.treatment.trend = 0.0;
    c.selection.intercept = 0.6;
    c.selection.covariates = {{"comorbid", 0.3}, {"female", -0.1}};
    c.selection.trend = 0.0;
    return c;
}

void DGPConfig::validate() const {
    if (n_persons < 2) throw ConfigError("n_persons", "must be at least 2");
    if (weeks < 1) throw ConfigError("weeks", "must be at least 1");
    if (census_week && (*census_week < 1 || *census_week > weeks))
        throw ConfigError("census_week", "must lie in [1, weeks]");
    if (!(endowment_sd >= 0.0) || !std::isfinite(endowment_sd)) throw ConfigError("endowment_sd", "must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be >= 0");
    if (!(p_inflate >= 0.0 && p_inflate < 1.0)) throw ConfigError("p_inflate", "must lie in [0, 1)");
    if (p_inflate > 0.0 && family != CountKind::zinb) throw ConfigError("p_inflate", "only the zinb family has structural zeros");
    if (family == CountKind::poisson) throw ConfigError("family", "must be nb2, zinb or ztnb (alpha = 0 gives Poisson draws)");
    if (structural_zeros != "unobserved" && structural_zeros != "recorded")
        throw ConfigError("structural_zeros", "must be \"unobserved\" or \"recorded\"");
    if (instrument_strength.size() != kDgpInstruments.size())
        throw ConfigError("instrument_strength", "expected " + std::to_string(kDgpInstruments.size()) + " entries");
    if (selection_instruments.size() != kDgpInstruments.size())
        throw ConfigError("selection.instruments", "expected " + std::to_string(kDgpInstruments.size()) + " entries");
    auto finite = [](double v, const std::string& path) {
        if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    };
    finite(beta0, "beta.intercept");
    for (const auto& [k, v] : beta) finite(v, "beta." + k);
    finite(omega, "omega");
    finite(hetero_scale, "hetero_scale");
    finite(omega_drift, "omega_drift");
    finite(outcome_trend, "outcome_trend");
}

DGPConfig DGPConfig::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("$", "config document must be an object");
    DGPConfig c = defaults();
    for (const auto& [k, v] : doc.items()) {
        if (k == "n_persons") c.n_persons = integer(v, k);
        else if (k == "weeks") c.weeks = integer(v, k);
        else if (k == "census_week") c.census_week = integer(v, k);
        else if (k == "beta") {
            if (!v.is_object()) throw ConfigError(k, "expected an object");
            nlohmann::json rest = v;
            if (rest.contains("intercept")) {
                c.beta0 = number(rest["intercept"], "beta.intercept");
                rest.erase("intercept");
            }
            c.beta = coefficient_map(rest, "beta");
        } else if (k == "outcome_trend") c.outcome_trend = number(v, k);
        else if (k == "omega") c.omega = number(v, k);
        else if (k == "hetero_scale") c.hetero_scale = number(v, k);
        else if (k == "omega_drift") c.omega_drift = number(v, k);
        else if (k == "endowment_sd") c.endowment_sd = number(v, k);
        else if (k == "endow_loading_t") c.endow_loading_t = number(v, k);
        else if (k == "endow_loading_s") c.endow_loading_s = number(v, k);
        else if (k == "endow_loading_y") c.endow_loading_y = number(v, k);
        else if (k == "treatment") read_equation(v, k, c.treatment, nullptr, nullptr);
        else if (k == "instrument_strength") c.instrument_strength = number_list(v, k, kDgpInstruments.size());
        else if (k == "selection") read_equation(v, k, c.selection, &c.selection_instruments, &c.selection_enabled);
        else if (k == "family") {
            if (!v.is_string()) throw ConfigError(k, "expected a string");
            try {
                c.family = count_kind_from_string(v.get<std::string>());
            } catch (const ParameterError& e) {
                throw ConfigError(k, e.what());
            }
        } else if (k == "alpha") c.alpha = number(v, k);
        else if (k == "p_inflate") c.p_inflate = number(v, k);
        else if (k == "structural_zeros") {
            if (!v.is_string()) throw ConfigError(k, "expected a string");
            c.structural_zeros = v.get<std::string>();
        } else if (k == "seed") {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                throw ConfigError(k, "expected a nonnegative integer");
            c.seed = v.get<std::uint64_t>();
        } else
            throw ConfigError(k, "unknown field");
    }
    c.validate();
    return c;
}

nlohmann::json DGPConfig::to_json() const {
    nlohmann::json beta_json = beta;
    beta_json["intercept"] = beta0;
    nlohmann::json sel = equation_json(selection);
    sel["enabled"] = selection_enabled;
    sel["instruments"] = selection_instruments;
    nlohmann::json doc = {
        {"n_persons", n_persons},
        {"weeks", weeks},
        {"census_week", effective_census_week()},
        {"beta", beta_json},
        {"outcome_trend", outcome_trend},
        {"omega", omega},
        {"hetero_scale", hetero_scale},
        {"omega_drift", omega_drift},
        {"endowment_sd", endowment_sd},
        {"endow_loading_t", endow_loading_t},
        {"endow_loading_s", endow_loading_s},
        {"endow_loading_y", endow_loading_y},
        {"treatment", equation_json(treatment)},
        {"instrument_strength", instrument_strength},
        {"selection", sel},
        {"family", std::string(to_string(family))},
        {"alpha", alpha},
        {"p_inflate", p_inflate},
        {"structural_zeros", structural_zeros},
        {"seed", seed},
    };
    return doc;
}

Schema dgp_schema(const DGPConfig& cfg) {
    Schema s;
    s.outcome = "y";
    s.treatment = "telecare";
    s.selection = "hosp";
    s.cluster = "pid";
    s.person_id = "pid";
    s.time_trend = "week";
    s.covariates = kDgpCovariates;
    s.instruments = kDgpInstruments;
    s.weeks = cfg.weeks;
    s.census_week = cfg.effective_census_week();
    s.kinds["age"] = VariableKind::continuous;
    s.kinds["simd_decile"] = VariableKind::count;
    return s;
}

std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
    return std::mt19937_64(seq);
}

std::int64_t draw_count(std::mt19937_64& rng, CountKind kind, double lambda, double alpha) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("count mean must be positive and finite");
    auto once = [&]() -> std::int64_t {
        double rate = lambda;
        if (kind != CountKind::poisson && alpha > 0.0) {
            std::gamma_distribution<double> g(1.0 / alpha, alpha * lambda);
            rate = g(rng);
        }
        if (!(rate > 0.0)) return 0;
        std::poisson_distribution<std::int64_t> p(rate);
        return p(rng);
    };
    if (kind != CountKind::ztnb) return once();
    for (int attempt = 0; attempt < 1000000; ++attempt)
        if (const auto y = once(); y > 0) return y;
    throw DomainError("zero-truncated draw did not produce a positive count");
}

SimulatedPanel simulate_panel(const DGPConfig& cfg, std::uint64_t replication) {
    cfg.validate();
    std::mt19937_64 rng = replication_engine(cfg.seed, replication);
    std::normal_distribution<double> std_normal_draw(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> age_draw(65, 95);
    std::uniform_int_distribution<int> decile_draw(1, 10);

    const Schema schema = dgp_schema(cfg);
    const auto n_rows = static_cast<std::size_t>(cfg.n_persons) * static_cast<std::size_t>(cfg.weeks);
    const int census = cfg.effective_census_week();

    PanelColumns cols;
    cols.covariates.resize(kDgpCovariates.size());
    for (std::size_t j = 0; j < kDgpCovariates.size(); ++j) cols.covariates[j].name = kDgpCovariates[j];
    cols.instruments.resize(kDgpInstruments.size());
    for (std::size_t j = 0; j < kDgpInstruments.size(); ++j) cols.instruments[j].name = kDgpInstruments[j];

    struct Truth {
        std::vector<double> mu;
        std::vector<std::int64_t> y0, y1;
        std::vector<double> mean0, mean1, p_treat, p_select;
        std::vector<int> structural_zero;
    } out;
    out.mu.reserve(static_cast<std::size_t>(cfg.n_persons));
    for (auto* v : {&out.y0, &out.y1}) v->reserve(n_rows);

    for (int p = 1; p <= cfg.n_persons; ++p) {
        const double mu = cfg.endowment_sd * std_normal_draw(rng);
        out.mu.push_back(mu);
        std::map<std::string, double> x;
        x["age"] = age_draw(rng);
        x["female"] = unif(rng) < 0.65 ? 1.0 : 0.0;
        x["rural"] = unif(rng) < 0.09 ? 1.0 : 0.0;
        const double cg = unif(rng);
        x["cg_dementia"] = cg < 0.06 ? 1.0 : 0.0;
        x["cg_learning"] = cg >= 0.06 && cg < 0.33 ? 1.0 : 0.0;
        x["cg_physical"] = cg >= 0.33 && cg < 0.50 ? 1.0 : 0.0;
        x["comorbid"] = unif(rng) < 0.43 ? 1.0 : 0.0;
        const double z[2] = {unif(rng), static_cast<double>(decile_draw(rng))};

        double xb = cfg.beta0, xg = cfg.treatment.intercept, xs = cfg.selection.intercept;
        for (const auto& name : kDgpCovariates) {
            xb += lookup(cfg.beta, name) * x[name];
            xg += lookup(cfg.treatment.covariates, name) * x[name];
            xs += lookup(cfg.selection.covariates, name) * x[name];
        }
        for (std::size_t k = 0; k < 2; ++k) {
            xg += cfg.instrument_strength[k] * z[k];
            xs += cfg.selection_instruments[k] * z[k];
        }

        for (int w = 1; w <= cfg.weeks; ++w) {
            const double t1 = census - w;
            const double t_index = xg + cfg.treatment.trend * w + cfg.endow_loading_t * mu;
            const double s_index = xs + cfg.selection.trend * w + cfg.endow_loading_s * mu;
            const int treat = t_index + std_normal_draw(rng) > 0.0 ? 1 : 0;
            int selected = 1;
            if (cfg.selection_enabled) selected = s_index + std_normal_draw(rng) > 0.0 ? 1 : 0;
            const int structural = cfg.p_inflate > 0.0 && unif(rng) < cfg.p_inflate ? 1 : 0;

            const double base = xb + cfg.outcome_trend * t1 + cfg.endow_loading_y * mu;
            const double effect = cfg.omega + cfg.hetero_scale * mu + cfg.omega_drift * w;
            const double m0 = std::exp(base), m1 = std::exp(base + effect);
            std::int64_t y0 = draw_count(rng, cfg.family, m0, cfg.alpha);
            std::int64_t y1 = draw_count(rng, cfg.family, m1, cfg.alpha);
            if (structural) y0 = y1 = 0;
            if (structural && cfg.structural_zeros == "unobserved") selected = 0;

            cols.person_id.push_back(std::to_string(p));
            cols.cluster.push_back(std::to_string(p));
            cols.week.push_back(w);
            cols.treatment.push_back(treat);
            cols.selection.push_back(selected);
            cols.outcome.push_back(selected ? std::optional<std::int64_t>(treat ? y1 : y0) : std::nullopt);
            for (std::size_t j = 0; j < kDgpCovariates.size(); ++j)
                cols.covariates[j].values.push_back(x[kDgpCovariates[j]]);
            for (std::size_t k = 0; k < 2; ++k) cols.instruments[k].values.push_back(z[k]);

            out.y0.push_back(y0);
            out.y1.push_back(y1);
            out.mean0.push_back(m0);
            out.mean1.push_back(m1);
            out.p_treat.push_back(normal_cdf(t_index));
            out.p_select.push_back(cfg.selection_enabled ? normal_cdf(s_index) : 1.0);
            out.structural_zero.push_back(structural);
        }
    }
    return SimulatedPanel{PanelDataset::from_columns(schema, std::move(cols)),
                          std::move(out.mu),
                          std::move(out.y0),
                          std::move(out.y1),
                          std::move(out.mean0),
                          std::move(out.mean1),
                          std::move(out.p_treat),
                          std::move(out.p_select),
                          std::move(out.structural_zero)};
}

nlohmann::json OracleEffects::to_json() const {
    return {{"ate_overall", ate_overall}, {"ate_selected", ate_selected}, {"upsilon", upsilon}};
}

OracleEffects oracle_effects(const SimulatedPanel& panel) {
    OracleEffects o;
    const std::size_t n = panel.y0.size();
    double all = 0.0, sel = 0.0, y0_t = 0.0, y0_c = 0.0;
    std::size_t n_sel = 0, n_t = 0, n_c = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(panel.y1[i] - panel.y0[i]);
        all += d;
        if (panel.data.selection(i)) {
            sel += d;
            ++n_sel;
        }
        if (const auto t = panel.data.treatment(i)) {
            if (*t) {
                y0_t += static_cast<double>(panel.y0[i]);
                ++n_t;
            } else {
                y0_c += static_cast<double>(panel.y0[i]);
                ++n_c;
            }
        }
    }
    o.ate_overall = n ? all / static_cast<double>(n) : std::nan("");
    o.ate_selected = n_sel ? sel / static_cast<double>(n_sel) : std::nan("");
    o.upsilon = n_t && n_c ? y0_t / static_cast<double>(n_t) - y0_c / static_cast<double>(n_c) : std::nan("");
    return o;
}

void emit_truth(const SimulatedPanel& panel, std::ostream& out) {
    const PanelDataset& d = panel.data;
    out << "pid,week,mu,y0,y1,mean0,mean1,p_treat,p_select,structural_zero\n";
    char buf[64];
    auto num = [&](double v) {
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    };
    std::size_t person = 0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
        if (i > 0 && d.person_id(i) != d.person_id(i - 1)) ++person;
        out << d.person_id(i) << ',' << d.week(i) << ',' << num(panel.mu[person]) << ',' << panel.y0[i] << ','
            << panel.y1[i] << ',' << num(panel.mean0[i]) << ',' << num(panel.mean1[i]) << ',' << num(panel.p_treat[i])
            << ',' << num(panel.p_select[i]) << ',' << panel.structural_zero[i] << '\n';
    }
}

}  // namespace countfx
