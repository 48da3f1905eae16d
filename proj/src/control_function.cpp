#include "countfx/control_function.hpp"

#include "countfx/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace countfx {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::s1: return "s1";
    case Strategy::s2: return "s2";
    case Strategy::s3: return "s3";
    case Strategy::s4: return "s4";
    case Strategy::s5: return "s5";
    }
    return "s5";
}

Strategy strategy_from_string(std::string_view name) {
    for (auto s : kAllStrategies)
        if (to_string(s) == name) return s;
    throw ParameterError("unknown strategy '" + std::string(name) + "' (expected s1..s5)");
}

namespace {

std::vector<Term> first_stage_terms(const Schema& schema, const ModelOptions& opts) {
    if (schema.instruments.empty()) throw SchemaError("first-stage probit needs at least one instrument");
    std::vector<Term> terms;
    for (const auto& c : schema.covariates) {
        terms.push_back(Term::var(c));
        if (std::find(opts.first_stage_squares.begin(), opts.first_stage_squares.end(), c) != opts.first_stage_squares.end())
            terms.push_back(Term::square(c));
    }
    for (const auto& sq : opts.first_stage_squares)
        if (std::find(schema.covariates.begin(), schema.covariates.end(), sq) == schema.covariates.end())
            throw SchemaError("squared term '" + sq + "' is not a covariate");
    for (const auto& z : schema.instruments) terms.push_back(Term::var(z));
    terms.push_back(Term::var(cols::trend));
    return terms;
}

OptColumn linear_index(const PanelDataset& data, const FitResult& fit, const std::vector<Term>& terms) {
    std::vector<std::pair<const Term*, double>> present;
    for (const auto& t : terms)
        if (fit.has(t.name())) present.emplace_back(&t, fit.coef(fit.index_of(t.name())));
    const double intercept = fit.coef(fit.index_of(kIntercept));
    OptColumn out(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        double eta = intercept;
        bool ok = true;
        for (const auto& [term, beta] : present) {
            double prod = 1.0;
            for (const auto& f : term->factors) {
                const auto v = data.value(f, r);
                if (!v) {
                    ok = false;
                    break;
                }
                prod *= *v;
            }
            if (!ok) break;
            eta += beta * prod;
        }
        if (ok) out[r] = eta;
    }
    return out;
}

FirstStage fit_first_stage(const PanelDataset& data, const ModelOptions& opts, const char* indicator) {
    FirstStage st;
    st.terms = first_stage_terms(data.schema(), opts);
    const std::string ind = indicator;
    const DesignMatrix design =
        build_design(data, st.terms, [&](std::size_t r) { return data.value(ind, r).has_value(); });
    std::vector<int> y, cluster;
    for (auto r : design.rows) {
        y.push_back(static_cast<int>(*data.value(ind, r)));
        cluster.push_back(data.cluster_codes()[r]);
    }
    st.fit = fit_binary(design, y, BinaryLink::probit, cluster, opts.fit);
    st.index = linear_index(data, st.fit, st.terms);
    st.residual.resize(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto d = data.value(ind, r);
        if (st.index[r] && d) st.residual[r] = probit_generalized_residual(*st.index[r], static_cast<int>(*d));
    }
    return st;
}

}  // namespace

FirstStage fit_reduced_form_treatment(const PanelDataset& data, const ModelOptions& opts) {
    return fit_first_stage(data, opts, cols::treatment);
}

FirstStage fit_selection_model(const PanelDataset& data, const ModelOptions& opts) {
    return fit_first_stage(data, opts, cols::selection);
}

Eigen::VectorXd generalized_residuals(const FitResult& fit, std::span<const int> indicator) {
    if (fit.model != "probit") throw UnsupportedLinkError("generalized residuals need a probit fit, got " + fit.model);
    if (static_cast<Eigen::Index>(indicator.size()) != fit.linear_predictor.size())
        throw DataError("indicator length does not match the fit's linear predictors");
    Eigen::VectorXd out(fit.linear_predictor.size());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = probit_generalized_residual(fit.linear_predictor(i), indicator[static_cast<std::size_t>(i)]);
    return out;
}

ControlColumns control_columns(const PanelDataset& data, const FirstStage* treatment, const FirstStage* selection) {
    const std::size_t n = data.rows();
    ControlColumns c;
    c.xi.resize(n);
    c.t_xi.resize(n);
    c.xi_s.resize(n);
    c.i_flag.resize(n);
    c.trend.resize(n);
    c.trend1.resize(n);
    c.t_hat.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        c.i_flag[r] = static_cast<double>(data.selection(r));
        c.trend[r] = static_cast<double>(data.week(r));
        c.trend1[r] = data.value(cols::trend1, r);
        if (treatment) {
            c.xi[r] = treatment->residual[r];
            if (treatment->index[r]) c.t_hat[r] = normal_cdf(*treatment->index[r]);
            if (c.xi[r] && data.treatment(r)) c.t_xi[r] = *c.xi[r] * *data.treatment(r);
        }
        if (selection) c.xi_s[r] = selection->residual[r];
    }
    return c;
}

std::vector<Term> strategy_terms(const Schema& schema, Strategy s) {
    std::vector<Term> terms;
    for (const auto& c : schema.covariates) terms.push_back(Term::var(c));
    if (s == Strategy::s2) terms.push_back(Term::var(cols::treatment_hat));
    else terms.push_back(Term::var(cols::treatment));
    if (s != Strategy::s1) terms.push_back(Term::var(cols::trend1));
    if (s >= Strategy::s3) terms.push_back(Term::var(cols::xi));
    if (s >= Strategy::s4) terms.push_back(Term::product(cols::treatment, cols::xi));
    if (s == Strategy::s5) {
        terms.push_back(Term::var(cols::xi_s));
        terms.push_back(Term::var(cols::selection));
    }
    return terms;
}

AssembledModel assemble_strategy(const PanelDataset& data, const StrategySpec& spec, const FirstStage* treatment,
                                 const FirstStage* selection) {
    if (spec.id >= Strategy::s2 && !treatment)
        throw SchemaError(std::string(to_string(spec.id)) + " needs the treatment first stage");
    if (spec.id == Strategy::s5 && !selection) throw SchemaError("s5 needs the selection first stage");
    AssembledModel m;
    m.spec = spec;
    m.controls = control_columns(data, treatment, selection);
    ColumnMap extra;
    if (treatment) {
        extra[cols::xi] = m.controls.xi;
        extra[cols::treatment_hat] = m.controls.t_hat;
    }
    if (selection) extra[cols::xi_s] = m.controls.xi_s;
    m.design = build_design(data, strategy_terms(data.schema(), spec.id),
                            [&](std::size_t r) { return data.selection(r) == 1; }, extra);
    for (auto r : m.design.rows) {
        m.y.push_back(*data.outcome(r));
        m.cluster.push_back(data.cluster_codes()[r]);
    }
    return m;
}

FitResult fit_assembled(const AssembledModel& model, const FitOptions& opts) {
    FitOptions o = opts;
    o.poisson_limit = o.poisson_limit || model.spec.poisson_limit;
    return fit_count(model.design, model.y, model.spec.family, model.cluster, nullptr, o);
}

double implied_treatment_effect(const AssembledModel& model, const FitResult& fit) {
    const DesignMatrix& d = model.design;
    const Eigen::Index k = d.x.cols();
    const Eigen::Index t = d.has_column(cols::treatment) ? d.column(cols::treatment) : d.column(cols::treatment_hat);
    if (t < 0) throw SchemaError("main design has no treatment column");
    const Eigen::VectorXd b = fit.coef.head(k);
    const Eigen::Index xi = d.column(cols::xi), txi = d.column(cols::t_xi), xis = d.column(cols::xi_s);
    const auto n = d.x.rows();

    Eigen::VectorXd base = d.x * b;
    Eigen::VectorXd ctrl0 = Eigen::VectorXd::Zero(n), ctrl1 = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double c = 0.0;
        if (xi >= 0) c += b(xi) * d.x(i, xi);
        if (xis >= 0) c += b(xis) * d.x(i, xis);
        ctrl0(i) = c;
        ctrl1(i) = c;
        if (txi >= 0 && xi >= 0) ctrl1(i) += b(txi) * d.x(i, xi);
        base(i) -= b(t) * d.x(i, t) + c + (txi >= 0 ? b(txi) * d.x(i, txi) : 0.0);
    }
    const double m0 = ctrl0.array().exp().mean(), m1 = ctrl1.array().exp().mean();

    const bool zinb = model.spec.family == CountKind::zinb;
    const bool ztnb = model.spec.family == CountKind::ztnb;
    const bool has_alpha = fit.has("log_alpha");
    const double alpha = has_alpha ? std::exp(fit.coef(fit.index_of("log_alpha"))) : 0.0;
    Eigen::VectorXd gamma;
    if (zinb) gamma = fit.coef.tail(k);

    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mean[2];
        for (int arm = 0; arm < 2; ++arm) {
            double lambda = std::exp(base(i) + (arm ? b(t) : 0.0)) * (arm ? m1 : m0);
            if (ztnb) lambda /= -std::expm1(nb_log_zero_mass(lambda, alpha));
            if (zinb) {
                Eigen::RowVectorXd z = d.x.row(i);
                z(t) = arm;
                if (txi >= 0 && xi >= 0) z(txi) = arm * d.x(i, xi);
                lambda *= 1.0 - logistic_cdf(z.dot(gamma));
            }
            mean[arm] = lambda;
        }
        sum += mean[1] - mean[0];
    }
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

StageError::Cause classify(const std::exception& e) {
    if (dynamic_cast<const DomainError*>(&e)) return StageError::Cause::domain;
    if (dynamic_cast<const OptimizationError*>(&e) || dynamic_cast<const SeparationError*>(&e) ||
        dynamic_cast<const SingularMatrixError*>(&e) || dynamic_cast<const NestingError*>(&e))
        return StageError::Cause::fit;
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const DataError*>(&e) ||
        dynamic_cast<const DegenerateSampleError*>(&e) || dynamic_cast<const ParameterError*>(&e))
        return StageError::Cause::data;
    return StageError::Cause::other;
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, classify(e), e.what());
    }
}

std::vector<std::string> present_instruments(const FitResult& fit, const Schema& schema) {
    std::vector<std::string> out;
    for (const auto& z : schema.instruments)
        if (fit.has(z)) out.push_back(z);
    return out;
}

nlohmann::json effects_json(const std::vector<MarginalEffect>& effects) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : effects) {
        nlohmann::json row = {{"name", e.name}, {"ame", e.ame}, {"binary", e.binary}};
        row["z"] = std::isfinite(e.z) ? nlohmann::json(e.z) : nlohmann::json(nullptr);
        a.push_back(std::move(row));
    }
    return a;
}

nlohmann::json ratios_json(const std::vector<RatioRow>& rows) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row = {{"name", r.name}, {"irr", r.irr}, {"significant", r.significant}};
        row["z"] = std::isfinite(r.z) ? nlohmann::json(r.z) : nlohmann::json(nullptr);
        row["p_value"] = std::isfinite(r.p_value) ? nlohmann::json(r.p_value) : nlohmann::json(nullptr);
        a.push_back(std::move(row));
    }
    return a;
}

}  // namespace

nlohmann::json PipelineResult::to_json() const {
    nlohmann::json stages = nlohmann::json::object();
    if (treatment) {
        auto j = treatment->fit.to_json();
        j["ame"] = effects_json(treatment_ame);
        stages["treatment_probit"] = std::move(j);
    }
    if (selection) {
        auto j = selection->fit.to_json();
        j["ame"] = effects_json(selection_ame);
        stages["selection_probit"] = std::move(j);
    }
    auto main_json = main.to_json();
    main_json["irr"] = ratios_json(irr);
    stages["main"] = std::move(main_json);

    nlohmann::json tests = nlohmann::json::object();
    if (model_wald) tests["model_wald"] = model_wald->to_json();
    if (weak_instruments) tests["weak_instruments"] = weak_instruments->to_json();
    if (dispersion) tests["dispersion_lr"] = dispersion->to_json();
    if (stability) tests["stability"] = stability->to_json();

    nlohmann::json provenance = nlohmann::json::object();
    for (const auto& name : main.names) {
        if (name == cols::xi) provenance[name] = "generalized residual of the treatment probit";
        else if (name == cols::t_xi) provenance[name] = "treatment times xi";
        else if (name == cols::xi_s) provenance[name] = "generalized residual of the selection probit";
        else if (name == cols::treatment_hat) provenance[name] = "fitted treatment probability";
        else if (name == cols::trend1) provenance[name] = "census week minus week";
    }
    nlohmann::json dropped_json = nlohmann::json::array();
    for (const auto& d : dropped) dropped_json.push_back({{"name", d.name}, {"reason", d.reason}});

    return {
        {"kind", "pipeline"},
        {"strategy", std::string(to_string(spec.id))},
        {"family", main.model},
        {"stages", std::move(stages)},
        {"tests", std::move(tests)},
        {"derived_columns", std::move(provenance)},
        {"dropped_columns", std::move(dropped_json)},
        {"implied_effect", implied_effect},
        {"n_obs", main.n_obs},
        {"n_persons", n_persons},
    };
}

namespace {

struct FirstStages {
    std::optional<FirstStage> treatment;
    std::optional<FirstStage> selection;
};

FirstStages first_stages_for(const PanelDataset& data, Strategy highest, const ModelOptions& opts) {
    FirstStages fs;
    if (highest >= Strategy::s2)
        fs.treatment = stage("treatment_probit", [&] { return fit_reduced_form_treatment(data, opts); });
    if (highest == Strategy::s5)
        fs.selection = stage("selection_probit", [&] { return fit_selection_model(data, opts); });
    return fs;
}

PipelineResult fit_one(const PanelDataset& data, const StrategySpec& spec, const FirstStages& fs, const ModelOptions& opts) {
    PipelineResult res;
    res.spec = spec;
    const Strategy s = spec.id;
    const FirstStage* t = s >= Strategy::s2 && fs.treatment ? &*fs.treatment : nullptr;
    const FirstStage* sel = s == Strategy::s5 && fs.selection ? &*fs.selection : nullptr;
    const AssembledModel m = stage("assemble", [&] { return assemble_strategy(data, spec, t, sel); });
    res.main = stage("main_fit", [&] { return fit_assembled(m, opts.fit); });
    res.dropped = m.design.dropped;
    res.implied_effect = implied_treatment_effect(m, res.main);
    res.irr = incidence_rate_ratios(res.main, opts.level);
    std::vector<std::string> slopes;
    for (Eigen::Index j = 0; j < res.main.n_mean_coef; ++j)
        if (res.main.names[static_cast<std::size_t>(j)] != kIntercept) slopes.push_back(res.main.names[static_cast<std::size_t>(j)]);
    if (!slopes.empty()) res.model_wald = stage("model_wald", [&] { return wald_joint(res.main, slopes); });
    res.n_persons = data.n_persons(m.design.rows);
    return res;
}

}  // namespace

PipelineResult run_2sri_pipeline(const PanelDataset& data, const PipelineOptions& opts) {
    const FirstStages fs = first_stages_for(data, opts.spec.id, opts.model);
    PipelineResult res = fit_one(data, opts.spec, fs, opts.model);
    res.treatment = fs.treatment;
    res.selection = fs.selection;

    if (res.treatment)
        res.treatment_ame = stage("treatment_probit", [&] {
            return average_marginal_effects(res.treatment->fit, data, res.treatment->terms);
        });
    if (res.selection)
        res.selection_ame = stage("selection_probit", [&] {
            return average_marginal_effects(res.selection->fit, data, res.selection->terms);
        });

    std::vector<const FitResult*> fits;
    std::vector<std::string> labels;
    std::vector<std::vector<std::string>> names;
    const std::pair<const FirstStage*, const char*> stages[] = {
        {res.treatment ? &*res.treatment : nullptr, "treatment"},
        {res.selection ? &*res.selection : nullptr, "selection"},
    };
    for (const auto& [st, label] : stages) {
        if (!st) continue;
        auto z = present_instruments(st->fit, data.schema());
        if (z.empty()) continue;
        fits.push_back(&st->fit);
        labels.emplace_back(label);
        names.push_back(std::move(z));
    }
    if (!fits.empty())
        res.weak_instruments = stage("weak_instrument_test",
                                     [&] { return wald_joint_stacked(fits, labels, names, data.cluster_codes()); });

    const bool nb_family = opts.spec.family != CountKind::poisson && !opts.spec.poisson_limit;
    if (opts.dispersion_test && nb_family) {
        res.dispersion = stage("dispersion_test", [&] {
            const FirstStage* t = fs.treatment ? &*fs.treatment : nullptr;
            const FirstStage* s = fs.selection ? &*fs.selection : nullptr;
            StrategySpec restricted = opts.spec;
            restricted.poisson_limit = true;
            const AssembledModel m = assemble_strategy(data, restricted, t, s);
            return lr_dispersion(res.main, fit_assembled(m, opts.model.fit));
        });
    }

    if (opts.stability_check) {
        res.stability = stage("stability_check", [&] {
            const FirstStage* t = fs.treatment ? &*fs.treatment : nullptr;
            const FirstStage* s = fs.selection ? &*fs.selection : nullptr;
            const AssembledModel m = assemble_strategy(data, opts.spec, t, s);
            StabilityInput in;
            in.design = m.design;
            in.y = m.y;
            in.cluster = m.cluster;
            in.family = opts.spec.family;
            in.options = opts.model.fit;
            in.options.poisson_limit = opts.spec.poisson_limit;
            in.trend.resize(static_cast<Eigen::Index>(m.design.rows.size()));
            for (std::size_t i = 0; i < m.design.rows.size(); ++i)
                in.trend(static_cast<Eigen::Index>(i)) = *data.value(cols::trend1, m.design.rows[i]);
            for (const auto& c : data.schema().covariates)
                if (m.design.has_column(c)) in.interact.push_back(c);
            for (const char* c : {cols::treatment, cols::treatment_hat})
                if (m.design.has_column(c)) in.interact.push_back(c);
            return stability_interactions(in, opts.model.level);
        });
    }
    return res;
}

std::vector<PipelineResult> run_strategies(const PanelDataset& data, std::span<const Strategy> strategies,
                                           CountKind family, const ModelOptions& opts) {
    Strategy highest = Strategy::s1;
    for (auto s : strategies) highest = std::max(highest, s);
    const FirstStages fs = first_stages_for(data, highest == Strategy::s5 ? Strategy::s5 : highest, opts);
    std::vector<PipelineResult> out;
    for (auto s : strategies) {
        PipelineResult r = fit_one(data, StrategySpec{s, family, false}, fs, opts);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace countfx
