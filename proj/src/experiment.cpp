#include "countfx/experiment.hpp"

#include "countfx/errors.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace countfx {

namespace {

constexpr double kZ975 = 1.959963984540054;

std::optional<bool> significant(const FitResult& fit, const char* name, double level) {
    if (!fit.has(name)) return std::nullopt;
    const Eigen::Index j = fit.index_of(name);
    const double z = fit.coef(j) / std::sqrt(fit.vcov(j, j));
    return std::erfc(std::abs(z) / std::sqrt(2.0)) < level;
}

nlohmann::json maybe(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

ReplicationOutcome run_replication(const DGPConfig& cfg, const ExperimentOptions& opts, int rep) {
    ReplicationOutcome out;
    out.rep = rep;
    try {
        const SimulatedPanel panel = simulate_panel(cfg, static_cast<std::uint64_t>(rep));
        out.oracle = oracle_effects(panel);
        const auto fits = run_strategies(panel.data, opts.strategies, cfg.family, opts.model);
        for (const auto& r : fits) {
            const FitResult& f = r.main;
            const char* t = f.has(cols::treatment) ? cols::treatment : cols::treatment_hat;
            if (!f.has(t)) {
                out.strategies.emplace_back(std::nullopt);
                continue;
            }
            StrategyDraw d;
            const Eigen::Index j = f.index_of(t);
            d.omega_hat = f.coef(j);
            d.se = std::sqrt(f.vcov(j, j));
            d.implied = r.implied_effect;
            d.sig_xi = significant(f, cols::xi, opts.model.level);
            d.sig_t_xi = significant(f, cols::t_xi, opts.model.level);
            d.sig_xi_s = significant(f, cols::xi_s, opts.model.level);
            out.strategies.emplace_back(d);
        }
        if (opts.psm) {
            const MatchResult m = run_psm(panel.data, opts.psm_options);
            out.psm_ate = m.ate;
            out.psm_se = m.se;
        }
        if (opts.dispersion_test || opts.stability_check) {
            PipelineOptions po;
            po.model = opts.model;
            po.spec = StrategySpec{opts.test_strategy, cfg.family, false};
            po.dispersion_test = opts.dispersion_test;
            po.stability_check = opts.stability_check;
            const PipelineResult pr = run_2sri_pipeline(panel.data, po);
            if (pr.dispersion) out.dispersion_p = pr.dispersion->p_value;
            if (pr.stability) out.stability_p = pr.stability->joint.p_value;
        }
    } catch (const std::exception& e) {
        out.error = e.what();
        out.strategies.clear();
        out.psm_ate.reset();
        out.dispersion_p.reset();
        out.stability_p.reset();
    }
    return out;
}

ExperimentReport summarize(const DGPConfig& cfg, const ExperimentOptions& opts,
                           const std::vector<ReplicationOutcome>& outcomes) {
    ExperimentReport rep;
    rep.config = {{"dgp", cfg.to_json()}, {"experiment", opts.to_json()}};
    rep.replications = static_cast<int>(outcomes.size());

    std::vector<const ReplicationOutcome*> ok;
    for (const auto& o : outcomes) {
        if (o.error) {
            ++rep.failures;
            if (rep.failure_messages.size() < 10)
                rep.failure_messages.push_back("replication " + std::to_string(o.rep) + ": " + *o.error);
        } else {
            ok.push_back(&o);
        }
    }
    const double n_ok = static_cast<double>(ok.size());
    for (const auto* o : ok) {
        rep.oracle.ate_overall += o->oracle.ate_overall / n_ok;
        rep.oracle.ate_selected += o->oracle.ate_selected / n_ok;
        rep.oracle.upsilon += o->oracle.upsilon / n_ok;
    }

    for (std::size_t s = 0; s < opts.strategies.size(); ++s) {
        StrategySummary sum;
        sum.id = opts.strategies[s];
        double bias = 0.0, sq = 0.0, cover = 0.0, implied = 0.0;
        int xi_n = 0, xi_r = 0, txi_n = 0, txi_r = 0, xis_n = 0, xis_r = 0, psm_n = 0, psm_w = 0;
        for (const auto* o : ok) {
            if (s >= o->strategies.size() || !o->strategies[s]) continue;
            const StrategyDraw& d = *o->strategies[s];
            ++sum.n;
            const double e = d.omega_hat - cfg.omega;
            bias += e;
            sq += e * e;
            cover += std::abs(e) <= kZ975 * d.se ? 1.0 : 0.0;
            implied += d.implied - o->oracle.ate_selected;
            if (d.sig_xi) xi_n++, xi_r += *d.sig_xi;
            if (d.sig_t_xi) txi_n++, txi_r += *d.sig_t_xi;
            if (d.sig_xi_s) xis_n++, xis_r += *d.sig_xi_s;
            if (o->psm_ate) {
                ++psm_n;
                psm_w += std::abs(*o->psm_ate - o->oracle.ate_selected) > std::abs(d.implied - o->oracle.ate_selected);
            }
        }
        if (sum.n > 0) {
            const double n = sum.n;
            sum.mean_bias = bias / n;
            sum.rmse = std::sqrt(sq / n);
            sum.coverage = cover / n;
            sum.mean_implied_bias = implied / n;
        }
        if (xi_n) sum.reject_xi = static_cast<double>(xi_r) / xi_n;
        if (txi_n) sum.reject_t_xi = static_cast<double>(txi_r) / txi_n;
        if (xis_n) sum.reject_xi_s = static_cast<double>(xis_r) / xis_n;
        if (psm_n) sum.psm_worse = static_cast<double>(psm_w) / psm_n;
        rep.strategies.push_back(sum);
    }

    if (opts.psm) {
        int n = 0;
        double bias = 0.0, sq = 0.0, cover = 0.0;
        for (const auto* o : ok) {
            if (!o->psm_ate) continue;
            ++n;
            const double e = *o->psm_ate - o->oracle.ate_selected;
            bias += e;
            sq += e * e;
            cover += std::abs(e) <= kZ975 * *o->psm_se ? 1.0 : 0.0;
        }
        nlohmann::json psm = {{"n", n}};
        if (n) {
            psm["mean_bias"] = bias / n;
            psm["rmse"] = std::sqrt(sq / n);
            psm["coverage"] = cover / n;
        }
        rep.psm = psm;
    }

    auto rate = [&](std::optional<double> ReplicationOutcome::*field) -> std::optional<double> {
        int n = 0, r = 0;
        for (const auto* o : ok)
            if (const auto& p = o->*field) {
                ++n;
                r += *p < opts.model.level;
            }
        return n ? std::optional<double>(static_cast<double>(r) / n) : std::nullopt;
    };
    if (opts.dispersion_test) rep.dispersion_rejection = rate(&ReplicationOutcome::dispersion_p);
    if (opts.stability_check) rep.stability_rejection = rate(&ReplicationOutcome::stability_p);
    return rep;
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json strategies_json = nlohmann::json::object();
    for (const auto& s : strategies) {
        strategies_json[std::string(to_string(s.id))] = {
            {"n", s.n},
            {"mean_bias", s.mean_bias},
            {"rmse", s.rmse},
            {"coverage", s.coverage},
            {"mean_implied_effect_bias", s.mean_implied_bias},
            {"rejection_xi", maybe(s.reject_xi)},
            {"rejection_t_xi", maybe(s.reject_t_xi)},
            {"rejection_xi_s", maybe(s.reject_xi_s)},
            {"psm_further_from_oracle", maybe(s.psm_worse)},
        };
    }
    nlohmann::json doc = {
        {"kind", "experiment"},
        {"replications", replications},
        {"failures", failures},
        {"failure_messages", failure_messages},
        {"oracle", oracle.to_json()},
        {"strategies", std::move(strategies_json)},
        {"psm", psm ? *psm : nlohmann::json(nullptr)},
        {"tests",
         {{"dispersion_lr_rejection", maybe(dispersion_rejection)}, {"stability_rejection", maybe(stability_rejection)}}},
        {"config", config},
    };
    if (wall_seconds) doc["wall_seconds"] = *wall_seconds;
    return doc;
}

nlohmann::json ExperimentOptions::to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (auto id : strategies) s.push_back(std::string(to_string(id)));
    return {
        {"reps", reps},
        {"strategies", std::move(s)},
        {"psm", psm},
        {"psm_link", std::string(to_string(psm_options.link))},
        {"impute_k", psm_options.impute_k},
        {"first_stage_squares", model.first_stage_squares},
        {"level", model.level},
        {"test_strategy", std::string(to_string(test_strategy))},
        {"dispersion_test", dispersion_test},
        {"stability_check", stability_check},
    };
}

ExperimentOptions ExperimentOptions::from_json(const nlohmann::json& doc, ExperimentOptions base) {
    if (!doc.is_object()) throw ConfigError("experiment", "expected an object");
    ExperimentOptions o = std::move(base);
    for (const auto& [key, v] : doc.items()) {
        const std::string field = "experiment." + key;
        try {
            if (key == "reps") {
                o.reps = v.get<int>();
                if (o.reps < 1) throw ConfigError(field, "must be at least 1");
            } else if (key == "strategies") {
                o.strategies.clear();
                for (const auto& s : v) o.strategies.push_back(strategy_from_string(s.get<std::string>()));
                if (o.strategies.empty()) throw ConfigError(field, "must name at least one strategy");
            } else if (key == "psm") {
                o.psm = v.get<bool>();
            } else if (key == "psm_link") {
                o.psm_options.link = binary_link_from_string(v.get<std::string>());
            } else if (key == "impute_k") {
                const int k = v.get<int>();
                if (k < 1) throw ConfigError(field, "must be at least 1");
                o.psm_options.impute_k = static_cast<std::size_t>(k);
            } else if (key == "first_stage_squares") {
                o.model.first_stage_squares = v.get<std::vector<std::string>>();
            } else if (key == "level") {
                o.model.level = v.get<double>();
                if (!(o.model.level > 0.0 && o.model.level < 1.0)) throw ConfigError(field, "must lie in (0, 1)");
            } else if (key == "test_strategy") {
                o.test_strategy = strategy_from_string(v.get<std::string>());
            } else if (key == "dispersion_test") {
                o.dispersion_test = v.get<bool>();
            } else if (key == "stability_check") {
                o.stability_check = v.get<bool>();
            } else {
                throw ConfigError(field, "unknown key");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(field, std::string("wrong type: ") + e.what());
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(field, e.what());
        }
    }
    return o;
}

ExperimentConfig load_experiment_config(const nlohmann::json& doc) {
    ExperimentConfig c;
    if (doc.is_object() && (doc.contains("dgp") || doc.contains("experiment"))) {
        for (const auto& [key, _] : doc.items())
            if (key != "dgp" && key != "experiment") throw ConfigError(key, "unknown key (expected dgp or experiment)");
        c.dgp = DGPConfig::from_json(doc.value("dgp", nlohmann::json::object()));
        if (doc.contains("experiment")) c.options = ExperimentOptions::from_json(doc["experiment"]);
    } else {
        c.dgp = DGPConfig::from_json(doc);
    }
    return c;
}

ExperimentReport run_experiment(const DGPConfig& cfg, const ExperimentOptions& opts) {
    if (opts.reps < 1) throw ParameterError("reps must be at least 1");
    if (opts.jobs < 1) throw ParameterError("jobs must be at least 1");
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    std::vector<ReplicationOutcome> outcomes(static_cast<std::size_t>(opts.reps));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int r = next++; r < opts.reps; r = next++) outcomes[static_cast<std::size_t>(r)] = run_replication(cfg, opts, r);
    };
    const int n_threads = std::min(opts.jobs, opts.reps);
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    ExperimentReport rep = summarize(cfg, opts, outcomes);
    if (opts.record_wall_time)
        rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

}  // namespace countfx
