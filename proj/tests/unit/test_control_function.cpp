#include "countfx/control_function.hpp"
#include "countfx/dgp.hpp"
#include "countfx/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace countfx;

namespace {

const SimulatedPanel& small_panel() {
    static const SimulatedPanel p = [] {
        auto cfg = DGPConfig::defaults();
        cfg.n_persons = 400;
        cfg.weeks = 8;
        return simulate_panel(cfg, 3);
    }();
    return p;
}

std::vector<std::string> names_of(const std::vector<Term>& terms) {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(t.name());
    return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST(GeneralizedResiduals, KnownValues) {
    FitResult f;
    f.model = "probit";
    f.linear_predictor = Eigen::Vector3d(0.0, 1.0, -1.0);
    const std::vector<int> d{1, 0, 1};
    const auto r = generalized_residuals(f, d);
    EXPECT_NEAR(r(0), 0.7978845608028654, 1e-14);
    EXPECT_NEAR(r(1), -1.525135276160981, 1e-12);
    EXPECT_NEAR(r(2), 1.525135276160981, 1e-12);
}

TEST(GeneralizedResiduals, LogitUnsupported) {
    FitResult f;
    f.model = "logit";
    f.linear_predictor = Eigen::VectorXd::Zero(2);
    EXPECT_THROW(generalized_residuals(f, std::vector<int>{0, 1}), UnsupportedLinkError);
}

TEST(StrategyTerms, ColumnSets) {
    const Schema s = dgp_schema(DGPConfig::defaults());
    const auto s1 = names_of(strategy_terms(s, Strategy::s1));
    std::vector<std::string> want = s.covariates;
    want.push_back("T");
    EXPECT_EQ(s1, want);

    const auto s2 = names_of(strategy_terms(s, Strategy::s2));
    EXPECT_TRUE(contains(s2, "T_hat"));
    EXPECT_FALSE(contains(s2, "T"));

    const auto s3 = names_of(strategy_terms(s, Strategy::s3));
    auto s4 = names_of(strategy_terms(s, Strategy::s4));
    ASSERT_EQ(s4.size(), s3.size() + 1);
    EXPECT_EQ(s4.back(), "T*xi");
    s4.pop_back();
    EXPECT_EQ(s4, s3);

    const auto s5 = names_of(strategy_terms(s, Strategy::s5));
    EXPECT_TRUE(contains(s5, "xi_s"));
    EXPECT_TRUE(contains(s5, "I"));
}

TEST(Assemble, S1HasNoControlColumnsAndS5DropsConstantI) {
    const auto& p = small_panel();
    const auto t = fit_reduced_form_treatment(p.data);
    const auto s = fit_selection_model(p.data);
    const auto m1 = assemble_strategy(p.data, {Strategy::s1}, nullptr, nullptr);
    for (const char* c : {"xi", "T*xi", "xi_s", "t1"}) EXPECT_FALSE(m1.design.has_column(c)) << c;
    const auto m5 = assemble_strategy(p.data, {Strategy::s5}, &t, &s);
    for (const char* c : {"xi", "T*xi", "xi_s", "t1"}) EXPECT_TRUE(m5.design.has_column(c)) << c;
    EXPECT_FALSE(m5.design.has_column("I"));
    EXPECT_THROW(assemble_strategy(p.data, {Strategy::s3}, nullptr, nullptr), SchemaError);
    EXPECT_THROW(assemble_strategy(p.data, {Strategy::s5}, &t, nullptr), SchemaError);
}

TEST(Controls, ResidualSignFollowsTreatment) {
    const auto& p = small_panel();
    const auto t = fit_reduced_form_treatment(p.data);
    const auto c = control_columns(p.data, &t, nullptr);
    std::size_t checked = 0;
    for (std::size_t r = 0; r < p.data.rows(); ++r) {
        const auto tr = p.data.treatment(r);
        if (!tr || !c.xi[r]) continue;
        EXPECT_EQ(*c.xi[r] > 0, *tr == 1);
        EXPECT_DOUBLE_EQ(*c.t_xi[r], *tr * *c.xi[r]);
        ++checked;
    }
    EXPECT_GT(checked, 1000u);
}

TEST(Strategies, NestedLogLikelihoods) {
    const auto& p = small_panel();
    const std::vector<Strategy> ids{Strategy::s3, Strategy::s4, Strategy::s5};
    const auto res = run_strategies(p.data, ids, CountKind::nb2);
    ASSERT_EQ(res.size(), 3u);
    EXPECT_EQ(res[0].main.n_obs, res[2].main.n_obs);
    EXPECT_LE(res[0].main.loglik, res[1].main.loglik + 1e-8);
    EXPECT_LE(res[1].main.loglik, res[2].main.loglik + 1e-8);
}

TEST(Pipeline, DeterministicDocument) {
    const auto& p = small_panel();
    PipelineOptions o;
    o.spec.id = Strategy::s5;
    const auto a = run_2sri_pipeline(p.data, o).to_json();
    const auto b = run_2sri_pipeline(p.data, o).to_json();
    EXPECT_EQ(a.dump(), b.dump());
    EXPECT_TRUE(a["tests"].contains("weak_instruments"));
    EXPECT_TRUE(a["tests"].contains("model_wald"));
    EXPECT_TRUE(a["tests"].contains("dispersion_lr"));
}

TEST(Pipeline, TruncatedFamilyOnZerosIsTaggedDomainError) {
    const auto& p = small_panel();
    PipelineOptions o;
    o.spec.id = Strategy::s1;
    o.spec.family = CountKind::ztnb;
    try {
        run_2sri_pipeline(p.data, o);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "main_fit");
        EXPECT_EQ(e.cause(), StageError::Cause::domain);
    }
}

TEST(Pipeline, ImpliedEffectMatchesIrrWithoutControls) {
    // Without control terms the implied effect is the mean of mu1 - mu0 over the rows.
    const auto& p = small_panel();
    PipelineOptions o;
    o.spec.id = Strategy::s1;
    o.dispersion_test = false;
    const auto r = run_2sri_pipeline(p.data, o);
    const auto m = assemble_strategy(p.data, {Strategy::s1}, nullptr, nullptr);
    const Eigen::Index jt = m.design.column("T");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m.design.x.rows(); ++i) {
        const double eta = r.main.linear_predictor(i) - r.main.coef(jt) * m.design.x(i, jt);
        sum += std::exp(eta + r.main.coef(jt)) - std::exp(eta);
    }
    EXPECT_NEAR(r.implied_effect, sum / static_cast<double>(m.design.x.rows()), 1e-9);
}
