#include "countfx/dgp.hpp"
#include "countfx/errors.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace countfx;

namespace {

DGPConfig small(int persons = 300, int weeks = 6) {
    auto c = DGPConfig::defaults();
    c.n_persons = persons;
    c.weeks = weeks;
    return c;
}

}  // namespace

TEST(Dgp, SameSeedSamePanel) {
    const auto cfg = small();
    const auto a = simulate_panel(cfg, 2), b = simulate_panel(cfg, 2);
    EXPECT_TRUE(a.data == b.data);
    EXPECT_EQ(a.y1, b.y1);
    const auto c = simulate_panel(cfg, 3);
    EXPECT_FALSE(a.data == c.data);
    EXPECT_EQ(a.data.rows(), 1800u);
}

TEST(Dgp, ReplicationEnginesDiffer) {
    auto a = replication_engine(1, 0), b = replication_engine(1, 1), c = replication_engine(2, 0);
    const auto va = a(), vb = b(), vc = c();
    EXPECT_NE(va, vb);
    EXPECT_NE(va, vc);
    EXPECT_EQ(replication_engine(1, 0)(), va);
}

TEST(Dgp, EndowmentRaisesTreatmentUnderPositiveLoading) {
    auto cfg = small(2000, 2);
    cfg.endowment_sd = 1.0;
    cfg.endow_loading_t = 1.0;
    const auto p = simulate_panel(cfg, 0);
    double mt = 0, mc = 0;
    int nt = 0, nc = 0;
    for (std::size_t r = 0; r < p.data.rows(); ++r) {
        const double mu = p.mu[static_cast<std::size_t>(r / 2)];
        if (*p.data.treatment(r)) mt += mu, ++nt;
        else mc += mu, ++nc;
    }
    EXPECT_GT(mt / nt, mc / nc + 0.1);
}

TEST(Dgp, NoEndowmentMeansZeroMu) {
    auto cfg = small();
    cfg.endowment_sd = 0.0;
    const auto p = simulate_panel(cfg, 0);
    for (double m : p.mu) EXPECT_EQ(m, 0.0);
}

TEST(Dgp, NullEffectHasEqualMeansAndSmallOracle) {
    auto cfg = small(2000, 5);
    cfg.omega = 0.0;
    cfg.hetero_scale = 0.0;
    cfg.omega_drift = 0.0;
    const auto p = simulate_panel(cfg, 1);
    EXPECT_EQ(p.mean0, p.mean1);
    double s = 0, ss = 0;
    for (std::size_t i = 0; i < p.y0.size(); ++i) {
        const double d = static_cast<double>(p.y1[i] - p.y0[i]);
        s += d;
        ss += d * d;
    }
    const double n = static_cast<double>(p.y0.size());
    const double se = std::sqrt((ss / n - (s / n) * (s / n)) / n);
    EXPECT_LT(std::abs(oracle_effects(p).ate_overall), 4.0 * se);
}

TEST(Dgp, SelectionDisabledSelectsEverything) {
    auto doc = small().to_json();
    doc["selection"]["enabled"] = false;
    const auto cfg = DGPConfig::from_json(doc);
    EXPECT_FALSE(cfg.selection_enabled);
    const auto p = simulate_panel(cfg, 0);
    for (std::size_t r = 0; r < p.data.rows(); ++r) EXPECT_EQ(p.data.selection(r), 1);
}

TEST(Dgp, ConfigErrorNamesField) {
    auto doc = small().to_json();
    doc["endowment_sd"] = -1.0;
    try {
        DGPConfig::from_json(doc).validate();
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "endowment_sd");
    }
    doc = small().to_json();
    doc["no_such_key"] = 1;
    EXPECT_THROW(DGPConfig::from_json(doc), ConfigError);
}

TEST(Dgp, JsonRoundTrip) {
    auto cfg = small();
    cfg.census_week = 4;
    cfg.beta["age"] = 0.01;
    EXPECT_EQ(DGPConfig::from_json(cfg.to_json()).to_json(), cfg.to_json());
}

TEST(Draws, NegativeBinomialMoments) {
    std::mt19937_64 rng(77);
    const double lambda = 3.0, alpha = 0.5;
    const int n = 200000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double y = static_cast<double>(draw_count(rng, CountKind::nb2, lambda, alpha));
        s += y;
        ss += y * y;
    }
    const double mean = s / n, var = ss / n - mean * mean;
    EXPECT_NEAR(mean, lambda, 0.03);
    EXPECT_NEAR(var, lambda + alpha * lambda * lambda, 0.15);
}

TEST(Draws, TruncatedNeverZero) {
    std::mt19937_64 rng(78);
    for (int i = 0; i < 5000; ++i) EXPECT_GE(draw_count(rng, CountKind::ztnb, 0.3, 1.0), 1);
}

TEST(Dgp, EmittedTableReingests) {
    const auto cfg = small(50, 4);
    const auto p = simulate_panel(cfg, 0);
    std::ostringstream out;
    emit_table(p.data, out);
    const auto back = countfx::testing::panel_from_text(out.str(), dgp_schema(cfg));
    EXPECT_TRUE(back == p.data);
    std::ostringstream truth;
    emit_truth(p, truth);
    std::size_t lines = 0;
    for (char c : truth.str()) lines += c == '\n';
    EXPECT_EQ(lines, p.data.rows() + 1);
}
