#include "countfx/errors.hpp"
#include "countfx/experiment.hpp"

#include <gtest/gtest.h>

using namespace countfx;

namespace {

DGPConfig tiny_world() {
    auto c = DGPConfig::defaults();
    c.n_persons = 150;
    c.weeks = 4;
    return c;
}

ExperimentOptions quick(int jobs) {
    ExperimentOptions o;
    o.reps = 6;
    o.jobs = jobs;
    o.strategies = {Strategy::s1, Strategy::s5};
    o.dispersion_test = true;
    return o;
}

}  // namespace

TEST(Experiment, JobCountDoesNotChangeReport) {
    const auto a = run_experiment(tiny_world(), quick(1)).to_json().dump();
    const auto b = run_experiment(tiny_world(), quick(3)).to_json().dump();
    EXPECT_EQ(a, b);
}

TEST(Experiment, ReplicationIsReproducible) {
    const auto a = run_replication(tiny_world(), quick(1), 4);
    const auto b = run_replication(tiny_world(), quick(1), 4);
    ASSERT_FALSE(a.error.has_value()) << *a.error;
    ASSERT_EQ(a.strategies.size(), 2u);
    ASSERT_TRUE(a.strategies[1].has_value());
    EXPECT_EQ(a.strategies[1]->omega_hat, b.strategies[1]->omega_hat);
    EXPECT_EQ(a.psm_ate, b.psm_ate);
    EXPECT_TRUE(a.strategies[1]->sig_xi.has_value());
    EXPECT_FALSE(a.strategies[0]->sig_xi.has_value());
}

TEST(Experiment, SummaryShape) {
    const auto r = run_experiment(tiny_world(), quick(1));
    EXPECT_EQ(r.replications, 6);
    ASSERT_EQ(r.strategies.size(), 2u);
    EXPECT_EQ(r.strategies[0].id, Strategy::s1);
    EXPECT_EQ(r.strategies[0].n + r.failures, 6);
    EXPECT_GE(r.strategies[1].coverage, 0.0);
    EXPECT_LE(r.strategies[1].coverage, 1.0);
    EXPECT_TRUE(r.dispersion_rejection.has_value());
    EXPECT_FALSE(r.wall_seconds.has_value());
    EXPECT_FALSE(r.to_json()["config"]["experiment"].contains("jobs"));
}

TEST(Experiment, RejectsBadCounts) {
    auto o = quick(1);
    o.reps = 0;
    EXPECT_THROW(run_experiment(tiny_world(), o), ParameterError);
    o.reps = 2;
    o.jobs = 0;
    EXPECT_THROW(run_experiment(tiny_world(), o), ParameterError);
}

TEST(ExperimentOptions, JsonRoundTripAndErrors) {
    auto o = quick(1);
    o.model.first_stage_squares = {"age"};
    o.test_strategy = Strategy::s1;
    o.psm = false;
    const auto back = ExperimentOptions::from_json(o.to_json());
    EXPECT_EQ(back.to_json(), o.to_json());
    try {
        ExperimentOptions::from_json({{"repz", 3}});
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "experiment.repz");
    }
    EXPECT_THROW(ExperimentOptions::from_json({{"reps", 0}}), ConfigError);
    EXPECT_THROW(ExperimentOptions::from_json({{"strategies", {"s9"}}}), ConfigError);
}

TEST(ExperimentConfig, BareOrWrapped) {
    const auto bare = load_experiment_config({{"n_persons", 77}});
    EXPECT_EQ(bare.dgp.n_persons, 77);
    const auto wrapped = load_experiment_config({{"dgp", {{"weeks", 3}}}, {"experiment", {{"reps", 9}}}});
    EXPECT_EQ(wrapped.dgp.weeks, 3);
    EXPECT_EQ(wrapped.options.reps, 9);
}
