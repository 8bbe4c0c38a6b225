#include <doctest.h>

#include <cmath>
#include <map>

#include "metatutor/rng.hpp"
#include "metatutor/sim.hpp"

using namespace metatutor;
using namespace metatutor::sim;

namespace {

StudentProfile make_profile(MetaGroup group, double competence = 0.6) {
    StudentProfile p;
    p.competence = competence;
    switch (group) {
        case MetaGroup::Default:
            p.strategy_awareness = 0.3;
            p.time_awareness = 0.3;
            break;
        case MetaGroup::StrOnly:
            p.strategy_awareness = 0.8;
            p.time_awareness = 0.3;
            break;
        case MetaGroup::StrTime:
            p.strategy_awareness = 0.8;
            p.time_awareness = 0.8;
            break;
    }
    p.group = group;
    return p;
}

EmpiricalDistribution point_mass(double v) { return fit_switch_distribution({v}); }

}  // namespace

TEST_CASE("cohort counts follow the rounded proportions") {
    const SimConfig cfg;
    const auto cohort = sample_cohort(110, {0.4, 0.4, 0.2}, 1, cfg);
    REQUIRE(cohort.size() == 110);
    std::map<MetaGroup, int> counts;
    for (const StudentProfile& p : cohort) ++counts[p.group];
    CHECK(counts[MetaGroup::Default] == 44);
    CHECK(counts[MetaGroup::StrOnly] == 44);
    CHECK(counts[MetaGroup::StrTime] == 22);

    CHECK(sample_cohort(0, {0.4, 0.4, 0.2}, 1, cfg).empty());

    const auto all_default = sample_cohort(25, {1.0, 0.0, 0.0}, 2, cfg);
    for (const StudentProfile& p : all_default) CHECK(p.group == MetaGroup::Default);

    CHECK_THROWS_AS(sample_cohort(10, {0.5, 0.5, 0.5}, 1, cfg), ValidationError);
    CHECK_THROWS_AS(sample_cohort(-1, {0.4, 0.4, 0.2}, 1, cfg), ValidationError);
}

TEST_CASE("profiles respect the group thresholds") {
    const SimConfig cfg;
    const auto cohort = sample_cohort(150, {0.34, 0.33, 0.33}, 9, cfg);
    for (const StudentProfile& p : cohort) {
        CHECK(p.group ==
              classify_group(p.strategy_awareness, p.time_awareness, cfg));
        if (p.group == MetaGroup::StrTime) {
            CHECK(p.strategy_awareness >= cfg.tau_strategy);
            CHECK(p.time_awareness >= cfg.tau_time);
        }
        if (p.group == MetaGroup::StrOnly) {
            CHECK(p.strategy_awareness >= cfg.tau_strategy);
            CHECK(p.time_awareness < cfg.tau_time);
        }
        if (p.group == MetaGroup::Default)
            CHECK(p.strategy_awareness < cfg.tau_strategy);
    }
}

TEST_CASE("cohort sampling is deterministic") {
    const SimConfig cfg;
    const auto a = sample_cohort(40, {0.4, 0.4, 0.2}, 77, cfg);
    const auto b = sample_cohort(40, {0.4, 0.4, 0.2}, 77, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].competence == b[i].competence);
        CHECK(a[i].strategy_awareness == b[i].strategy_awareness);
        CHECK(a[i].speed == b[i].speed);
    }
}

TEST_CASE("switch-time distribution fitting") {
    const EmpiricalDistribution d = fit_switch_distribution({30.0, 10.0, 20.0});
    CHECK(d.values == std::vector<double>{10.0, 20.0, 30.0});
    CHECK_THROWS_AS(fit_switch_distribution({}), ValidationError);
    CHECK_THROWS_AS(fit_switch_distribution({5.0, -1.0}), ValidationError);
}

TEST_CASE("inverse-CDF sampling interpolates between order statistics") {
    CHECK(quantile(point_mass(30.0), 0.0) == 30.0);
    CHECK(quantile(point_mass(30.0), 0.99) == 30.0);

    const EmpiricalDistribution two = fit_switch_distribution({0.0, 100.0});
    CHECK(quantile(two, 0.5) == doctest::Approx(50.0));
    CHECK(quantile(two, 0.25) == doctest::Approx(25.0));

    Rng rng(5);
    const EmpiricalDistribution three = fit_switch_distribution({10.0, 20.0, 30.0});
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double v = sample_switch_time(three, rng);
        CHECK(v >= 10.0);
        CHECK(v <= 30.0);
        sum += v;
    }
    const double mean = sum / 10000.0;
    CHECK(mean == doctest::Approx(20.0).epsilon(0.05));
}

TEST_CASE("default-awareness students never switch without help") {
    const SimConfig cfg;
    TutorEnv env(make_profile(MetaGroup::Default), cfg, point_mass(30.0), 1);
    StudentProfile zero = make_profile(MetaGroup::Default);
    zero.strategy_awareness = 0.0;
    TutorEnv env_zero(zero, cfg, point_mass(30.0), 2);
    for (int i = 0; i < 20; ++i) {
        env.step(InterventionAction::NoIntervention);
        env_zero.step(InterventionAction::NoIntervention);
    }
    for (const ProblemOutcome& h : env.history()) CHECK_FALSE(h.switched);
    for (const ProblemOutcome& h : env_zero.history()) CHECK_FALSE(h.switched);
}

TEST_CASE("direct presentation forces backward chaining regardless of profile") {
    const SimConfig cfg;
    StudentProfile p = make_profile(MetaGroup::Default);
    p.strategy_awareness = 0.0;
    TutorEnv env(p, cfg, point_mass(30.0), 3);
    for (int i = 0; i < 20; ++i) env.step(InterventionAction::DirectPresent);
    for (const ProblemOutcome& h : env.history()) CHECK(h.switched);
}

TEST_CASE("trajectories are a pure function of profile, actions and seed") {
    const SimConfig cfg;
    const StudentProfile p = make_profile(MetaGroup::StrOnly);
    const std::vector<InterventionAction> actions{
        InterventionAction::NoIntervention, InterventionAction::Nudge,
        InterventionAction::DirectPresent, InterventionAction::NoIntervention,
        InterventionAction::Nudge};

    TutorEnv a(p, cfg, point_mass(25.0), 42);
    TutorEnv b(p, cfg, point_mass(25.0), 42);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const StepResult ra = a.step(actions[i]);
        const StepResult rb = b.step(actions[i]);
        CHECK(ra.reward.value() == rb.reward.value());
        CHECK(ra.features == rb.features);
        CHECK(ra.done == rb.done);
    }
    REQUIRE(a.history().size() == b.history().size());
    for (std::size_t i = 0; i < a.history().size(); ++i) {
        CHECK(a.history()[i].time_seconds == b.history()[i].time_seconds);
        CHECK(a.history()[i].score == b.history()[i].score);
        CHECK(a.history()[i].hints == b.history()[i].hints);
    }
}

TEST_CASE("stepping past the end is an error") {
    const SimConfig cfg;
    TutorEnv env(make_profile(MetaGroup::Default), cfg, point_mass(30.0), 4);
    for (int i = 0; i < 20; ++i) env.step(InterventionAction::NoIntervention);
    CHECK(env.done());
    CHECK_THROWS_AS(env.step(InterventionAction::NoIntervention), ValidationError);
    CHECK_THROWS_AS(env.step_worked_example(), ValidationError);
}

TEST_CASE("rewards stay inside the score range across random runs") {
    const SimConfig cfg;
    Rng driver(1234);
    int steps = 0;
    while (steps < 100000) {
        StudentProfile p;
        p.competence = driver.uniform01();
        p.strategy_awareness = driver.uniform01();
        p.time_awareness = driver.uniform01();
        p.hint_propensity = driver.uniform01();
        p.speed = driver.uniform(0.5, 2.0);
        p.group = classify_group(p.strategy_awareness, p.time_awareness, cfg);
        TutorEnv env(p, cfg, point_mass(driver.uniform(1.0, 200.0)),
                     driver.next_u64());
        while (!env.done()) {
            const auto action = InterventionAction(int(driver.below(3)));
            const StepResult r = env.step(action);
            ++steps;
            CHECK(r.reward.value() >= 0.0);
            CHECK(r.reward.value() <= 100.0);
        }
    }
}

TEST_CASE("archetypes separate under hands-off runs") {
    const SimConfig cfg;
    const auto cohort = sample_cohort(120, {0.34, 0.33, 0.33}, 2024, cfg);
    std::map<MetaGroup, std::vector<double>> first_switch;
    std::map<MetaGroup, int> switch_counts;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        TutorEnv env(cohort[i], cfg, point_mass(30.0), derive_seed(9, i));
        int first = 0;
        for (int pos = 1; pos <= 20; ++pos) {
            env.step(InterventionAction::NoIntervention);
            if (first == 0 && env.history().back().switched) first = pos;
        }
        if (first > 0) first_switch[cohort[i].group].push_back(first);
        for (const ProblemOutcome& h : env.history())
            if (h.switched) ++switch_counts[cohort[i].group];
    }
    CHECK(switch_counts[MetaGroup::Default] == 0);
    REQUIRE_FALSE(first_switch[MetaGroup::StrTime].empty());
    REQUIRE_FALSE(first_switch[MetaGroup::StrOnly].empty());
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    CHECK(mean(first_switch[MetaGroup::StrTime]) <
          mean(first_switch[MetaGroup::StrOnly]));
}

TEST_CASE("feature extraction fills slots as problems complete") {
    const SimConfig cfg;
    TutorEnv env(make_profile(MetaGroup::StrTime), cfg, point_mass(30.0), 6);

    const FeatureVector fresh = extract_features(env);
    REQUIRE(fresh.size() == kFeatureDim);
    REQUIRE(kFeatureDim == 152);
    for (std::size_t i = 0; i < kPerSlotSignals * 20; ++i) CHECK(fresh.values[i] == 0.0);

    const StepResult r = env.step(InterventionAction::NoIntervention);
    REQUIRE(r.features.size() == 152);
    // slot 0 now carries its signals (solved flag is the first of the seven)
    CHECK(r.features.values[0] == 1.0);
    bool slot0_nonzero = false;
    for (std::size_t i = 0; i < kPerSlotSignals; ++i)
        slot0_nonzero |= r.features.values[i] != 0.0;
    CHECK(slot0_nonzero);
    for (std::size_t i = kPerSlotSignals; i < kPerSlotSignals * 20; ++i)
        CHECK(r.features.values[i] == 0.0);
    for (double v : r.features.values) CHECK(std::isfinite(v));
}

TEST_CASE("worked-example slots advance the cursor with fixed nominal outcomes") {
    const SimConfig cfg;
    TutorEnv env(make_profile(MetaGroup::Default), cfg, point_mass(30.0), 7);
    const StepResult r = env.step_worked_example();
    CHECK(env.cursor() == 1);
    CHECK(env.we_seen() == 1);
    CHECK(r.reward.value() == cfg.we_nominal_score);
    const ProblemOutcome& h = env.history().front();
    CHECK(h.worked_example);
    CHECK(h.hints == 0);
    CHECK(h.time_norm == cfg.we_nominal_time_norm);
    CHECK(env.bc_mastery() == doctest::Approx(cfg.we_mastery_gain));
}

TEST_CASE("probability phase contracts") {
    SimConfig cfg;
    const StudentProfile p = make_profile(MetaGroup::Default, 0.7);

    SUBCASE("pre only depends on competence, not bc_skill") {
        Rng r1(11), r2(11);
        const ProbabilityOutcome low = run_probability_phase(p, 0.0, cfg, r1);
        const ProbabilityOutcome high = run_probability_phase(p, 1.0, cfg, r2);
        CHECK(low.pre == high.pre);
        CHECK(high.post >= low.post);
    }
    SUBCASE("monotone in bc_skill across seeds") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            Rng r1(seed), r2(seed);
            const double post0 = run_probability_phase(p, 0.2, cfg, r1).post;
            const double post1 = run_probability_phase(p, 0.9, cfg, r2).post;
            CHECK(post1 >= post0);
        }
    }
    SUBCASE("perfect student with perfect skill and no noise hits the ceiling") {
        SimConfig quiet = cfg;
        quiet.prob_noise_sigma = 0.0;
        StudentProfile ace = p;
        ace.competence = 1.0;
        Rng rng(1);
        const ProbabilityOutcome out = run_probability_phase(ace, 1.0, quiet, rng);
        CHECK(out.post == doctest::Approx(100.0).epsilon(1e-9));
        CHECK(out.iso_post == doctest::Approx(100.0).epsilon(1e-9));
    }
    SUBCASE("bc_skill domain is validated") {
        Rng rng(1);
        CHECK_THROWS_AS(run_probability_phase(p, 1.5, cfg, rng), ValidationError);
    }
}

TEST_CASE("pre-test scores stay strictly below the maximum") {
    // the gain formula needs pre < 100; the clipped noise guarantees it
    const SimConfig cfg;
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        StudentProfile p = make_profile(MetaGroup::StrTime,
                                        cfg.competence_min +
                                            (cfg.competence_max - cfg.competence_min) *
                                                rng.uniform01());
        Rng pre_rng(derive_seed(100, std::uint64_t(i)));
        for (double s : logic_pretest(p, cfg, pre_rng)) CHECK(s < 100.0);
        Rng prob_rng(derive_seed(200, std::uint64_t(i)));
        CHECK(run_probability_phase(p, rng.uniform01(), cfg, prob_rng).pre < 100.0);
    }
}
