#pragma once
// Seeded generative model of students working through the logic tutor's
// training sequence and the later probability transfer phase. Students carry
// latent competence and metacognitive-awareness parameters; interventions
// change how much backward-chaining practice they accumulate, and that
// practice feeds later scores. Every behavioral constant lives in SimConfig
// and can be overridden from a config file.

#include <array>
#include <cstdint>
#include <vector>

#include "metatutor/config.hpp"
#include "metatutor/domain.hpp"
#include "metatutor/rng.hpp"

namespace metatutor::sim {

struct SimConfig {
    // group thresholds on the awareness scales
    double tau_strategy = 0.6;
    double tau_time = 0.6;

    // cohort sampling ranges; early behavior channels correlate with the
    // latent awareness so the incoming-competence classifier has signal
    double competence_min = 0.35;
    double competence_max = 0.9;

    // training-score blend over accuracy, time and solution length
    double score_w_accuracy = 0.5;
    double score_w_time = 0.25;
    double score_w_length = 0.25;
    double score_noise_sigma = 0.05;
    double accuracy_noise_sigma = 0.08;
    double noise_clip = 2.4;  // stddev multiples; keeps pre-tests off the ceiling

    // nudge compliance probability = base + slope * effective awareness
    double nudge_base = 0.2;
    double nudge_slope = 0.75;
    double nudge_comply_time_frac = 0.4;  // fraction of the prompt delay lost
    double nudge_dismiss_time = 10.0;     // seconds to read and dismiss

    // difficulty ramp and the payoff for solving in backward chaining
    double level_penalty = 0.06;
    double bc_level_bonus = 0.06;
    double bc_bonus_mastery_floor = 0.3;

    // mastery dynamics: practicing BC early is worth more than late
    double mastery_gain = 0.12;
    double mastery_sa_floor = 0.25;
    double mastery_level_discount = 0.2;
    double we_mastery_gain = 0.08;
    double we_awareness_boost = 0.1;
    double practice_awareness_gain = 0.04;
    double adoption_threshold = 0.8;  // awareness needed to keep using BC unprompted

    // autonomous switch levels per archetype
    int strtime_switch_level = 2;
    int stronly_switch_level = 4;

    // solve-time model
    double base_time = 300.0;  // seconds at level 1
    double time_level_slope = 0.3;
    double time_sigma = 0.10;
    double bc_time_discount = 0.15;

    // hints
    double hint_rate = 6.0;
    int max_hints = 10;

    // solution length (normalized)
    double length_base = 0.3;
    double length_level_slope = 0.12;
    double length_bc_discount = 0.7;
    double length_noise_sigma = 0.08;

    // worked-example slots emit fixed nominal outcomes
    double we_nominal_score = 70.0;
    double we_nominal_time_norm = 0.5;

    // logic pre/post tests
    double logic_base = 0.2;
    double logic_competence_w = 0.6;
    double test_noise_sigma = 0.06;
    double practice_gain = 0.22;
    double transfer_gain = 0.2;
    double iso_post_difficulty = 0.10;
    double post_difficulty = 0.15;

    // probability tutor; post weights sum to 1 so a perfect student with
    // perfect BC skill reaches the ceiling
    double prob_base = 0.45;
    double prob_competence_w = 0.45;
    double prob_post_base = 0.2;
    double prob_post_competence_w = 0.5;
    double prob_post_bc_w = 0.3;
    double prob_noise_sigma = 0.05;

    // BC-skill scalar handed to the probability phase
    double bc_skill_base = 0.3;
    double bc_skill_frac_w = 0.45;
    double bc_skill_we_w = 0.1;
    double bc_skill_awareness_w = 0.15;

    static SimConfig from_config(const KeyValueConfig& cfg);
};

struct StudentProfile {
    double competence = 0.5;
    double strategy_awareness = 0.5;
    double time_awareness = 0.5;
    double hint_propensity = 0.5;
    double speed = 1.0;  // multiplier on nominal solve time
    MetaGroup group = MetaGroup::Default;
};

MetaGroup classify_group(double strategy_awareness, double time_awareness,
                         const SimConfig& cfg);

// Deterministic cohort with realized group counts equal to the rounded
// proportions (largest-remainder rule).
std::vector<StudentProfile> sample_cohort(int n, const std::array<double, 3>& group_mix,
                                          std::uint64_t seed, const SimConfig& cfg);

// Sorted sample of switch latencies (seconds); sampling interpolates between
// order statistics, so support is exactly [min, max].
struct EmpiricalDistribution {
    std::vector<double> values;
};

EmpiricalDistribution fit_switch_distribution(const std::vector<double>& switch_times);

// Inverse-CDF with linear interpolation; u in [0,1).
double quantile(const EmpiricalDistribution& dist, double u);
double sample_switch_time(const EmpiricalDistribution& dist, Rng& rng);

// Switch-time corpus simulated from early-switching students, used when no
// external sample file is supplied.
EmpiricalDistribution default_switch_distribution(const SimConfig& cfg,
                                                  std::uint64_t seed);

struct ProblemOutcome {
    double time_seconds = 0.0;
    double time_norm = 0.0;
    double accuracy = 0.0;
    int hints = 0;
    bool switched = false;  // solved in backward chaining
    bool worked_example = false;
    double score = 0.0;
};

struct StepResult {
    FeatureVector features;  // observation after the step
    Score reward;
    bool done = false;
};

constexpr std::size_t kPerSlotSignals = 7;
constexpr std::size_t kAggregateSignals = 12;
constexpr std::size_t kFeatureDim =
    kPerSlotSignals * std::size_t(kLogicTrainingProblems) + kAggregateSignals;  // 152

// One student's pass through the 20 logic training problems. Owns its rng, so
// a trajectory is a pure function of (profile, action sequence, seed).
class TutorEnv {
public:
    TutorEnv(const StudentProfile& profile, const SimConfig& cfg,
             const EmpiricalDistribution& switch_dist, std::uint64_t seed);

    StepResult step(InterventionAction action);
    StepResult step_worked_example();

    bool done() const { return cursor_ >= kLogicTrainingProblems; }
    int cursor() const { return cursor_; }
    const std::vector<ProblemOutcome>& history() const { return history_; }
    const StudentProfile& profile() const { return profile_; }
    double bc_mastery() const { return bc_mastery_; }
    double effective_awareness() const;
    int we_seen() const { return we_seen_; }
    int bc_solve_count() const { return bc_solve_count_; }

private:
    bool autonomous_bc(int level) const;
    void after_bc_experience();

    StudentProfile profile_;
    SimConfig cfg_;
    EmpiricalDistribution switch_dist_;
    Rng rng_;
    int cursor_ = 0;
    std::vector<ProblemOutcome> history_;
    double bc_mastery_ = 0.0;
    int bc_solve_count_ = 0;
    int we_seen_ = 0;
    bool adopted_ = false;
};

FeatureVector extract_features(const TutorEnv& env);

// Two pre-test scores; depends on competence only (plus test noise).
std::vector<double> logic_pretest(const StudentProfile& profile, const SimConfig& cfg,
                                  Rng& rng);
// Six post-test scores; the first two are the isomorphic pair.
std::vector<double> logic_posttest(const StudentProfile& profile, double bc_mastery,
                                   const SimConfig& cfg, Rng& rng);

struct ProbabilityOutcome {
    double pre = 0.0;       // mean of the 14 pre-test problems
    double post = 0.0;      // mean of the 20 post-test problems
    double iso_post = 0.0;  // mean of the 14 post-test problems with pre partners
};

// Pre draws depend on competence only; post is non-decreasing in bc_skill at
// fixed competence and rng state.
ProbabilityOutcome run_probability_phase(const StudentProfile& profile, double bc_skill,
                                         const SimConfig& cfg, Rng& rng);

}  // namespace metatutor::sim
