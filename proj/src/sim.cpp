#include "metatutor/sim.hpp"

#include <algorithm>
#include <cmath>

namespace metatutor::sim {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

SimConfig SimConfig::from_config(const KeyValueConfig& cfg) {
    SimConfig c;
    c.tau_strategy = cfg.get_double("tau_strategy", c.tau_strategy);
    c.tau_time = cfg.get_double("tau_time", c.tau_time);
    c.competence_min = cfg.get_double("competence_min", c.competence_min);
    c.competence_max = cfg.get_double("competence_max", c.competence_max);
    c.score_w_accuracy = cfg.get_double("score_w_accuracy", c.score_w_accuracy);
    c.score_w_time = cfg.get_double("score_w_time", c.score_w_time);
    c.score_w_length = cfg.get_double("score_w_length", c.score_w_length);
    c.score_noise_sigma = cfg.get_double("score_noise_sigma", c.score_noise_sigma);
    c.accuracy_noise_sigma = cfg.get_double("accuracy_noise_sigma", c.accuracy_noise_sigma);
    c.noise_clip = cfg.get_double("noise_clip", c.noise_clip);
    c.nudge_base = cfg.get_double("nudge_base", c.nudge_base);
    c.nudge_slope = cfg.get_double("nudge_slope", c.nudge_slope);
    c.nudge_comply_time_frac = cfg.get_double("nudge_comply_time_frac", c.nudge_comply_time_frac);
    c.nudge_dismiss_time = cfg.get_double("nudge_dismiss_time", c.nudge_dismiss_time);
    c.level_penalty = cfg.get_double("level_penalty", c.level_penalty);
    c.bc_level_bonus = cfg.get_double("bc_level_bonus", c.bc_level_bonus);
    c.bc_bonus_mastery_floor = cfg.get_double("bc_bonus_mastery_floor", c.bc_bonus_mastery_floor);
    c.mastery_gain = cfg.get_double("mastery_gain", c.mastery_gain);
    c.mastery_sa_floor = cfg.get_double("mastery_sa_floor", c.mastery_sa_floor);
    c.mastery_level_discount = cfg.get_double("mastery_level_discount", c.mastery_level_discount);
    c.we_mastery_gain = cfg.get_double("we_mastery_gain", c.we_mastery_gain);
    c.we_awareness_boost = cfg.get_double("we_awareness_boost", c.we_awareness_boost);
    c.practice_awareness_gain = cfg.get_double("practice_awareness_gain", c.practice_awareness_gain);
    c.adoption_threshold = cfg.get_double("adoption_threshold", c.adoption_threshold);
    c.strtime_switch_level = int(cfg.get_int("strtime_switch_level", c.strtime_switch_level));
    c.stronly_switch_level = int(cfg.get_int("stronly_switch_level", c.stronly_switch_level));
    c.base_time = cfg.get_double("base_time", c.base_time);
    c.time_level_slope = cfg.get_double("time_level_slope", c.time_level_slope);
    c.time_sigma = cfg.get_double("time_sigma", c.time_sigma);
    c.bc_time_discount = cfg.get_double("bc_time_discount", c.bc_time_discount);
    c.hint_rate = cfg.get_double("hint_rate", c.hint_rate);
    c.max_hints = int(cfg.get_int("max_hints", c.max_hints));
    c.length_base = cfg.get_double("length_base", c.length_base);
    c.length_level_slope = cfg.get_double("length_level_slope", c.length_level_slope);
    c.length_bc_discount = cfg.get_double("length_bc_discount", c.length_bc_discount);
    c.length_noise_sigma = cfg.get_double("length_noise_sigma", c.length_noise_sigma);
    c.we_nominal_score = cfg.get_double("we_nominal_score", c.we_nominal_score);
    c.we_nominal_time_norm = cfg.get_double("we_nominal_time_norm", c.we_nominal_time_norm);
    c.logic_base = cfg.get_double("logic_base", c.logic_base);
    c.logic_competence_w = cfg.get_double("logic_competence_w", c.logic_competence_w);
    c.test_noise_sigma = cfg.get_double("test_noise_sigma", c.test_noise_sigma);
    c.practice_gain = cfg.get_double("practice_gain", c.practice_gain);
    c.transfer_gain = cfg.get_double("transfer_gain", c.transfer_gain);
    c.iso_post_difficulty = cfg.get_double("iso_post_difficulty", c.iso_post_difficulty);
    c.post_difficulty = cfg.get_double("post_difficulty", c.post_difficulty);
    c.prob_base = cfg.get_double("prob_base", c.prob_base);
    c.prob_competence_w = cfg.get_double("prob_competence_w", c.prob_competence_w);
    c.prob_post_base = cfg.get_double("prob_post_base", c.prob_post_base);
    c.prob_post_competence_w = cfg.get_double("prob_post_competence_w", c.prob_post_competence_w);
    c.prob_post_bc_w = cfg.get_double("prob_post_bc_w", c.prob_post_bc_w);
    c.prob_noise_sigma = cfg.get_double("prob_noise_sigma", c.prob_noise_sigma);
    c.bc_skill_base = cfg.get_double("bc_skill_base", c.bc_skill_base);
    c.bc_skill_frac_w = cfg.get_double("bc_skill_frac_w", c.bc_skill_frac_w);
    c.bc_skill_we_w = cfg.get_double("bc_skill_we_w", c.bc_skill_we_w);
    c.bc_skill_awareness_w = cfg.get_double("bc_skill_awareness_w", c.bc_skill_awareness_w);
    return c;
}

MetaGroup classify_group(double strategy_awareness, double time_awareness,
                         const SimConfig& cfg) {
    if (strategy_awareness >= cfg.tau_strategy) {
        return time_awareness >= cfg.tau_time ? MetaGroup::StrTime : MetaGroup::StrOnly;
    }
    return MetaGroup::Default;
}

std::vector<StudentProfile> sample_cohort(int n, const std::array<double, 3>& group_mix,
                                          std::uint64_t seed, const SimConfig& cfg) {
    if (n < 0) throw ValidationError("cohort size must be >= 0");
    double mix_sum = 0.0;
    for (double p : group_mix) {
        if (!(p >= 0.0)) throw ValidationError("group proportions must be >= 0");
        mix_sum += p;
    }
    if (std::fabs(mix_sum - 1.0) > 1e-9)
        throw ValidationError("group proportions must sum to 1");

    // largest-remainder rounding so counts hit the proportions exactly
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (std::size_t g = 0; g < 3; ++g) {
        const double exact = group_mix[g] * n;
        counts[g] = int(std::floor(exact));
        remainder[g] = exact - std::floor(exact);
        assigned += counts[g];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < 3; ++g)
            if (remainder[g] > remainder[best]) best = g;
        ++counts[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    Rng rng(derive_seed(seed, 0x5EED));
    std::vector<StudentProfile> cohort;
    cohort.reserve(std::size_t(n));
    const double eps = 1e-3;
    for (std::size_t g = 0; g < 3; ++g) {
        for (int k = 0; k < counts[g]; ++k) {
            StudentProfile p;
            const MetaGroup group = MetaGroup(int(g));
            switch (group) {
                case MetaGroup::Default:
                    p.strategy_awareness = rng.uniform(0.05, cfg.tau_strategy - eps);
                    p.time_awareness = rng.uniform(0.0, 1.0);
                    break;
                case MetaGroup::StrOnly:
                    p.strategy_awareness = rng.uniform(cfg.tau_strategy, 1.0);
                    p.time_awareness = rng.uniform(0.05, cfg.tau_time - eps);
                    break;
                case MetaGroup::StrTime:
                    p.strategy_awareness = rng.uniform(cfg.tau_strategy, 1.0);
                    p.time_awareness = rng.uniform(cfg.tau_time, 1.0);
                    break;
            }
            p.competence = rng.uniform(cfg.competence_min, cfg.competence_max);
            // observable channels: awareness shows up in hint and pacing habits,
            // with a qualitative break at the thresholds
            const bool strategy_aware = p.strategy_awareness >= cfg.tau_strategy;
            const bool time_aware = p.time_awareness >= cfg.tau_time;
            p.hint_propensity = strategy_aware ? rng.uniform(0.0, 0.3)
                                               : rng.uniform(0.6, 1.0);
            p.speed = time_aware ? rng.uniform(0.55, 0.85) : rng.uniform(1.2, 1.6);
            p.group = classify_group(p.strategy_awareness, p.time_awareness, cfg);
            cohort.push_back(p);
        }
    }
    rng.shuffle(cohort);
    return cohort;
}

EmpiricalDistribution fit_switch_distribution(const std::vector<double>& switch_times) {
    if (switch_times.empty())
        throw ValidationError("switch-time sample is empty");
    for (double t : switch_times)
        if (!(t >= 0.0) || !std::isfinite(t))
            throw ValidationError("switch times must be finite and >= 0");
    EmpiricalDistribution dist;
    dist.values = switch_times;
    std::sort(dist.values.begin(), dist.values.end());
    return dist;
}

double quantile(const EmpiricalDistribution& dist, double u) {
    if (dist.values.empty()) throw ValidationError("empty switch-time distribution");
    if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("quantile argument outside [0,1]");
    const std::size_t n = dist.values.size();
    if (n == 1) return dist.values.front();
    const double t = u * double(n - 1);
    const std::size_t i = std::min(n - 2, std::size_t(std::floor(t)));
    const double frac = t - double(i);
    return dist.values[i] + frac * (dist.values[i + 1] - dist.values[i]);
}

double sample_switch_time(const EmpiricalDistribution& dist, Rng& rng) {
    return quantile(dist, rng.uniform01());
}

EmpiricalDistribution default_switch_distribution(const SimConfig& cfg,
                                                  std::uint64_t seed) {
    // latencies of early switchers on their first level-2/3 problems
    Rng rng(derive_seed(seed, 0xD157));
    std::vector<double> times;
    times.reserve(200);
    for (int i = 0; i < 200; ++i) {
        const int level = 2 + int(rng.below(2));
        const double nominal = cfg.base_time * (1.0 + cfg.time_level_slope * (level - 1));
        times.push_back(nominal * rng.uniform(0.1, 0.5));
    }
    return fit_switch_distribution(times);
}

TutorEnv::TutorEnv(const StudentProfile& profile, const SimConfig& cfg,
                   const EmpiricalDistribution& switch_dist, std::uint64_t seed)
    : profile_(profile), cfg_(cfg), switch_dist_(switch_dist), rng_(seed) {
    history_.reserve(kLogicTrainingProblems);
}

double TutorEnv::effective_awareness() const {
    return std::min(1.0, profile_.strategy_awareness +
                             cfg_.we_awareness_boost * we_seen_ +
                             cfg_.practice_awareness_gain * bc_solve_count_);
}

bool TutorEnv::autonomous_bc(int level) const {
    if (adopted_) return true;
    switch (profile_.group) {
        case MetaGroup::StrTime: return level >= cfg_.strtime_switch_level;
        case MetaGroup::StrOnly: return level >= cfg_.stronly_switch_level;
        case MetaGroup::Default: return false;
    }
    return false;
}

void TutorEnv::after_bc_experience() {
    if (!adopted_ && effective_awareness() >= cfg_.adoption_threshold)
        adopted_ = true;
}

StepResult TutorEnv::step(InterventionAction action) {
    if (done()) throw ValidationError("stepping a finished trajectory");
    const int level = cursor_ / kProblemsPerLevel + 1;

    bool bc = false;
    double extra_time = 0.0;
    switch (action) {
        case InterventionAction::DirectPresent:
            bc = true;  // the tutor opens the problem in BC
            break;
        case InterventionAction::Nudge: {
            const double delay = sample_switch_time(switch_dist_, rng_);
            const double p_comply =
                clamp01(cfg_.nudge_base + cfg_.nudge_slope * effective_awareness());
            if (rng_.uniform01() < p_comply) {
                bc = true;
                extra_time = delay * cfg_.nudge_comply_time_frac;
            } else {
                extra_time = cfg_.nudge_dismiss_time;
            }
            break;
        }
        case InterventionAction::NoIntervention:
            bc = autonomous_bc(level);
            break;
    }

    const double mastery_before = bc_mastery_;
    const double sa = effective_awareness();

    double accuracy = profile_.competence - cfg_.level_penalty * (level - 1);
    if (bc)
        accuracy += cfg_.bc_level_bonus * (level - 1) *
                    (cfg_.bc_bonus_mastery_floor +
                     (1.0 - cfg_.bc_bonus_mastery_floor) * mastery_before);
    accuracy = clamp01(accuracy + rng_.clipped_normal(cfg_.accuracy_noise_sigma,
                                                      cfg_.noise_clip));

    const double nominal = cfg_.base_time * (1.0 + cfg_.time_level_slope * (level - 1));
    double t = nominal * profile_.speed *
               std::exp(rng_.clipped_normal(cfg_.time_sigma, cfg_.noise_clip));
    if (bc) t *= 1.0 - cfg_.bc_time_discount * mastery_before;
    t += extra_time;
    const double time_norm = clamp01(t / (2.0 * nominal));

    const double expected_hints =
        profile_.hint_propensity * (1.0 - accuracy) * cfg_.hint_rate;
    const int hints =
        std::min(cfg_.max_hints, int(std::floor(expected_hints + rng_.uniform01())));

    const double length = clamp01(
        cfg_.length_base +
        cfg_.length_level_slope * (level - 1) * (1.0 - cfg_.length_bc_discount * (bc ? 1.0 : 0.0)) +
        rng_.clipped_normal(cfg_.length_noise_sigma, cfg_.noise_clip));

    const double score =
        100.0 * clamp01(cfg_.score_w_accuracy * accuracy +
                        cfg_.score_w_time * (1.0 - time_norm) +
                        cfg_.score_w_length * (1.0 - length) +
                        rng_.clipped_normal(cfg_.score_noise_sigma, cfg_.noise_clip));

    history_.push_back({t, time_norm, accuracy, hints, bc, false, score});

    if (bc) {
        ++bc_solve_count_;
        const double discount =
            std::max(0.0, 1.0 - cfg_.mastery_level_discount * (level - 1));
        bc_mastery_ = std::min(
            1.0, bc_mastery_ + cfg_.mastery_gain *
                                   (cfg_.mastery_sa_floor +
                                    (1.0 - cfg_.mastery_sa_floor) * sa) *
                                   discount);
        after_bc_experience();
    }

    ++cursor_;
    return {extract_features(*this), Score(score), done()};
}

StepResult TutorEnv::step_worked_example() {
    if (done()) throw ValidationError("stepping a finished trajectory");
    const int level = cursor_ / kProblemsPerLevel + 1;
    const double nominal = cfg_.base_time * (1.0 + cfg_.time_level_slope * (level - 1));

    // fixed nominal outcome, no draws: the student watches, nothing is graded
    history_.push_back({nominal, cfg_.we_nominal_time_norm, 1.0, 0, true, true,
                        cfg_.we_nominal_score});
    ++we_seen_;
    bc_mastery_ = std::min(1.0, bc_mastery_ + cfg_.we_mastery_gain);
    after_bc_experience();

    ++cursor_;
    return {extract_features(*this), Score(cfg_.we_nominal_score), done()};
}

FeatureVector extract_features(const TutorEnv& env) {
    const auto& history = env.history();
    std::vector<double> f;
    f.reserve(kFeatureDim);

    // 7 signals per training slot, zero until the slot is reached
    for (int slot = 0; slot < kLogicTrainingProblems; ++slot) {
        if (std::size_t(slot) < history.size()) {
            const ProblemOutcome& h = history[std::size_t(slot)];
            const double level = double(slot / kProblemsPerLevel + 1);
            f.insert(f.end(), {1.0, h.time_norm, h.accuracy, double(h.hints) / 5.0,
                               h.switched ? 1.0 : 0.0, h.score / 100.0,
                               level / double(kLogicLevels)});
        } else {
            f.insert(f.end(), {0, 0, 0, 0, 0, 0, 0});
        }
    }

    // 12 running aggregates
    const double n = double(history.size());
    double sum_time = 0, sum_acc = 0, sum_hints = 0, sum_bc = 0, sum_score = 0;
    for (const ProblemOutcome& h : history) {
        sum_time += h.time_norm;
        sum_acc += h.accuracy;
        sum_hints += h.hints;
        sum_bc += h.switched ? 1.0 : 0.0;
        sum_score += h.score;
    }
    double bc_streak = 0;
    for (auto it = history.rbegin(); it != history.rend() && it->switched; ++it)
        ++bc_streak;
    const ProblemOutcome* last = history.empty() ? nullptr : &history.back();
    const double next_level =
        env.done() ? double(kLogicLevels)
                   : double(env.cursor() / kProblemsPerLevel + 1);

    f.push_back(double(env.cursor()) / kLogicTrainingProblems);
    f.push_back(n > 0 ? sum_time / n : 0.0);
    f.push_back(n > 0 ? sum_acc / n : 0.0);
    f.push_back(n > 0 ? sum_hints / (5.0 * n) : 0.0);
    f.push_back(n > 0 ? sum_bc / n : 0.0);
    f.push_back(n > 0 ? sum_score / (100.0 * n) : 0.0);
    f.push_back(last ? last->score / 100.0 : 0.0);
    f.push_back(last ? last->time_norm : 0.0);
    f.push_back(last ? last->accuracy : 0.0);
    f.push_back(next_level / double(kLogicLevels));
    f.push_back(sum_hints / 20.0);
    f.push_back(bc_streak / 20.0);

    return FeatureVector(std::move(f));
}

std::vector<double> logic_pretest(const StudentProfile& profile, const SimConfig& cfg,
                                  Rng& rng) {
    std::vector<double> scores;
    for (int i = 0; i < 2; ++i) {
        const double frac =
            clamp01(cfg.logic_base + cfg.logic_competence_w * profile.competence +
                    rng.clipped_normal(cfg.test_noise_sigma, cfg.noise_clip));
        scores.push_back(100.0 * frac);
    }
    return scores;
}

std::vector<double> logic_posttest(const StudentProfile& profile, double bc_mastery,
                                   const SimConfig& cfg, Rng& rng) {
    std::vector<double> scores;
    for (int i = 0; i < 6; ++i) {
        const double difficulty = i < 2 ? cfg.iso_post_difficulty : cfg.post_difficulty;
        const double frac =
            clamp01(cfg.logic_base + cfg.logic_competence_w * profile.competence +
                    cfg.practice_gain + cfg.transfer_gain * bc_mastery - difficulty +
                    rng.clipped_normal(cfg.test_noise_sigma, cfg.noise_clip));
        scores.push_back(100.0 * frac);
    }
    return scores;
}

ProbabilityOutcome run_probability_phase(const StudentProfile& profile, double bc_skill,
                                         const SimConfig& cfg, Rng& rng) {
    if (!(bc_skill >= 0.0 && bc_skill <= 1.0))
        throw ValidationError("bc_skill must be in [0,1]");

    ProbabilityOutcome out;
    // pre first so its draws cannot depend on bc_skill
    double pre_sum = 0.0;
    for (int i = 0; i < 14; ++i)
        pre_sum += clamp01(cfg.prob_base + cfg.prob_competence_w * profile.competence +
                           rng.clipped_normal(cfg.prob_noise_sigma, cfg.noise_clip));
    out.pre = 100.0 * pre_sum / 14.0;

    double post_sum = 0.0, iso_sum = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double frac = clamp01(
            cfg.prob_post_base + cfg.prob_post_competence_w * profile.competence +
            cfg.prob_post_bc_w * bc_skill +
            rng.clipped_normal(cfg.prob_noise_sigma, cfg.noise_clip));
        post_sum += frac;
        if (i < 14) iso_sum += frac;
    }
    out.post = 100.0 * post_sum / 20.0;
    out.iso_post = 100.0 * iso_sum / 14.0;
    return out;
}

}  // namespace metatutor::sim
