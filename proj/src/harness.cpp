#include "metatutor/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "metatutor/textio.hpp"

namespace metatutor::harness {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Runs fn(i) for i in [0, n) across `workers` threads. Each index writes only
// its own output slot, so the result is identical for any worker count.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t n_threads = std::min<std::size_t>(std::size_t(workers), n);
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
        threads.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += n_threads) fn(i);
        });
    }
    for (std::thread& th : threads) th.join();
}

std::vector<Problem> logic_training_problems() {
    std::vector<Problem> out;
    for (const Problem& p : build_curriculum(Tutor::Logic))
        if (p.phase == Phase::Training) out.push_back(p);
    return out;
}

}  // namespace

void InterventionPlan::validate() const {
    auto check = [](const std::set<int>& positions, const char* what) {
        for (int p : positions) {
            if (p < 1 || p > kLogicTrainingProblems)
                throw ValidationError(std::string(what) + " position " +
                                      std::to_string(p) + " outside [1,20]");
            if (is_last_in_level(p))
                throw ValidationError(std::string(what) + " position " +
                                      std::to_string(p) +
                                      " is the last problem of its level");
        }
    };
    check(we_positions, "worked-example");
    check(direct_positions, "direct-presentation");
    for (int p : direct_positions)
        if (we_positions.count(p))
            throw ValidationError("plan position " + std::to_string(p) +
                                  " is both worked example and direct presentation");
}

InterventionPlan build_static_plan(const KeyValueConfig& cfg) {
    InterventionPlan plan;
    const std::vector<int> we = cfg.get_int_list("plan_we_positions", {5, 6});
    const std::vector<int> direct =
        cfg.get_int_list("plan_direct_positions", {7, 9, 10, 13, 14, 17});
    plan.we_positions.insert(we.begin(), we.end());
    plan.direct_positions.insert(direct.begin(), direct.end());
    plan.validate();
    return plan;
}

ExperimentConfig ExperimentConfig::from_config(const KeyValueConfig& cfg) {
    ExperimentConfig c;
    c.cohort.n_students = int(cfg.get_int("n_students", c.cohort.n_students));
    const std::vector<double> mix =
        cfg.get_double_list("group_mix", {0.4, 0.4, 0.2});
    if (mix.size() != 3)
        throw ValidationError("group_mix needs exactly 3 proportions");
    std::copy(mix.begin(), mix.end(), c.cohort.group_mix.begin());
    c.sim = sim::SimConfig::from_config(cfg);
    c.plan = build_static_plan(cfg);
    return c;
}

ReplayCorpus generate_corpus(int n_students, std::uint64_t seed,
                             const sim::SimConfig& sim_cfg, double nudge_rate,
                             double present_rate, int workers) {
    if (n_students < 1) throw ValidationError("corpus needs at least 1 student");
    if (nudge_rate < 0 || present_rate < 0 || nudge_rate + present_rate > 1.0)
        throw ValidationError("intervention rates must be >= 0 and sum to <= 1");

    const std::vector<Problem> problems = logic_training_problems();
    const sim::EmpiricalDistribution switch_dist =
        sim::default_switch_distribution(sim_cfg, derive_seed(seed, 0xD));
    const std::array<double, 3> mix{0.4, 0.4, 0.2};
    const std::vector<sim::StudentProfile> cohort =
        sim::sample_cohort(n_students, mix, derive_seed(seed, 0xC), sim_cfg);

    std::vector<std::vector<TransitionRecord>> per_student;
    per_student.resize(std::size_t(n_students));
    parallel_for(std::size_t(n_students), workers, [&](std::size_t i) {
        const std::uint64_t student_seed = derive_seed(seed, 1000 + i);
        sim::TutorEnv env(cohort[i], sim_cfg, switch_dist,
                          derive_seed(student_seed, 2));
        Rng policy_rng(derive_seed(student_seed, 5));

        char id[24];
        std::snprintf(id, sizeof id, "s%05zu", i);
        std::vector<TransitionRecord> records;
        records.reserve(kLogicTrainingProblems);
        for (int pos = 1; pos <= kLogicTrainingProblems; ++pos) {
            TransitionRecord r;
            r.student_id = id;
            r.problem_id = problems[std::size_t(pos - 1)].id;
            r.position = pos;
            r.state = sim::extract_features(env);

            const double u = policy_rng.uniform01();
            InterventionAction action = InterventionAction::NoIntervention;
            if (u < nudge_rate) action = InterventionAction::Nudge;
            else if (u < nudge_rate + present_rate)
                action = InterventionAction::DirectPresent;
            r.action = action;

            const sim::StepResult sr = env.step(action);
            r.reward = sr.reward;
            r.done = sr.done;
            records.push_back(std::move(r));
        }
        per_student[i] = std::move(records);
    });

    ReplayCorpus corpus;
    corpus.records.reserve(std::size_t(n_students) * kLogicTrainingProblems);
    for (auto& records : per_student)
        for (auto& r : records) corpus.records.push_back(std::move(r));
    corpus.build_index();
    return corpus;
}

namespace {

FeatureVector rfc_features(const std::array<double, 2>& pre_scores,
                           const sim::ProblemOutcome& first_problem) {
    return FeatureVector({pre_scores[0], pre_scores[1], first_problem.time_norm,
                          first_problem.accuracy, double(first_problem.hints),
                          first_problem.switched ? 1.0 : 0.0});
}

}  // namespace

std::vector<forest::LabeledSample> generate_rfc_samples(int n_students,
                                                        std::uint64_t seed,
                                                        const sim::SimConfig& sim_cfg) {
    if (n_students < 1) throw ValidationError("need at least 1 student");
    const std::array<double, 3> mix{0.4, 0.4, 0.2};
    const std::vector<sim::StudentProfile> cohort =
        sim::sample_cohort(n_students, mix, derive_seed(seed, 0xC), sim_cfg);
    const sim::EmpiricalDistribution switch_dist =
        sim::default_switch_distribution(sim_cfg, derive_seed(seed, 0xD));

    std::vector<forest::LabeledSample> samples;
    samples.reserve(std::size_t(n_students));
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const std::uint64_t student_seed = derive_seed(seed, 1000 + i);
        Rng pre_rng(derive_seed(student_seed, 1));
        const std::vector<double> pre =
            sim::logic_pretest(cohort[i], sim_cfg, pre_rng);
        sim::TutorEnv env(cohort[i], sim_cfg, switch_dist,
                          derive_seed(student_seed, 2));
        env.step(InterventionAction::NoIntervention);
        samples.push_back({rfc_features({pre[0], pre[1]}, env.history().front()),
                           cohort[i].group});
    }
    return samples;
}

namespace {

struct RowAccumulator {
    std::vector<double> logic_pre, logic_iso_post, logic_iso_nlg, logic_post, logic_nlg;
    std::vector<double> prob_pre, prob_iso_post, prob_iso_nlg, prob_post, prob_nlg;
    std::array<long, 3> action_counts{0, 0, 0};
};

CellStats cell_from(const std::vector<double>& values) {
    CellStats c;
    c.n = int(values.size());
    if (values.empty()) return c;
    double sum = 0;
    for (double v : values) sum += v;
    c.mean = sum / double(values.size());
    if (values.size() >= 2) {
        double ss = 0;
        for (double v : values) ss += (v - c.mean) * (v - c.mean);
        c.sd = std::sqrt(ss / double(values.size() - 1));
    }
    return c;
}

std::string row_label(Protocol protocol, MetaGroup group, Condition condition,
                      bool merged) {
    std::string g = group == MetaGroup::Default ? "Default"
                    : group == MetaGroup::StrOnly ? "StrOnly"
                                                  : "StrTime";
    if (merged) return g;
    if (condition == Condition::Control) return g + "-Ctrl";
    return g + (protocol == Protocol::Exp1Static ? "-RFC" : "-DRL");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const forest::Forest& forest,
                                const std::optional<deepq::Policy>& policy) {
    if (cfg.protocol == Protocol::Exp2Adaptive && !policy)
        throw ValidationError("the adaptive protocol requires a trained policy");
    if (cfg.cohort.n_students < 4)
        throw ValidationError("cohort too small for a condition split");
    cfg.plan.validate();

    const std::vector<sim::StudentProfile> cohort = sim::sample_cohort(
        cfg.cohort.n_students, cfg.cohort.group_mix, derive_seed(cfg.seed, 0xC),
        cfg.sim);
    const std::size_t n = cohort.size();
    const sim::EmpiricalDistribution switch_dist =
        cfg.switch_dist.values.empty()
            ? sim::default_switch_distribution(cfg.sim, derive_seed(cfg.seed, 0xD))
            : cfg.switch_dist;
    const std::vector<int> we_vec = cfg.plan.we_vector();

    // pass 1: incoming assessment (pre-test + one unintervened problem) feeds
    // the group prediction; the full run later replays the same streams
    std::vector<std::array<double, 2>> pre_scores(n);
    std::vector<MetaGroup> predicted(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
        const std::uint64_t student_seed = derive_seed(cfg.seed, 1000 + i);
        Rng pre_rng(derive_seed(student_seed, 1));
        const std::vector<double> pre = sim::logic_pretest(cohort[i], cfg.sim, pre_rng);
        pre_scores[i] = {pre[0], pre[1]};
        sim::TutorEnv probe(cohort[i], cfg.sim, switch_dist,
                            derive_seed(student_seed, 2));
        probe.step(InterventionAction::NoIntervention);
        predicted[i] =
            forest::predict(forest, rfc_features(pre_scores[i], probe.history().front()))
                .label;
    });

    // pass 2: seeded stratified assignment; ceil(k/2) of each predicted group
    // goes experimental. Predicted StrTime is exempt under the static protocol.
    std::vector<Condition> condition(n, Condition::Control);
    Rng assign_rng(derive_seed(cfg.seed, 0xA551));
    for (int g = 0; g < kGroupCount; ++g) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (int(predicted[i]) == g) members.push_back(i);
        if (cfg.protocol == Protocol::Exp1Static && MetaGroup(g) == MetaGroup::StrTime)
            continue;  // stays on the unmodified tutor
        assign_rng.shuffle(members);
        const std::size_t n_exp = (members.size() + 1) / 2;
        for (std::size_t k = 0; k < n_exp; ++k)
            condition[members[k]] = Condition::Experimental;
    }

    // pass 3: full trajectories
    std::vector<StudentRun> runs(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
        const std::uint64_t student_seed = derive_seed(cfg.seed, 1000 + i);
        StudentRun run;
        run.profile = cohort[i];
        run.predicted = predicted[i];
        run.condition = condition[i];

        run.logic_pre = (pre_scores[i][0] + pre_scores[i][1]) / 2.0;

        const bool intervened =
            condition[i] == Condition::Experimental &&
            !(cfg.protocol == Protocol::Exp1Static &&
              predicted[i] == MetaGroup::StrTime);

        sim::TutorEnv env(cohort[i], cfg.sim, switch_dist,
                          derive_seed(student_seed, 2));
        run.slots.reserve(kLogicTrainingProblems);
        for (int pos = 1; pos <= kLogicTrainingProblems; ++pos) {
            SlotLog slot;
            slot.position = pos;
            if (intervened && cfg.plan.we_positions.count(pos)) {
                slot.worked_example = true;
                env.step_worked_example();
            } else if (!intervened) {
                env.step(InterventionAction::NoIntervention);
            } else if (cfg.protocol == Protocol::Exp1Static) {
                slot.action = cfg.plan.direct_positions.count(pos)
                                  ? InterventionAction::DirectPresent
                                  : InterventionAction::NoIntervention;
                env.step(slot.action);
            } else {
                const std::array<bool, 3> mask = slot_mask(pos, we_vec);
                slot.action =
                    deepq::select_action(*policy, sim::extract_features(env), mask);
                env.step(slot.action);
            }
            run.slots.push_back(slot);
        }

        Rng post_rng(derive_seed(student_seed, 3));
        const std::vector<double> post =
            sim::logic_posttest(cohort[i], env.bc_mastery(), cfg.sim, post_rng);
        run.logic_iso_post = (post[0] + post[1]) / 2.0;
        double post_sum = 0;
        for (double s : post) post_sum += s;
        run.logic_post = post_sum / double(post.size());

        int bc_solved = 0, solved = 0;
        for (const sim::ProblemOutcome& h : env.history()) {
            if (h.worked_example) continue;
            ++solved;
            if (h.switched) ++bc_solved;
        }
        const double bc_frac = solved > 0 ? double(bc_solved) / double(solved) : 0.0;
        run.bc_skill = clamp01(cfg.sim.bc_skill_base +
                               cfg.sim.bc_skill_frac_w * bc_frac +
                               cfg.sim.bc_skill_we_w * double(env.we_seen()) / 2.0 +
                               cfg.sim.bc_skill_awareness_w * env.effective_awareness());

        Rng prob_rng(derive_seed(student_seed, 4));
        const sim::ProbabilityOutcome prob =
            sim::run_probability_phase(cohort[i], run.bc_skill, cfg.sim, prob_rng);
        run.prob_pre = prob.pre;
        run.prob_post = prob.post;
        run.prob_iso_post = prob.iso_post;

        runs[i] = std::move(run);
    });

    // aggregate rows; under the adaptive protocol both StrTime conditions merge
    struct RowKey {
        MetaGroup group;
        Condition condition;
        bool merged;
    };
    std::vector<RowKey> row_order;
    row_order.push_back({MetaGroup::Default, Condition::Experimental, false});
    row_order.push_back({MetaGroup::StrOnly, Condition::Experimental, false});
    row_order.push_back({MetaGroup::Default, Condition::Control, false});
    row_order.push_back({MetaGroup::StrOnly, Condition::Control, false});
    row_order.push_back({MetaGroup::StrTime, Condition::Control, true});

    ResultsTable table;
    table.protocol = cfg.protocol;
    table.cohort_n = cfg.cohort.n_students;
    table.seed = cfg.seed;

    for (const RowKey& key : row_order) {
        RowAccumulator acc;
        int row_n = 0;
        for (const StudentRun& run : runs) {
            if (run.predicted != key.group) continue;
            if (!key.merged && run.condition != key.condition) continue;
            ++row_n;
            acc.logic_pre.push_back(run.logic_pre);
            acc.logic_iso_post.push_back(run.logic_iso_post);
            acc.logic_post.push_back(run.logic_post);
            acc.logic_iso_nlg.push_back(
                stats::nlg(run.logic_pre / 100.0, run.logic_iso_post / 100.0, 1.0));
            acc.logic_nlg.push_back(
                stats::nlg(run.logic_pre / 100.0, run.logic_post / 100.0, 1.0));
            acc.prob_pre.push_back(run.prob_pre);
            acc.prob_iso_post.push_back(run.prob_iso_post);
            acc.prob_post.push_back(run.prob_post);
            acc.prob_iso_nlg.push_back(
                stats::nlg(run.prob_pre / 100.0, run.prob_iso_post / 100.0, 1.0));
            acc.prob_nlg.push_back(
                stats::nlg(run.prob_pre / 100.0, run.prob_post / 100.0, 1.0));
            if (key.condition == Condition::Experimental && !key.merged &&
                run.condition == Condition::Experimental) {
                for (const SlotLog& slot : run.slots) {
                    if (slot.worked_example || is_last_in_level(slot.position))
                        continue;  // not a decision slot
                    ++acc.action_counts[std::size_t(int(slot.action))];
                }
            }
        }
        if (row_n == 0) continue;

        ResultsRow row;
        row.group = key.group;
        row.condition = key.condition;
        row.merged_conditions = key.merged;
        row.label = row_label(cfg.protocol, key.group, key.condition, key.merged);
        row.n = row_n;
        row.logic_pre = cell_from(acc.logic_pre);
        row.logic_iso_post = cell_from(acc.logic_iso_post);
        row.logic_iso_nlg = cell_from(acc.logic_iso_nlg);
        row.logic_post = cell_from(acc.logic_post);
        row.logic_nlg = cell_from(acc.logic_nlg);
        row.prob_pre = cell_from(acc.prob_pre);
        row.prob_iso_post = cell_from(acc.prob_iso_post);
        row.prob_iso_nlg = cell_from(acc.prob_iso_nlg);
        row.prob_post = cell_from(acc.prob_post);
        row.prob_nlg = cell_from(acc.prob_nlg);
        if (key.condition == Condition::Experimental && !key.merged) {
            row.action_counts = acc.action_counts;
            row.has_action_counts = true;
        }
        table.rows.push_back(std::move(row));
    }

    return {std::move(table), std::move(runs)};
}

ActionDistributionReport action_distribution_report(const ResultsTable& table) {
    ActionDistributionReport report;
    for (const ResultsRow& row : table.rows) {
        if (!row.has_action_counts) continue;
        report.row_labels.push_back(row.label);
        report.counts.push_back(row.action_counts);
    }
    if (report.counts.empty())
        throw ValidationError("no experimental intervention counts to report");
    if (report.counts.size() < 2) {
        report.note = "chi-square skipped: only one experimental group";
        return report;
    }

    // drop all-zero action columns (the static plan never nudges)
    std::vector<std::size_t> live_cols;
    for (std::size_t c = 0; c < 3; ++c) {
        long sum = 0;
        for (const auto& row : report.counts) sum += row[c];
        if (sum > 0) live_cols.push_back(c);
    }
    if (live_cols.size() < 2) {
        report.note = "chi-square skipped: fewer than two action columns in use";
        return report;
    }
    if (live_cols.size() < 3) report.note = "all-zero action column dropped";

    std::vector<std::vector<double>> counts;
    for (const auto& row : report.counts) {
        std::vector<double> r;
        for (std::size_t c : live_cols) r.push_back(double(row[c]));
        counts.push_back(std::move(r));
    }
    report.chi2 = stats::chi_square_independence(counts);
    return report;
}

namespace {

std::string cell_text(const CellStats& c, int decimals) {
    return format_fixed(c.mean, decimals) + " (" + format_fixed(c.sd, decimals) + ")";
}

void render_tutor_section(std::ostringstream& out, const ResultsTable& table,
                          bool logic) {
    out << "== " << (logic ? "Logic" : "Probability") << " Tutor ==\n";
    out << "Group           N    Pre           IsoPost       IsoNLG        Post"
           "          NLG\n";
    for (const ResultsRow& row : table.rows) {
        const CellStats& pre = logic ? row.logic_pre : row.prob_pre;
        const CellStats& iso_post = logic ? row.logic_iso_post : row.prob_iso_post;
        const CellStats& iso_nlg = logic ? row.logic_iso_nlg : row.prob_iso_nlg;
        const CellStats& post = logic ? row.logic_post : row.prob_post;
        const CellStats& nlg = logic ? row.logic_nlg : row.prob_nlg;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%-15s %-4d %-13s %-13s %-13s %-13s %s\n",
                      row.label.c_str(), row.n, cell_text(pre, 1).c_str(),
                      cell_text(iso_post, 1).c_str(), cell_text(iso_nlg, 2).c_str(),
                      cell_text(post, 1).c_str(), cell_text(nlg, 2).c_str());
        out << buf;
    }
}

}  // namespace

std::string render_report(const ResultsTable& table, ReportFormat format) {
    std::ostringstream out;
    if (format == ReportFormat::Csv) {
        out << "tutor,group,n,pre_mean,pre_sd,iso_post_mean,iso_post_sd,"
               "iso_nlg_mean,iso_nlg_sd,post_mean,post_sd,nlg_mean,nlg_sd,"
               "n_none,n_nudge,n_present\n";
        for (const char* tutor : {"logic", "probability"}) {
            const bool logic = std::string(tutor) == "logic";
            for (const ResultsRow& row : table.rows) {
                const CellStats& pre = logic ? row.logic_pre : row.prob_pre;
                const CellStats& iso_post =
                    logic ? row.logic_iso_post : row.prob_iso_post;
                const CellStats& iso_nlg = logic ? row.logic_iso_nlg : row.prob_iso_nlg;
                const CellStats& post = logic ? row.logic_post : row.prob_post;
                const CellStats& nlg = logic ? row.logic_nlg : row.prob_nlg;
                out << tutor << ',' << row.label << ',' << row.n << ','
                    << format_fixed(pre.mean, 1) << ',' << format_fixed(pre.sd, 1) << ','
                    << format_fixed(iso_post.mean, 1) << ','
                    << format_fixed(iso_post.sd, 1) << ','
                    << format_fixed(iso_nlg.mean, 2) << ','
                    << format_fixed(iso_nlg.sd, 2) << ',' << format_fixed(post.mean, 1)
                    << ',' << format_fixed(post.sd, 1) << ','
                    << format_fixed(nlg.mean, 2) << ',' << format_fixed(nlg.sd, 2);
                if (row.has_action_counts)
                    out << ',' << row.action_counts[0] << ',' << row.action_counts[1]
                        << ',' << row.action_counts[2];
                else
                    out << ",,,";
                out << '\n';
            }
        }
        return out.str();
    }

    out << "Protocol: "
        << (table.protocol == Protocol::Exp1Static ? "exp1 (static plan)"
                                                   : "exp2 (adaptive policy)")
        << "   cohort n=" << table.cohort_n << "   seed=" << table.seed << "\n\n";
    render_tutor_section(out, table, true);
    out << '\n';
    render_tutor_section(out, table, false);

    bool any_counts = false;
    for (const ResultsRow& row : table.rows) any_counts |= row.has_action_counts;
    if (any_counts) {
        out << "\n== Interventions (decision slots) ==\n";
        out << "Group           None     Nudge    Present\n";
        long total = 0;
        for (const ResultsRow& row : table.rows) {
            if (!row.has_action_counts) continue;
            char buf[128];
            std::snprintf(buf, sizeof buf, "%-15s %-8ld %-8ld %ld\n", row.label.c_str(),
                          row.action_counts[0], row.action_counts[1],
                          row.action_counts[2]);
            out << buf;
            total += row.action_counts[0] + row.action_counts[1] + row.action_counts[2];
        }
        const ActionDistributionReport dist = action_distribution_report(table);
        if (dist.chi2) {
            out << "chi2(" << dist.chi2->df << ", N=" << total
                << ") = " << format_fixed(dist.chi2->chi2, 2)
                << ", p = " << format_fixed(dist.chi2->p, 3) << '\n';
        }
        if (!dist.note.empty()) out << dist.note << '\n';
    }
    return out.str();
}

}  // namespace metatutor::harness
