#pragma once
// Experiment protocols: a static intervention plan routed by the classifier
// versus per-problem policy decisions, plus synthetic corpus generation and
// the report rendering behind the CLI.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metatutor/config.hpp"
#include "metatutor/deepq.hpp"
#include "metatutor/domain.hpp"
#include "metatutor/forest.hpp"
#include "metatutor/sim.hpp"
#include "metatutor/stats.hpp"

namespace metatutor::harness {

enum class Protocol { Exp1Static, Exp2Adaptive };
enum class Condition { Experimental, Control };

// Fixed intervention layout for the static protocol; worked-example slots are
// also reused by the adaptive protocol. Positions must avoid the last problem
// of each level, which stays clean for evaluation.
struct InterventionPlan {
    std::set<int> we_positions;      // default size 2
    std::set<int> direct_positions;  // default size 6

    void validate() const;
    std::vector<int> we_vector() const { return {we_positions.begin(), we_positions.end()}; }
};

// Defaults: worked examples at {5, 6}, direct presentation at
// {7, 9, 10, 13, 14, 17}; overridable through plan_we_positions /
// plan_direct_positions.
InterventionPlan build_static_plan(const KeyValueConfig& cfg);

struct CohortSpec {
    int n_students = 110;
    std::array<double, 3> group_mix{0.4, 0.4, 0.2};
};

struct ExperimentConfig {
    Protocol protocol = Protocol::Exp2Adaptive;
    CohortSpec cohort;
    sim::SimConfig sim;
    InterventionPlan plan;
    sim::EmpiricalDistribution switch_dist;  // empty -> default simulated sample
    std::uint64_t seed = 0;
    int workers = 1;

    static ExperimentConfig from_config(const KeyValueConfig& cfg);
};

struct CellStats {
    double mean = 0.0;
    double sd = 0.0;
    int n = 0;
};

// One (group, condition) row mirroring the per-tutor Pre / IsoPost / IsoNLG /
// Post / NLG layout.
struct ResultsRow {
    MetaGroup group = MetaGroup::Default;
    Condition condition = Condition::Control;
    bool merged_conditions = false;  // StrTime row of the adaptive protocol
    std::string label;
    int n = 0;
    CellStats logic_pre, logic_iso_post, logic_iso_nlg, logic_post, logic_nlg;
    CellStats prob_pre, prob_iso_post, prob_iso_nlg, prob_post, prob_nlg;
    std::array<long, 3> action_counts{0, 0, 0};  // decision slots, experimental only
    bool has_action_counts = false;
};

struct ResultsTable {
    Protocol protocol = Protocol::Exp2Adaptive;
    int cohort_n = 0;
    std::uint64_t seed = 0;
    std::vector<ResultsRow> rows;
};

struct SlotLog {
    int position = 0;
    bool worked_example = false;
    InterventionAction action = InterventionAction::NoIntervention;
};

struct StudentRun {
    sim::StudentProfile profile;
    MetaGroup predicted = MetaGroup::Default;
    Condition condition = Condition::Control;
    double logic_pre = 0, logic_iso_post = 0, logic_post = 0;
    double prob_pre = 0, prob_iso_post = 0, prob_post = 0;
    double bc_skill = 0;
    std::vector<SlotLog> slots;  // 20 training slots
};

struct ExperimentResult {
    ResultsTable table;
    std::vector<StudentRun> runs;
};

// Simulates a logged cohort under randomized interventions (rates
// configurable), one record per training problem, 20 per student.
ReplayCorpus generate_corpus(int n_students, std::uint64_t seed,
                             const sim::SimConfig& sim_cfg,
                             double nudge_rate = 0.3, double present_rate = 0.2,
                             int workers = 1);

// Labeled incoming-competence samples (2 pre-test scores + first-problem
// time/accuracy/hints/switch) for classifier training.
std::vector<forest::LabeledSample> generate_rfc_samples(int n_students,
                                                        std::uint64_t seed,
                                                        const sim::SimConfig& sim_cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const forest::Forest& forest,
                                const std::optional<deepq::Policy>& policy);

struct ActionDistributionReport {
    std::vector<std::string> row_labels;
    std::vector<std::array<long, 3>> counts;  // none / nudge / present
    std::optional<stats::ChiSquareResult> chi2;
    std::string note;  // set when the test is skipped or a column was dropped
};

ActionDistributionReport action_distribution_report(const ResultsTable& table);

enum class ReportFormat { Text, Csv };

std::string render_report(const ResultsTable& table, ReportFormat format);

}  // namespace metatutor::harness
