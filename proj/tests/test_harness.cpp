#include <doctest.h>

#include <set>
#include <sstream>

#include "metatutor/harness.hpp"
#include "metatutor/textio.hpp"

using namespace metatutor;
using namespace metatutor::harness;

namespace {

forest::Forest quick_forest(std::uint64_t seed) {
    const sim::SimConfig sim_cfg;
    const auto samples = generate_rfc_samples(400, seed, sim_cfg);
    forest::ForestConfig cfg;
    cfg.n_trees = 60;
    return forest::train_forest(samples, cfg, seed);
}

// A fixed hand-built policy that nudges everywhere the mask allows; good
// enough to exercise the adaptive protocol without a training run.
deepq::Policy nudge_everything_policy(std::size_t dim) {
    deepq::Policy policy;
    policy.net = deepq::Mlp::zeros({dim, 3});
    policy.net.biases[0] = {0.0, 1.0, 0.5};
    policy.mean.assign(dim, 0.0);
    policy.sd.assign(dim, 1.0);
    return policy;
}

}  // namespace

TEST_CASE("static plan defaults validate and reject bad layouts") {
    const InterventionPlan plan = build_static_plan({});
    CHECK(plan.we_positions == std::set<int>{5, 6});
    CHECK(plan.direct_positions == std::set<int>{7, 9, 10, 13, 14, 17});

    KeyValueConfig bad_last;
    bad_last.set("plan_direct_positions", "7, 8");
    CHECK_THROWS_AS(build_static_plan(bad_last), ValidationError);  // 8 ends level 2

    KeyValueConfig out_of_range;
    out_of_range.set("plan_we_positions", "21");
    CHECK_THROWS_AS(build_static_plan(out_of_range), ValidationError);

    KeyValueConfig overlap;
    overlap.set("plan_we_positions", "5");
    overlap.set("plan_direct_positions", "5");
    CHECK_THROWS_AS(build_static_plan(overlap), ValidationError);

    KeyValueConfig empty;
    empty.set("plan_we_positions", "");
    empty.set("plan_direct_positions", "");
    const InterventionPlan control = build_static_plan(empty);
    CHECK(control.we_positions.empty());
    CHECK(control.direct_positions.empty());
}

TEST_CASE("generated corpora have one record per training problem") {
    const sim::SimConfig sim_cfg;
    const ReplayCorpus one = generate_corpus(1, 7, sim_cfg);
    CHECK(one.records.size() == 20);
    CHECK(one.n_students() == 1);
    for (std::size_t i = 0; i < one.records.size(); ++i)
        CHECK(one.records[i].done == (i == 19));

    const ReplayCorpus five = generate_corpus(5, 7, sim_cfg);
    CHECK(five.records.size() == 100);
    int dones = 0;
    for (const TransitionRecord& r : five.records) dones += r.done ? 1 : 0;
    CHECK(dones == 5);
    CHECK(five.feature_dim == sim::kFeatureDim);
}

TEST_CASE("corpus arithmetic at the historical-cohort scale") {
    const ReplayCorpus corpus = generate_corpus(867, 1, sim::SimConfig{}, 0.3, 0.2, 2);
    CHECK(corpus.records.size() == 17340);
    CHECK(corpus.n_students() == 867);
    int dones = 0;
    for (const TransitionRecord& r : corpus.records) dones += r.done ? 1 : 0;
    CHECK(dones == 867);
}

TEST_CASE("corpus generation is deterministic and worker-count independent") {
    const sim::SimConfig sim_cfg;
    const ReplayCorpus a = generate_corpus(12, 99, sim_cfg, 0.3, 0.2, 1);
    const ReplayCorpus b = generate_corpus(12, 99, sim_cfg, 0.3, 0.2, 3);
    std::ostringstream sa, sb;
    save_corpus(a, sa);
    save_corpus(b, sb);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("experiment runs are deterministic across worker counts") {
    const forest::Forest forest = quick_forest(5);
    ExperimentConfig cfg;
    cfg.protocol = Protocol::Exp1Static;
    cfg.cohort.n_students = 40;
    cfg.plan = build_static_plan({});
    cfg.seed = 31;

    cfg.workers = 1;
    const ExperimentResult a = run_experiment(cfg, forest, std::nullopt);
    cfg.workers = 2;
    const ExperimentResult b = run_experiment(cfg, forest, std::nullopt);
    CHECK(render_report(a.table, ReportFormat::Csv) ==
          render_report(b.table, ReportFormat::Csv));
}

TEST_CASE("static protocol honors routing and plan discipline") {
    const forest::Forest forest = quick_forest(6);
    ExperimentConfig cfg;
    cfg.protocol = Protocol::Exp1Static;
    cfg.cohort.n_students = 60;
    cfg.plan = build_static_plan({});
    cfg.seed = 17;
    const ExperimentResult result = run_experiment(cfg, forest, std::nullopt);

    for (const StudentRun& run : result.runs) {
        const bool exempt = run.predicted == MetaGroup::StrTime;
        for (const SlotLog& slot : run.slots) {
            if (exempt || run.condition == Condition::Control) {
                CHECK_FALSE(slot.worked_example);
                CHECK(slot.action == InterventionAction::NoIntervention);
            } else if (slot.worked_example) {
                CHECK(cfg.plan.we_positions.count(slot.position) == 1);
            } else if (slot.action == InterventionAction::DirectPresent) {
                CHECK(cfg.plan.direct_positions.count(slot.position) == 1);
            }
        }
    }

    // experimental rows exist and carry the static action distribution
    bool found_counts = false;
    for (const ResultsRow& row : result.table.rows) {
        if (!row.has_action_counts) continue;
        found_counts = true;
        CHECK(row.action_counts[1] == 0);  // the static plan never nudges
        CHECK(row.action_counts[2] == 6 * row.n);
    }
    CHECK(found_counts);
}

TEST_CASE("adaptive protocol masks worked examples and level ends") {
    const forest::Forest forest = quick_forest(7);
    ExperimentConfig cfg;
    cfg.protocol = Protocol::Exp2Adaptive;
    cfg.cohort.n_students = 40;
    cfg.plan = build_static_plan({});
    cfg.seed = 23;
    const auto policy = nudge_everything_policy(sim::kFeatureDim);
    const ExperimentResult result = run_experiment(cfg, forest, policy);

    const std::set<int> last{4, 8, 12, 16, 20};
    for (const StudentRun& run : result.runs) {
        REQUIRE(run.slots.size() == 20);
        for (const SlotLog& slot : run.slots) {
            if (slot.worked_example)
                CHECK(cfg.plan.we_positions.count(slot.position) == 1);
            if (last.count(slot.position))
                CHECK(slot.action == InterventionAction::NoIntervention);
        }
        if (run.condition == Condition::Experimental) {
            // the hand-built policy nudges on every decision slot
            for (const SlotLog& slot : run.slots) {
                if (slot.worked_example || last.count(slot.position)) continue;
                CHECK(slot.action == InterventionAction::Nudge);
            }
        }
    }
}

TEST_CASE("adaptive protocol requires a policy") {
    const forest::Forest forest = quick_forest(8);
    ExperimentConfig cfg;
    cfg.protocol = Protocol::Exp2Adaptive;
    cfg.cohort.n_students = 20;
    cfg.seed = 3;
    CHECK_THROWS_AS(run_experiment(cfg, forest, std::nullopt), ValidationError);
    cfg.cohort.n_students = 2;
    CHECK_THROWS_AS(
        run_experiment(cfg, forest, nudge_everything_policy(sim::kFeatureDim)),
        ValidationError);
}

TEST_CASE("all-StrTime cohorts produce only the unsplit row") {
    // rows key on predictions, so use a classifier that always says StrTime
    std::vector<forest::LabeledSample> all_strtime;
    for (const auto& s : generate_rfc_samples(60, 9, sim::SimConfig{}))
        all_strtime.push_back({s.features, MetaGroup::StrTime});
    forest::ForestConfig fcfg;
    fcfg.n_trees = 5;
    const forest::Forest forest = forest::train_forest(all_strtime, fcfg, 9);

    ExperimentConfig cfg;
    cfg.protocol = Protocol::Exp1Static;
    cfg.cohort.n_students = 30;
    cfg.cohort.group_mix = {0.0, 0.0, 1.0};
    cfg.plan = build_static_plan({});
    cfg.seed = 4;
    const ExperimentResult result = run_experiment(cfg, forest, std::nullopt);
    for (const ResultsRow& row : result.table.rows) {
        CHECK_FALSE(row.has_action_counts);
        CHECK(row.condition == Condition::Control);
    }
}

TEST_CASE("action distribution report reproduces the two-by-three comparison") {
    ResultsTable table;
    ResultsRow a;
    a.label = "Default-DRL";
    a.has_action_counts = true;
    a.action_counts = {127, 94, 65};  // none / nudge / present
    ResultsRow b;
    b.label = "StrOnly-DRL";
    b.has_action_counts = true;
    b.action_counts = {156, 82, 74};
    table.rows = {a, b};

    const ActionDistributionReport report = action_distribution_report(table);
    REQUIRE(report.chi2.has_value());
    CHECK(report.chi2->df == 2);
    CHECK(report.chi2->chi2 == doctest::Approx(3.25).epsilon(0.02));
    CHECK(report.chi2->p == doctest::Approx(0.197).epsilon(0.03));
}

TEST_CASE("action distribution report degenerate cases") {
    ResultsTable table;
    ResultsRow only;
    only.label = "Default-RFC";
    only.has_action_counts = true;
    only.action_counts = {70, 0, 60};
    table.rows = {only};
    const ActionDistributionReport single = action_distribution_report(table);
    CHECK_FALSE(single.chi2.has_value());
    CHECK(!single.note.empty());

    ResultsRow b = only;
    b.label = "StrOnly-RFC";
    b.action_counts = {140, 0, 120};  // proportional to the first row
    table.rows = {only, b};
    const ActionDistributionReport prop = action_distribution_report(table);
    REQUIRE(prop.chi2.has_value());
    CHECK(prop.chi2->chi2 == doctest::Approx(0.0));

    table.rows.clear();
    CHECK_THROWS_AS(action_distribution_report(table), ValidationError);
}

TEST_CASE("report rendering") {
    SUBCASE("empty table renders headers only") {
        ResultsTable empty;
        const std::string csv = render_report(empty, ReportFormat::Csv);
        CHECK(csv.find("tutor,group,n,") == 0);
        CHECK(csv.find('\n') == csv.size() - 1);  // a single header line
    }
    SUBCASE("half-up rounding to one decimal") {
        CHECK(format_fixed(76.49, 1) == "76.5");
        CHECK(format_fixed(76.44, 1) == "76.4");
        CHECK(format_fixed(0.455, 2) == "0.46");
        CHECK(round_to(76.49, 1) == doctest::Approx(76.5));
    }
    SUBCASE("csv rows parse back to the rendered values") {
        ResultsTable table;
        ResultsRow row;
        row.label = "Default-DRL";
        row.group = MetaGroup::Default;
        row.condition = Condition::Experimental;
        row.n = 22;
        row.logic_pre = {55.61, 20.96, 22};
        row.logic_iso_post = {91.9, 5.0, 22};
        row.logic_iso_nlg = {0.459, 0.12, 22};
        row.logic_post = {87.68, 5.04, 22};
        row.logic_nlg = {0.449, 0.121, 22};
        row.prob_pre = {76.9, 15.0, 22};
        row.prob_iso_post = {94.5, 5.0, 22};
        row.prob_iso_nlg = {0.36, 0.11, 22};
        row.prob_post = {94.1, 6.0, 22};
        row.prob_nlg = {0.34, 0.13, 22};
        row.has_action_counts = true;
        row.action_counts = {127, 94, 65};
        table.rows = {row};

        const std::string csv = render_report(table, ReportFormat::Csv);
        std::istringstream lines(csv);
        std::string header, logic_line;
        std::getline(lines, header);
        std::getline(lines, logic_line);
        const auto cells = split(logic_line, ',');
        REQUIRE(cells.size() == 16);
        CHECK(cells[0] == "logic");
        CHECK(cells[1] == "Default-DRL");
        CHECK(parse_double(cells[3], "pre mean") == doctest::Approx(55.6));
        CHECK(parse_double(cells[4], "pre sd") == doctest::Approx(21.0));
        CHECK(parse_double(cells[11], "nlg mean") == doctest::Approx(0.45));
        CHECK(cells[13] == "127");
    }
}
