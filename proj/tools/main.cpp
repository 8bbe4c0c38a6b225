// Command-line surface: corpus generation, switch-distribution fitting,
// policy and classifier training, experiment runs, and standalone statistics.
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metatutor/config.hpp"
#include "metatutor/deepq.hpp"
#include "metatutor/domain.hpp"
#include "metatutor/forest.hpp"
#include "metatutor/harness.hpp"
#include "metatutor/sim.hpp"
#include "metatutor/stats.hpp"
#include "metatutor/textio.hpp"

namespace mt = metatutor;

namespace {

mt::KeyValueConfig load_optional_config(const std::string& path) {
    if (path.empty()) return {};
    return mt::KeyValueConfig::parse_file(path);
}

std::vector<double> read_number_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw mt::IoError("cannot open file: " + path);
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = mt::trim(line);
        if (t.empty()) continue;
        out.push_back(mt::parse_double(t, path + ":" + std::to_string(lineno)));
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw mt::IoError("cannot write file: " + path);
    out << text;
    if (!out) throw mt::IoError("write failed: " + path);
}

mt::stats::Summary parse_summary(const std::string& spec) {
    const std::vector<std::string> parts = mt::split(spec, ',');
    if (parts.size() != 3)
        throw mt::ValidationError("summary must be 'mean,sd,n': '" + spec + "'");
    mt::stats::Summary s;
    s.mean = mt::parse_double(parts[0], "summary mean");
    s.sd = mt::parse_double(parts[1], "summary sd");
    const long long n = mt::parse_int(parts[2], "summary n");
    if (n < 2) throw mt::ValidationError("summary n must be >= 2");
    s.n = std::size_t(n);
    return s;
}

struct StatsArgs {
    std::string test;
    std::vector<std::string> inputs;
    std::vector<std::string> summaries;
    double pre = -1, post = -1, max_score = 100.0;
};

int run_stats(const StatsArgs& args) {
    std::ostringstream out;
    out.precision(10);
    if (args.test == "chi2") {
        if (args.inputs.size() != 1)
            throw mt::ValidationError("chi2 needs exactly one table file");
        std::ifstream in(args.inputs[0]);
        if (!in) throw mt::IoError("cannot open file: " + args.inputs[0]);
        std::vector<std::vector<double>> table;
        std::string line;
        while (std::getline(in, line)) {
            std::string cleaned = line;
            for (char& c : cleaned)
                if (c == ',') c = ' ';
            const auto toks = mt::split_ws(cleaned);
            if (toks.empty()) continue;
            std::vector<double> row;
            for (const std::string& t : toks)
                row.push_back(mt::parse_double(t, "chi2 table entry"));
            table.push_back(std::move(row));
        }
        const mt::stats::ChiSquareResult r = mt::stats::chi_square_independence(table);
        out << "test = chi2\n";
        out << "chi2 = " << r.chi2 << "\n";
        out << "df = " << r.df << "\n";
        out << "p = " << r.p << "\n";
    } else if (args.test == "ttest") {
        std::vector<mt::stats::Summary> sides;
        for (const std::string& path : args.inputs)
            sides.push_back(mt::stats::describe({read_number_file(path), path}));
        for (const std::string& s : args.summaries) sides.push_back(parse_summary(s));
        if (sides.size() != 2)
            throw mt::ValidationError("ttest needs exactly two groups "
                                      "(files and/or --summary)");
        const mt::stats::TTestResult r = mt::stats::t_test_ind(sides[0], sides[1]);
        out << "test = ttest\n";
        out << "t = " << r.t << "\n";
        out << "df = " << r.df << "\n";
        out << "p = " << r.p << "\n";
        out << "cohens_d = " << r.d << "\n";
        if (r.infinite_t) out << "note = zero pooled variance, t capped at infinity\n";
    } else if (args.test == "anova") {
        if (args.inputs.size() < 2)
            throw mt::ValidationError("anova needs at least two sample files");
        std::vector<mt::stats::SampleSet> groups;
        for (const std::string& path : args.inputs)
            groups.push_back({read_number_file(path), path});
        const mt::stats::AnovaResult r = mt::stats::one_way_anova(groups);
        out << "test = anova\n";
        out << "F = " << r.F << "\n";
        out << "df_between = " << r.df_between << "\n";
        out << "df_within = " << r.df_within << "\n";
        out << "p = " << r.p << "\n";
    } else if (args.test == "nlg") {
        if (args.pre < 0 || args.post < 0)
            throw mt::ValidationError("nlg needs --pre and --post");
        out << "test = nlg\n";
        out << "nlg = " << mt::stats::nlg(args.pre, args.post, args.max_score) << "\n";
    } else {
        throw mt::ValidationError("unknown test '" + args.test +
                                  "' (ttest|anova|chi2|nlg)");
    }
    std::cout << out.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metacognitive-intervention policy workbench"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus",
                                   "Simulate a logged tutoring corpus");
    int gen_students = 867;
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_config;
    int gen_workers = 1;
    gen->add_option("--students", gen_students, "Number of students")->required();
    gen->add_option("--seed", gen_seed, "Random seed")->required();
    gen->add_option("--out", gen_out, "Output corpus file")->required();
    gen->add_option("--config", gen_config, "Simulator config file");
    gen->add_option("--workers", gen_workers, "Worker threads");

    // gen-rfc-data
    auto* genrfc = app.add_subcommand(
        "gen-rfc-data", "Simulate labeled incoming-competence samples");
    int rfc_students = 600;
    std::uint64_t rfc_seed = 0;
    std::string rfc_out, rfc_config;
    genrfc->add_option("--students", rfc_students, "Number of students")->required();
    genrfc->add_option("--seed", rfc_seed, "Random seed")->required();
    genrfc->add_option("--out", rfc_out, "Output labeled-sample file")->required();
    genrfc->add_option("--config", rfc_config, "Simulator config file");

    // fit-switch-dist
    auto* fit = app.add_subcommand("fit-switch-dist",
                                   "Fit the empirical switch-time distribution");
    std::string fit_in, fit_out;
    fit->add_option("--in", fit_in, "Switch times, one per line")->required();
    fit->add_option("--out", fit_out, "Sorted sample output")->required();

    // train-policy
    auto* tp = app.add_subcommand("train-policy",
                                  "Train the intervention policy on a corpus");
    std::string tp_corpus, tp_config, tp_out, tp_curve;
    tp->add_option("--corpus", tp_corpus, "Replay corpus file")->required();
    tp->add_option("--config", tp_config, "Training config file");
    tp->add_option("--out", tp_out, "Output policy file")->required();
    tp->add_option("--loss-curve", tp_curve, "Optional per-epoch loss CSV");

    // train-rfc
    auto* tf = app.add_subcommand("train-rfc",
                                  "Train the group classifier on labeled samples");
    std::string tf_corpus, tf_config, tf_out;
    tf->add_option("--corpus", tf_corpus, "Labeled-sample file")->required();
    tf->add_option("--config", tf_config, "Forest config file");
    tf->add_option("--out", tf_out, "Output forest file")->required();

    // run-exp
    auto* re = app.add_subcommand("run-exp", "Run an experiment protocol");
    std::string re_protocol, re_cohort, re_forest, re_policy, re_out;
    std::string re_format = "text";
    std::uint64_t re_seed = 0;
    int re_workers = 1;
    re->add_option("--protocol", re_protocol, "exp1 | exp2")->required();
    re->add_option("--cohort", re_cohort, "Cohort/simulator config file")->required();
    re->add_option("--forest", re_forest, "Trained forest file")->required();
    re->add_option("--policy", re_policy, "Trained policy file (exp2)");
    re->add_option("--seed", re_seed, "Random seed")->required();
    re->add_option("--out", re_out, "Report output file")->required();
    re->add_option("--format", re_format, "text | csv");
    re->add_option("--workers", re_workers, "Worker threads");

    // stats
    auto* st = app.add_subcommand("stats", "Standalone statistical tests");
    StatsArgs stats_args;
    st->add_option("--test", stats_args.test, "ttest | anova | chi2 | nlg")->required();
    st->add_option("--in", stats_args.inputs, "Input file(s)");
    st->add_option("--summary", stats_args.summaries,
                   "Group summary 'mean,sd,n' (ttest)");
    st->add_option("--pre", stats_args.pre, "Pre-test score (nlg)");
    st->add_option("--post", stats_args.post, "Post-test score (nlg)");
    st->add_option("--max", stats_args.max_score, "Maximum score (nlg), default 100");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            const mt::KeyValueConfig kv = load_optional_config(gen_config);
            const mt::sim::SimConfig sim_cfg = mt::sim::SimConfig::from_config(kv);
            const double nudge_rate = kv.get_double("corpus_nudge_rate", 0.3);
            const double present_rate = kv.get_double("corpus_present_rate", 0.2);
            const mt::ReplayCorpus corpus = mt::harness::generate_corpus(
                gen_students, gen_seed, sim_cfg, nudge_rate, present_rate, gen_workers);
            mt::save_corpus_file(corpus, gen_out);
            std::cout << "wrote " << corpus.records.size() << " records for "
                      << corpus.n_students() << " students to " << gen_out << "\n";
        } else if (genrfc->parsed()) {
            const mt::KeyValueConfig kv = load_optional_config(rfc_config);
            const auto samples = mt::harness::generate_rfc_samples(
                rfc_students, rfc_seed, mt::sim::SimConfig::from_config(kv));
            mt::forest::save_labeled_samples_file(samples, rfc_out);
            std::cout << "wrote " << samples.size() << " labeled samples to " << rfc_out
                      << "\n";
        } else if (fit->parsed()) {
            const auto dist = mt::sim::fit_switch_distribution(read_number_file(fit_in));
            std::ostringstream out;
            for (double v : dist.values) out << mt::format_full(v) << '\n';
            write_text_file(fit_out, out.str());
            std::cout << "fitted " << dist.values.size() << " switch times, support ["
                      << dist.values.front() << ", " << dist.values.back() << "]\n";
        } else if (tp->parsed()) {
            const mt::KeyValueConfig kv = load_optional_config(tp_config);
            const mt::deepq::TrainConfig cfg = mt::deepq::TrainConfig::from_config(kv);
            const mt::ReplayCorpus corpus = mt::load_corpus_file(tp_corpus);
            const mt::deepq::TrainResult result = mt::deepq::train(corpus, cfg);
            mt::deepq::save_policy_file(result.policy, tp_out);
            if (!tp_curve.empty()) {
                std::ostringstream out;
                out << "epoch,train_mse,test_mse\n";
                for (std::size_t e = 0; e < result.train_mse.size(); ++e) {
                    out << e << ',' << mt::format_full(result.train_mse[e]) << ',';
                    if (e < result.test_mse.size())
                        out << mt::format_full(result.test_mse[e]);
                    out << '\n';
                }
                write_text_file(tp_curve, out.str());
            }
            std::cout << "trained " << cfg.epochs << " epochs on "
                      << corpus.records.size() << " records";
            if (!result.train_mse.empty())
                std::cout << "; final train MSE " << result.train_mse.back();
            if (!result.test_mse.empty())
                std::cout << ", best held-out MSE at epoch " << result.best_epoch;
            std::cout << "; wrote " << tp_out << "\n";
        } else if (tf->parsed()) {
            const mt::KeyValueConfig kv = load_optional_config(tf_config);
            mt::forest::ForestConfig cfg;
            cfg.n_trees = int(kv.get_int("n_trees", cfg.n_trees));
            cfg.min_leaf = int(kv.get_int("min_leaf", cfg.min_leaf));
            cfg.features_per_split =
                int(kv.get_int("features_per_split", cfg.features_per_split));
            cfg.bootstrap = kv.get_bool("bootstrap", cfg.bootstrap);
            const std::uint64_t seed = std::uint64_t(kv.get_int("seed", 0));
            const auto samples = mt::forest::load_labeled_samples_file(tf_corpus);
            const mt::forest::Forest forest = mt::forest::train_forest(samples, cfg, seed);
            mt::forest::save_forest_file(forest, tf_out);
            std::cout << "trained " << forest.trees.size() << " trees on "
                      << samples.size() << " samples (OOB accuracy "
                      << mt::format_fixed(mt::forest::oob_accuracy(forest, samples), 3)
                      << "); wrote " << tf_out << "\n";
        } else if (re->parsed()) {
            const mt::KeyValueConfig kv = mt::KeyValueConfig::parse_file(re_cohort);
            mt::harness::ExperimentConfig cfg = mt::harness::ExperimentConfig::from_config(kv);
            if (re_protocol == "exp1") cfg.protocol = mt::harness::Protocol::Exp1Static;
            else if (re_protocol == "exp2") cfg.protocol = mt::harness::Protocol::Exp2Adaptive;
            else throw mt::ValidationError("unknown protocol '" + re_protocol + "'");
            cfg.seed = re_seed;
            cfg.workers = re_workers;
            const std::string dist_file = kv.get_string("switch_time_file", "");
            if (!dist_file.empty())
                cfg.switch_dist =
                    mt::sim::fit_switch_distribution(read_number_file(dist_file));
            const mt::forest::Forest forest = mt::forest::load_forest_file(re_forest);
            std::optional<mt::deepq::Policy> policy;
            if (!re_policy.empty())
                policy = mt::deepq::load_policy_file(re_policy);
            const mt::harness::ExperimentResult result =
                mt::harness::run_experiment(cfg, forest, policy);
            mt::harness::ReportFormat format;
            if (re_format == "text") format = mt::harness::ReportFormat::Text;
            else if (re_format == "csv") format = mt::harness::ReportFormat::Csv;
            else throw mt::ValidationError("unknown format '" + re_format + "'");
            write_text_file(re_out, mt::harness::render_report(result.table, format));
            std::cout << "ran " << re_protocol << " on " << cfg.cohort.n_students
                      << " students; wrote " << re_out << "\n";
        } else if (st->parsed()) {
            return run_stats(stats_args);
        }
    } catch (const mt::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const mt::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
