#include <doctest.h>

#include <set>
#include <sstream>

#include "metatutor/domain.hpp"
#include "metatutor/rng.hpp"

using namespace metatutor;

namespace {

int count_phase(const std::vector<Problem>& problems, Phase phase) {
    int n = 0;
    for (const Problem& p : problems) n += p.phase == phase ? 1 : 0;
    return n;
}

// Random but invariant-respecting corpus for round-trip properties.
ReplayCorpus random_corpus(Rng& rng) {
    ReplayCorpus corpus;
    const std::size_t n_students = 1 + rng.below(6);
    const std::size_t dim = 1 + rng.below(8);
    for (std::size_t s = 0; s < n_students; ++s) {
        const int len = 1 + int(rng.below(5));
        for (int pos = 1; pos <= len; ++pos) {
            TransitionRecord r;
            r.student_id = "s" + std::to_string(s);
            r.problem_id = "p" + std::to_string(pos);
            r.position = pos;
            for (std::size_t k = 0; k < dim; ++k)
                r.state.values.push_back(rng.uniform(-5.0, 5.0));
            r.action = InterventionAction(int(rng.below(3)));
            r.reward = Score(rng.uniform(0.0, 100.0));
            r.done = pos == len;
            corpus.records.push_back(std::move(r));
        }
    }
    corpus.build_index();
    return corpus;
}

bool records_equal(const TransitionRecord& a, const TransitionRecord& b) {
    return a.student_id == b.student_id && a.problem_id == b.problem_id &&
           a.position == b.position && a.state == b.state && a.action == b.action &&
           a.reward.value() == b.reward.value() && a.done == b.done;
}

}  // namespace

TEST_CASE("logic curriculum counts and isomorphic links") {
    const auto problems = build_curriculum(Tutor::Logic);
    CHECK(problems.size() == 28);
    CHECK(count_phase(problems, Phase::PreTest) == 2);
    CHECK(count_phase(problems, Phase::Training) == 20);
    CHECK(count_phase(problems, Phase::PostTest) == 6);

    // 5 levels x 4, levels only on training problems
    std::set<int> levels;
    for (const Problem& p : problems) {
        if (p.phase == Phase::Training) {
            CHECK(p.level >= 1);
            CHECK(p.level <= 5);
            levels.insert(p.level);
        } else {
            CHECK(p.level == 0);
        }
    }
    CHECK(levels.size() == 5);

    int iso_count = 0;
    for (const Problem& p : problems) {
        if (p.phase == Phase::PostTest && p.isomorphic_of) {
            ++iso_count;
            CHECK(p.isomorphic_of->substr(0, 9) == "logic-pre");
        }
    }
    CHECK(iso_count == 2);
    // first post-test problem mirrors the first pre-test problem
    const Problem& first_post = problems[22];
    REQUIRE(first_post.phase == Phase::PostTest);
    CHECK(first_post.isomorphic_of.value() == "logic-pre-1");
}

TEST_CASE("probability curriculum counts and isomorphic pairing") {
    const auto problems = build_curriculum(Tutor::Probability);
    CHECK(problems.size() == 46);
    CHECK(count_phase(problems, Phase::PreTest) == 14);
    CHECK(count_phase(problems, Phase::Training) == 12);
    CHECK(count_phase(problems, Phase::PostTest) == 20);

    std::set<std::string> partners;
    for (const Problem& p : problems)
        if (p.phase == Phase::PostTest && p.isomorphic_of) partners.insert(*p.isomorphic_of);
    CHECK(partners.size() == 14);  // every pre-test problem has exactly one partner
}

TEST_CASE("build_curriculum is pure") {
    const auto a = build_curriculum(Tutor::Logic);
    const auto b = build_curriculum(Tutor::Logic);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].level == b[i].level);
        CHECK(a[i].isomorphic_of == b[i].isomorphic_of);
    }
}

TEST_CASE("score range is enforced") {
    CHECK(Score(0.0).value() == 0.0);
    CHECK(Score(100.0).value() == 100.0);
    CHECK_THROWS_AS(Score(-0.001), ValidationError);
    CHECK_THROWS_AS(Score(100.001), ValidationError);
}

TEST_CASE("action tokens round-trip and reject junk") {
    for (int a = 0; a < kActionCount; ++a)
        CHECK(action_from_token(action_token(InterventionAction(a))) ==
              InterventionAction(a));
    CHECK_THROWS_AS(action_from_token("prod"), ValidationError);
}

TEST_CASE("last-in-level positions and slot masks") {
    const std::set<int> last{4, 8, 12, 16, 20};
    for (int pos = 1; pos <= 20; ++pos)
        CHECK(is_last_in_level(pos) == (last.count(pos) > 0));

    CHECK(slot_mask(3, {}) == std::array<bool, 3>{true, true, true});
    CHECK(slot_mask(4, {}) == std::array<bool, 3>{true, false, false});
    CHECK(slot_mask(5, {5, 6}) == std::array<bool, 3>{true, false, false});
}

TEST_CASE("empty stream loads as empty corpus with unset dimension") {
    std::istringstream in("");
    const ReplayCorpus corpus = load_corpus(in);
    CHECK(corpus.records.empty());
    CHECK(corpus.feature_dim == 0);
    CHECK(corpus.n_students() == 0);
}

TEST_CASE("single record round-trips through save and load") {
    ReplayCorpus corpus;
    TransitionRecord r;
    r.student_id = "s0";
    r.problem_id = "logic-train-l1-p1";
    r.position = 1;
    r.state.values.assign(152, 0.25);
    r.state.values[3] = -1.7;
    r.action = InterventionAction::Nudge;
    r.reward = Score(55.5);
    r.done = true;
    corpus.records.push_back(r);
    corpus.build_index();

    std::ostringstream out;
    save_corpus(corpus, out);
    std::istringstream in(out.str());
    const ReplayCorpus loaded = load_corpus(in);
    REQUIRE(loaded.records.size() == 1);
    CHECK(loaded.feature_dim == 152);
    CHECK(records_equal(loaded.records[0], r));
}

TEST_CASE("corpus loader rejects bad lines with their line number") {
    SUBCASE("reward out of range") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p","position":1,"state":[1.0],"action":"none","reward":101,"done":true})");
        CHECK_THROWS_WITH_AS(load_corpus(in),
                             doctest::Contains("reward out of range"), ValidationError);
    }
    SUBCASE("unknown action token") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p","position":1,"state":[1.0],"action":"poke","reward":10,"done":true})");
        CHECK_THROWS_WITH_AS(load_corpus(in), doctest::Contains("unknown action token"),
                             ValidationError);
    }
    SUBCASE("feature length mismatch reports the offending line") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p","position":1,"state":[1.0,2.0],"action":"none","reward":10,"done":true}
{"student_id":"b","problem_id":"p","position":1,"state":[1.0],"action":"none","reward":10,"done":true})");
        CHECK_THROWS_WITH_AS(load_corpus(in), doctest::Contains("line 2"),
                             ValidationError);
    }
    SUBCASE("malformed json reports the line") {
        std::istringstream in("{not json}");
        CHECK_THROWS_WITH_AS(load_corpus(in), doctest::Contains("line 1"),
                             ValidationError);
    }
    SUBCASE("unknown fields are ignored") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p","position":1,"state":[1.0],"action":"none","reward":10,"done":true,"mystery":42})");
        CHECK(load_corpus(in).records.size() == 1);
    }
}

TEST_CASE("corpus index rejects broken trajectories") {
    SUBCASE("done before the end") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p1","position":1,"state":[1.0],"action":"none","reward":10,"done":true}
{"student_id":"a","problem_id":"p2","position":2,"state":[1.0],"action":"none","reward":10,"done":true})");
        CHECK_THROWS_AS(load_corpus(in), ValidationError);
    }
    SUBCASE("missing done on the final record") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p1","position":1,"state":[1.0],"action":"none","reward":10,"done":false})");
        CHECK_THROWS_AS(load_corpus(in), ValidationError);
    }
    SUBCASE("duplicate positions") {
        std::istringstream in(
            R"({"student_id":"a","problem_id":"p1","position":1,"state":[1.0],"action":"none","reward":10,"done":false}
{"student_id":"a","problem_id":"p1b","position":1,"state":[1.0],"action":"none","reward":10,"done":true})");
        CHECK_THROWS_AS(load_corpus(in), ValidationError);
    }
}

TEST_CASE("save/load round-trip is identity over random corpora") {
    Rng rng(20240811);
    for (int trial = 0; trial < 30; ++trial) {
        const ReplayCorpus corpus = random_corpus(rng);
        std::ostringstream out;
        save_corpus(corpus, out);
        std::istringstream in(out.str());
        const ReplayCorpus loaded = load_corpus(in);
        REQUIRE(loaded.records.size() == corpus.records.size());
        for (std::size_t i = 0; i < corpus.records.size(); ++i)
            CHECK(records_equal(loaded.records[i], corpus.records[i]));

        // a second save must be byte-identical
        std::ostringstream out2;
        save_corpus(loaded, out2);
        CHECK(out.str() == out2.str());
    }
}

TEST_CASE("successor links follow positions within a student") {
    std::istringstream in(
        R"({"student_id":"a","problem_id":"p2","position":2,"state":[1.0],"action":"none","reward":10,"done":true}
{"student_id":"a","problem_id":"p1","position":1,"state":[2.0],"action":"none","reward":10,"done":false})");
    const ReplayCorpus corpus = load_corpus(in);
    // record 1 is position 1; its successor is record 0 (position 2)
    REQUIRE(corpus.successor_of(1).has_value());
    CHECK(*corpus.successor_of(1) == 0);
    CHECK_FALSE(corpus.successor_of(0).has_value());
}

TEST_CASE("split_corpus partitions by student") {
    Rng rng(7);
    ReplayCorpus corpus;
    for (int s = 0; s < 10; ++s) {
        for (int pos = 1; pos <= 3; ++pos) {
            TransitionRecord r;
            r.student_id = "s" + std::to_string(s);
            r.problem_id = "p";
            r.position = pos;
            r.state.values = {rng.uniform01()};
            r.reward = Score(50.0);
            r.done = pos == 3;
            corpus.records.push_back(std::move(r));
        }
    }
    corpus.build_index();

    const auto [train, test] = split_corpus(corpus, 0.8, 42);
    CHECK(train.n_students() == 8);
    CHECK(test.n_students() == 2);
    CHECK(train.records.size() + test.records.size() == corpus.records.size());

    // disjoint student sets covering everything
    for (const auto& [id, idxs] : train.student_index)
        CHECK(test.student_index.count(id) == 0);
    std::size_t union_size = train.n_students() + test.n_students();
    CHECK(union_size == corpus.n_students());

    // deterministic given the seed
    const auto [train2, test2] = split_corpus(corpus, 0.8, 42);
    REQUIRE(train2.records.size() == train.records.size());
    for (std::size_t i = 0; i < train.records.size(); ++i)
        CHECK(records_equal(train2.records[i], train.records[i]));

    SUBCASE("half split of two students") {
        ReplayCorpus two;
        two.records = {corpus.records[0], corpus.records[1], corpus.records[2],
                       corpus.records[3], corpus.records[4], corpus.records[5]};
        two.build_index();
        const auto [a, b] = split_corpus(two, 0.5, 1);
        CHECK(a.n_students() == 1);
        CHECK(b.n_students() == 1);
    }
    SUBCASE("fraction bounds") {
        CHECK_THROWS_AS(split_corpus(corpus, 0.0, 1), ValidationError);
        CHECK_THROWS_AS(split_corpus(corpus, 1.0, 1), ValidationError);
    }
}
