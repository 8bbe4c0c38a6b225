#include "metatutor/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "metatutor/rng.hpp"
#include "metatutor/textio.hpp"

namespace metatutor {

using nlohmann::json;

const char* action_token(InterventionAction a) {
    switch (a) {
        case InterventionAction::NoIntervention: return "none";
        case InterventionAction::Nudge: return "nudge";
        case InterventionAction::DirectPresent: return "present";
    }
    throw ValidationError("invalid action code");
}

InterventionAction action_from_token(const std::string& token) {
    if (token == "none") return InterventionAction::NoIntervention;
    if (token == "nudge") return InterventionAction::Nudge;
    if (token == "present") return InterventionAction::DirectPresent;
    throw ValidationError("unknown action token '" + token + "'");
}

const char* group_token(MetaGroup g) {
    switch (g) {
        case MetaGroup::Default: return "default";
        case MetaGroup::StrOnly: return "str_only";
        case MetaGroup::StrTime: return "str_time";
    }
    throw ValidationError("invalid group code");
}

MetaGroup group_from_token(const std::string& token) {
    if (token == "default") return MetaGroup::Default;
    if (token == "str_only") return MetaGroup::StrOnly;
    if (token == "str_time") return MetaGroup::StrTime;
    throw ValidationError("unknown group token '" + token + "'");
}

Score::Score(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 100.0))  // also rejects NaN
        throw ValidationError("score out of range [0,100]: " + std::to_string(v));
}

int level_of_position(int position) {
    return (position - 1) / kProblemsPerLevel + 1;
}

bool is_last_in_level(int position) {
    return position >= 1 && position <= kLogicTrainingProblems &&
           position % kProblemsPerLevel == 0;
}

std::array<bool, 3> slot_mask(int position, const std::vector<int>& we_positions) {
    const bool we = std::find(we_positions.begin(), we_positions.end(), position) !=
                    we_positions.end();
    if (we || is_last_in_level(position)) return {true, false, false};
    return {true, true, true};
}

std::vector<Problem> build_curriculum(Tutor tutor) {
    std::vector<Problem> out;
    if (tutor == Tutor::Logic) {
        out.reserve(28);
        for (int i = 1; i <= 2; ++i)
            out.push_back({"logic-pre-" + std::to_string(i), Tutor::Logic, Phase::PreTest,
                           0, i, Presentation::Default, std::nullopt});
        for (int level = 1; level <= kLogicLevels; ++level)
            for (int i = 1; i <= kProblemsPerLevel; ++i)
                out.push_back({"logic-train-l" + std::to_string(level) + "-p" +
                                   std::to_string(i),
                               Tutor::Logic, Phase::Training, level, i,
                               Presentation::Default, std::nullopt});
        for (int i = 1; i <= 6; ++i) {
            // the first two post-test problems mirror the pre-test pair
            std::optional<std::string> iso;
            if (i <= 2) iso = "logic-pre-" + std::to_string(i);
            out.push_back({"logic-post-" + std::to_string(i), Tutor::Logic,
                           Phase::PostTest, 0, i, Presentation::Default, iso});
        }
    } else {
        out.reserve(46);
        for (int i = 1; i <= 14; ++i)
            out.push_back({"prob-pre-" + std::to_string(i), Tutor::Probability,
                           Phase::PreTest, 0, i, Presentation::Default, std::nullopt});
        for (int i = 1; i <= 12; ++i)
            out.push_back({"prob-train-" + std::to_string(i), Tutor::Probability,
                           Phase::Training, 0, i, Presentation::Default, std::nullopt});
        for (int i = 1; i <= 20; ++i) {
            std::optional<std::string> iso;
            if (i <= 14) iso = "prob-pre-" + std::to_string(i);
            out.push_back({"prob-post-" + std::to_string(i), Tutor::Probability,
                           Phase::PostTest, 0, i, Presentation::Default, iso});
        }
    }
    return out;
}

void ReplayCorpus::build_index() {
    student_index.clear();
    successor_.assign(records.size(), -1);
    feature_dim = records.empty() ? 0 : records.front().state.size();

    for (std::size_t i = 0; i < records.size(); ++i) {
        const TransitionRecord& r = records[i];
        if (r.state.size() != feature_dim)
            throw ValidationError("record " + std::to_string(i) +
                                  ": feature length mismatch (got " +
                                  std::to_string(r.state.size()) + ", expected " +
                                  std::to_string(feature_dim) + ")");
        student_index[r.student_id].push_back(i);
    }

    for (auto& [student, idxs] : student_index) {
        std::sort(idxs.begin(), idxs.end(), [this](std::size_t a, std::size_t b) {
            return records[a].position < records[b].position;
        });
        for (std::size_t k = 0; k + 1 < idxs.size(); ++k) {
            if (records[idxs[k]].position == records[idxs[k + 1]].position)
                throw ValidationError("student '" + student + "': duplicate position " +
                                      std::to_string(records[idxs[k]].position));
            if (records[idxs[k]].done)
                throw ValidationError("student '" + student +
                                      "': done flag set before end of trajectory");
            successor_[idxs[k]] = static_cast<std::ptrdiff_t>(idxs[k + 1]);
        }
        if (!records[idxs.back()].done)
            throw ValidationError("student '" + student +
                                  "': final record is not marked done");
    }
}

std::optional<std::size_t> ReplayCorpus::successor_of(std::size_t record_idx) const {
    if (record_idx >= successor_.size())
        throw ValidationError("record index out of range (index not built?)");
    const std::ptrdiff_t s = successor_[record_idx];
    if (s < 0) return std::nullopt;
    return static_cast<std::size_t>(s);
}

ReplayCorpus load_corpus(std::istream& in) {
    ReplayCorpus corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno);

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where + ": malformed record: " + e.what());
        }
        if (!j.is_object()) throw ValidationError(where + ": record is not an object");

        TransitionRecord r;
        try {
            r.student_id = j.at("student_id").get<std::string>();
            r.problem_id = j.at("problem_id").get<std::string>();
            r.position = j.at("position").get<int>();
            r.done = j.at("done").get<bool>();
            const json& state = j.at("state");
            if (!state.is_array()) throw ValidationError(where + ": state is not an array");
            r.state.values.reserve(state.size());
            for (const json& v : state) r.state.values.push_back(v.get<double>());
            r.action = action_from_token(j.at("action").get<std::string>());
            const double reward = j.at("reward").get<double>();
            if (!(reward >= 0.0 && reward <= 100.0))
                throw ValidationError(where + ": reward out of range [0,100]: " +
                                      std::to_string(reward));
            r.reward = Score(reward);
        } catch (const json::exception& e) {
            throw ValidationError(where + ": malformed record: " + e.what());
        } catch (const ValidationError& e) {
            // re-wrap so every message carries the line number
            std::string msg = e.what();
            if (msg.rfind("line ", 0) == 0) throw;
            throw ValidationError(where + ": " + msg);
        }
        if (r.position < 1)
            throw ValidationError(where + ": position must be >= 1");
        for (double v : r.state.values)
            if (!std::isfinite(v))
                throw ValidationError(where + ": non-finite state entry");
        if (corpus.feature_dim == 0 && corpus.records.empty()) {
            corpus.feature_dim = r.state.size();
        } else if (r.state.size() != corpus.feature_dim) {
            throw ValidationError(where + ": feature length mismatch (got " +
                                  std::to_string(r.state.size()) + ", expected " +
                                  std::to_string(corpus.feature_dim) + ")");
        }
        corpus.records.push_back(std::move(r));
    }
    corpus.build_index();
    return corpus;
}

void save_corpus(const ReplayCorpus& corpus, std::ostream& out) {
    for (const TransitionRecord& r : corpus.records) {
        json j;
        j["student_id"] = r.student_id;
        j["problem_id"] = r.problem_id;
        j["position"] = r.position;
        j["state"] = r.state.values;
        j["action"] = action_token(r.action);
        j["reward"] = r.reward.value();
        j["done"] = r.done;
        out << j.dump() << '\n';
    }
}

ReplayCorpus load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    return load_corpus(in);
}

void save_corpus_file(const ReplayCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    save_corpus(corpus, out);
    if (!out) throw IoError("write failed: " + path);
}

std::pair<ReplayCorpus, ReplayCorpus> split_corpus(const ReplayCorpus& corpus,
                                                   double fraction,
                                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ValidationError("split fraction must be in (0,1), got " +
                              std::to_string(fraction));

    std::vector<std::string> students;
    students.reserve(corpus.student_index.size());
    for (const auto& [id, idxs] : corpus.student_index) students.push_back(id);

    Rng rng(seed);
    rng.shuffle(students);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(fraction * double(students.size())));

    std::map<std::string, bool> in_train;
    for (std::size_t i = 0; i < students.size(); ++i) in_train[students[i]] = i < n_train;

    ReplayCorpus train, test;
    for (const TransitionRecord& r : corpus.records)
        (in_train.at(r.student_id) ? train : test).records.push_back(r);
    train.build_index();
    test.build_index();
    return {std::move(train), std::move(test)};
}

}  // namespace metatutor
