#pragma once
// Shared vocabulary for the tutoring experiments: curriculum structure,
// intervention actions, and the logged replay corpus all other modules
// consume.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metatutor/errors.hpp"

namespace metatutor {

enum class Phase { PreTest, Training, PostTest };
enum class Tutor { Logic, Probability };
enum class Strategy { ForwardChaining, BackwardChaining };
enum class Presentation { Default, WorkedExample };

// Wire codes are stable: 0 = none so a zero-initialized policy defaults to
// non-intrusion.
enum class InterventionAction : int { NoIntervention = 0, Nudge = 1, DirectPresent = 2 };
constexpr int kActionCount = 3;

enum class MetaGroup : int { Default = 0, StrOnly = 1, StrTime = 2 };
constexpr int kGroupCount = 3;

const char* action_token(InterventionAction a);
InterventionAction action_from_token(const std::string& token);
const char* group_token(MetaGroup g);
MetaGroup group_from_token(const std::string& token);

/// Problem score in [0,100]; construction outside the range is rejected.
class Score {
public:
    Score() = default;
    explicit Score(double v);
    double value() const { return value_; }

private:
    double value_ = 0.0;
};

struct FeatureVector {
    std::vector<double> values;

    FeatureVector() = default;
    explicit FeatureVector(std::vector<double> v) : values(std::move(v)) {}
    std::size_t size() const { return values.size(); }
    bool operator==(const FeatureVector&) const = default;
};

struct Problem {
    std::string id;
    Tutor tutor = Tutor::Logic;
    Phase phase = Phase::Training;
    int level = 0;  // 1..5 for logic training, 0 otherwise
    int index_in_level = 1;
    Presentation presentation = Presentation::Default;
    std::optional<std::string> isomorphic_of;
};

// Logic training layout: 5 levels of 4 problems, positions 1..20.
constexpr int kLogicTrainingProblems = 20;
constexpr int kLogicLevels = 5;
constexpr int kProblemsPerLevel = 4;

int level_of_position(int position);      // position is 1-based
bool is_last_in_level(int position);

// Allowed actions for a training slot. Worked-example slots and the last
// problem of each level admit NoIntervention only.
std::array<bool, 3> slot_mask(int position, const std::vector<int>& we_positions);

// Fixed problem order, identical for every student.
std::vector<Problem> build_curriculum(Tutor tutor);

struct TransitionRecord {
    std::string student_id;
    std::string problem_id;
    int position = 0;  // 1-based index in the training sequence
    FeatureVector state;
    InterventionAction action = InterventionAction::NoIntervention;
    Score reward;
    bool done = false;  // true on the final training problem of the trajectory
};

// Logged (state, action, reward) records grouped into per-student
// trajectories. Record order is preserved verbatim through save/load.
struct ReplayCorpus {
    std::vector<TransitionRecord> records;
    std::size_t feature_dim = 0;  // 0 until the first record is seen
    std::map<std::string, std::vector<std::size_t>> student_index;

    std::size_t n_students() const { return student_index.size(); }

    // Rebuilds student_index and successor links; validates that positions are
    // unique per student and the done flag marks exactly the trajectory end.
    void build_index();

    // Index of the next record of the same student, or nullopt on done.
    std::optional<std::size_t> successor_of(std::size_t record_idx) const;

private:
    std::vector<std::ptrdiff_t> successor_;
};

// Line-delimited records; field names student_id, problem_id, position,
// state, action, reward, done; unknown fields ignored.
ReplayCorpus load_corpus(std::istream& in);
void save_corpus(const ReplayCorpus& corpus, std::ostream& out);

ReplayCorpus load_corpus_file(const std::string& path);
void save_corpus_file(const ReplayCorpus& corpus, const std::string& path);

// Splits by student so no trajectory straddles both sides.
// |train students| = round(fraction * total students).
std::pair<ReplayCorpus, ReplayCorpus> split_corpus(const ReplayCorpus& corpus,
                                                   double fraction,
                                                   std::uint64_t seed);

}  // namespace metatutor
