#pragma once
// Random forest classifier for early metacognitive-group prediction, built
// on Gini-gain decision trees over bootstrap resamples. Training is
// deterministic for a given seed: per-tree seeds derive from (seed, tree
// index) and bootstrap indices are drawn then sorted, so growing order and
// sample order do not matter.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metatutor/domain.hpp"

namespace metatutor::forest {

struct LabeledSample {
    FeatureVector features;
    MetaGroup label = MetaGroup::Default;
};

struct ForestConfig {
    int n_trees = 100;
    int min_leaf = 1;
    int features_per_split = 0;  // 0 means round(sqrt(n_features))
    bool bootstrap = true;

    void validate() const;
    int resolve_features_per_split(std::size_t n_features) const;
};

struct TreeNode {
    int feature = -1;  // < 0 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<std::uint32_t, 3> counts{0, 0, 0};  // leaf class counts

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root
    std::vector<std::uint32_t> in_bag;  // bootstrap multiplicity per training sample
};

struct Forest {
    std::vector<Tree> trees;
    std::size_t n_features = 0;
    ForestConfig config;
    std::uint64_t seed = 0;
    bool has_masks = false;  // in_bag data present (not persisted to disk)
};

struct PredictResult {
    MetaGroup label = MetaGroup::Default;
    std::array<double, 3> probabilities{0, 0, 0};
};

struct Split {
    int feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

// Gini impurity of a 3-class count vector; in [0, 2/3], 0 iff pure.
double gini_impurity(const std::array<std::uint32_t, 3>& counts);

// Exhaustive midpoint-threshold search over the candidate features.
// Ties break toward the lowest feature index, then the lowest threshold;
// nullopt when no split has positive gain or min_leaf cannot be honored.
std::optional<Split> best_split(const std::vector<LabeledSample>& data,
                                const std::vector<std::size_t>& sample_indices,
                                const std::vector<int>& candidate_features,
                                int min_leaf);

Forest train_forest(const std::vector<LabeledSample>& data, const ForestConfig& config,
                    std::uint64_t seed);

// Probabilities are the average of per-tree leaf class frequencies; the label
// is the argmax with lowest-code tie-break.
PredictResult predict(const Forest& forest, const FeatureVector& features);

// Accuracy over samples predicted only by trees that never saw them.
double oob_accuracy(const Forest& forest, const std::vector<LabeledSample>& data);

void save_forest(const Forest& forest, std::ostream& out);
Forest load_forest(std::istream& in);
void save_forest_file(const Forest& forest, const std::string& path);
Forest load_forest_file(const std::string& path);

std::vector<LabeledSample> load_labeled_samples(std::istream& in);
void save_labeled_samples(const std::vector<LabeledSample>& samples, std::ostream& out);
std::vector<LabeledSample> load_labeled_samples_file(const std::string& path);
void save_labeled_samples_file(const std::vector<LabeledSample>& samples,
                               const std::string& path);

}  // namespace metatutor::forest
