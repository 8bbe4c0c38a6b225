#include "metatutor/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "metatutor/rng.hpp"
#include "metatutor/textio.hpp"

namespace metatutor::forest {

using nlohmann::json;

void ForestConfig::validate() const {
    if (n_trees < 1) throw ValidationError("forest: n_trees must be >= 1");
    if (min_leaf < 1) throw ValidationError("forest: min_leaf must be >= 1");
    if (features_per_split < 0)
        throw ValidationError("forest: features_per_split must be >= 0");
}

int ForestConfig::resolve_features_per_split(std::size_t n_features) const {
    if (features_per_split > 0)
        return std::min<int>(features_per_split, int(n_features));
    return std::max(1, int(std::llround(std::sqrt(double(n_features)))));
}

double gini_impurity(const std::array<std::uint32_t, 3>& counts) {
    const double total = double(counts[0]) + double(counts[1]) + double(counts[2]);
    if (total == 0.0) throw ValidationError("gini impurity of empty counts");
    double sum_sq = 0.0;
    for (std::uint32_t c : counts) {
        const double p = double(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

namespace {

std::array<std::uint32_t, 3> tally(const std::vector<LabeledSample>& data,
                                   const std::vector<std::size_t>& idxs) {
    std::array<std::uint32_t, 3> counts{0, 0, 0};
    for (std::size_t i : idxs) ++counts[std::size_t(data[i].label)];
    return counts;
}

double weighted_child_impurity(const std::array<std::uint32_t, 3>& left,
                               const std::array<std::uint32_t, 3>& right) {
    const double nl = double(left[0]) + double(left[1]) + double(left[2]);
    const double nr = double(right[0]) + double(right[1]) + double(right[2]);
    const double n = nl + nr;
    double acc = 0.0;
    if (nl > 0) acc += nl / n * gini_impurity(left);
    if (nr > 0) acc += nr / n * gini_impurity(right);
    return acc;
}

}  // namespace

std::optional<Split> best_split(const std::vector<LabeledSample>& data,
                                const std::vector<std::size_t>& sample_indices,
                                const std::vector<int>& candidate_features,
                                int min_leaf) {
    if (sample_indices.size() < 2) return std::nullopt;
    const auto parent_counts = tally(data, sample_indices);
    const double parent_impurity = gini_impurity(parent_counts);

    std::optional<Split> best;
    std::vector<std::pair<double, MetaGroup>> column;
    column.reserve(sample_indices.size());

    // iterate candidates in ascending order so gain ties resolve to the
    // lowest feature index
    std::vector<int> features = candidate_features;
    std::sort(features.begin(), features.end());
    features.erase(std::unique(features.begin(), features.end()), features.end());

    for (int f : features) {
        column.clear();
        for (std::size_t i : sample_indices)
            column.emplace_back(data[i].features.values[std::size_t(f)], data[i].label);
        std::sort(column.begin(), column.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        std::array<std::uint32_t, 3> left{0, 0, 0};
        std::array<std::uint32_t, 3> right = parent_counts;
        std::size_t moved = 0;
        for (std::size_t k = 0; k + 1 < column.size(); ++k) {
            ++left[std::size_t(column[k].second)];
            --right[std::size_t(column[k].second)];
            ++moved;
            if (column[k].first == column[k + 1].first) continue;  // not a boundary
            if (moved < std::size_t(min_leaf) ||
                column.size() - moved < std::size_t(min_leaf))
                continue;
            const double threshold = (column[k].first + column[k + 1].first) / 2.0;
            const double gain = parent_impurity - weighted_child_impurity(left, right);
            if (gain <= 1e-12) continue;
            if (!best || gain > best->gain ||
                (gain == best->gain &&
                 (f < best->feature ||
                  (f == best->feature && threshold < best->threshold)))) {
                best = Split{f, threshold, gain};
            }
        }
    }
    return best;
}

namespace {

struct TreeBuilder {
    const std::vector<LabeledSample>& data;
    const ForestConfig& config;
    int features_per_split;
    std::size_t n_features;
    Rng& rng;
    Tree tree;

    int build(std::vector<std::size_t> idxs) {
        const auto counts = tally(data, idxs);
        const int node_id = int(tree.nodes.size());
        tree.nodes.push_back({});

        const bool pure = gini_impurity(counts) == 0.0;
        std::optional<Split> split;
        if (!pure && idxs.size() >= 2) {
            std::vector<int> candidates = draw_candidates();
            split = best_split(data, idxs, candidates, config.min_leaf);
        }
        if (!split) {
            tree.nodes[std::size_t(node_id)].feature = -1;
            tree.nodes[std::size_t(node_id)].counts = counts;
            return node_id;
        }

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idxs) {
            if (data[i].features.values[std::size_t(split->feature)] < split->threshold)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        idxs.clear();
        idxs.shrink_to_fit();

        const int left = build(std::move(left_idx));
        const int right = build(std::move(right_idx));
        TreeNode& node = tree.nodes[std::size_t(node_id)];
        node.feature = split->feature;
        node.threshold = split->threshold;
        node.left = left;
        node.right = right;
        return node_id;
    }

    std::vector<int> draw_candidates() {
        // partial Fisher-Yates over the feature index range
        std::vector<int> all(n_features);
        for (std::size_t i = 0; i < n_features; ++i) all[i] = int(i);
        std::vector<int> out;
        out.reserve(std::size_t(features_per_split));
        for (int k = 0; k < features_per_split; ++k) {
            const std::size_t j = k + std::size_t(rng.below(n_features - std::size_t(k)));
            std::swap(all[std::size_t(k)], all[j]);
            out.push_back(all[std::size_t(k)]);
        }
        return out;
    }
};

}  // namespace

Forest train_forest(const std::vector<LabeledSample>& data, const ForestConfig& config,
                    std::uint64_t seed) {
    config.validate();
    if (data.empty()) throw ValidationError("forest: training data is empty");
    const std::size_t n_features = data.front().features.size();
    if (n_features == 0) throw ValidationError("forest: samples have no features");
    for (const LabeledSample& s : data) {
        if (s.features.size() != n_features)
            throw ValidationError("forest: inconsistent feature dimensions");
        for (double v : s.features.values)
            if (!std::isfinite(v)) throw ValidationError("forest: non-finite feature");
    }

    Forest forest;
    forest.n_features = n_features;
    forest.config = config;
    forest.seed = seed;
    forest.has_masks = true;
    forest.trees.reserve(std::size_t(config.n_trees));

    const int fps = config.resolve_features_per_split(n_features);
    const std::size_t n = data.size();

    for (int t = 0; t < config.n_trees; ++t) {
        Rng rng(derive_seed(seed, std::uint64_t(t)));
        std::vector<std::size_t> idxs;
        std::vector<std::uint32_t> in_bag(n, 0);
        if (config.bootstrap) {
            idxs.reserve(n);
            for (std::size_t i = 0; i < n; ++i) idxs.push_back(std::size_t(rng.below(n)));
            std::sort(idxs.begin(), idxs.end());  // canonical order
        } else {
            idxs.resize(n);
            for (std::size_t i = 0; i < n; ++i) idxs[i] = i;
        }
        for (std::size_t i : idxs) ++in_bag[i];

        TreeBuilder builder{data, config, fps, n_features, rng, {}};
        builder.build(std::move(idxs));
        builder.tree.in_bag = std::move(in_bag);
        forest.trees.push_back(std::move(builder.tree));
    }
    return forest;
}

namespace {

std::array<double, 3> tree_probabilities(const Tree& tree, const FeatureVector& x) {
    std::size_t node = 0;
    while (!tree.nodes[node].is_leaf()) {
        const TreeNode& n = tree.nodes[node];
        node = std::size_t(x.values[std::size_t(n.feature)] < n.threshold ? n.left
                                                                          : n.right);
    }
    const auto& counts = tree.nodes[node].counts;
    const double total = double(counts[0]) + double(counts[1]) + double(counts[2]);
    return {double(counts[0]) / total, double(counts[1]) / total,
            double(counts[2]) / total};
}

MetaGroup argmax_group(const std::array<double, 3>& probs) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
        if (probs[k] > probs[best]) best = k;
    return MetaGroup(int(best));
}

}  // namespace

PredictResult predict(const Forest& forest, const FeatureVector& features) {
    if (forest.trees.empty()) throw ValidationError("forest: no trees");
    if (features.size() != forest.n_features)
        throw ValidationError("forest: feature dimension mismatch (got " +
                              std::to_string(features.size()) + ", expected " +
                              std::to_string(forest.n_features) + ")");
    PredictResult r;
    for (const Tree& tree : forest.trees) {
        const auto p = tree_probabilities(tree, features);
        for (std::size_t k = 0; k < 3; ++k) r.probabilities[k] += p[k];
    }
    for (double& p : r.probabilities) p /= double(forest.trees.size());
    r.label = argmax_group(r.probabilities);
    return r;
}

double oob_accuracy(const Forest& forest, const std::vector<LabeledSample>& data) {
    if (!forest.has_masks)
        throw ValidationError("oob_accuracy: bootstrap masks absent "
                              "(loaded forests do not carry them)");
    for (const Tree& tree : forest.trees)
        if (tree.in_bag.size() != data.size())
            throw ValidationError("oob_accuracy: mask size does not match data");

    std::size_t counted = 0, correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::array<double, 3> probs{0, 0, 0};
        std::size_t voters = 0;
        for (const Tree& tree : forest.trees) {
            if (tree.in_bag[i] != 0) continue;
            const auto p = tree_probabilities(tree, data[i].features);
            for (std::size_t k = 0; k < 3; ++k) probs[k] += p[k];
            ++voters;
        }
        if (voters == 0) continue;  // never out-of-bag
        ++counted;
        if (argmax_group(probs) == data[i].label) ++correct;
    }
    if (counted == 0) throw ValidationError("oob_accuracy: no out-of-bag samples");
    return double(correct) / double(counted);
}

void save_forest(const Forest& forest, std::ostream& out) {
    out << "format forest-v1\n";
    out << "n_features " << forest.n_features << '\n';
    out << "n_trees " << forest.trees.size() << '\n';
    out << "min_leaf " << forest.config.min_leaf << '\n';
    out << "features_per_split " << forest.config.features_per_split << '\n';
    out << "bootstrap " << (forest.config.bootstrap ? 1 : 0) << '\n';
    out << "seed " << forest.seed << '\n';
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        const Tree& tree = forest.trees[t];
        out << "tree " << t << ' ' << tree.nodes.size() << '\n';
        for (const TreeNode& n : tree.nodes) {
            if (n.is_leaf())
                out << "leaf " << n.counts[0] << ' ' << n.counts[1] << ' ' << n.counts[2]
                    << '\n';
            else
                out << "split " << n.feature << ' ' << format_full(n.threshold) << ' '
                    << n.left << ' ' << n.right << '\n';
        }
    }
    out << "end\n";
}

namespace {

std::string next_line(std::istream& in, const std::string& what) {
    std::string line;
    if (!std::getline(in, line))
        throw ValidationError("forest file truncated while reading " + what);
    return line;
}

}  // namespace

Forest load_forest(std::istream& in) {
    std::string line = next_line(in, "header");
    if (trim(line) != "format forest-v1")
        throw ValidationError("forest file version mismatch: '" + trim(line) + "'");

    Forest forest;
    forest.has_masks = false;
    std::size_t n_trees = 0;
    for (const char* key : {"n_features", "n_trees", "min_leaf", "features_per_split",
                            "bootstrap", "seed"}) {
        const auto toks = split_ws(next_line(in, key));
        if (toks.size() != 2 || toks[0] != key)
            throw ValidationError(std::string("forest file: expected '") + key + "'");
        const long long v = parse_int(toks[1], std::string("forest ") + key);
        if (std::string(key) == "n_features") forest.n_features = std::size_t(v);
        else if (std::string(key) == "n_trees") n_trees = std::size_t(v);
        else if (std::string(key) == "min_leaf") forest.config.min_leaf = int(v);
        else if (std::string(key) == "features_per_split")
            forest.config.features_per_split = int(v);
        else if (std::string(key) == "bootstrap") forest.config.bootstrap = v != 0;
        else forest.seed = std::uint64_t(v);
    }
    forest.config.n_trees = int(n_trees);

    for (std::size_t t = 0; t < n_trees; ++t) {
        const auto head = split_ws(next_line(in, "tree header"));
        if (head.size() != 3 || head[0] != "tree")
            throw ValidationError("forest file: expected tree header");
        if (std::size_t(parse_int(head[1], "tree index")) != t)
            throw ValidationError("forest file: tree index out of order");
        const std::size_t n_nodes = std::size_t(parse_int(head[2], "tree size"));
        Tree tree;
        tree.nodes.reserve(n_nodes);
        for (std::size_t k = 0; k < n_nodes; ++k) {
            const auto toks = split_ws(next_line(in, "tree node"));
            TreeNode node;
            if (!toks.empty() && toks[0] == "leaf" && toks.size() == 4) {
                for (int c = 0; c < 3; ++c)
                    node.counts[std::size_t(c)] =
                        std::uint32_t(parse_int(toks[std::size_t(c + 1)], "leaf count"));
                if (node.counts[0] + node.counts[1] + node.counts[2] == 0)
                    throw ValidationError("forest file: leaf with all-zero counts");
            } else if (!toks.empty() && toks[0] == "split" && toks.size() == 5) {
                node.feature = int(parse_int(toks[1], "split feature"));
                node.threshold = parse_double(toks[2], "split threshold");
                node.left = int(parse_int(toks[3], "split left"));
                node.right = int(parse_int(toks[4], "split right"));
                if (node.feature < 0 || std::size_t(node.feature) >= forest.n_features)
                    throw ValidationError("forest file: split feature out of range");
                if (node.left < 0 || std::size_t(node.left) >= n_nodes || node.right < 0 ||
                    std::size_t(node.right) >= n_nodes)
                    throw ValidationError("forest file: child index out of range");
            } else {
                throw ValidationError("forest file: malformed node line");
            }
            tree.nodes.push_back(node);
        }
        forest.trees.push_back(std::move(tree));
    }
    if (trim(next_line(in, "trailer")) != "end")
        throw ValidationError("forest file: missing end marker");
    return forest;
}

void save_forest_file(const Forest& forest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write forest file: " + path);
    save_forest(forest, out);
    if (!out) throw IoError("write failed: " + path);
}

Forest load_forest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open forest file: " + path);
    return load_forest(in);
}

std::vector<LabeledSample> load_labeled_samples(std::istream& in) {
    std::vector<LabeledSample> out;
    std::string line;
    int lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
            LabeledSample s;
            for (const json& v : j.at("features")) s.features.values.push_back(v.get<double>());
            s.label = group_from_token(j.at("label").get<std::string>());
            if (out.empty()) dim = s.features.size();
            else if (s.features.size() != dim)
                throw ValidationError(where + ": feature length mismatch");
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ValidationError(where + ": malformed labeled sample: " + e.what());
        }
    }
    return out;
}

void save_labeled_samples(const std::vector<LabeledSample>& samples, std::ostream& out) {
    for (const LabeledSample& s : samples) {
        json j;
        j["features"] = s.features.values;
        j["label"] = group_token(s.label);
        out << j.dump() << '\n';
    }
}

std::vector<LabeledSample> load_labeled_samples_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open labeled-sample file: " + path);
    return load_labeled_samples(in);
}

void save_labeled_samples_file(const std::vector<LabeledSample>& samples,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write labeled-sample file: " + path);
    save_labeled_samples(samples, out);
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace metatutor::forest
