#include "autods/model/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "autods/error.hpp"
#include "autods/rng.hpp"

namespace autods::model {

namespace {

// Target statistics accumulated over a set of sample positions.
struct Stats {
    std::size_t n = 0;
    double sum = 0.0, sum_sq = 0.0;  // regression
    std::vector<double> counts;      // classification

    double impurity_mass(bool classify) const {
        if (n == 0) return 0.0;
        const double dn = static_cast<double>(n);
        if (!classify) return std::max(0.0, sum_sq - sum * sum / dn);  // SSE
        double g = 1.0;
        for (double c : counts) g -= (c / dn) * (c / dn);
        return g * dn;
    }
};

class Builder {
public:
    Builder(const Matrix& x, std::span<const std::size_t> rows, const TreeParams& params, std::uint64_t seed,
            bool classify, std::size_t n_classes, std::span<const int> labels, std::span<const double> y)
        : x_(x), rows_(rows.begin(), rows.end()), params_(params), rng_(seed), classify_(classify),
          n_classes_(n_classes), labels_(labels), y_(y) {}

    DecisionTree::Node make_leaf(std::size_t begin, std::size_t end) const {
        DecisionTree::Node leaf;
        leaf.samples = end - begin;
        const Stats s = stats(begin, end);
        if (classify_) {
            leaf.value.assign(n_classes_, 0.0);
            for (std::size_t c = 0; c < n_classes_; ++c) leaf.value[c] = s.n ? s.counts[c] / static_cast<double>(s.n) : 0.0;
        } else {
            leaf.value = {s.n ? s.sum / static_cast<double>(s.n) : 0.0};
        }
        return leaf;
    }

    void build(std::vector<DecisionTree::Node>& nodes, std::vector<double>& importances) {
        const std::size_t m = rows_.size();
        const std::size_t d = x_.cols();
        if (m == 0) fail(ErrorKind::domain, "cannot fit a tree on zero rows");
        sorted_.assign(std::max<std::size_t>(d, 1), std::vector<std::size_t>(m));
        for (auto& order : sorted_) std::iota(order.begin(), order.end(), 0);
        for (std::size_t f = 0; f < d; ++f) {
            auto& order = sorted_[f];
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return value(a, f) < value(b, f); });
        }
        goes_left_.assign(m, 0);
        importances.assign(d, 0.0);
        nodes.clear();
        nodes.push_back({});
        struct Task {
            std::size_t node, begin, end;
            int depth;
        };
        std::vector<Task> stack{{0, 0, m, 0}};
        while (!stack.empty()) {
            const Task t = stack.back();
            stack.pop_back();
            const Split split = best_split(t.begin, t.end, t.depth);
            if (split.feature < 0) {
                nodes[t.node] = make_leaf(t.begin, t.end);
                continue;
            }
            importances[static_cast<std::size_t>(split.feature)] += split.gain;
            partition(t.begin, t.end, static_cast<std::size_t>(split.feature), split.cut);
            const int left = static_cast<int>(nodes.size());
            nodes.push_back({});
            nodes.push_back({});
            DecisionTree::Node& parent = nodes[t.node];
            parent.feature = split.feature;
            parent.threshold = split.threshold;
            parent.left = left;
            parent.right = left + 1;
            parent.samples = t.end - t.begin;
            stack.push_back({static_cast<std::size_t>(left) + 1, split.cut, t.end, t.depth + 1});
            stack.push_back({static_cast<std::size_t>(left), t.begin, split.cut, t.depth + 1});
        }
    }

private:
    struct Split {
        int feature = -1;
        std::size_t cut = 0;  // positions [begin, cut) go left in the chosen feature's order
        double threshold = 0.0;
        double gain = 0.0;
    };

    double value(std::size_t pos, std::size_t f) const { return x_(rows_[pos], f); }

    void add(Stats& s, std::size_t pos) const {
        ++s.n;
        if (classify_) {
            s.counts[static_cast<std::size_t>(labels_[rows_[pos]])] += 1.0;
        } else {
            const double v = y_[rows_[pos]];
            s.sum += v;
            s.sum_sq += v * v;
        }
    }

    Stats empty_stats() const {
        Stats s;
        if (classify_) s.counts.assign(n_classes_, 0.0);
        return s;
    }

    Stats stats(std::size_t begin, std::size_t end) const {
        Stats s = empty_stats();
        const auto& order = sorted_.front();
        for (std::size_t i = begin; i < end; ++i) add(s, order[i]);
        return s;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t d = x_.cols();
        std::vector<std::size_t> all(d);
        std::iota(all.begin(), all.end(), 0);
        if (params_.max_features == 0 || params_.max_features >= d) return all;
        for (std::size_t i = 0; i < params_.max_features; ++i) std::swap(all[i], all[i + rng_.index(d - i)]);
        all.resize(params_.max_features);
        std::sort(all.begin(), all.end());
        return all;
    }

    Split best_split(std::size_t begin, std::size_t end, int depth) {
        Split best;
        const std::size_t n = end - begin;
        if (depth >= params_.max_depth || n < params_.min_samples_split || n < 2 * params_.min_samples_leaf) return best;
        const Stats parent = stats(begin, end);
        const double parent_mass = parent.impurity_mass(classify_);
        if (parent_mass <= 1e-12 * std::max(1.0, static_cast<double>(n))) return best;
        const double min_gain = 1e-12 * std::max(1.0, parent_mass);
        for (std::size_t f : candidate_features()) {
            const auto& order = sorted_[f];
            Stats left = empty_stats();
            Stats right = parent;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const std::size_t pos = order[i];
                add(left, pos);
                if (classify_) {
                    right.counts[static_cast<std::size_t>(labels_[rows_[pos]])] -= 1.0;
                } else {
                    const double v = y_[rows_[pos]];
                    right.sum -= v;
                    right.sum_sq -= v * v;
                }
                --right.n;
                const double a = value(pos, f);
                const double b = value(order[i + 1], f);
                if (a == b) continue;
                if (left.n < params_.min_samples_leaf || right.n < params_.min_samples_leaf) continue;
                const double gain = parent_mass - left.impurity_mass(classify_) - right.impurity_mass(classify_);
                if (gain > best.gain + min_gain || (best.feature < 0 && gain > min_gain)) {
                    best.feature = static_cast<int>(f);
                    best.cut = i + 1;
                    double mid = a + (b - a) / 2.0;
                    if (!(mid < b)) mid = a;
                    best.threshold = mid;
                    best.gain = gain;
                }
            }
        }
        return best;
    }

    void partition(std::size_t begin, std::size_t end, std::size_t feature, std::size_t cut) {
        const auto& chosen = sorted_[feature];
        for (std::size_t i = begin; i < end; ++i) goes_left_[chosen[i]] = i < cut ? 1 : 0;
        std::vector<std::size_t> buffer;
        buffer.reserve(end - begin);
        for (std::size_t f = 0; f < sorted_.size(); ++f) {
            if (f == feature) continue;
            auto& order = sorted_[f];
            buffer.clear();
            std::size_t w = begin;
            for (std::size_t i = begin; i < end; ++i) {
                if (goes_left_[order[i]]) {
                    order[w++] = order[i];
                } else {
                    buffer.push_back(order[i]);
                }
            }
            std::copy(buffer.begin(), buffer.end(), order.begin() + static_cast<std::ptrdiff_t>(w));
        }
    }

    const Matrix& x_;
    std::vector<std::size_t> rows_;
    TreeParams params_;
    Rng rng_;
    bool classify_;
    std::size_t n_classes_;
    std::span<const int> labels_;
    std::span<const double> y_;
    std::vector<std::vector<std::size_t>> sorted_;
    std::vector<std::uint8_t> goes_left_;
};

void check_params(const TreeParams& p) {
    if (p.max_depth < 0) fail(ErrorKind::config, "tree max_depth must be >= 0");
    if (p.min_samples_leaf < 1) fail(ErrorKind::config, "tree min_samples_leaf must be >= 1");
}

}  // namespace

DecisionTree DecisionTree::fit_classifier(const Matrix& x, std::span<const int> labels, std::size_t n_classes,
                                          std::span<const std::size_t> rows, const TreeParams& params,
                                          std::uint64_t seed) {
    check_params(params);
    if (labels.size() != x.rows()) fail(ErrorKind::domain, "labels do not match the number of rows");
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= n_classes) fail(ErrorKind::domain, "class label out of range");
    }
    DecisionTree tree;
    Builder(x, rows, params, seed, true, n_classes, labels, {}).build(tree.nodes_, tree.importances_);
    return tree;
}

DecisionTree DecisionTree::fit_regressor(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                                         const TreeParams& params, std::uint64_t seed) {
    check_params(params);
    if (y.size() != x.rows()) fail(ErrorKind::domain, "targets do not match the number of rows");
    DecisionTree tree;
    Builder(x, rows, params, seed, false, 0, {}, y).build(tree.nodes_, tree.importances_);
    return tree;
}

std::size_t DecisionTree::leaf_index(std::span<const double> point) const {
    std::size_t node = 0;
    while (nodes_[node].feature >= 0) {
        const Node& n = nodes_[node];
        node = static_cast<std::size_t>(point[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return node;
}

int DecisionTree::depth() const {
    std::vector<int> level(nodes_.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        deepest = std::max(deepest, level[i]);
        if (nodes_[i].feature >= 0) {
            level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
            level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
        }
    }
    return deepest;
}

nlohmann::json DecisionTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : nodes_) {
        if (n.feature < 0) {
            nodes.push_back({{"samples", n.samples}, {"value", n.value}});
        } else {
            nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                             {"samples", n.samples}});
        }
    }
    return {{"nodes", nodes}, {"importances", importances_}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
    DecisionTree t;
    try {
        for (const auto& n : j.at("nodes")) {
            Node node;
            node.samples = n.at("samples").get<std::size_t>();
            if (n.contains("feature")) {
                node.feature = n.at("feature").get<int>();
                node.threshold = n.at("threshold").get<double>();
                node.left = n.at("left").get<int>();
                node.right = n.at("right").get<int>();
            } else {
                node.value = n.at("value").get<std::vector<double>>();
            }
            t.nodes_.push_back(std::move(node));
        }
        t.importances_ = j.at("importances").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, std::string("malformed tree JSON: ") + e.what());
    }
    const auto count = static_cast<int>(t.nodes_.size());
    if (count == 0) fail(ErrorKind::data, "malformed tree JSON: no nodes");
    for (const Node& n : t.nodes_) {
        if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)) {
            fail(ErrorKind::data, "malformed tree JSON: child index out of range");
        }
    }
    return t;
}

}  // namespace autods::model
