#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tsrec/common.hpp"

namespace tsrec {

/// Depth-limited CART regression tree grown by variance reduction.
/// Stored as a flat node array; deterministic (first best split wins ties).
struct RegressionTree {
    struct Node {
        bool leaf = true;
        int feature = -1;
        double threshold = 0.0;
        int left = -1, right = -1;
        double value = 0.0;
    };
    std::vector<Node> nodes;

    double predict(const std::vector<double>& x) const {
        int n = 0;
        while (!nodes[static_cast<std::size_t>(n)].leaf) {
            const auto& nd = nodes[static_cast<std::size_t>(n)];
            n = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(n)].value;
    }
};

namespace detail {

/// Rows for one tree node, kept presorted per feature so split scans never
/// re-sort. Children are produced by stable partition, preserving order.
struct NodeRows {
    std::vector<std::vector<int>> sorted;  // per feature, row indices ascending by value
};

inline int grow_presorted(RegressionTree& tree, const std::vector<std::vector<double>>& x,
                          const std::vector<double>& y, NodeRows rows, int depth, int max_depth) {
    const std::size_t n_rows = rows.sorted[0].size();
    RegressionTree::Node node;
    {
        double s = 0;
        for (int r : rows.sorted[0]) s += y[static_cast<std::size_t>(r)];
        node.value = n_rows > 0 ? s / static_cast<double>(n_rows) : 0.0;
    }
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);
    if (depth >= max_depth || n_rows < 2) return idx;

    double total_sum = 0, total_sq = 0;
    for (int r : rows.sorted[0]) {
        const double v = y[static_cast<std::size_t>(r)];
        total_sum += v;
        total_sq += v * v;
    }
    const double n_total = static_cast<double>(n_rows);
    const double parent_sse = total_sq - total_sum * total_sum / n_total;

    const int n_features = static_cast<int>(x[0].size());
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int f = 0; f < n_features; ++f) {
        const auto& order = rows.sorted[static_cast<std::size_t>(f)];
        double left_sum = 0, left_sq = 0, left_n = 0;
        for (std::size_t k = 0; k + 1 < n_rows; ++k) {
            const double target = y[static_cast<std::size_t>(order[k])];
            left_sum += target;
            left_sq += target * target;
            ++left_n;
            const double v = x[static_cast<std::size_t>(order[k])][static_cast<std::size_t>(f)];
            const double v_next = x[static_cast<std::size_t>(order[k + 1])][static_cast<std::size_t>(f)];
            if (v == v_next) continue;
            const double right_sum = total_sum - left_sum;
            const double right_sq = total_sq - left_sq;
            const double right_n = n_total - left_n;
            const double sse = (left_sq - left_sum * left_sum / left_n) +
                               (right_sq - right_sum * right_sum / right_n);
            const double gain = parent_sse - sse;
            if (gain > best_gain + 1e-12) {
                best_gain = gain;
                best_feature = f;
                best_threshold = 0.5 * (v + v_next);
            }
        }
    }
    if (best_feature < 0) return idx;

    NodeRows left_rows, right_rows;
    left_rows.sorted.resize(static_cast<std::size_t>(n_features));
    right_rows.sorted.resize(static_cast<std::size_t>(n_features));
    for (int f = 0; f < n_features; ++f) {
        for (int r : rows.sorted[static_cast<std::size_t>(f)]) {
            if (x[static_cast<std::size_t>(r)][static_cast<std::size_t>(best_feature)] <= best_threshold)
                left_rows.sorted[static_cast<std::size_t>(f)].push_back(r);
            else
                right_rows.sorted[static_cast<std::size_t>(f)].push_back(r);
        }
    }
    if (left_rows.sorted[0].empty() || right_rows.sorted[0].empty()) return idx;

    tree.nodes[static_cast<std::size_t>(idx)].leaf = false;
    tree.nodes[static_cast<std::size_t>(idx)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(idx)].threshold = best_threshold;
    tree.nodes[static_cast<std::size_t>(idx)].left =
        grow_presorted(tree, x, y, std::move(left_rows), depth + 1, max_depth);
    tree.nodes[static_cast<std::size_t>(idx)].right =
        grow_presorted(tree, x, y, std::move(right_rows), depth + 1, max_depth);
    return idx;
}

inline NodeRows presort_rows(const std::vector<std::vector<double>>& x) {
    const int n_features = static_cast<int>(x[0].size());
    NodeRows rows;
    rows.sorted.resize(static_cast<std::size_t>(n_features));
    for (int f = 0; f < n_features; ++f) {
        auto& order = rows.sorted[static_cast<std::size_t>(f)];
        order.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return x[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] <
                   x[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
        });
    }
    return rows;
}

}  // namespace detail

inline RegressionTree fit_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                               int max_depth) {
    RegressionTree tree;
    detail::grow_presorted(tree, x, y, detail::presort_rows(x), 0, max_depth);
    return tree;
}

/// Gradient boosting with squared loss: mean start, each tree fit to the
/// current residuals and added with the learning rate.
struct GbtModel {
    double base = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;

    double predict(const std::vector<double>& x) const {
        double out = base;
        for (const auto& t : trees) out += learning_rate * t.predict(x);
        return out;
    }
};

inline GbtModel fit_gbt(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                        int n_trees = 100, int max_depth = 3, double learning_rate = 0.1) {
    if (x.empty() || x.size() != y.size()) throw DataError("gbt: empty or mismatched training data");
    GbtModel model;
    model.learning_rate = learning_rate;
    model.base = mean_of(y);
    const auto presorted = detail::presort_rows(x);
    std::vector<double> residual(y.size());
    std::vector<double> current(y.size(), model.base);
    for (int t = 0; t < n_trees; ++t) {
        for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - current[i];
        RegressionTree tree;
        detail::grow_presorted(tree, x, residual, presorted, 0, max_depth);
        for (std::size_t i = 0; i < y.size(); ++i) current[i] += learning_rate * tree.predict(x[i]);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace tsrec
