#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "tsrec/common.hpp"
#include "tsrec/visibility.hpp"

namespace tsrec {

struct Node2VecConfig {
    double p = 1.0;  // return parameter: weight 1/p back to the previous node
    double q = 1.0;  // in-out parameter: weight 1/q to non-neighbors of the previous node
    int walks_per_node = 16;
    int walk_length = 16;  // nodes per walk
    int dim = 128;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double learning_rate = 0.025;

    void validate() const {
        if (p <= 0.0 || q <= 0.0) throw ConfigError("node2vec: p and q must be positive");
        if (walks_per_node < 1 || walk_length < 1 || dim < 1)
            throw ConfigError("node2vec: walks, length, dim must be >= 1");
        if (window < 1 || negatives < 0 || epochs < 0 || learning_rate <= 0.0)
            throw ConfigError("node2vec: bad window/negatives/epochs/learning rate");
    }
};

/// Second-order transition distribution out of `cur` given the walker came
/// from `prev`: weight 1/p back to prev, 1 to common neighbors of prev and
/// cur, 1/q otherwise, normalized over cur's neighbor list.
inline std::vector<std::pair<int, double>> transition_distribution(const VisibilityGraph& g,
                                                                   int prev, int cur,
                                                                   const Node2VecConfig& cfg) {
    const auto& neighbors = g.adj[static_cast<std::size_t>(cur)];
    std::vector<std::pair<int, double>> out;
    out.reserve(neighbors.size());
    double total = 0.0;
    for (int nxt : neighbors) {
        double w;
        if (nxt == prev) w = 1.0 / cfg.p;
        else if (g.has_edge(prev, nxt)) w = 1.0;
        else w = 1.0 / cfg.q;
        out.emplace_back(nxt, w);
        total += w;
    }
    for (auto& [node, w] : out) w /= total;
    return out;
}

/// walks_per_node biased random walks of walk_length nodes from every node.
/// Walk order is (round, start node), so output is a pure function of the
/// graph, config, and seed.
inline std::vector<std::vector<int>> node2vec_walks(const VisibilityGraph& g,
                                                    const Node2VecConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<std::vector<int>> walks;
    walks.reserve(static_cast<std::size_t>(g.n) * cfg.walks_per_node);
    Rng rng(mix_seed(seed, fnv1a("walks")));
    for (int round = 0; round < cfg.walks_per_node; ++round) {
        for (int start = 0; start < g.n; ++start) {
            std::vector<int> walk;
            walk.reserve(static_cast<std::size_t>(cfg.walk_length));
            walk.push_back(start);
            if (cfg.walk_length > 1) {
                const auto& nb = g.adj[static_cast<std::size_t>(start)];
                if (nb.empty()) {
                    while (static_cast<int>(walk.size()) < cfg.walk_length) walk.push_back(start);
                    walks.push_back(std::move(walk));
                    continue;
                }
                walk.push_back(nb[rng.uniform_index(nb.size())]);
            }
            while (static_cast<int>(walk.size()) < cfg.walk_length) {
                const int cur = walk.back();
                const int prev = walk[walk.size() - 2];
                const auto& nb = g.adj[static_cast<std::size_t>(cur)];
                if (nb.empty()) {
                    walk.push_back(cur);
                    continue;
                }
                // Weighted draw over the second-order distribution.
                double total = 0.0;
                for (int nxt : nb) {
                    if (nxt == prev) total += 1.0 / cfg.p;
                    else if (g.has_edge(prev, nxt)) total += 1.0;
                    else total += 1.0 / cfg.q;
                }
                double draw = rng.uniform() * total;
                int chosen = nb.back();
                for (int nxt : nb) {
                    double w;
                    if (nxt == prev) w = 1.0 / cfg.p;
                    else if (g.has_edge(prev, nxt)) w = 1.0;
                    else w = 1.0 / cfg.q;
                    draw -= w;
                    if (draw <= 0.0) {
                        chosen = nxt;
                        break;
                    }
                }
                walk.push_back(chosen);
            }
            walks.push_back(std::move(walk));
        }
    }
    return walks;
}

/// Skip-gram with negative sampling over walk windows. Input vectors start
/// uniform in [-0.5/d, 0.5/d], output vectors at zero; negatives are drawn
/// from the walk unigram distribution raised to 3/4. Returns the input
/// vectors; per-epoch average loss goes to `epoch_loss` when given.
inline Eigen::MatrixXd train_embedding(const std::vector<std::vector<int>>& walks, int n_nodes,
                                       const Node2VecConfig& cfg, std::uint64_t seed,
                                       std::vector<double>* epoch_loss = nullptr) {
    cfg.validate();
    if (walks.empty()) throw DataError("train_embedding: no walks");
    const int d = cfg.dim;
    Rng rng(mix_seed(seed, fnv1a("sgns")));
    Eigen::MatrixXd in(n_nodes, d), out = Eigen::MatrixXd::Zero(n_nodes, d);
    for (int v = 0; v < n_nodes; ++v)
        for (int k = 0; k < d; ++k) in(v, k) = rng.uniform(-0.5 / d, 0.5 / d);

    // Unigram^(3/4) cumulative table for negative sampling.
    std::vector<double> freq(static_cast<std::size_t>(n_nodes), 0.0);
    for (const auto& w : walks)
        for (int node : w) freq[static_cast<std::size_t>(node)] += 1.0;
    std::vector<double> cum(static_cast<std::size_t>(n_nodes), 0.0);
    double total = 0.0;
    for (int v = 0; v < n_nodes; ++v) {
        total += std::pow(freq[static_cast<std::size_t>(v)], 0.75);
        cum[static_cast<std::size_t>(v)] = total;
    }
    auto sample_negative = [&]() {
        const double u = rng.uniform() * total;
        return static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    };

    Eigen::VectorXd grad_in(d);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss = 0.0;
        std::size_t n_pairs = 0;
        for (const auto& walk : walks) {
            const int len = static_cast<int>(walk.size());
            for (int center = 0; center < len; ++center) {
                const int c = walk[static_cast<std::size_t>(center)];
                const int lo = std::max(0, center - cfg.window);
                const int hi = std::min(len - 1, center + cfg.window);
                for (int pos = lo; pos <= hi; ++pos) {
                    if (pos == center) continue;
                    const int target = walk[static_cast<std::size_t>(pos)];
                    grad_in.setZero();
                    // Positive pair plus negative draws.
                    for (int s = 0; s <= cfg.negatives; ++s) {
                        int node;
                        double label;
                        if (s == 0) {
                            node = target;
                            label = 1.0;
                        } else {
                            node = sample_negative();
                            if (node == target) continue;
                            label = 0.0;
                        }
                        const double score = 1.0 / (1.0 + std::exp(-in.row(c).dot(out.row(node))));
                        loss += label > 0.5 ? -std::log(std::max(score, 1e-12))
                                            : -std::log(std::max(1.0 - score, 1e-12));
                        const double g = (label - score) * cfg.learning_rate;
                        grad_in += g * out.row(node).transpose();
                        out.row(node) += g * in.row(c);
                    }
                    in.row(c) += grad_in;
                    ++n_pairs;
                }
            }
        }
        if (epoch_loss) epoch_loss->push_back(n_pairs > 0 ? loss / static_cast<double>(n_pairs) : 0.0);
    }
    return in;
}

}  // namespace tsrec
