#pragma once

#include <vector>

#include "tsrec/common.hpp"

namespace tsrec {

/// Natural visibility graph on time indices: a and b connect when the
/// straight line between (a, y_a) and (b, y_b) passes strictly above every
/// intermediate point. Consecutive indices always connect, so the graph is
/// connected through the path backbone.
struct VisibilityGraph {
    int n = 0;
    std::vector<std::vector<int>> adj;  // sorted neighbor lists
    std::size_t n_edges = 0;

    bool has_edge(int a, int b) const {
        const auto& na = adj[static_cast<std::size_t>(a)];
        return std::binary_search(na.begin(), na.end(), b);
    }
};

/// Max-slope scan: b is visible from a exactly when the slope (a -> b)
/// exceeds every earlier slope (a -> c), c between them. One pass per
/// origin, strict inequality throughout.
inline VisibilityGraph visibility_graph(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    if (n < 2) throw DataError("visibility graph needs at least 2 points");
    if (!all_finite(y)) throw NumericError("visibility graph: non-finite input");
    VisibilityGraph g;
    g.n = n;
    g.adj.assign(static_cast<std::size_t>(n), {});
    for (int a = 0; a < n - 1; ++a) {
        double max_slope = -kInf;
        for (int b = a + 1; b < n; ++b) {
            const double slope = (y[static_cast<std::size_t>(b)] - y[static_cast<std::size_t>(a)]) /
                                 static_cast<double>(b - a);
            if (slope > max_slope) {
                g.adj[static_cast<std::size_t>(a)].push_back(b);
                g.adj[static_cast<std::size_t>(b)].push_back(a);
                ++g.n_edges;
                max_slope = slope;
            }
        }
    }
    for (auto& nb : g.adj) std::sort(nb.begin(), nb.end());
    return g;
}

}  // namespace tsrec
