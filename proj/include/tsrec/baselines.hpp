#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "tsrec/common.hpp"
#include "tsrec/forecasters.hpp"
#include "tsrec/labeler.hpp"
#include "tsrec/panel.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Meta-features
// ---------------------------------------------------------------------------

inline constexpr int kMetaFeatureCount = 11;

inline const std::array<const char*, kMetaFeatureCount>& meta_feature_names() {
    static const std::array<const char*, kMetaFeatureCount> names = {
        "length",      "mean",        "std",          "skewness",       "kurtosis", "acf1",
        "acf7",        "acf30",       "trend_r2",     "turning_rate",   "step_max"};
    return names;
}

using MetaFeatureVector = std::array<double, kMetaFeatureCount>;

namespace detail {

inline double acf_at(const std::vector<double>& y, int lag) {
    const int n = static_cast<int>(y.size());
    if (lag >= n) return 0.0;
    const double m = mean_of(y);
    double num = 0, den = 0;
    for (int t = 0; t < n; ++t) den += (y[static_cast<std::size_t>(t)] - m) * (y[static_cast<std::size_t>(t)] - m);
    for (int t = 0; t + lag < n; ++t)
        num += (y[static_cast<std::size_t>(t)] - m) * (y[static_cast<std::size_t>(t + lag)] - m);
    return den > 0 ? num / den : 0.0;
}

}  // namespace detail

/// Fixed per-series summary used by the meta-learning selector. Degenerate
/// inputs (constant series) map to zeros with `degenerate` set.
inline MetaFeatureVector meta_features(const std::vector<double>& y, bool* degenerate = nullptr) {
    MetaFeatureVector f{};
    const int n = static_cast<int>(y.size());
    f[0] = static_cast<double>(n);
    f[1] = mean_of(y);
    f[2] = sample_stddev(y);
    if (f[2] <= 0.0 || n < 4) {
        if (degenerate) *degenerate = true;
        return f;
    }
    if (degenerate) *degenerate = false;
    // Sample skewness / excess kurtosis (adjusted estimators).
    {
        const double nn = n;
        double m2 = 0, m3 = 0, m4 = 0;
        for (double v : y) {
            const double d = v - f[1];
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        const double var = m2 / (nn - 1);
        const double s_pop = std::sqrt(m2 / nn);
        f[3] = (m3 / nn) / (s_pop * s_pop * s_pop) * std::sqrt(nn * (nn - 1)) / (nn - 2);
        f[4] = ((nn + 1) * nn / ((nn - 1) * (nn - 2) * (nn - 3))) * (m4 / (var * var)) -
               3.0 * (nn - 1) * (nn - 1) / ((nn - 2) * (nn - 3));
    }
    f[5] = detail::acf_at(y, 1);
    f[6] = detail::acf_at(y, 7);
    f[7] = detail::acf_at(y, 30);
    // Trend strength: R^2 of the least-squares line.
    {
        const double tm = (n - 1) / 2.0;
        double stt = 0, sty = 0, syy = 0;
        for (int t = 0; t < n; ++t) {
            const double dt = t - tm;
            const double dy = y[static_cast<std::size_t>(t)] - f[1];
            stt += dt * dt;
            sty += dt * dy;
            syy += dy * dy;
        }
        f[8] = syy > 0 ? (sty * sty) / (stt * syy) : 0.0;
    }
    // Turning points: strict interior local extrema.
    {
        int turns = 0;
        for (int t = 1; t + 1 < n; ++t) {
            const double prev = y[static_cast<std::size_t>(t - 1)], cur = y[static_cast<std::size_t>(t)],
                         next = y[static_cast<std::size_t>(t + 1)];
            if ((cur > prev && cur > next) || (cur < prev && cur < next)) ++turns;
        }
        f[9] = static_cast<double>(turns) / std::max(1, n - 2);
    }
    {
        double mx = 0;
        for (int t = 1; t < n; ++t)
            mx = std::max(mx, std::abs(y[static_cast<std::size_t>(t)] - y[static_cast<std::size_t>(t - 1)]));
        f[10] = mx;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Random forest classifier (bagged Gini trees, sqrt-feature splits)
// ---------------------------------------------------------------------------

struct ForestConfig {
    int n_trees = 100;
    std::uint64_t seed = 0;
};

struct ClassificationTree {
    struct Node {
        bool leaf = true;
        int feature = -1;
        double threshold = 0.0;
        int left = -1, right = -1;
        int klass = 0;
    };
    std::vector<Node> nodes;

    int predict(const MetaFeatureVector& x) const {
        int n = 0;
        while (!nodes[static_cast<std::size_t>(n)].leaf) {
            const auto& nd = nodes[static_cast<std::size_t>(n)];
            n = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(n)].klass;
    }
};

struct RandomForest {
    std::vector<ClassificationTree> trees;
    int n_classes = 0;
    bool constant = false;  // single-class training data
    int constant_class = 0;

    int predict(const MetaFeatureVector& x) const {
        if (constant) return constant_class;
        std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
        for (const auto& t : trees) ++votes[static_cast<std::size_t>(t.predict(x))];
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
        return best;
    }
};

namespace detail {

inline double gini(const std::vector<int>& counts, double total) {
    double g = 1.0;
    for (int c : counts) {
        const double p = c / total;
        g -= p * p;
    }
    return g;
}

inline int grow_gini(ClassificationTree& tree, const std::vector<MetaFeatureVector>& x,
                     const std::vector<int>& y, int n_classes, std::vector<int> rows, Rng& rng) {
    ClassificationTree::Node node;
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (int r : rows) ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])];
    int best_class = 0;
    for (int c = 1; c < n_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best_class)]) best_class = c;
    node.klass = best_class;
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(node);

    const double total = static_cast<double>(rows.size());
    if (rows.size() < 2 || counts[static_cast<std::size_t>(best_class)] == static_cast<int>(rows.size()))
        return idx;

    // sqrt(F) features per split, drawn without replacement.
    const int n_try = std::max(1, static_cast<int>(std::round(std::sqrt(double(kMetaFeatureCount)))));
    std::vector<int> features(kMetaFeatureCount);
    for (int k = 0; k < kMetaFeatureCount; ++k) features[static_cast<std::size_t>(k)] = k;
    rng.shuffle(features);
    features.resize(static_cast<std::size_t>(n_try));

    const double parent = gini(counts, total);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, int>> fv(rows.size());
    for (int f : features) {
        for (std::size_t k = 0; k < rows.size(); ++k)
            fv[k] = {x[static_cast<std::size_t>(rows[k])][static_cast<std::size_t>(f)],
                     y[static_cast<std::size_t>(rows[k])]};
        std::sort(fv.begin(), fv.end());
        std::vector<int> left(static_cast<std::size_t>(n_classes), 0);
        std::vector<int> right = counts;
        for (std::size_t k = 0; k + 1 < fv.size(); ++k) {
            ++left[static_cast<std::size_t>(fv[k].second)];
            --right[static_cast<std::size_t>(fv[k].second)];
            if (fv[k].first == fv[k + 1].first) continue;
            const double nl = static_cast<double>(k + 1), nr = total - nl;
            const double gain = parent - (nl / total) * gini(left, nl) - (nr / total) * gini(right, nr);
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = f;
                best_threshold = 0.5 * (fv[k].first + fv[k + 1].first);
            }
        }
    }
    if (best_feature < 0) return idx;

    std::vector<int> lrows, rrows;
    for (int r : rows) {
        if (x[static_cast<std::size_t>(r)][static_cast<std::size_t>(best_feature)] <= best_threshold)
            lrows.push_back(r);
        else
            rrows.push_back(r);
    }
    if (lrows.empty() || rrows.empty()) return idx;
    tree.nodes[static_cast<std::size_t>(idx)].leaf = false;
    tree.nodes[static_cast<std::size_t>(idx)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(idx)].threshold = best_threshold;
    tree.nodes[static_cast<std::size_t>(idx)].left = grow_gini(tree, x, y, n_classes, std::move(lrows), rng);
    tree.nodes[static_cast<std::size_t>(idx)].right = grow_gini(tree, x, y, n_classes, std::move(rrows), rng);
    return idx;
}

}  // namespace detail

/// Bagged ensemble: each tree sees a bootstrap resample and draws sqrt(F)
/// candidate features per split. Majority vote with the smallest class index
/// winning ties. Single-class training collapses to a flagged constant.
inline RandomForest fit_forest(const std::vector<MetaFeatureVector>& x, const std::vector<int>& y,
                               int n_classes, const ForestConfig& cfg = {}) {
    if (x.empty() || x.size() != y.size()) throw DataError("fit_forest: empty or mismatched data");
    RandomForest forest;
    forest.n_classes = n_classes;
    bool all_same = true;
    for (int v : y)
        if (v != y[0]) all_same = false;
    if (all_same) {
        forest.constant = true;
        forest.constant_class = y[0];
        return forest;
    }
    Rng rng(mix_seed(cfg.seed, fnv1a("forest")));
    for (int t = 0; t < cfg.n_trees; ++t) {
        std::vector<int> rows(x.size());
        for (auto& r : rows) r = static_cast<int>(rng.uniform_index(x.size()));
        std::sort(rows.begin(), rows.end());
        ClassificationTree tree;
        detail::grow_gini(tree, x, y, n_classes, std::move(rows), rng);
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

// ---------------------------------------------------------------------------
// The four selectors
// ---------------------------------------------------------------------------

/// Modal label of the training entities; constant for every test entity.
/// Ties resolve by the shared parsimony-then-name rule.
inline MethodId recommend_random(const LabelTable& labels, const std::vector<int>& train_entities) {
    if (train_entities.empty()) throw ConfigError("recommend_random: no training labels");
    std::map<int, int> counts;
    for (int e : train_entities) ++counts[labels.best[static_cast<std::size_t>(e)]];
    int best = -1, best_count = -1;
    for (const auto& [cls, count] : counts) {
        if (count > best_count ||
            (count == best_count && method_beats(0, labels.methods[static_cast<std::size_t>(cls)], 0,
                                                 labels.methods[static_cast<std::size_t>(best)]))) {
            best = cls;
            best_count = count;
        }
    }
    return labels.methods[static_cast<std::size_t>(best)];
}

/// Per-entity argmin of the mean score over the early "training period"
/// folds only; the ground-truth label uses every fold, so this selector
/// inherits the train/test-period mismatch.
inline std::vector<MethodId> recommend_cv(const ScoreMatrix& scores, int n_train_folds) {
    if (n_train_folds < 1 || n_train_folds > scores.plan.n_folds())
        throw ConfigError("recommend_cv: train fold count out of range");
    std::vector<MethodId> out;
    for (std::size_t e = 0; e < scores.entities.size(); ++e) {
        int arg = 0;
        double arg_score = scores.mean_score(static_cast<int>(e), 0, 0, n_train_folds);
        for (std::size_t m = 1; m < scores.methods.size(); ++m) {
            const double s = scores.mean_score(static_cast<int>(e), static_cast<int>(m), 0, n_train_folds);
            if (method_beats(s, scores.methods[m], arg_score, scores.methods[static_cast<std::size_t>(arg)])) {
                arg = static_cast<int>(m);
                arg_score = s;
            }
        }
        out.push_back(scores.methods[static_cast<std::size_t>(arg)]);
    }
    return out;
}

struct AicChoice {
    MethodId method;
    bool degenerate = false;  // a perfect fit won via the -inf sentinel
};

/// Per-entity argmin of AIC over full-visible-range fits. Methods that fail
/// to fit are excluded for that entity; a perfect fit wins outright.
inline std::vector<AicChoice> recommend_aic(const TimeSeriesPanel& panel,
                                            const std::vector<MethodId>& methods, int t_vis,
                                            std::uint64_t seed,
                                            std::vector<std::string>* failures = nullptr) {
    std::vector<AicChoice> out(static_cast<std::size_t>(panel.n_entities()));
    std::vector<std::vector<std::string>> fail_log(static_cast<std::size_t>(panel.n_entities()));
    parallel_for(static_cast<std::size_t>(panel.n_entities()), [&](std::size_t e) {
        const auto y = panel.series(static_cast<int>(e), t_vis);
        bool have = false;
        double best_aic = kInf;
        MethodId best;
        bool best_degenerate = false;
        for (const auto& m : methods) {
            try {
                const auto fitted = fit(m, y, mix_seed(seed, fnv1a(panel.entities[e] + "/" + m.name())));
                const auto ic = information_criterion_checked(fitted, IcKind::Aic);
                const bool wins =
                    !have || ic.value < best_aic ||
                    (ic.value == best_aic && method_beats(0, m, 0, best));
                if (wins) {
                    best = m;
                    best_aic = ic.value;
                    best_degenerate = ic.degenerate;
                    have = true;
                }
            } catch (const std::exception& ex) {
                fail_log[e].push_back(panel.entities[e] + "/" + m.name() + ": " + ex.what());
            }
        }
        if (!have) fail_log[e].push_back(panel.entities[e] + ": every method failed to fit");
        out[e] = {best, best_degenerate};
    });
    if (failures)
        for (auto& f : fail_log) failures->insert(failures->end(), f.begin(), f.end());
    return out;
}

/// Random-forest meta-learner over the per-series summary features of the
/// training entities.
struct MetaLearner {
    RandomForest forest;
    std::vector<MethodId> classes;

    MethodId predict(const MetaFeatureVector& x) const {
        return classes[static_cast<std::size_t>(forest.predict(x))];
    }
};

inline MetaLearner fit_meta(const TimeSeriesPanel& panel, const LabelTable& labels,
                            const std::vector<int>& train_entities, int t_vis, std::uint64_t seed) {
    if (train_entities.size() < 2) throw ConfigError("fit_meta: need at least 2 training entities");
    std::vector<MetaFeatureVector> x;
    std::vector<int> y;
    for (int e : train_entities) {
        x.push_back(meta_features(panel.series(e, t_vis)));
        y.push_back(labels.best[static_cast<std::size_t>(e)]);
    }
    MetaLearner ml;
    ml.classes = labels.methods;
    ForestConfig cfg;
    cfg.seed = seed;
    ml.forest = fit_forest(x, y, static_cast<int>(labels.methods.size()), cfg);
    return ml;
}

inline std::vector<MethodId> recommend_meta(const MetaLearner& ml, const TimeSeriesPanel& panel,
                                            int t_vis) {
    std::vector<MethodId> out;
    for (int e = 0; e < panel.n_entities(); ++e)
        out.push_back(ml.predict(meta_features(panel.series(e, t_vis))));
    return out;
}

// ---------------------------------------------------------------------------
// Recommendation CSV (entity,method), shared by every selector
// ---------------------------------------------------------------------------

inline void save_recommendations(const std::string& path, const std::vector<std::string>& entities,
                                 const std::vector<MethodId>& methods) {
    if (entities.size() != methods.size())
        throw ConfigError("save_recommendations: entity/method size mismatch");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "entity,method\n";
    for (std::size_t e = 0; e < entities.size(); ++e)
        out << entities[e] << ',' << detail::csv_field(methods[e].name()) << '\n';
}

inline std::map<std::string, MethodId> load_recommendations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "entity,method")
        throw DataError("recommendations file header must be entity,method: " + path);
    std::map<std::string, MethodId> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 2) throw DataError("bad recommendations row: " + line);
        out[f[0]] = parse_method(f[1]);
    }
    return out;
}

}  // namespace tsrec
