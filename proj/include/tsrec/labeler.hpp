#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsrec/common.hpp"
#include "tsrec/forecasters.hpp"
#include "tsrec/panel.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

struct Range {
    int begin = 0, end = 0;  // half-open [begin, end)
    int size() const { return end - begin; }
    bool operator==(const Range&) const = default;
};

/// Expanding-window cross-validation plan: fold k trains on [0, min_train + k*h)
/// and tests on the next h points. Test blocks are disjoint and chronologically
/// after their training block.
struct FoldPlan {
    std::vector<std::pair<Range, Range>> folds;  // (train, test)
    int horizon = 1;
    int min_train = 0;

    int n_folds() const { return static_cast<int>(folds.size()); }
};

inline FoldPlan make_folds(int t_len, int n_folds, int horizon, int min_train) {
    if (n_folds < 1 || horizon < 1 || min_train < 1)
        throw ConfigError("fold plan needs n_folds, horizon, min_train >= 1");
    if (min_train + n_folds * horizon > t_len)
        throw ConfigError("infeasible fold plan: min_train + n_folds*h = " +
                          std::to_string(min_train + n_folds * horizon) + " > T = " +
                          std::to_string(t_len));
    FoldPlan plan;
    plan.horizon = horizon;
    plan.min_train = min_train;
    for (int k = 0; k < n_folds; ++k) {
        const int train_end = min_train + k * horizon;
        plan.folds.push_back({{0, train_end}, {train_end, train_end + horizon}});
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

enum class Metric { Mse, Smape, SmapeRatio };

inline Metric parse_metric(const std::string& s) {
    if (s == "mse") return Metric::Mse;
    if (s == "smape") return Metric::Smape;
    if (s == "smape_ratio") return Metric::SmapeRatio;
    throw ConfigError("unknown metric: " + s + " (expected mse|smape|smape_ratio)");
}

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Mse: return "mse";
        case Metric::Smape: return "smape";
        case Metric::SmapeRatio: return "smape_ratio";
    }
    return "?";
}

/// MSE, SMAPE (mean of 2|F-A| / (|A|+|F|), 0/0 terms count as 0), or the
/// aggregate-ratio SMAPE variant sum|F-A| / sum(A+F).
inline double score(const std::vector<double>& actual, const std::vector<double>& forecast,
                    Metric metric) {
    if (actual.size() != forecast.size() || actual.empty())
        throw ConfigError("score: sequences must have equal nonzero length");
    const std::size_t n = actual.size();
    switch (metric) {
        case Metric::Mse: {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = actual[i] - forecast[i];
                s += e * e;
            }
            return s / static_cast<double>(n);
        }
        case Metric::Smape: {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double denom = std::abs(actual[i]) + std::abs(forecast[i]);
                if (denom > 0) s += 2.0 * std::abs(forecast[i] - actual[i]) / denom;
            }
            return s / static_cast<double>(n);
        }
        case Metric::SmapeRatio: {
            double num = 0, den = 0;
            for (std::size_t i = 0; i < n; ++i) {
                num += std::abs(forecast[i] - actual[i]);
                den += actual[i] + forecast[i];
            }
            return den != 0.0 ? num / den : 0.0;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Labelling
// ---------------------------------------------------------------------------

/// Per-fold scores for every (entity, method) cell, plus the fold means.
struct ScoreMatrix {
    std::vector<std::string> entities;
    std::vector<MethodId> methods;
    FoldPlan plan;
    Metric metric = Metric::Smape;
    // scores[entity][method][fold]; +inf marks a failed fit
    std::vector<std::vector<std::vector<double>>> scores;
    std::vector<std::string> failures;  // human-readable fit failures

    double mean_score(int entity, int method, int first_fold = 0, int last_fold = -1) const {
        const auto& per_fold = scores[static_cast<std::size_t>(entity)][static_cast<std::size_t>(method)];
        const int end = last_fold < 0 ? static_cast<int>(per_fold.size()) : last_fold;
        double s = 0;
        int count = 0;
        for (int k = first_fold; k < end; ++k) {
            s += per_fold[static_cast<std::size_t>(k)];
            ++count;
        }
        return count > 0 ? s / count : kInf;
    }
};

/// Tie rule shared by every selector: lower score wins, then fewer
/// parameters, then lexicographically smaller method name.
inline bool method_beats(double score_a, const MethodId& a, double score_b, const MethodId& b) {
    if (score_a != score_b) return score_a < score_b;
    if (nominal_params(a) != nominal_params(b)) return nominal_params(a) < nominal_params(b);
    return a.name() < b.name();
}

struct LabelTable {
    std::vector<std::string> entities;
    std::vector<MethodId> methods;
    std::vector<int> best;                       // index into methods, per entity
    std::vector<std::vector<double>> mean_score; // per entity, per method
    Metric metric = Metric::Smape;

    const MethodId& best_method(int entity) const {
        return methods[static_cast<std::size_t>(best[static_cast<std::size_t>(entity)])];
    }

    int modal_class() const {
        std::vector<int> count(methods.size(), 0);
        for (int b : best) ++count[static_cast<std::size_t>(b)];
        int arg = 0;
        for (std::size_t m = 1; m < methods.size(); ++m) {
            if (count[m] > count[static_cast<std::size_t>(arg)] ||
                (count[m] == count[static_cast<std::size_t>(arg)] &&
                 method_beats(0, methods[m], 0, methods[static_cast<std::size_t>(arg)])))
                arg = static_cast<int>(m);
        }
        return arg;
    }
};

/// Score every (entity, method, fold) cell: fit on the fold's training range,
/// forecast the test range, score against the actuals. A cell whose fit
/// throws gets +inf and a logged reason. The (entity, method, fold) grid is
/// evaluated in parallel; per-cell seeds depend only on (seed, entity id,
/// method name), so the output is independent of worker count and of the
/// method-set ordering.
inline ScoreMatrix score_methods(const TimeSeriesPanel& panel, const std::vector<MethodId>& methods,
                                 const FoldPlan& plan, Metric metric, std::uint64_t seed) {
    ScoreMatrix sm;
    sm.entities = panel.entities;
    sm.methods = methods;
    sm.plan = plan;
    sm.metric = metric;
    const int n = panel.n_entities();
    const int n_methods = static_cast<int>(methods.size());
    const int n_folds = plan.n_folds();
    sm.scores.assign(static_cast<std::size_t>(n),
                     std::vector<std::vector<double>>(static_cast<std::size_t>(n_methods),
                                                      std::vector<double>(static_cast<std::size_t>(n_folds), kInf)));
    std::vector<std::vector<std::string>> failures(static_cast<std::size_t>(n));

    parallel_for(static_cast<std::size_t>(n), [&](std::size_t ei) {
        const auto full = panel.series(static_cast<int>(ei));
        for (int mi = 0; mi < n_methods; ++mi) {
            const MethodId& method = methods[static_cast<std::size_t>(mi)];
            const std::uint64_t cell_seed =
                mix_seed(seed, fnv1a(panel.entities[ei] + "/" + method.name()));
            for (int k = 0; k < n_folds; ++k) {
                const auto& [train, test] = plan.folds[static_cast<std::size_t>(k)];
                try {
                    std::vector<double> train_slice(full.begin() + train.begin, full.begin() + train.end);
                    const auto fitted = fit(method, train_slice, cell_seed);
                    const auto forecast = predict(fitted, test.size());
                    std::vector<double> actual(full.begin() + test.begin, full.begin() + test.end);
                    sm.scores[ei][static_cast<std::size_t>(mi)][static_cast<std::size_t>(k)] =
                        score(actual, forecast, metric);
                } catch (const std::exception& e) {
                    failures[ei].push_back(panel.entities[ei] + "/" + method.name() + "/fold" +
                                           std::to_string(k) + ": " + e.what());
                }
            }
        }
    });
    for (auto& f : failures) sm.failures.insert(sm.failures.end(), f.begin(), f.end());
    return sm;
}

inline LabelTable labels_from_scores(const ScoreMatrix& sm) {
    LabelTable lt;
    lt.entities = sm.entities;
    lt.methods = sm.methods;
    lt.metric = sm.metric;
    const int n = static_cast<int>(sm.entities.size());
    const int n_methods = static_cast<int>(sm.methods.size());
    lt.best.resize(static_cast<std::size_t>(n));
    lt.mean_score.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n_methods)));
    for (int e = 0; e < n; ++e) {
        int arg = 0;
        for (int m = 0; m < n_methods; ++m) {
            const double s = sm.mean_score(e, m);
            lt.mean_score[static_cast<std::size_t>(e)][static_cast<std::size_t>(m)] = s;
            if (m > 0 && method_beats(s, sm.methods[static_cast<std::size_t>(m)],
                                      lt.mean_score[static_cast<std::size_t>(e)][static_cast<std::size_t>(arg)],
                                      sm.methods[static_cast<std::size_t>(arg)]))
                arg = m;
        }
        lt.best[static_cast<std::size_t>(e)] = arg;
    }
    return lt;
}

/// Full labelling pipeline: score the grid, take argmin per entity.
inline std::pair<LabelTable, ScoreMatrix> label_best(const TimeSeriesPanel& panel,
                                                     const std::vector<MethodId>& methods,
                                                     const FoldPlan& plan, Metric metric,
                                                     std::uint64_t seed) {
    ScoreMatrix sm = score_methods(panel, methods, plan, metric, seed);
    return {labels_from_scores(sm), std::move(sm)};
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline void save_labels(const std::string& path, const LabelTable& lt) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "entity,best_method";
    for (const auto& m : lt.methods) out << ',' << detail::csv_field("score_" + m.name());
    out << '\n';
    for (std::size_t e = 0; e < lt.entities.size(); ++e) {
        out << lt.entities[e] << ',' << detail::csv_field(lt.best_method(static_cast<int>(e)).name());
        for (double s : lt.mean_score[e]) out << ',' << fmt_double(s);
        out << '\n';
    }
}

inline LabelTable load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty labels file: " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "entity" || header[1] != "best_method")
        throw DataError("labels file header must be entity,best_method,score_...: " + path);
    LabelTable lt;
    for (std::size_t c = 2; c < header.size(); ++c) {
        if (header[c].rfind("score_", 0) != 0) throw DataError("bad labels column: " + header[c]);
        lt.methods.push_back(parse_method(header[c].substr(6)));
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != header.size()) throw DataError("labels row has wrong field count: " + line);
        lt.entities.push_back(f[0]);
        const auto best = parse_method(f[1]);
        int best_idx = -1;
        std::vector<double> scores;
        for (std::size_t c = 2; c < f.size(); ++c) {
            scores.push_back(std::strtod(f[c].c_str(), nullptr));
            if (lt.methods[c - 2] == best) best_idx = static_cast<int>(c - 2);
        }
        if (best_idx < 0) throw DataError("best method not in score columns: " + f[1]);
        lt.best.push_back(best_idx);
        lt.mean_score.push_back(std::move(scores));
    }
    return lt;
}

/// Cache key so stale score matrices are never reused.
inline std::uint64_t panel_hash(const TimeSeriesPanel& panel) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    for (const auto& e : panel.entities) mix(fnv1a(e));
    for (int i = 0; i < panel.n_entities(); ++i)
        for (int t = 0; t < panel.length(); ++t) {
            std::uint64_t bits;
            const double v = panel.values(i, t);
            std::memcpy(&bits, &v, sizeof(bits));
            mix(bits);
        }
    return h;
}

inline void save_scores(const std::string& path, const ScoreMatrix& sm, std::uint64_t key) {
    nlohmann::json j;
    j["panel_hash"] = key;
    j["metric"] = metric_name(sm.metric);
    j["horizon"] = sm.plan.horizon;
    j["min_train"] = sm.plan.min_train;
    j["n_folds"] = sm.plan.n_folds();
    j["entities"] = sm.entities;
    std::vector<std::string> method_names;
    for (const auto& m : sm.methods) method_names.push_back(m.name());
    j["methods"] = method_names;
    // +inf is not representable in JSON; encode as null.
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& per_entity : sm.scores) {
        nlohmann::json em = nlohmann::json::array();
        for (const auto& per_method : per_entity) {
            nlohmann::json mf = nlohmann::json::array();
            for (double s : per_method)
                mf.push_back(std::isfinite(s) ? nlohmann::json(s) : nlohmann::json());
            em.push_back(mf);
        }
        scores.push_back(em);
    }
    j["scores"] = scores;
    j["failures"] = sm.failures;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline ScoreMatrix load_scores(const std::string& path, const std::uint64_t* expect_key = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (expect_key && j["panel_hash"].get<std::uint64_t>() != *expect_key)
        throw DataError("stale score cache: panel hash mismatch in " + path);
    ScoreMatrix sm;
    sm.metric = parse_metric(j["metric"].get<std::string>());
    sm.entities = j["entities"].get<std::vector<std::string>>();
    for (const auto& name : j["methods"]) sm.methods.push_back(parse_method(name.get<std::string>()));
    const int t_len = j["min_train"].get<int>() + j["n_folds"].get<int>() * j["horizon"].get<int>();
    sm.plan = make_folds(t_len, j["n_folds"].get<int>(), j["horizon"].get<int>(), j["min_train"].get<int>());
    for (const auto& em : j["scores"]) {
        std::vector<std::vector<double>> per_entity;
        for (const auto& mf : em) {
            std::vector<double> per_method;
            for (const auto& s : mf) per_method.push_back(s.is_null() ? kInf : s.get<double>());
            per_entity.push_back(std::move(per_method));
        }
        sm.scores.push_back(std::move(per_entity));
    }
    sm.failures = j["failures"].get<std::vector<std::string>>();
    return sm;
}

}  // namespace tsrec
