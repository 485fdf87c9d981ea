#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tsrec/baselines.hpp"
#include "tsrec/common.hpp"
#include "tsrec/forecasters.hpp"
#include "tsrec/graphify.hpp"
#include "tsrec/labeler.hpp"
#include "tsrec/panel.hpp"
#include "tsrec/recommender.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Run configuration: flat key=value file with CLI overrides
// ---------------------------------------------------------------------------

struct RunConfig {
    std::map<std::string, std::string> kv;

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        RunConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) return std::string();
                const auto b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: " + line);
            cfg.kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return cfg;
    }

    bool has(const std::string& key) const { return kv.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        char* end = nullptr;
        const double v = std::strtod(it->second.c_str(), &end);
        if (end != it->second.c_str() + it->second.size())
            throw ConfigError("config key " + key + " is not a number: " + it->second);
        return v;
    }

    long long get_int(const std::string& key, long long fallback) const {
        const double v = get_double(key, static_cast<double>(fallback));
        return static_cast<long long>(v);
    }
};

// ---------------------------------------------------------------------------
// Entity split, stratified by label
// ---------------------------------------------------------------------------

struct EntitySplit {
    std::vector<int> train, test;
};

/// Deterministic 80/20-style split with per-class stratification; classes
/// with a single member go to the training side.
inline EntitySplit stratified_split(const LabelTable& labels, double train_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || train_frac > 1.0)
        throw ConfigError("train fraction must be in (0, 1], got " + fmt_double(train_frac));
    std::map<int, std::vector<int>> by_class;
    for (std::size_t e = 0; e < labels.best.size(); ++e)
        by_class[labels.best[e]].push_back(static_cast<int>(e));
    EntitySplit split;
    for (auto& [cls, members] : by_class) {
        Rng rng(mix_seed(seed, fnv1a("split/" + labels.methods[static_cast<std::size_t>(cls)].name())));
        rng.shuffle(members);
        const std::size_t n_train = static_cast<std::size_t>(
            std::ceil(train_frac * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < members.size(); ++k)
            (k < n_train ? split.train : split.test).push_back(members[k]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct SelectorRun {
    std::string name;
    std::map<std::string, MethodId> recommendations;  // entity id -> method
    double seconds = 0.0;
};

struct SelectorReport {
    std::string selector;
    bool complete = true;
    int n_entities = 0;
    double accuracy = 0.0;
    double mean_smape = 0.0;
    double mean_mse = 0.0;
    double seconds = 0.0;
    std::map<std::pair<int, int>, int> confusion;  // (true class, predicted class) -> count
};

struct EvaluationReport {
    std::vector<MethodId> label_space;
    std::vector<SelectorReport> rows;
};

/// Frozen-parameter rolling forecast quality: fit on the visible range, then
/// score the one-step path over the held-out evaluation window.
struct EvalQuality {
    double smape = kInf;
    double mse = kInf;
};

inline EvalQuality eval_window_quality(const TimeSeriesPanel& panel, int entity, const MethodId& m,
                                       int t_vis, std::uint64_t seed) {
    const auto full = panel.series(entity);
    const auto train = panel.series(entity, t_vis);
    const auto fitted =
        fit(m, train, mix_seed(seed, fnv1a(panel.entities[static_cast<std::size_t>(entity)] + "/" + m.name())));
    const auto [start, pred] = one_step_path(fitted, full);
    std::vector<double> actual, forecast;
    for (int t = t_vis; t < panel.length(); ++t) {
        actual.push_back(full[static_cast<std::size_t>(t)]);
        forecast.push_back(pred[static_cast<std::size_t>(t - start)]);
    }
    return {score(actual, forecast, Metric::Smape), score(actual, forecast, Metric::Mse)};
}

/// Score every selector on the held-out entities: classification accuracy
/// against the label table plus the forecast quality of each recommended
/// method over the evaluation window. Raw forecasting methods appear as
/// constant selectors named method:<name> so both baseline families share
/// one table.
inline EvaluationReport evaluate(const TimeSeriesPanel& panel, const LabelTable& labels, int t_vis,
                                 const std::vector<int>& test_entities,
                                 const std::vector<SelectorRun>& selectors, std::uint64_t seed,
                                 bool include_raw_methods = true) {
    if (t_vis >= panel.length())
        throw ConfigError("evaluate: no held-out window after t_vis=" + std::to_string(t_vis));
    EvaluationReport report;
    report.label_space = labels.methods;

    std::vector<SelectorRun> all = selectors;
    if (include_raw_methods) {
        for (const auto& m : labels.methods) {
            SelectorRun run;
            run.name = "method:" + m.name();
            for (const auto& e : panel.entities) run.recommendations[e] = m;
            all.push_back(std::move(run));
        }
    }

    std::map<int, int> method_index;
    for (std::size_t m = 0; m < labels.methods.size(); ++m) method_index[static_cast<int>(m)] = static_cast<int>(m);
    auto class_of = [&](const MethodId& m) {
        for (std::size_t k = 0; k < labels.methods.size(); ++k)
            if (labels.methods[k] == m) return static_cast<int>(k);
        return -1;
    };

    std::map<std::string, EvalQuality> quality_cache;  // entity/method -> quality
    for (const auto& run : all) {
        SelectorReport row;
        row.selector = run.name;
        row.seconds = run.seconds;
        int correct = 0;
        double sum_smape = 0, sum_mse = 0;
        int scored = 0;
        for (int e : test_entities) {
            const auto& id = panel.entities[static_cast<std::size_t>(e)];
            const auto it = run.recommendations.find(id);
            if (it == run.recommendations.end()) {
                row.complete = false;  // selector skipped an entity
                continue;
            }
            const int truth = labels.best[static_cast<std::size_t>(e)];
            const int pred = class_of(it->second);
            if (pred == truth) ++correct;
            if (pred >= 0) ++row.confusion[{truth, pred}];
            const std::string key = id + "/" + it->second.name();
            auto q = quality_cache.find(key);
            if (q == quality_cache.end())
                q = quality_cache.emplace(key, eval_window_quality(panel, e, it->second, t_vis, seed)).first;
            sum_smape += q->second.smape;
            sum_mse += q->second.mse;
            ++scored;
        }
        row.n_entities = scored;
        row.accuracy = scored > 0 ? static_cast<double>(correct) / scored : 0.0;
        row.mean_smape = scored > 0 ? sum_smape / scored : kInf;
        row.mean_mse = scored > 0 ? sum_mse / scored : kInf;
        report.rows.push_back(std::move(row));
    }
    return report;
}

inline void save_report(const std::string& dir, const EvaluationReport& report) {
    {
        std::ofstream out(dir + "/report.csv");
        if (!out) throw DataError("cannot write " + dir + "/report.csv");
        out << "selector,n_entities,complete,accuracy,mean_smape,mean_mse\n";
        for (const auto& r : report.rows)
            out << detail::csv_field(r.selector) << ',' << r.n_entities << ','
                << (r.complete ? 1 : 0) << ',' << fmt_double(r.accuracy) << ','
                << fmt_double(r.mean_smape) << ',' << fmt_double(r.mean_mse) << '\n';
    }
    {
        std::ofstream out(dir + "/confusion.csv");
        if (!out) throw DataError("cannot write " + dir + "/confusion.csv");
        out << "selector,true_method,predicted_method,count\n";
        for (const auto& r : report.rows)
            for (const auto& [pair, count] : r.confusion)
                out << detail::csv_field(r.selector) << ','
                    << detail::csv_field(report.label_space[static_cast<std::size_t>(pair.first)].name()) << ','
                    << detail::csv_field(report.label_space[static_cast<std::size_t>(pair.second)].name()) << ','
                    << count << '\n';
    }
    {
        // Human-readable summary; wall-clock seconds live here so the CSV
        // artifacts stay byte-identical across reruns.
        std::ofstream out(dir + "/report.txt");
        if (!out) throw DataError("cannot write " + dir + "/report.txt");
        out << "selector                     n    acc     smape      mse        seconds\n";
        for (const auto& r : report.rows) {
            char line[160];
            std::snprintf(line, sizeof(line), "%-28s %-4d %-7.4f %-10.5f %-10.4g %.2f\n",
                          r.selector.c_str(), r.n_entities, r.accuracy, r.mean_smape, r.mean_mse,
                          r.seconds);
            out << line;
        }
    }
}

// ---------------------------------------------------------------------------
// Leakage probe
// ---------------------------------------------------------------------------

/// Copy of the panel with every value in the held-out window perturbed.
/// Selector decisions must not change when fed this panel.
inline TimeSeriesPanel with_mutated_eval_window(const TimeSeriesPanel& panel, int t_vis,
                                                std::uint64_t seed) {
    TimeSeriesPanel mutated = panel;
    Rng rng(mix_seed(seed, fnv1a("mutation")));
    for (int i = 0; i < panel.n_entities(); ++i)
        for (int t = t_vis; t < panel.length(); ++t)
            mutated.values(i, t) += rng.uniform(1.0, 100.0);
    return mutated;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
    int size = 0;
    double accuracy = 0.0;
    double reg_mse = 0.0;  // regression-head error in standardized units
    double seconds = 0.0;
};

struct SweepInputs {
    const TimeSeriesPanel& panel;
    int t_vis;
    const LabelTable& labels;
    const Eigen::MatrixXd& graph_emb;
    const RelationGraph& graph;
    const EntitySplit& split;
};

namespace detail {

inline SweepRow run_one_config(const SweepInputs& in, const RecommenderConfig& cfg, int size) {
    std::vector<int> label_idx = in.labels.best;
    std::vector<std::string> names;
    for (const auto& m : in.labels.methods) names.push_back(m.name());
    const auto t0 = std::chrono::steady_clock::now();
    const auto model = train_recommender(in.panel, in.t_vis, label_idx, names, in.graph_emb,
                                         in.graph, in.split.train, cfg);
    const auto rec = recommend(model, in.panel, in.t_vis - 1, in.graph_emb, in.graph);
    const auto t1 = std::chrono::steady_clock::now();

    SweepRow row;
    row.size = size;
    row.seconds = std::chrono::duration<double>(t1 - t0).count();
    const auto wb = make_windows(in.panel, in.t_vis - 1, cfg.seq_window);
    int correct = 0;
    double sse = 0.0;
    for (int e : in.split.test) {
        if (rec.best_class[static_cast<std::size_t>(e)] == in.labels.best[static_cast<std::size_t>(e)]) ++correct;
        const double err = rec.next_value(e) - wb.target(e);
        sse += err * err;
    }
    row.accuracy = in.split.test.empty() ? 0.0 : static_cast<double>(correct) / in.split.test.size();
    row.reg_mse = in.split.test.empty() ? 0.0 : sse / in.split.test.size();
    return row;
}

}  // namespace detail

/// Retrain per sequential-window size and report held-out regression error.
inline std::vector<SweepRow> sweep_sequential(const SweepInputs& in, const RecommenderConfig& base,
                                              const std::vector<int>& sizes) {
    std::vector<SweepRow> rows;
    for (int s : sizes) {
        RecommenderConfig cfg = base;
        cfg.seq_window = s;
        if (in.panel.feature_warmup + s > in.t_vis - 1)
            throw ConfigError("sweep_sequential: window size " + std::to_string(s) +
                              " does not fit the visible range");
        rows.push_back(detail::run_one_config(in, cfg, s));
    }
    return rows;
}

/// Retrain per batch size and report held-out recommendation accuracy.
inline std::vector<SweepRow> sweep_batch(const SweepInputs& in, const RecommenderConfig& base,
                                         const std::vector<int>& sizes) {
    std::vector<SweepRow> rows;
    for (int b : sizes) {
        RecommenderConfig cfg = base;
        cfg.batch = b;
        rows.push_back(detail::run_one_config(in, cfg, b));
    }
    return rows;
}

inline void save_sweep(const std::string& path, const std::vector<SweepRow>& rows,
                       const std::string& size_name) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << size_name << ",accuracy,regression_mse\n";
    for (const auto& r : rows)
        out << r.size << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.reg_mse) << '\n';
}

}  // namespace tsrec
