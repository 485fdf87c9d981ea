// Command-line pipeline: synthesize or ingest a panel, engineer features,
// label best models by nested cross-validation, build visibility-graph
// embeddings, train the relational recommender, run the baseline selectors,
// and evaluate everything on a held-out window.

#include <chrono>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "tsrec/harness.hpp"

using namespace tsrec;

namespace {

struct CommonArgs {
    std::string panel_dir;
    std::string out;
    std::uint64_t seed = 42;
    int holdout = 30;  // evaluation window length; labeling sees T - holdout
    double train_frac = 0.8;
    int n_clusters = 0;  // 0: ceil(sqrt(N))
};

int visible_length(const TimeSeriesPanel& panel, int holdout) {
    const int t_vis = panel.length() - holdout;
    if (t_vis < 2)
        throw ConfigError("holdout " + std::to_string(holdout) + " leaves no visible data (T=" +
                          std::to_string(panel.length()) + ")");
    return t_vis;
}

/// Clusters + features over the visible range, in place.
void prepare_panel(TimeSeriesPanel& panel, int t_vis, int n_clusters, std::uint64_t) {
    const int k = n_clusters > 0 ? n_clusters : default_n_clusters(panel.n_entities());
    panel.cluster_id = hierarchical_cluster(panel, k, t_vis);
    apply_features(panel, t_vis);
}

std::vector<int> parse_sizes(const std::string& csv) {
    std::vector<int> sizes;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) sizes.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (sizes.empty()) throw ConfigError("empty size list");
    return sizes;
}

void warn_all(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

LabelTable load_labels_checked(const std::string& path, const TimeSeriesPanel& panel) {
    auto labels = load_labels(path);
    if (labels.entities != panel.entities)
        throw DataError("labels file does not match the panel entities: " + path);
    return labels;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"time-series model recommendation pipeline"};
    app.set_config("--config");
    app.require_subcommand(1);

    try {
        // ------------------------------------------------------------- synth
        auto* synth = app.add_subcommand("synth", "generate a synthetic panel with planted structure");
        SyntheticSpec spec;
        std::string synth_out;
        synth->add_option("--out", synth_out, "output panel directory")->required();
        synth->add_option("--n", spec.n_entities, "number of entities");
        synth->add_option("--t", spec.series_length, "series length");
        synth->add_option("--frac-rw", spec.frac_random_walk, "random-walk family fraction");
        synth->add_option("--frac-trend", spec.frac_trend, "trend family fraction");
        synth->add_option("--frac-seasonal", spec.frac_seasonal, "seasonal family fraction");
        synth->add_option("--frac-ar1", spec.frac_ar1, "autoregressive family fraction");
        synth->add_option("--k", spec.n_relation_types, "relation types");
        synth->add_option("--p-intra", spec.p_intra, "intra-family membership probability");
        synth->add_option("--p-inter", spec.p_inter, "inter-family membership probability");
        synth->add_option("--noise", spec.noise_scale, "noise scale");
        synth->add_option("--seed", spec.seed, "generator seed");
        synth->callback([&]() {
            std::filesystem::create_directories(synth_out);
            const auto s = generate_synthetic(spec);
            save_panel(synth_out, s.panel, s.memberships, spec.seed, &s.planted);
            std::ofstream planted(synth_out + "/planted.csv");
            planted << "entity,family\n";
            for (int i = 0; i < s.panel.n_entities(); ++i)
                planted << s.panel.entities[static_cast<std::size_t>(i)] << ','
                        << family_name(s.planted[static_cast<std::size_t>(i)]) << '\n';
            std::cout << "wrote panel: N=" << s.panel.n_entities() << " T=" << s.panel.length()
                      << " relations=" << s.graph.n_related_pairs()
                      << " ratio=" << fmt_double(s.graph.relation_ratio()) << "\n";
        });

        // ------------------------------------------------------------ ingest
        auto* ingest = app.add_subcommand("ingest", "load long-format CSVs into a panel directory");
        std::string values_path, relations_path, ingest_out;
        double fill_limit = 0.05;
        std::uint64_t ingest_seed = 0;
        ingest->add_option("--values", values_path, "entity_id,date,value CSV")->required();
        ingest->add_option("--relations", relations_path, "entity_id,relation_type_id CSV");
        ingest->add_option("--out", ingest_out, "output panel directory")->required();
        ingest->add_option("--fill-limit", fill_limit, "max forward-fillable missing fraction");
        ingest->add_option("--seed", ingest_seed, "seed recorded in meta.json");
        ingest->callback([&]() {
            std::vector<std::string> warnings;
            auto panel = load_panel(values_path, fill_limit, &warnings);
            MembershipList members(static_cast<std::size_t>(panel.n_entities()));
            if (!relations_path.empty()) load_relations(relations_path, panel, &warnings, &members);
            warn_all(warnings);
            std::filesystem::create_directories(ingest_out);
            save_panel(ingest_out, panel, members, ingest_seed);
            std::cout << "ingested panel: N=" << panel.n_entities() << " T=" << panel.length() << "\n";
        });

        // ---------------------------------------------------------- features
        auto* features = app.add_subcommand("features", "dump engineered features to CSV");
        CommonArgs fargs;
        features->add_option("--panel", fargs.panel_dir, "panel directory")->required();
        features->add_option("--out", fargs.out, "output features.csv")->required();
        features->add_option("--holdout", fargs.holdout, "held-out evaluation window length");
        features->add_option("--clusters", fargs.n_clusters, "cluster count (0: ceil(sqrt(N)))");
        features->add_option("--seed", fargs.seed, "seed");
        features->callback([&]() {
            auto loaded = load_panel_dir(fargs.panel_dir);
            const int t_vis = visible_length(loaded.panel, fargs.holdout);
            prepare_panel(loaded.panel, t_vis, fargs.n_clusters, fargs.seed);
            std::ofstream out(fargs.out);
            if (!out) throw DataError("cannot write " + fargs.out);
            out << "entity,t";
            for (const auto& n : loaded.panel.feature_names) out << ',' << n;
            out << '\n';
            for (int i = 0; i < loaded.panel.n_entities(); ++i)
                for (int t = loaded.panel.feature_warmup; t < t_vis; ++t) {
                    out << loaded.panel.entities[static_cast<std::size_t>(i)] << ',' << t;
                    for (int c = 0; c < static_cast<int>(loaded.panel.feature_names.size()); ++c)
                        out << ',' << fmt_double(loaded.panel.features[static_cast<std::size_t>(i)](t, c));
                    out << '\n';
                }
            std::cout << "wrote " << fargs.out << "\n";
        });

        // ------------------------------------------------------------- label
        auto* label = app.add_subcommand("label", "nested-CV best-model labels");
        CommonArgs largs;
        int n_folds = 30, horizon = 1;
        std::string metric_name_str = "smape";
        label->add_option("--panel", largs.panel_dir, "panel directory")->required();
        label->add_option("--out", largs.out, "output directory for labels.csv and scores.json")->required();
        label->add_option("--folds", n_folds, "fold count");
        label->add_option("--horizon", horizon, "forecast horizon per fold");
        label->add_option("--metric", metric_name_str, "mse|smape|smape_ratio");
        label->add_option("--holdout", largs.holdout, "held-out evaluation window length");
        label->add_option("--seed", largs.seed, "seed");
        label->callback([&]() {
            auto loaded = load_panel_dir(largs.panel_dir);
            const int t_vis = visible_length(loaded.panel, largs.holdout);
            const auto metric = parse_metric(metric_name_str);
            const auto plan = make_folds(t_vis, n_folds, horizon, t_vis - n_folds * horizon);
            const auto [labels, scores] =
                label_best(loaded.panel, default_method_space(), plan, metric, largs.seed);
            std::filesystem::create_directories(largs.out);
            save_labels(largs.out + "/labels.csv", labels);
            save_scores(largs.out + "/scores.json", scores, panel_hash(loaded.panel));
            for (const auto& f : scores.failures) std::cerr << "fit failure: " << f << "\n";
            std::cout << "labels written; modal class: "
                      << labels.methods[static_cast<std::size_t>(labels.modal_class())].name() << "\n";
        });

        // ---------------------------------------------------------- graphify
        auto* graphify = app.add_subcommand("graphify", "visibility-graph embeddings per entity");
        CommonArgs gargs;
        GraphifyConfig gcfg;
        std::string pooling = "mean";
        graphify->add_option("--panel", gargs.panel_dir, "panel directory")->required();
        graphify->add_option("--out", gargs.out, "output directory for embeddings.bin")->required();
        graphify->add_option("--holdout", gargs.holdout, "held-out evaluation window length");
        graphify->add_option("--ssa-window", gcfg.ssa_window, "trajectory window L");
        graphify->add_option("--ssa-energy", gcfg.ssa_energy, "reconstruction energy threshold");
        graphify->add_option("--dim", gcfg.n2v.dim, "embedding dimension");
        graphify->add_option("--walks", gcfg.n2v.walks_per_node, "walks per node");
        graphify->add_option("--walk-length", gcfg.n2v.walk_length, "nodes per walk");
        graphify->add_option("--p", gcfg.n2v.p, "return parameter");
        graphify->add_option("--q", gcfg.n2v.q, "in-out parameter");
        graphify->add_option("--window", gcfg.n2v.window, "skip-gram window");
        graphify->add_option("--negatives", gcfg.n2v.negatives, "negative samples");
        graphify->add_option("--epochs", gcfg.n2v.epochs, "skip-gram epochs");
        graphify->add_option("--lr", gcfg.n2v.learning_rate, "skip-gram learning rate");
        graphify->add_option("--pooling", pooling, "mean|max node pooling");
        graphify->add_option("--seed", gargs.seed, "seed");
        graphify->callback([&]() {
            auto loaded = load_panel_dir(gargs.panel_dir);
            const int t_vis = visible_length(loaded.panel, gargs.holdout);
            if (pooling == "mean") gcfg.pooling = Pooling::Mean;
            else if (pooling == "max") gcfg.pooling = Pooling::Max;
            else throw ConfigError("pooling must be mean or max, got " + pooling);
            const auto emb = embed_panel(loaded.panel, gcfg, gargs.seed, t_vis);
            std::filesystem::create_directories(gargs.out);
            save_embeddings(gargs.out, emb, loaded.panel.entities, gargs.seed, gcfg);
            std::cout << "wrote embeddings: " << emb.rows() << " x " << emb.cols() << "\n";
        });

        // ------------------------------------------------------------- train
        auto* train = app.add_subcommand("train", "train the relational recommender");
        CommonArgs targs;
        RecommenderConfig rcfg;
        std::string labels_path, embeddings_dir, mode = "explicit", activation = "leaky_relu";
        train->add_option("--panel", targs.panel_dir, "panel directory")->required();
        train->add_option("--labels", labels_path, "labels.csv from the label step")->required();
        train->add_option("--embeddings", embeddings_dir, "embeddings directory")->required();
        train->add_option("--out", targs.out, "model output directory")->required();
        train->add_option("--mode", mode, "explicit|implicit relation strength");
        train->add_option("--hidden", rcfg.hidden, "recurrent hidden units");
        train->add_option("--seq", rcfg.seq_window, "sequential window length");
        train->add_option("--batch", rcfg.batch, "batch size");
        train->add_option("--epochs", rcfg.epochs, "training epochs");
        train->add_option("--lr", rcfg.learning_rate, "learning rate");
        train->add_option("--lambda", rcfg.lambda, "regression loss weight");
        train->add_option("--train-windows", rcfg.train_windows, "window end times per epoch");
        train->add_option("--activation", activation, "leaky_relu|sigmoid|tanh");
        train->add_option("--train-frac", targs.train_frac, "train fraction of entities");
        train->add_option("--holdout", targs.holdout, "held-out evaluation window length");
        train->add_option("--clusters", targs.n_clusters, "cluster count (0: ceil(sqrt(N)))");
        train->add_option("--seed", targs.seed, "seed");
        train->callback([&]() {
            auto loaded = load_panel_dir(targs.panel_dir);
            const int t_vis = visible_length(loaded.panel, targs.holdout);
            prepare_panel(loaded.panel, t_vis, targs.n_clusters, targs.seed);
            const auto labels = load_labels_checked(labels_path, loaded.panel);
            const auto emb = load_embeddings(embeddings_dir);
            if (emb.matrix.rows() != loaded.panel.n_entities())
                throw DataError("embeddings row count does not match the panel");
            rcfg.mode = parse_mode(mode);
            rcfg.seed = targs.seed;
            if (activation == "leaky_relu") rcfg.activation = Activation::LeakyRelu;
            else if (activation == "sigmoid") rcfg.activation = Activation::Sigmoid;
            else if (activation == "tanh") rcfg.activation = Activation::Tanh;
            else throw ConfigError("unknown activation: " + activation);
            const auto split = stratified_split(labels, targs.train_frac, targs.seed);
            std::vector<std::string> names;
            for (const auto& m : labels.methods) names.push_back(m.name());
            const auto model = train_recommender(loaded.panel, t_vis, labels.best, names, emb.matrix,
                                                 loaded.graph, split.train, rcfg);
            std::filesystem::create_directories(targs.out);
            save_model(targs.out, model);
            std::cout << "trained " << mode << " model; final epoch loss "
                      << (model.epoch_losses.empty() ? 0.0 : model.epoch_losses.back()) << "\n";
        });

        // --------------------------------------------------------- recommend
        auto* recommend_cmd = app.add_subcommand("recommend", "produce recommendations_<selector>.csv");
        CommonArgs rargs;
        std::string selector = "gnn", model_dir, rec_embeddings, rec_labels, rec_scores;
        recommend_cmd->add_option("--panel", rargs.panel_dir, "panel directory")->required();
        recommend_cmd->add_option("--out", rargs.out, "output CSV path")->required();
        recommend_cmd->add_option("--selector", selector, "gnn|random|cv|aic|meta");
        recommend_cmd->add_option("--model", model_dir, "model directory (gnn)");
        recommend_cmd->add_option("--embeddings", rec_embeddings, "embeddings directory (gnn)");
        recommend_cmd->add_option("--labels", rec_labels, "labels.csv (random/meta)");
        recommend_cmd->add_option("--scores", rec_scores, "scores.json (cv)");
        recommend_cmd->add_option("--train-frac", rargs.train_frac, "train fraction of entities");
        recommend_cmd->add_option("--holdout", rargs.holdout, "held-out evaluation window length");
        recommend_cmd->add_option("--clusters", rargs.n_clusters, "cluster count (0: ceil(sqrt(N)))");
        recommend_cmd->add_option("--seed", rargs.seed, "seed");
        recommend_cmd->callback([&]() {
            auto loaded = load_panel_dir(rargs.panel_dir);
            const int t_vis = visible_length(loaded.panel, rargs.holdout);
            std::vector<MethodId> methods(static_cast<std::size_t>(loaded.panel.n_entities()));
            if (selector == "gnn") {
                if (model_dir.empty() || rec_embeddings.empty())
                    throw ConfigError("gnn selector needs --model and --embeddings");
                prepare_panel(loaded.panel, t_vis, rargs.n_clusters, rargs.seed);
                const auto model = load_model(model_dir);
                const auto emb = load_embeddings(rec_embeddings);
                const auto rec = recommend(model, loaded.panel, t_vis - 1, emb.matrix, loaded.graph);
                for (int e = 0; e < loaded.panel.n_entities(); ++e)
                    methods[static_cast<std::size_t>(e)] =
                        parse_method(model.label_space[static_cast<std::size_t>(
                            rec.best_class[static_cast<std::size_t>(e)])]);
            } else if (selector == "random") {
                if (rec_labels.empty()) throw ConfigError("random selector needs --labels");
                const auto labels = load_labels_checked(rec_labels, loaded.panel);
                const auto split = stratified_split(labels, rargs.train_frac, rargs.seed);
                const auto modal = recommend_random(labels, split.train);
                for (auto& m : methods) m = modal;
            } else if (selector == "cv") {
                if (rec_scores.empty()) throw ConfigError("cv selector needs --scores");
                const auto key = panel_hash(loaded.panel);
                const auto scores = load_scores(rec_scores, &key);
                if (scores.entities != loaded.panel.entities)
                    throw DataError("scores file does not match the panel entities");
                methods = recommend_cv(scores, (scores.plan.n_folds() + 1) / 2);
            } else if (selector == "aic") {
                std::vector<std::string> failures;
                const auto picks = recommend_aic(loaded.panel, default_method_space(), t_vis,
                                                 rargs.seed, &failures);
                warn_all(failures);
                for (std::size_t e = 0; e < picks.size(); ++e) methods[e] = picks[e].method;
            } else if (selector == "meta") {
                if (rec_labels.empty()) throw ConfigError("meta selector needs --labels");
                const auto labels = load_labels_checked(rec_labels, loaded.panel);
                const auto split = stratified_split(labels, rargs.train_frac, rargs.seed);
                const auto ml = fit_meta(loaded.panel, labels, split.train, t_vis, rargs.seed);
                methods = recommend_meta(ml, loaded.panel, t_vis);
            } else {
                throw ConfigError("unknown selector: " + selector);
            }
            save_recommendations(rargs.out, loaded.panel.entities, methods);
            std::cout << "wrote " << rargs.out << "\n";
        });

        // ---------------------------------------------------------- evaluate
        auto* evaluate_cmd = app.add_subcommand("evaluate", "score selectors against the labels");
        CommonArgs eargs;
        std::string eval_labels;
        std::vector<std::string> rec_specs;
        bool no_raw_methods = false;
        evaluate_cmd->add_option("--panel", eargs.panel_dir, "panel directory")->required();
        evaluate_cmd->add_option("--labels", eval_labels, "labels.csv")->required();
        evaluate_cmd->add_option("--out", eargs.out, "report output directory")->required();
        evaluate_cmd->add_option("--rec", rec_specs, "name=path recommendation CSVs")->expected(-1);
        evaluate_cmd->add_flag("--no-raw-methods", no_raw_methods, "skip the per-method selector rows");
        evaluate_cmd->add_option("--train-frac", eargs.train_frac, "train fraction of entities");
        evaluate_cmd->add_option("--holdout", eargs.holdout, "held-out evaluation window length");
        evaluate_cmd->add_option("--seed", eargs.seed, "seed");
        evaluate_cmd->callback([&]() {
            auto loaded = load_panel_dir(eargs.panel_dir);
            const int t_vis = visible_length(loaded.panel, eargs.holdout);
            const auto labels = load_labels_checked(eval_labels, loaded.panel);
            const auto split = stratified_split(labels, eargs.train_frac, eargs.seed);
            std::vector<SelectorRun> runs;
            for (const auto& spec_str : rec_specs) {
                const auto eq = spec_str.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("--rec expects name=path, got " + spec_str);
                SelectorRun run;
                run.name = spec_str.substr(0, eq);
                run.recommendations = load_recommendations(spec_str.substr(eq + 1));
                runs.push_back(std::move(run));
            }
            const auto report =
                evaluate(loaded.panel, labels, t_vis, split.test, runs, eargs.seed, !no_raw_methods);
            std::filesystem::create_directories(eargs.out);
            save_report(eargs.out, report);
            std::cout << "wrote report for " << report.rows.size() << " selectors over "
                      << split.test.size() << " test entities\n";
        });

        // ------------------------------------------------------------ sweeps
        for (const bool batch_sweep : {false, true}) {
            auto* sweep = app.add_subcommand(batch_sweep ? "sweep-batch" : "sweep-seq",
                                             batch_sweep ? "accuracy per batch size"
                                                         : "regression error per sequential size");
            auto cargs = std::make_shared<CommonArgs>();
            auto scfg = std::make_shared<RecommenderConfig>();
            auto labels_p = std::make_shared<std::string>();
            auto emb_p = std::make_shared<std::string>();
            auto sizes_p = std::make_shared<std::string>(batch_sweep ? "8,16,32,64,128,256,512"
                                                                     : "16,32,64,128,256");
            auto mode_p = std::make_shared<std::string>("explicit");
            sweep->add_option("--panel", cargs->panel_dir, "panel directory")->required();
            sweep->add_option("--labels", *labels_p, "labels.csv")->required();
            sweep->add_option("--embeddings", *emb_p, "embeddings directory")->required();
            sweep->add_option("--out", cargs->out, "output CSV path")->required();
            sweep->add_option("--sizes", *sizes_p, "comma-separated sizes");
            sweep->add_option("--mode", *mode_p, "explicit|implicit");
            sweep->add_option("--hidden", scfg->hidden, "recurrent hidden units");
            sweep->add_option("--seq", scfg->seq_window, "sequential window length");
            sweep->add_option("--batch", scfg->batch, "batch size");
            sweep->add_option("--epochs", scfg->epochs, "training epochs");
            sweep->add_option("--lr", scfg->learning_rate, "learning rate");
            sweep->add_option("--lambda", scfg->lambda, "regression loss weight");
            sweep->add_option("--train-windows", scfg->train_windows, "window end times per epoch");
            sweep->add_option("--train-frac", cargs->train_frac, "train fraction of entities");
            sweep->add_option("--holdout", cargs->holdout, "held-out evaluation window length");
            sweep->add_option("--clusters", cargs->n_clusters, "cluster count");
            sweep->add_option("--seed", cargs->seed, "seed");
            sweep->callback([=]() {
                auto loaded = load_panel_dir(cargs->panel_dir);
                const int t_vis = visible_length(loaded.panel, cargs->holdout);
                prepare_panel(loaded.panel, t_vis, cargs->n_clusters, cargs->seed);
                const auto labels = load_labels_checked(*labels_p, loaded.panel);
                const auto emb = load_embeddings(*emb_p);
                const auto split = stratified_split(labels, cargs->train_frac, cargs->seed);
                RecommenderConfig cfg = *scfg;
                cfg.mode = parse_mode(*mode_p);
                cfg.seed = cargs->seed;
                const SweepInputs inputs{loaded.panel, t_vis, labels, emb.matrix, loaded.graph, split};
                const auto sizes = parse_sizes(*sizes_p);
                const auto rows = batch_sweep ? sweep_batch(inputs, cfg, sizes)
                                              : sweep_sequential(inputs, cfg, sizes);
                save_sweep(cargs->out, rows, batch_sweep ? "batch_size" : "sequential_size");
                std::cout << "wrote " << cargs->out << " (" << rows.size() << " rows)\n";
            });
        }

        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
