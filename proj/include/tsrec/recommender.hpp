#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsrec/common.hpp"
#include "tsrec/features.hpp"
#include "tsrec/lstm.hpp"
#include "tsrec/panel.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class StrengthMode { Explicit, Implicit };
enum class Activation { LeakyRelu, Sigmoid, Tanh };

inline double activate(double x, Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return x > 0.0 ? x : 0.01 * x;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

inline double activate_grad(double x, Activation a) {
    switch (a) {
        case Activation::LeakyRelu: return x > 0.0 ? 1.0 : 0.01;
        case Activation::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

struct RecommenderConfig {
    StrengthMode mode = StrengthMode::Explicit;
    int hidden = 64;        // U
    int seq_window = 128;   // S
    int batch = 32;         // B
    int epochs = 50;
    double learning_rate = 0.01;
    Activation activation = Activation::LeakyRelu;
    double lambda = 0.5;    // regression loss weight
    int train_windows = 8;  // window end times drawn from the visible range
    double clip_norm = 5.0;
    std::uint64_t seed = 42;

    void validate() const {
        if (hidden < 1 || seq_window < 1 || batch < 1 || epochs < 0 || train_windows < 1)
            throw ConfigError("recommender: hidden/seq_window/batch/epochs/train_windows out of range");
        if (learning_rate < 0.0) throw ConfigError("recommender: learning rate must be >= 0");
        if (lambda < 0.0) throw ConfigError("recommender: lambda must be >= 0");
    }
};

inline const char* mode_name(StrengthMode m) {
    return m == StrengthMode::Explicit ? "explicit" : "implicit";
}
inline StrengthMode parse_mode(const std::string& s) {
    if (s == "explicit") return StrengthMode::Explicit;
    if (s == "implicit") return StrengthMode::Implicit;
    throw ConfigError("mode must be explicit or implicit, got " + s);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct RecommenderModel {
    RecommenderConfig cfg;
    int feat_dim = 0;    // feature channels alongside the value channel
    int graph_dim = 0;   // visibility-graph embedding dimension
    int n_types = 0;     // relation types K
    std::vector<std::string> label_space;

    LstmParams cell;
    Eigen::VectorXd strength_w;
    double strength_b = 0.0;
    Eigen::MatrixXd class_w;  // n_classes x (2U + graph_dim)
    Eigen::VectorXd class_b;
    Eigen::VectorXd reg_w;    // 2U + graph_dim
    double reg_b = 0.0;

    std::vector<double> epoch_losses;

    int n_classes() const { return static_cast<int>(label_space.size()); }
    int strength_dim() const {
        return cfg.mode == StrengthMode::Explicit ? n_types
                                                  : 2 * cfg.hidden + 2 * graph_dim + n_types;
    }
    int head_dim() const { return 2 * cfg.hidden + graph_dim; }
};

inline RecommenderModel init_recommender(const RecommenderConfig& cfg, int feat_dim, int graph_dim,
                                         int n_types, std::vector<std::string> label_space) {
    cfg.validate();
    RecommenderModel m;
    m.cfg = cfg;
    m.feat_dim = feat_dim;
    m.graph_dim = graph_dim;
    m.n_types = n_types;
    m.label_space = std::move(label_space);
    Rng rng(mix_seed(cfg.seed, fnv1a("recommender_init")));
    m.cell = LstmParams::init(1 + feat_dim, cfg.hidden, rng);
    m.strength_w.resize(m.strength_dim());
    for (int k = 0; k < m.strength_w.size(); ++k) m.strength_w(k) = rng.uniform(-0.1, 0.1);
    m.strength_b = 0.0;
    const int hd = m.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    m.class_w.resize(m.n_classes(), hd);
    for (int r = 0; r < m.class_w.rows(); ++r)
        for (int c = 0; c < hd; ++c) m.class_w(r, c) = rng.uniform(-scale, scale);
    m.class_b = Eigen::VectorXd::Zero(m.n_classes());
    m.reg_w.resize(hd);
    for (int k = 0; k < hd; ++k) m.reg_w(k) = rng.uniform(-scale, scale);
    m.reg_b = 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Relation strength functions
// ---------------------------------------------------------------------------

/// Explicit form: similarity of sequential embeddings times similarity of
/// graph embeddings times an activated affine map of the relation vector.
inline double strength_explicit(const Eigen::VectorXd& e_i, const Eigen::VectorXd& e_j,
                                const Eigen::VectorXd& g_i, const Eigen::VectorXd& g_j,
                                const Eigen::VectorXd& a_ji, const Eigen::VectorXd& w, double b,
                                Activation act) {
    return e_i.dot(e_j) * g_i.dot(g_j) * activate(w.dot(a_ji) + b, act);
}

/// Implicit form: one activated affine layer over the concatenation
/// [e_i; e_j; g_i; g_j; a_ji].
inline double strength_implicit(const Eigen::VectorXd& e_i, const Eigen::VectorXd& e_j,
                                const Eigen::VectorXd& g_i, const Eigen::VectorXd& g_j,
                                const Eigen::VectorXd& a_ji, const Eigen::VectorXd& w, double b,
                                Activation act) {
    const int u = static_cast<int>(e_i.size());
    const int d = static_cast<int>(g_i.size());
    double pre = b;
    pre += w.segment(0, u).dot(e_i);
    pre += w.segment(u, u).dot(e_j);
    pre += w.segment(2 * u, d).dot(g_i);
    pre += w.segment(2 * u + d, d).dot(g_j);
    pre += w.segment(2 * u + 2 * d, a_ji.size()).dot(a_ji);
    return activate(pre, act);
}

// ---------------------------------------------------------------------------
// Forward pass over an active set of entities at one window end time
// ---------------------------------------------------------------------------

/// Neighbor lists with materialized relation vectors, built once per graph.
struct RelationCache {
    std::vector<std::vector<std::pair<int, Eigen::VectorXd>>> neighbors;  // (j, a_ji)

    static RelationCache build(const RelationGraph& g) {
        RelationCache rc;
        rc.neighbors.resize(static_cast<std::size_t>(g.n_entities));
        for (int i = 0; i < g.n_entities; ++i)
            for (const auto& [j, types] : g.neighbors[static_cast<std::size_t>(i)]) {
                Eigen::VectorXd a = Eigen::VectorXd::Zero(g.n_types);
                for (int k : types) a(k) = 1.0;
                rc.neighbors[static_cast<std::size_t>(i)].emplace_back(j, std::move(a));
            }
        return rc;
    }
};

struct ForwardState {
    std::vector<int> active;       // entity indices in slot order
    std::vector<int> slot;         // entity -> slot, -1 when inactive
    std::vector<LstmCache> caches; // per slot
    Eigen::MatrixXd seq;           // slots x U      sequential embeddings E
    Eigen::MatrixXd rel;           // slots x U      relational embeddings R
    Eigen::MatrixXd fused;         // slots x (2U+d) [E; R; e']
    Eigen::MatrixXd logits;        // slots x C
    Eigen::VectorXd yhat;          // slots
    // strength bookkeeping per slot: neighbor slots, alphas, and the pieces
    // needed for the backward pass
    std::vector<std::vector<int>> nb_slot;
    std::vector<std::vector<const Eigen::VectorXd*>> nb_avec;
    std::vector<std::vector<double>> nb_alpha;
    std::vector<std::vector<double>> nb_pre;   // activation preimage
    std::vector<std::vector<double>> nb_sim_seq, nb_sim_graph;  // explicit-mode dot products
};

/// Sequential embedding: last hidden state of the cell over each window.
inline Eigen::MatrixXd sequential_embed(const LstmParams& cell,
                                        const std::vector<Eigen::MatrixXd>& windows) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(windows.size()), cell.hidden);
    for (std::size_t i = 0; i < windows.size(); ++i)
        e.row(static_cast<Eigen::Index>(i)) = lstm_last_hidden(lstm_forward(cell, windows[i]));
    return e;
}

/// Forward through cell, relation strengths, softmax propagation, and both
/// heads for the given active set. `windows` is indexed by entity; only
/// active entries are touched. Propagation runs for `propagate_for` (all
/// active entities when empty); every neighbor of a propagated entity must
/// itself be active so its sequential embedding exists.
inline ForwardState forward_recommender(const RecommenderModel& m,
                                        const std::vector<Eigen::MatrixXd>& windows,
                                        const Eigen::MatrixXd& graph_emb,
                                        const RelationCache& relations,
                                        const std::vector<int>& active_entities,
                                        const std::vector<int>& propagate_for = {}) {
    const int u = m.cfg.hidden;
    ForwardState fs;
    fs.active = active_entities;
    fs.slot.assign(windows.size(), -1);
    const int n_active = static_cast<int>(active_entities.size());
    for (int s = 0; s < n_active; ++s) fs.slot[static_cast<std::size_t>(active_entities[static_cast<std::size_t>(s)])] = s;

    fs.caches.resize(static_cast<std::size_t>(n_active));
    fs.seq.resize(n_active, u);
    for (int s = 0; s < n_active; ++s) {
        const int e = active_entities[static_cast<std::size_t>(s)];
        fs.caches[static_cast<std::size_t>(s)] = lstm_forward(m.cell, windows[static_cast<std::size_t>(e)]);
        fs.seq.row(s) = lstm_last_hidden(fs.caches[static_cast<std::size_t>(s)]);
    }

    fs.rel = Eigen::MatrixXd::Zero(n_active, u);
    fs.nb_slot.resize(static_cast<std::size_t>(n_active));
    fs.nb_avec.resize(static_cast<std::size_t>(n_active));
    fs.nb_alpha.resize(static_cast<std::size_t>(n_active));
    fs.nb_pre.resize(static_cast<std::size_t>(n_active));
    fs.nb_sim_seq.resize(static_cast<std::size_t>(n_active));
    fs.nb_sim_graph.resize(static_cast<std::size_t>(n_active));

    // Implicit mode: the affine preimage separates into per-entity terms
    // plus the relation-vector part, so precompute w1*e_s, w2*e_s, w3*g_s,
    // w4*g_s once per entity instead of per pair.
    Eigen::VectorXd imp_self, imp_peer;
    if (m.cfg.mode == StrengthMode::Implicit) {
        const int d = m.graph_dim;
        imp_self.resize(n_active);
        imp_peer.resize(n_active);
        for (int s = 0; s < n_active; ++s) {
            const int e = active_entities[static_cast<std::size_t>(s)];
            imp_self(s) = m.strength_w.segment(0, u).dot(fs.seq.row(s)) +
                          m.strength_w.segment(2 * u, d).dot(graph_emb.row(e));
            imp_peer(s) = m.strength_w.segment(u, u).dot(fs.seq.row(s)) +
                          m.strength_w.segment(2 * u + d, d).dot(graph_emb.row(e));
        }
    }

    std::vector<bool> wants_propagation(static_cast<std::size_t>(n_active), propagate_for.empty());
    for (int e : propagate_for) {
        const int s = fs.slot[static_cast<std::size_t>(e)];
        if (s >= 0) wants_propagation[static_cast<std::size_t>(s)] = true;
    }

    for (int s = 0; s < n_active; ++s) {
        if (!wants_propagation[static_cast<std::size_t>(s)]) continue;
        const int i = active_entities[static_cast<std::size_t>(s)];
        const auto& nbs = relations.neighbors[static_cast<std::size_t>(i)];
        if (nbs.empty()) continue;  // no relations: relational embedding stays zero
        auto& slots = fs.nb_slot[static_cast<std::size_t>(s)];
        auto& avecs = fs.nb_avec[static_cast<std::size_t>(s)];
        auto& pres = fs.nb_pre[static_cast<std::size_t>(s)];
        auto& sim_e = fs.nb_sim_seq[static_cast<std::size_t>(s)];
        auto& sim_g = fs.nb_sim_graph[static_cast<std::size_t>(s)];
        std::vector<double> g_values;
        for (const auto& [j, a_ji] : nbs) {
            const int js = fs.slot[static_cast<std::size_t>(j)];
            if (js < 0)
                throw NumericError("forward_recommender: neighbor " + std::to_string(j) +
                                   " of entity " + std::to_string(i) + " is not in the active set");
            slots.push_back(js);
            avecs.push_back(&a_ji);
            double g;
            if (m.cfg.mode == StrengthMode::Explicit) {
                const double se = fs.seq.row(s).dot(fs.seq.row(js));
                const double sg = graph_emb.row(i).dot(graph_emb.row(j));
                const double pre = m.strength_w.dot(a_ji) + m.strength_b;
                g = se * sg * activate(pre, m.cfg.activation);
                sim_e.push_back(se);
                sim_g.push_back(sg);
                pres.push_back(pre);
            } else {
                const int d = m.graph_dim;
                const double pre = m.strength_b + imp_self(s) + imp_peer(js) +
                                   m.strength_w.segment(2 * u + 2 * d, m.n_types).dot(a_ji);
                g = activate(pre, m.cfg.activation);
                pres.push_back(pre);
            }
            g_values.push_back(g);
        }
        // Softmax over the related set, numerically stabilized.
        double mx = -kInf;
        for (double g : g_values) mx = std::max(mx, g);
        double total = 0.0;
        auto& alphas = fs.nb_alpha[static_cast<std::size_t>(s)];
        for (double g : g_values) {
            alphas.push_back(std::exp(g - mx));
            total += alphas.back();
        }
        for (std::size_t k = 0; k < alphas.size(); ++k) {
            alphas[k] /= total;
            fs.rel.row(s) += alphas[k] * fs.seq.row(slots[k]);
        }
    }

    const int hd = m.head_dim();
    fs.fused.resize(n_active, hd);
    for (int s = 0; s < n_active; ++s) {
        const int i = active_entities[static_cast<std::size_t>(s)];
        fs.fused.row(s).segment(0, u) = fs.seq.row(s);
        fs.fused.row(s).segment(u, u) = fs.rel.row(s);
        fs.fused.row(s).segment(2 * u, m.graph_dim) = graph_emb.row(i);
    }
    fs.logits = (m.class_w * fs.fused.transpose()).transpose();
    fs.logits.rowwise() += m.class_b.transpose();
    fs.yhat = fs.fused * m.reg_w;
    fs.yhat.array() += m.reg_b;
    return fs;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

struct RecommenderGrads {
    LstmGrads cell;
    Eigen::VectorXd strength_w;
    double strength_b = 0.0;
    Eigen::MatrixXd class_w;
    Eigen::VectorXd class_b;
    Eigen::VectorXd reg_w;
    double reg_b = 0.0;

    static RecommenderGrads zeros(const RecommenderModel& m) {
        RecommenderGrads g;
        g.cell = LstmGrads::zeros(m.cell);
        g.strength_w = Eigen::VectorXd::Zero(m.strength_w.size());
        g.class_w = Eigen::MatrixXd::Zero(m.class_w.rows(), m.class_w.cols());
        g.class_b = Eigen::VectorXd::Zero(m.class_b.size());
        g.reg_w = Eigen::VectorXd::Zero(m.reg_w.size());
        return g;
    }

    double squared_norm() const {
        return cell.w_in.squaredNorm() + cell.w_rec.squaredNorm() + cell.bias.squaredNorm() +
               strength_w.squaredNorm() + strength_b * strength_b + class_w.squaredNorm() +
               class_b.squaredNorm() + reg_w.squaredNorm() + reg_b * reg_b;
    }
};

/// Joint loss over the batch: mean cross-entropy of the class head plus
/// lambda times mean squared error of the regression head. Gradients flow
/// through the heads, the softmax propagation, both strength forms, and back
/// through time in every active cell.
inline double recommender_loss_and_grads(const RecommenderModel& m, const ForwardState& fs,
                                         const Eigen::MatrixXd& graph_emb,
                                         const std::vector<int>& batch_entities,
                                         const std::vector<int>& labels,
                                         const Eigen::VectorXd& targets, RecommenderGrads& out) {
    const int u = m.cfg.hidden;
    const int n_active = static_cast<int>(fs.active.size());
    const double inv_batch = 1.0 / static_cast<double>(batch_entities.size());

    Eigen::MatrixXd d_fused = Eigen::MatrixXd::Zero(n_active, m.head_dim());
    double loss = 0.0;
    for (int e : batch_entities) {
        const int s = fs.slot[static_cast<std::size_t>(e)];
        const int label = labels[static_cast<std::size_t>(e)];
        // Stable log-softmax cross entropy.
        const Eigen::VectorXd logit = fs.logits.row(s);
        const double mx = logit.maxCoeff();
        const double lse = mx + std::log((logit.array() - mx).exp().sum());
        loss += inv_batch * (lse - logit(label));
        Eigen::VectorXd soft = (logit.array() - lse).exp();
        soft(label) -= 1.0;
        soft *= inv_batch;
        out.class_w.noalias() += soft * fs.fused.row(s);
        out.class_b += soft;
        d_fused.row(s) += (m.class_w.transpose() * soft).transpose();

        const double err = fs.yhat(s) - targets(e);
        loss += inv_batch * m.cfg.lambda * err * err;
        const double dy = inv_batch * m.cfg.lambda * 2.0 * err;
        out.reg_w += dy * fs.fused.row(s).transpose();
        out.reg_b += dy;
        d_fused.row(s) += dy * m.reg_w.transpose();
    }

    // Split the fused gradient into sequential / relational parts.
    Eigen::MatrixXd d_seq = d_fused.leftCols(u);
    Eigen::MatrixXd d_rel = d_fused.middleCols(u, u);

    // Implicit mode: per-pair preimage gradients collapse onto per-entity
    // accumulators, mirroring the factorized forward pass.
    Eigen::VectorXd imp_src = Eigen::VectorXd::Zero(n_active);
    Eigen::VectorXd imp_dst = Eigen::VectorXd::Zero(n_active);

    for (int s = 0; s < n_active; ++s) {
        if (fs.nb_slot[static_cast<std::size_t>(s)].empty()) continue;
        if (d_rel.row(s).cwiseAbs().maxCoeff() == 0.0 && d_seq.row(s).cwiseAbs().maxCoeff() == 0.0)
            continue;
        const auto& slots = fs.nb_slot[static_cast<std::size_t>(s)];
        const auto& alphas = fs.nb_alpha[static_cast<std::size_t>(s)];
        const std::size_t n_nb = slots.size();

        // R_i = sum_k alpha_k E_k: direct part plus softmax sensitivity.
        std::vector<double> d_alpha(n_nb);
        double dot_alpha = 0.0;
        for (std::size_t k = 0; k < n_nb; ++k) {
            d_alpha[k] = d_rel.row(s).dot(fs.seq.row(slots[k]));
            d_seq.row(slots[k]) += alphas[k] * d_rel.row(s);
            dot_alpha += alphas[k] * d_alpha[k];
        }
        for (std::size_t k = 0; k < n_nb; ++k) {
            const double dg = alphas[k] * (d_alpha[k] - dot_alpha);
            if (dg == 0.0) continue;
            const int js = slots[k];
            if (m.cfg.mode == StrengthMode::Explicit) {
                const double se = fs.nb_sim_seq[static_cast<std::size_t>(s)][k];
                const double sg = fs.nb_sim_graph[static_cast<std::size_t>(s)][k];
                const double pre = fs.nb_pre[static_cast<std::size_t>(s)][k];
                const double act = activate(pre, m.cfg.activation);
                d_seq.row(s) += dg * sg * act * fs.seq.row(js);
                d_seq.row(js) += dg * sg * act * fs.seq.row(s);
                const double d_pre = dg * se * sg * activate_grad(pre, m.cfg.activation);
                out.strength_w += d_pre * *fs.nb_avec[static_cast<std::size_t>(s)][k];
                out.strength_b += d_pre;
            } else {
                const double pre = fs.nb_pre[static_cast<std::size_t>(s)][k];
                const double d_pre = dg * activate_grad(pre, m.cfg.activation);
                const int d = m.graph_dim;
                imp_src(s) += d_pre;
                imp_dst(js) += d_pre;
                out.strength_w.segment(2 * u + 2 * d, m.n_types) +=
                    d_pre * *fs.nb_avec[static_cast<std::size_t>(s)][k];
                out.strength_b += d_pre;
            }
        }
    }

    if (m.cfg.mode == StrengthMode::Implicit) {
        const int d = m.graph_dim;
        for (int s = 0; s < n_active; ++s) {
            const int e = fs.active[static_cast<std::size_t>(s)];
            if (imp_src(s) != 0.0) {
                d_seq.row(s) += imp_src(s) * m.strength_w.segment(0, u).transpose();
                out.strength_w.segment(0, u) += imp_src(s) * fs.seq.row(s).transpose();
                out.strength_w.segment(2 * u, d) += imp_src(s) * graph_emb.row(e).transpose();
            }
            if (imp_dst(s) != 0.0) {
                d_seq.row(s) += imp_dst(s) * m.strength_w.segment(u, u).transpose();
                out.strength_w.segment(u, u) += imp_dst(s) * fs.seq.row(s).transpose();
                out.strength_w.segment(2 * u + d, d) += imp_dst(s) * graph_emb.row(e).transpose();
            }
        }
    }

    // Backpropagation through time for every touched cell.
    for (int s = 0; s < n_active; ++s) {
        if (d_seq.row(s).cwiseAbs().maxCoeff() == 0.0) continue;
        const auto& cache = fs.caches[static_cast<std::size_t>(s)];
        Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(cache.h.rows(), u);
        dh.row(cache.h.rows() - 1) = d_seq.row(s);
        const LstmGrads g = lstm_backward(m.cell, cache, dh);
        out.cell.add_scaled(g, 1.0);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Window construction
// ---------------------------------------------------------------------------

/// One standardized input window per entity ending just before `t_end`
/// (rows [t_end-S, t_end)), channel 0 the value and the rest the engineered
/// features. Scale-bound channels are z-scored inside the window; scale-free
/// ones pass through. `target` is the next value in the same standardized
/// units.
struct WindowBatch {
    int t_end = 0;
    std::vector<Eigen::MatrixXd> window;  // per entity, S x (1+F)
    Eigen::VectorXd target;               // standardized value[t_end]; 0 when t_end == T
    bool has_target = false;
};

inline WindowBatch make_windows(const TimeSeriesPanel& panel, int t_end, int seq_window) {
    if (panel.features.empty()) throw ConfigError("make_windows: panel features not computed");
    const int f_dim = static_cast<int>(panel.feature_names.size());
    const int lo = t_end - seq_window;
    if (lo < panel.feature_warmup)
        throw ConfigError("make_windows: window [" + std::to_string(lo) + ", " + std::to_string(t_end) +
                          ") reaches before the feature warmup " + std::to_string(panel.feature_warmup));
    if (t_end > panel.length()) throw ConfigError("make_windows: window end beyond series length");

    WindowBatch wb;
    wb.t_end = t_end;
    wb.has_target = t_end < panel.length();
    wb.window.resize(static_cast<std::size_t>(panel.n_entities()));
    wb.target = Eigen::VectorXd::Zero(panel.n_entities());

    int n_clusters = 1;
    for (int c : panel.cluster_id) n_clusters = std::max(n_clusters, c + 1);

    for (int i = 0; i < panel.n_entities(); ++i) {
        Eigen::MatrixXd w(seq_window, 1 + f_dim);
        for (int r = 0; r < seq_window; ++r) {
            w(r, 0) = panel.values(i, lo + r);
            for (int c = 0; c < f_dim; ++c) w(r, c + 1) = panel.features[static_cast<std::size_t>(i)](lo + r, c);
        }
        // Value-channel stats standardize the value, the moving averages,
        // and the regression target so scales stay comparable.
        const double v_mean = w.col(0).mean();
        const double v_sd = std::max(std::sqrt((w.col(0).array() - v_mean).square().sum() /
                                               std::max(1, seq_window - 1)),
                                     1e-9);
        for (int c = 0; c <= f_dim; ++c) {
            const std::string name = c == 0 ? "value" : panel.feature_names[static_cast<std::size_t>(c - 1)];
            if (name == "value" || name.rfind("ma", 0) == 0) {
                w.col(c) = (w.col(c).array() - v_mean) / v_sd;
            } else if (name == "std30" || name == "atr14") {
                w.col(c) /= v_sd;
            } else if (name == "rsi14") {
                w.col(c) /= 100.0;
            } else if (name == "obv") {
                const double o_mean = w.col(c).mean();
                const double o_sd = std::max(std::sqrt((w.col(c).array() - o_mean).square().sum() /
                                                       std::max(1, seq_window - 1)),
                                             1e-9);
                w.col(c) = (w.col(c).array() - o_mean) / o_sd;
            } else if (name == "cluster") {
                w.col(c) /= static_cast<double>(std::max(1, n_clusters - 1));
            }
            // skew30 / kurt30 / acf1_30 pass through: already scale-free.
        }
        wb.window[static_cast<std::size_t>(i)] = std::move(w);
        if (wb.has_target) wb.target(i) = (panel.values(i, t_end) - v_mean) / v_sd;
    }
    return wb;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline std::vector<int> active_with_neighbors(const std::vector<int>& batch,
                                              const RelationCache& relations) {
    std::set<int> active(batch.begin(), batch.end());
    for (int e : batch)
        for (const auto& [j, a] : relations.neighbors[static_cast<std::size_t>(e)]) active.insert(j);
    return std::vector<int>(active.begin(), active.end());
}

/// Mini-batch gradient descent over (window time, entity batch) pairs with
/// global gradient-norm clipping. Loss per epoch is logged; a non-finite
/// loss aborts and restores the last finite epoch's parameters.
inline RecommenderModel train_recommender(const TimeSeriesPanel& panel, int t_vis,
                                          const std::vector<int>& labels,
                                          const std::vector<std::string>& label_space,
                                          const Eigen::MatrixXd& graph_emb,
                                          const RelationGraph& graph,
                                          const std::vector<int>& train_entities,
                                          const RecommenderConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(labels.size()) != panel.n_entities())
        throw ConfigError("train_recommender: labels must cover all entities");
    if (panel.features.empty()) throw ConfigError("train_recommender: panel features not computed");

    RecommenderModel model = init_recommender(cfg, static_cast<int>(panel.feature_names.size()),
                                              static_cast<int>(graph_emb.cols()), graph.n_types,
                                              label_space);
    const RelationCache relations = RelationCache::build(graph);

    // Window end times: evenly spaced over the feasible range, newest first.
    const int hi = t_vis - 1;  // target value[t] must stay inside the visible region
    const int lo = panel.feature_warmup + cfg.seq_window;
    if (hi < lo)
        throw ConfigError("train_recommender: no feasible window end in [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]");
    std::vector<int> window_ends;
    for (int k = 0; k < cfg.train_windows; ++k) {
        const int t = cfg.train_windows == 1
                          ? hi
                          : hi - static_cast<int>(std::llround(static_cast<double>(k) * (hi - lo) /
                                                               (cfg.train_windows - 1)));
        if (window_ends.empty() || window_ends.back() != t) window_ends.push_back(t);
    }
    std::vector<WindowBatch> batches_by_time;
    for (int t : window_ends) batches_by_time.push_back(make_windows(panel, t, cfg.seq_window));

    Rng shuffle_rng(mix_seed(cfg.seed, fnv1a("batch_shuffle")));
    RecommenderModel snapshot = model;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int n_batches = 0;
        for (const auto& wb : batches_by_time) {
            std::vector<int> order = train_entities;
            shuffle_rng.shuffle(order);
            for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch)) {
                std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                           pos + static_cast<std::size_t>(cfg.batch),
                                                           order.size())));
                const auto active = active_with_neighbors(batch, relations);
                const auto fs =
                    forward_recommender(model, wb.window, graph_emb, relations, active, batch);
                RecommenderGrads grads = RecommenderGrads::zeros(model);
                const double loss = recommender_loss_and_grads(model, fs, graph_emb, batch, labels,
                                                               wb.target, grads);
                epoch_loss += loss;
                ++n_batches;

                double scale = 1.0;
                const double norm = std::sqrt(grads.squared_norm());
                if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
                const double lr = cfg.learning_rate * scale;
                model.cell.w_in -= lr * grads.cell.w_in;
                model.cell.w_rec -= lr * grads.cell.w_rec;
                model.cell.bias -= lr * grads.cell.bias;
                model.strength_w -= lr * grads.strength_w;
                model.strength_b -= lr * grads.strength_b;
                model.class_w -= lr * grads.class_w;
                model.class_b -= lr * grads.class_b;
                model.reg_w -= lr * grads.reg_w;
                model.reg_b -= lr * grads.reg_b;
            }
        }
        epoch_loss /= std::max(1, n_batches);
        if (!std::isfinite(epoch_loss)) {
            model = snapshot;  // divergence: keep the last finite checkpoint
            break;
        }
        model.epoch_losses.push_back(epoch_loss);
        snapshot = model;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct Recommendation {
    std::vector<int> best_class;   // per entity, index into label_space
    Eigen::VectorXd next_value;    // regression head, standardized units
};

inline Recommendation recommend(const RecommenderModel& model, const TimeSeriesPanel& panel,
                                int t_end, const Eigen::MatrixXd& graph_emb,
                                const RelationGraph& graph) {
    const auto wb = make_windows(panel, t_end, model.cfg.seq_window);
    const RelationCache relations = RelationCache::build(graph);
    std::vector<int> all(static_cast<std::size_t>(panel.n_entities()));
    for (int i = 0; i < panel.n_entities(); ++i) all[static_cast<std::size_t>(i)] = i;
    const auto fs = forward_recommender(model, wb.window, graph_emb, relations, all);
    Recommendation rec;
    rec.best_class.resize(static_cast<std::size_t>(panel.n_entities()));
    rec.next_value = fs.yhat;
    for (int i = 0; i < panel.n_entities(); ++i) {
        int arg = 0;
        for (int c = 1; c < model.n_classes(); ++c)
            if (fs.logits(i, c) > fs.logits(i, arg)) arg = c;
        rec.best_class[static_cast<std::size_t>(i)] = arg;
    }
    return rec;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace detail {

inline void write_tensor(std::ofstream& out, const std::string& name, const Eigen::MatrixXd& m) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&name_len), sizeof(name_len));
    out.write(name.data(), name_len);
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
}

inline Eigen::MatrixXd read_tensor(std::ifstream& in, std::string& name) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    name.resize(name_len);
    in.read(name.data(), name_len);
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r)
        for (std::uint64_t c = 0; c < cols; ++c) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    return m;
}

}  // namespace detail

inline void save_model(const std::string& dir, const RecommenderModel& m) {
    {
        std::ofstream out(dir + "/model.bin", std::ios::binary);
        if (!out) throw DataError("cannot write " + dir + "/model.bin");
        detail::write_tensor(out, "cell.w_in", m.cell.w_in);
        detail::write_tensor(out, "cell.w_rec", m.cell.w_rec);
        detail::write_tensor(out, "cell.bias", m.cell.bias);
        detail::write_tensor(out, "strength.w", m.strength_w);
        detail::write_tensor(out, "strength.b", Eigen::MatrixXd::Constant(1, 1, m.strength_b));
        detail::write_tensor(out, "class.w", m.class_w);
        detail::write_tensor(out, "class.b", m.class_b);
        detail::write_tensor(out, "reg.w", m.reg_w);
        detail::write_tensor(out, "reg.b", Eigen::MatrixXd::Constant(1, 1, m.reg_b));
    }
    nlohmann::json meta;
    meta["mode"] = mode_name(m.cfg.mode);
    meta["hidden"] = m.cfg.hidden;
    meta["seq_window"] = m.cfg.seq_window;
    meta["batch"] = m.cfg.batch;
    meta["epochs"] = m.cfg.epochs;
    meta["learning_rate"] = m.cfg.learning_rate;
    meta["lambda"] = m.cfg.lambda;
    meta["train_windows"] = m.cfg.train_windows;
    meta["clip_norm"] = m.cfg.clip_norm;
    meta["seed"] = m.cfg.seed;
    meta["activation"] = m.cfg.activation == Activation::LeakyRelu
                             ? "leaky_relu"
                             : (m.cfg.activation == Activation::Sigmoid ? "sigmoid" : "tanh");
    meta["feat_dim"] = m.feat_dim;
    meta["graph_dim"] = m.graph_dim;
    meta["n_types"] = m.n_types;
    meta["label_space"] = m.label_space;
    meta["epoch_losses"] = m.epoch_losses;
    std::ofstream mout(dir + "/model.meta.json");
    if (!mout) throw DataError("cannot write " + dir + "/model.meta.json");
    mout << meta.dump(2) << '\n';
}

inline RecommenderModel load_model(const std::string& dir) {
    std::ifstream min(dir + "/model.meta.json");
    if (!min) throw DataError("cannot open " + dir + "/model.meta.json");
    nlohmann::json meta;
    min >> meta;
    RecommenderModel m;
    m.cfg.mode = parse_mode(meta["mode"].get<std::string>());
    m.cfg.hidden = meta["hidden"];
    m.cfg.seq_window = meta["seq_window"];
    m.cfg.batch = meta["batch"];
    m.cfg.epochs = meta["epochs"];
    m.cfg.learning_rate = meta["learning_rate"];
    m.cfg.lambda = meta["lambda"];
    m.cfg.train_windows = meta["train_windows"];
    m.cfg.clip_norm = meta["clip_norm"];
    m.cfg.seed = meta["seed"];
    const std::string act = meta["activation"];
    m.cfg.activation = act == "leaky_relu" ? Activation::LeakyRelu
                                           : (act == "sigmoid" ? Activation::Sigmoid : Activation::Tanh);
    m.feat_dim = meta["feat_dim"];
    m.graph_dim = meta["graph_dim"];
    m.n_types = meta["n_types"];
    m.label_space = meta["label_space"].get<std::vector<std::string>>();
    m.epoch_losses = meta["epoch_losses"].get<std::vector<double>>();

    std::ifstream in(dir + "/model.bin", std::ios::binary);
    if (!in) throw DataError("cannot open " + dir + "/model.bin");
    std::map<std::string, Eigen::MatrixXd> tensors;
    while (in.peek() != std::ifstream::traits_type::eof()) {
        std::string name;
        const Eigen::MatrixXd t = detail::read_tensor(in, name);
        if (!in) throw DataError("truncated model file: " + dir + "/model.bin");
        tensors[name] = t;
    }
    m.cell.w_in = tensors.at("cell.w_in");
    m.cell.w_rec = tensors.at("cell.w_rec");
    m.cell.bias = tensors.at("cell.bias");
    m.cell.hidden = m.cfg.hidden;
    m.cell.input_dim = 1 + m.feat_dim;
    m.strength_w = tensors.at("strength.w");
    m.strength_b = tensors.at("strength.b")(0, 0);
    m.class_w = tensors.at("class.w");
    m.class_b = tensors.at("class.b");
    m.reg_w = tensors.at("reg.w");
    m.reg_b = tensors.at("reg.b")(0, 0);
    return m;
}

}  // namespace tsrec
