#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "tsrec/common.hpp"

namespace tsrec {

/// Single-layer long short-term memory cell. Gate order in the stacked
/// 4U-row weight blocks: input, forget, candidate, output.
struct LstmParams {
    int input_dim = 0;
    int hidden = 0;
    Eigen::MatrixXd w_in;   // 4U x I
    Eigen::MatrixXd w_rec;  // 4U x U
    Eigen::VectorXd bias;   // 4U

    static LstmParams init(int input_dim, int hidden, Rng& rng) {
        LstmParams p;
        p.input_dim = input_dim;
        p.hidden = hidden;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
        p.w_in.resize(4 * hidden, input_dim);
        p.w_rec.resize(4 * hidden, hidden);
        p.bias = Eigen::VectorXd::Zero(4 * hidden);
        for (int r = 0; r < 4 * hidden; ++r) {
            for (int c = 0; c < input_dim; ++c) p.w_in(r, c) = rng.uniform(-scale, scale);
            for (int c = 0; c < hidden; ++c) p.w_rec(r, c) = rng.uniform(-scale, scale);
        }
        // Forget-gate bias starts at 1 so early gradients pass through.
        p.bias.segment(hidden, hidden).setConstant(1.0);
        return p;
    }

    static LstmParams zeros(int input_dim, int hidden) {
        LstmParams p;
        p.input_dim = input_dim;
        p.hidden = hidden;
        p.w_in = Eigen::MatrixXd::Zero(4 * hidden, input_dim);
        p.w_rec = Eigen::MatrixXd::Zero(4 * hidden, hidden);
        p.bias = Eigen::VectorXd::Zero(4 * hidden);
        return p;
    }
};

struct LstmGrads {
    Eigen::MatrixXd w_in;
    Eigen::MatrixXd w_rec;
    Eigen::VectorXd bias;

    static LstmGrads zeros(const LstmParams& p) {
        return {Eigen::MatrixXd::Zero(4 * p.hidden, p.input_dim),
                Eigen::MatrixXd::Zero(4 * p.hidden, p.hidden), Eigen::VectorXd::Zero(4 * p.hidden)};
    }

    void add_scaled(const LstmGrads& o, double s) {
        w_in += s * o.w_in;
        w_rec += s * o.w_rec;
        bias += s * o.bias;
    }
};

/// Forward activations kept for backpropagation through time.
struct LstmCache {
    Eigen::MatrixXd x;      // S x I input
    Eigen::MatrixXd gates;  // S x 4U post-activation (i, f, g, o)
    Eigen::MatrixXd c;      // S x U cell states
    Eigen::MatrixXd h;      // S x U hidden states
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Run the cell over a window; h and c start at zero.
inline LstmCache lstm_forward(const LstmParams& p, const Eigen::MatrixXd& x) {
    const int steps = static_cast<int>(x.rows());
    const int u = p.hidden;
    if (!x.allFinite()) throw NumericError("lstm: non-finite input window");
    LstmCache cache;
    cache.x = x;
    cache.gates.resize(steps, 4 * u);
    cache.c.resize(steps, u);
    cache.h.resize(steps, u);

    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(u);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(u);
    for (int t = 0; t < steps; ++t) {
        Eigen::VectorXd z = p.w_in * x.row(t).transpose() + p.w_rec * h_prev + p.bias;
        for (int k = 0; k < u; ++k) {
            const double gi = sigmoid(z(k));
            const double gf = sigmoid(z(u + k));
            const double gg = std::tanh(z(2 * u + k));
            const double go = sigmoid(z(3 * u + k));
            const double c_new = gf * c_prev(k) + gi * gg;
            cache.gates(t, k) = gi;
            cache.gates(t, u + k) = gf;
            cache.gates(t, 2 * u + k) = gg;
            cache.gates(t, 3 * u + k) = go;
            cache.c(t, k) = c_new;
            cache.h(t, k) = go * std::tanh(c_new);
        }
        h_prev = cache.h.row(t);
        c_prev = cache.c.row(t);
    }
    return cache;
}

inline Eigen::VectorXd lstm_last_hidden(const LstmCache& cache) {
    return cache.h.row(cache.h.rows() - 1);
}

/// Backpropagation through time. `dh` holds one gradient row per step
/// (zero rows for steps without a loss contribution).
inline LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache, const Eigen::MatrixXd& dh) {
    const int steps = static_cast<int>(cache.x.rows());
    const int u = p.hidden;
    LstmGrads g = LstmGrads::zeros(p);

    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(u);
    Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(u);
    Eigen::VectorXd dz(4 * u);
    for (int t = steps - 1; t >= 0; --t) {
        Eigen::VectorXd dht = dh.row(t).transpose() + dh_next;
        for (int k = 0; k < u; ++k) {
            const double gi = cache.gates(t, k);
            const double gf = cache.gates(t, u + k);
            const double gg = cache.gates(t, 2 * u + k);
            const double go = cache.gates(t, 3 * u + k);
            const double ct = cache.c(t, k);
            const double tc = std::tanh(ct);
            const double c_prev = t > 0 ? cache.c(t - 1, k) : 0.0;

            const double dct = dht(k) * go * (1.0 - tc * tc) + dc_next(k);
            const double dgo = dht(k) * tc;
            const double dgf = dct * c_prev;
            const double dgi = dct * gg;
            const double dgg = dct * gi;

            dz(k) = dgi * gi * (1.0 - gi);
            dz(u + k) = dgf * gf * (1.0 - gf);
            dz(2 * u + k) = dgg * (1.0 - gg * gg);
            dz(3 * u + k) = dgo * go * (1.0 - go);
            dc_next(k) = dct * gf;
        }
        g.w_in.noalias() += dz * cache.x.row(t);
        if (t > 0) g.w_rec.noalias() += dz * cache.h.row(t - 1);
        g.bias += dz;
        dh_next.noalias() = p.w_rec.transpose() * dz;
    }
    return g;
}

}  // namespace tsrec
