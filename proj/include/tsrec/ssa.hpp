#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <vector>

#include "tsrec/common.hpp"

namespace tsrec {

/// Singular spectrum decomposition: SVD of the L x (T-L+1) Hankel trajectory
/// matrix, one reconstructed component per eigentriple via diagonal
/// averaging. Components are ordered by singular value, descending, and sum
/// back to the input.
struct SsaDecomposition {
    int window = 0;
    int length = 0;
    Eigen::VectorXd singular_values;          // descending
    Eigen::MatrixXd left;                     // L x d
    Eigen::MatrixXd right;                    // K x d
    std::vector<std::vector<double>> components;  // d series of original length

    /// Sum of the given components.
    std::vector<double> reconstruct(const std::vector<int>& indices) const {
        std::vector<double> out(static_cast<std::size_t>(length), 0.0);
        for (int idx : indices)
            for (int t = 0; t < length; ++t)
                out[static_cast<std::size_t>(t)] += components[static_cast<std::size_t>(idx)][static_cast<std::size_t>(t)];
        return out;
    }

    /// Smallest k with cumulative squared singular spectrum >= energy.
    int components_for_energy(double energy) const {
        const double total = singular_values.squaredNorm();
        if (total <= 0.0) return 1;
        double acc = 0.0;
        for (int k = 0; k < singular_values.size(); ++k) {
            acc += singular_values(k) * singular_values(k);
            if (acc >= energy * total) return k + 1;
        }
        return static_cast<int>(singular_values.size());
    }
};

inline SsaDecomposition ssa_decompose(const std::vector<double>& series, int window) {
    const int t_len = static_cast<int>(series.size());
    if (window < 2 || 2 * window > t_len)
        throw ConfigError("ssa window must satisfy 2 <= L <= T/2, got L=" + std::to_string(window) +
                          " T=" + std::to_string(t_len));
    if (!all_finite(series)) throw NumericError("ssa: non-finite input");

    const int k_cols = t_len - window + 1;
    Eigen::MatrixXd traj(window, k_cols);
    for (int c = 0; c < k_cols; ++c)
        for (int r = 0; r < window; ++r) traj(r, c) = series[static_cast<std::size_t>(r + c)];

    Eigen::BDCSVD<Eigen::MatrixXd> svd(traj, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const int d = static_cast<int>(svd.singularValues().size());

    SsaDecomposition out;
    out.window = window;
    out.length = t_len;
    out.singular_values = svd.singularValues();
    out.left = svd.matrixU();
    out.right = svd.matrixV();
    out.components.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(t_len), 0.0));

    // Diagonal averaging of sigma_k * u_k * v_k^T: entry (r, c) belongs to
    // time r + c; each time index averages over its anti-diagonal.
    std::vector<int> counts(static_cast<std::size_t>(t_len), 0);
    for (int t = 0; t < t_len; ++t)
        counts[static_cast<std::size_t>(t)] = std::min({t + 1, window, k_cols, t_len - t});
    for (int k = 0; k < d; ++k) {
        auto& comp = out.components[static_cast<std::size_t>(k)];
        const double sigma = out.singular_values(k);
        for (int c = 0; c < k_cols; ++c) {
            const double sv = sigma * out.right(c, k);
            for (int r = 0; r < window; ++r) comp[static_cast<std::size_t>(r + c)] += out.left(r, k) * sv;
        }
        for (int t = 0; t < t_len; ++t) comp[static_cast<std::size_t>(t)] /= counts[static_cast<std::size_t>(t)];
    }
    return out;
}

/// Reconstruction from the top components carrying at least `energy` of the
/// squared singular spectrum. The denoised series feeding the visibility
/// graph.
inline std::vector<double> ssa_denoise(const std::vector<double>& series, int window,
                                       double energy = 0.9) {
    const auto dec = ssa_decompose(series, window);
    const int keep = dec.components_for_energy(energy);
    std::vector<int> idx(static_cast<std::size_t>(keep));
    for (int k = 0; k < keep; ++k) idx[static_cast<std::size_t>(k)] = k;
    return dec.reconstruct(idx);
}

}  // namespace tsrec
