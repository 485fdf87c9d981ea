#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsrec/common.hpp"
#include "tsrec/node2vec.hpp"
#include "tsrec/panel.hpp"
#include "tsrec/ssa.hpp"
#include "tsrec/visibility.hpp"

namespace tsrec {

enum class Pooling { Mean, Max };

struct GraphifyConfig {
    int ssa_window = 32;
    double ssa_energy = 0.9;
    Node2VecConfig n2v;
    Pooling pooling = Pooling::Mean;

    std::uint64_t hash() const {
        std::string desc = std::to_string(ssa_window) + "/" + fmt_double(ssa_energy) + "/" +
                           fmt_double(n2v.p) + "/" + fmt_double(n2v.q) + "/" +
                           std::to_string(n2v.walks_per_node) + "/" + std::to_string(n2v.walk_length) +
                           "/" + std::to_string(n2v.dim) + "/" + std::to_string(n2v.window) + "/" +
                           std::to_string(n2v.negatives) + "/" + std::to_string(n2v.epochs) + "/" +
                           fmt_double(n2v.learning_rate) + "/" +
                           (pooling == Pooling::Mean ? "mean" : "max");
        return fnv1a(desc);
    }
};

/// Series -> SSA denoising at the energy threshold -> visibility graph ->
/// biased walks -> skip-gram -> pooled node vectors. One fixed-size vector
/// per series; a pure function of (series, config, seed).
inline Eigen::VectorXd embed_series(const std::vector<double>& series, const GraphifyConfig& cfg,
                                    std::uint64_t seed) {
    const auto denoised = ssa_denoise(series, cfg.ssa_window, cfg.ssa_energy);
    const auto graph = visibility_graph(denoised);
    const auto walks = node2vec_walks(graph, cfg.n2v, seed);
    const Eigen::MatrixXd vectors = train_embedding(walks, graph.n, cfg.n2v, seed);
    if (cfg.pooling == Pooling::Mean) return vectors.colwise().mean();
    return vectors.colwise().maxCoeff();
}

/// Per-entity embeddings over the first `t_end` observations. Entity seeds
/// derive from the entity id, so the result is independent of entity order
/// and of how many workers run.
inline Eigen::MatrixXd embed_panel(const TimeSeriesPanel& panel, const GraphifyConfig& cfg,
                                   std::uint64_t seed, int t_end = -1) {
    Eigen::MatrixXd emb(panel.n_entities(), cfg.n2v.dim);
    parallel_for(static_cast<std::size_t>(panel.n_entities()), [&](std::size_t i) {
        const auto series = panel.series(static_cast<int>(i), t_end);
        emb.row(static_cast<Eigen::Index>(i)) =
            embed_series(series, cfg, mix_seed(seed, fnv1a("embed/" + panel.entities[i])));
    });
    return emb;
}

// ---------------------------------------------------------------------------
// Persistence: embeddings.bin + embeddings.meta.json
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[8] = {'T', 'S', 'R', 'E', 'C', 'E', 'M', 'B'};

inline void save_embeddings(const std::string& dir, const Eigen::MatrixXd& emb,
                            const std::vector<std::string>& entities, std::uint64_t seed,
                            const GraphifyConfig& cfg) {
    {
        std::ofstream out(dir + "/embeddings.bin", std::ios::binary);
        if (!out) throw DataError("cannot write " + dir + "/embeddings.bin");
        out.write(kEmbeddingMagic, sizeof(kEmbeddingMagic));
        const std::uint64_t rows = static_cast<std::uint64_t>(emb.rows());
        const std::uint64_t cols = static_cast<std::uint64_t>(emb.cols());
        const std::uint64_t confhash = cfg.hash();
        out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
        out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
        out.write(reinterpret_cast<const char*>(&seed), sizeof(seed));
        out.write(reinterpret_cast<const char*>(&confhash), sizeof(confhash));
        for (Eigen::Index r = 0; r < emb.rows(); ++r)
            for (Eigen::Index c = 0; c < emb.cols(); ++c) {
                const double v = emb(r, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
    }
    nlohmann::json meta;
    meta["entities"] = entities;
    meta["rows"] = emb.rows();
    meta["dim"] = emb.cols();
    meta["seed"] = seed;
    meta["config_hash"] = cfg.hash();
    meta["ssa_window"] = cfg.ssa_window;
    meta["ssa_energy"] = cfg.ssa_energy;
    meta["walks_per_node"] = cfg.n2v.walks_per_node;
    meta["walk_length"] = cfg.n2v.walk_length;
    meta["pooling"] = cfg.pooling == Pooling::Mean ? "mean" : "max";
    std::ofstream mout(dir + "/embeddings.meta.json");
    if (!mout) throw DataError("cannot write " + dir + "/embeddings.meta.json");
    mout << meta.dump(2) << '\n';
}

struct LoadedEmbeddings {
    Eigen::MatrixXd matrix;
    std::vector<std::string> entities;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

inline LoadedEmbeddings load_embeddings(const std::string& dir) {
    std::ifstream in(dir + "/embeddings.bin", std::ios::binary);
    if (!in) throw DataError("cannot open " + dir + "/embeddings.bin");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) != 0)
        throw DataError("bad embeddings file magic: " + dir + "/embeddings.bin");
    std::uint64_t rows = 0, cols = 0;
    LoadedEmbeddings out;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    in.read(reinterpret_cast<char*>(&out.seed), sizeof(out.seed));
    in.read(reinterpret_cast<char*>(&out.config_hash), sizeof(out.config_hash));
    out.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r)
        for (std::uint64_t c = 0; c < cols; ++c) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            out.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    if (!in) throw DataError("truncated embeddings file: " + dir + "/embeddings.bin");
    std::ifstream min(dir + "/embeddings.meta.json");
    if (min) {
        nlohmann::json meta;
        min >> meta;
        if (meta.contains("entities")) out.entities = meta["entities"].get<std::vector<std::string>>();
    }
    return out;
}

}  // namespace tsrec
