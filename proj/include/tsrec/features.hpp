#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tsrec/common.hpp"
#include "tsrec/panel.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Hierarchical clustering over correlation distance
// ---------------------------------------------------------------------------

/// Agglomerative average-linkage clustering with distance 1 - corr(i, j).
/// A constant series has undefined correlation; its distance to every other
/// series is defined as 1 (with a warning). Labels are in [0, n_clusters)
/// and numbered by each cluster's smallest member index.
inline std::vector<int> hierarchical_cluster(const TimeSeriesPanel& panel, int n_clusters,
                                             int t_end = -1,
                                             std::vector<std::string>* warnings = nullptr) {
    const int n = panel.n_entities();
    const int T = t_end < 0 ? panel.length() : t_end;
    if (T < 3) throw DataError("clustering needs series length >= 3");
    if (n_clusters < 1 || n_clusters > n)
        throw ConfigError("n_clusters must be in [1, N], got " + std::to_string(n_clusters));

    std::vector<std::vector<double>> series(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) series[static_cast<std::size_t>(i)] = panel.series(i, T);

    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double c = pearson(series[static_cast<std::size_t>(i)], series[static_cast<std::size_t>(j)]);
            double d;
            if (std::isnan(c)) {
                d = 1.0;
                if (warnings)
                    warnings->push_back("constant series in correlation distance: " +
                                        panel.entities[static_cast<std::size_t>(i)] + " vs " +
                                        panel.entities[static_cast<std::size_t>(j)]);
            } else {
                d = 1.0 - c;
            }
            dist(i, j) = dist(j, i) = d;
        }
    }

    // Lance-Williams average-linkage merges on the dense distance matrix.
    std::vector<std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters.push_back({i});
    std::vector<bool> alive(static_cast<std::size_t>(n), true);
    Eigen::MatrixXd d = dist;
    int active = n;
    while (active > n_clusters) {
        int bi = -1, bj = -1;
        double best = kInf;
        for (int i = 0; i < n; ++i) {
            if (!alive[static_cast<std::size_t>(i)]) continue;
            for (int j = i + 1; j < n; ++j) {
                if (!alive[static_cast<std::size_t>(j)]) continue;
                if (d(i, j) < best) {
                    best = d(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        const double si = static_cast<double>(clusters[static_cast<std::size_t>(bi)].size());
        const double sj = static_cast<double>(clusters[static_cast<std::size_t>(bj)].size());
        for (int k = 0; k < n; ++k) {
            if (!alive[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
            const double merged = (si * d(bi, k) + sj * d(bj, k)) / (si + sj);
            d(bi, k) = d(k, bi) = merged;
        }
        auto& ci = clusters[static_cast<std::size_t>(bi)];
        auto& cj = clusters[static_cast<std::size_t>(bj)];
        ci.insert(ci.end(), cj.begin(), cj.end());
        cj.clear();
        alive[static_cast<std::size_t>(bj)] = false;
        --active;
    }

    // Number clusters by smallest member index.
    std::vector<std::pair<int, int>> order;  // (min member, cluster slot)
    for (int i = 0; i < n; ++i) {
        if (!alive[static_cast<std::size_t>(i)]) continue;
        int mn = n;
        for (int m : clusters[static_cast<std::size_t>(i)]) mn = std::min(mn, m);
        order.emplace_back(mn, i);
    }
    std::sort(order.begin(), order.end());
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    for (std::size_t c = 0; c < order.size(); ++c)
        for (int m : clusters[static_cast<std::size_t>(order[c].second)])
            labels[static_cast<std::size_t>(m)] = static_cast<int>(c);
    return labels;
}

/// Default cluster count when the caller does not choose one.
inline int default_n_clusters(int n_entities) {
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_entities))));
}

// ---------------------------------------------------------------------------
// Engineered features
// ---------------------------------------------------------------------------

inline constexpr int kFeatureWarmup = 30;  // longest lookback window

namespace detail {

struct RollingStats {
    double mean = 0, stddev = 0, skew = 0, kurt = 0, acf1 = 0;
};

/// Sample moments over x[t-w+1 .. t]: unbiased std, adjusted skewness,
/// Fisher (excess) kurtosis, and lag-1 autocorrelation inside the window.
inline RollingStats window_stats(const std::vector<double>& x, int t, int w) {
    RollingStats r;
    const int lo = t - w + 1;
    const double n = w;
    double m = 0;
    for (int k = lo; k <= t; ++k) m += x[static_cast<std::size_t>(k)];
    m /= n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (int k = lo; k <= t; ++k) {
        const double dv = x[static_cast<std::size_t>(k)] - m;
        m2 += dv * dv;
        m3 += dv * dv * dv;
        m4 += dv * dv * dv * dv;
    }
    r.mean = m;
    const double var = m2 / (n - 1);
    r.stddev = std::sqrt(var);
    if (var > 1e-24) {
        const double s = std::sqrt(m2 / n);  // population std for g1
        const double g1 = (m3 / n) / (s * s * s);
        r.skew = g1 * std::sqrt(n * (n - 1)) / (n - 2);
        r.kurt = ((n + 1) * n / ((n - 1) * (n - 2) * (n - 3))) * (m4 / (var * var)) -
                 3.0 * (n - 1) * (n - 1) / ((n - 2) * (n - 3));
        // Lag-1 autocorrelation of the window against itself shifted by one.
        std::vector<double> a(x.begin() + lo, x.begin() + t);
        std::vector<double> b(x.begin() + lo + 1, x.begin() + t + 1);
        const double c = pearson(a, b);
        r.acf1 = std::isnan(c) ? 0.0 : c;
    }
    return r;
}

}  // namespace detail

/// Wilder's RSI over closes; 100 when the average loss is zero.
inline std::vector<double> rsi_wilder(const std::vector<double>& close, int period = 14) {
    const std::size_t n = close.size();
    std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
    if (n <= static_cast<std::size_t>(period)) return out;
    double avg_gain = 0, avg_loss = 0;
    for (int k = 1; k <= period; ++k) {
        const double d = close[static_cast<std::size_t>(k)] - close[static_cast<std::size_t>(k - 1)];
        avg_gain += std::max(d, 0.0);
        avg_loss += std::max(-d, 0.0);
    }
    avg_gain /= period;
    avg_loss /= period;
    auto to_rsi = [](double g, double l) {
        if (l <= 0.0) return g <= 0.0 ? 50.0 : 100.0;
        return 100.0 - 100.0 / (1.0 + g / l);
    };
    out[static_cast<std::size_t>(period)] = to_rsi(avg_gain, avg_loss);
    for (std::size_t t = static_cast<std::size_t>(period) + 1; t < n; ++t) {
        const double d = close[t] - close[t - 1];
        avg_gain = (avg_gain * (period - 1) + std::max(d, 0.0)) / period;
        avg_loss = (avg_loss * (period - 1) + std::max(-d, 0.0)) / period;
        out[t] = to_rsi(avg_gain, avg_loss);
    }
    return out;
}

/// Wilder's average true range from high/low/close.
inline std::vector<double> atr_wilder(const std::vector<double>& high, const std::vector<double>& low,
                                      const std::vector<double>& close, int period = 14) {
    const std::size_t n = close.size();
    std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
    if (n <= static_cast<std::size_t>(period)) return out;
    std::vector<double> tr(n, 0.0);
    tr[0] = high[0] - low[0];
    for (std::size_t t = 1; t < n; ++t)
        tr[t] = std::max({high[t] - low[t], std::abs(high[t] - close[t - 1]),
                          std::abs(low[t] - close[t - 1])});
    double atr = 0;
    for (int k = 1; k <= period; ++k) atr += tr[static_cast<std::size_t>(k)];
    atr /= period;
    out[static_cast<std::size_t>(period)] = atr;
    for (std::size_t t = static_cast<std::size_t>(period) + 1; t < n; ++t) {
        atr = (atr * (period - 1) + tr[t]) / period;
        out[t] = atr;
    }
    return out;
}

/// On-balance volume.
inline std::vector<double> obv(const std::vector<double>& close, const std::vector<double>& volume) {
    std::vector<double> out(close.size(), 0.0);
    for (std::size_t t = 1; t < close.size(); ++t) {
        double delta = 0.0;
        if (close[t] > close[t - 1]) delta = volume[t];
        else if (close[t] < close[t - 1]) delta = -volume[t];
        out[t] = out[t - 1] + delta;
    }
    return out;
}

struct FeatureSet {
    std::vector<std::string> names;
    std::vector<Eigen::MatrixXd> per_entity;  // T x F, NaN before warmup
    int warmup = kFeatureWarmup;
};

/// Moving averages over 5/10/15/30 (the 30-day one doubles as the rolling
/// mean), rolling std / skewness / kurtosis / lag-1 autocorrelation over a
/// 30-day window, trading indicators when high/low/volume are present, and
/// the cluster id as the final column. Valid from index `warmup` on.
inline FeatureSet compute_features(const TimeSeriesPanel& panel, int t_end = -1) {
    const int T = t_end < 0 ? panel.length() : t_end;
    if (T <= kFeatureWarmup)
        throw DataError("feature computation needs series length > " + std::to_string(kFeatureWarmup) +
                        ", got " + std::to_string(T));
    const bool clustered = !panel.cluster_id.empty() && panel.cluster_id[0] >= 0;

    FeatureSet fs;
    fs.names = {"ma5", "ma10", "ma15", "ma30", "std30", "skew30", "kurt30", "acf1_30"};
    if (panel.has_ohlcv) {
        fs.names.push_back("rsi14");
        fs.names.push_back("atr14");
        fs.names.push_back("obv");
    }
    if (clustered) fs.names.push_back("cluster");
    const int F = static_cast<int>(fs.names.size());

    fs.per_entity.assign(static_cast<std::size_t>(panel.n_entities()), Eigen::MatrixXd());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    parallel_for(static_cast<std::size_t>(panel.n_entities()), [&](std::size_t ei) {
        const int i = static_cast<int>(ei);
        const auto x = panel.series(i, T);
        Eigen::MatrixXd f = Eigen::MatrixXd::Constant(T, F, nan);

        std::vector<double> rsi, atr, obv_series;
        if (panel.has_ohlcv) {
            std::vector<double> hi(static_cast<std::size_t>(T)), lo(static_cast<std::size_t>(T)),
                vol(static_cast<std::size_t>(T));
            for (int t = 0; t < T; ++t) {
                hi[static_cast<std::size_t>(t)] = panel.high(i, t);
                lo[static_cast<std::size_t>(t)] = panel.low(i, t);
                vol[static_cast<std::size_t>(t)] = panel.volume(i, t);
            }
            rsi = rsi_wilder(x);
            atr = atr_wilder(hi, lo, x);
            obv_series = obv(x, vol);
        }

        const int windows[4] = {5, 10, 15, 30};
        for (int t = kFeatureWarmup; t < T; ++t) {
            int col = 0;
            for (int w : windows) {
                double s = 0;
                for (int k = t - w + 1; k <= t; ++k) s += x[static_cast<std::size_t>(k)];
                f(t, col++) = s / w;
            }
            const auto st = detail::window_stats(x, t, 30);
            f(t, col++) = st.stddev;
            f(t, col++) = st.skew;
            f(t, col++) = st.kurt;
            f(t, col++) = st.acf1;
            if (panel.has_ohlcv) {
                f(t, col++) = rsi[static_cast<std::size_t>(t)];
                f(t, col++) = atr[static_cast<std::size_t>(t)];
                f(t, col++) = obv_series[static_cast<std::size_t>(t)];
            }
            if (clustered) f(t, col++) = panel.cluster_id[ei];
        }
        fs.per_entity[ei] = std::move(f);
    });
    return fs;
}

/// Fill panel.features / feature_names / feature_warmup in place.
inline void apply_features(TimeSeriesPanel& panel, int t_end = -1) {
    auto fs = compute_features(panel, t_end);
    panel.features = std::move(fs.per_entity);
    panel.feature_names = std::move(fs.names);
    panel.feature_warmup = fs.warmup;
}

}  // namespace tsrec
