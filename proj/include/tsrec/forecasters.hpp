#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsrec/common.hpp"
#include "tsrec/gbt.hpp"
#include "tsrec/lstm.hpp"

namespace tsrec {

// ---------------------------------------------------------------------------
// Method identifiers
// ---------------------------------------------------------------------------

enum class Kind {
    Naive,
    Mean,
    WhiteNoise,
    Ar,
    Ma,
    RwDrift,
    RwNoDrift,
    Arima,
    Ses,
    Holt,
    DampedHolt,
    HoltWinters,
    GbtLags,
    Rnn,
};

struct MethodId {
    Kind kind = Kind::Naive;
    int p = 0, d = 0, q = 0;
    int period = 0;  // HoltWinters seasonal period

    std::string name() const {
        switch (kind) {
            case Kind::Naive: return "naive";
            case Kind::Mean: return "mean";
            case Kind::WhiteNoise: return "white_noise";
            case Kind::Ar: return "ar(" + std::to_string(p) + ")";
            case Kind::Ma: return "ma(" + std::to_string(q) + ")";
            case Kind::RwDrift: return "rw_drift";
            case Kind::RwNoDrift: return "rw_no_drift";
            case Kind::Arima:
                return "arima(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")";
            case Kind::Ses: return "ses";
            case Kind::Holt: return "holt";
            case Kind::DampedHolt: return "damped_holt";
            case Kind::HoltWinters: return "holt_winters(" + std::to_string(period) + ")";
            case Kind::GbtLags: return "gbt_lags";
            case Kind::Rnn: return "rnn";
        }
        return "?";
    }

    bool operator==(const MethodId& o) const {
        return kind == o.kind && p == o.p && d == o.d && q == o.q && period == o.period;
    }
};

inline MethodId make_ar(int p) { return {Kind::Ar, p, 0, 0, 0}; }
inline MethodId make_ma(int q) { return {Kind::Ma, 0, 0, q, 0}; }
inline MethodId make_arima(int p, int d, int q) { return {Kind::Arima, p, d, q, 0}; }
inline MethodId make_holt_winters(int m) { return {Kind::HoltWinters, 0, 0, 0, m}; }

inline MethodId parse_method(const std::string& s) {
    auto args = [&](std::size_t open) {
        std::vector<int> out;
        std::size_t pos = open + 1;
        while (pos < s.size() && s[pos] != ')') {
            std::size_t next = s.find_first_of(",)", pos);
            out.push_back(std::stoi(s.substr(pos, next - pos)));
            pos = s[next] == ',' ? next + 1 : next;
        }
        return out;
    };
    if (s == "naive") return {Kind::Naive};
    if (s == "mean") return {Kind::Mean};
    if (s == "white_noise") return {Kind::WhiteNoise};
    if (s == "rw_drift") return {Kind::RwDrift};
    if (s == "rw_no_drift") return {Kind::RwNoDrift};
    if (s == "ses") return {Kind::Ses};
    if (s == "holt") return {Kind::Holt};
    if (s == "damped_holt") return {Kind::DampedHolt};
    if (s == "gbt_lags") return {Kind::GbtLags};
    if (s == "rnn") return {Kind::Rnn};
    if (s.rfind("ar(", 0) == 0) return make_ar(args(2).at(0));
    if (s.rfind("ma(", 0) == 0) return make_ma(args(2).at(0));
    if (s.rfind("arima(", 0) == 0) {
        const auto a = args(5);
        return make_arima(a.at(0), a.at(1), a.at(2));
    }
    if (s.rfind("holt_winters(", 0) == 0) return make_holt_winters(args(12).at(0));
    throw ConfigError("unknown forecasting method: " + s);
}

/// The canonical candidate set (14 classes). Orders are fixed so the label
/// space stays finite; arima(2,1,2) stands in for the general ARIMA entry.
inline std::vector<MethodId> default_method_space() {
    return {
        {Kind::Naive},      {Kind::Mean},       {Kind::WhiteNoise},     make_ar(1),
        make_ma(1),         {Kind::RwDrift},    {Kind::RwNoDrift},      make_arima(2, 1, 2),
        {Kind::Ses},        {Kind::Holt},       {Kind::DampedHolt},     make_holt_winters(7),
        {Kind::GbtLags},    {Kind::Rnn},
    };
}

inline constexpr int kGbtTrees = 100;
inline constexpr int kGbtDepth = 3;
inline constexpr double kGbtLearningRate = 0.1;
inline constexpr int kGbtLags = 7;
inline constexpr int kRnnHidden = 64;
inline constexpr int kRnnWindow = 32;
inline constexpr int kRnnEpochs = 4;
inline constexpr double kRnnLearningRate = 0.05;

/// Count of optimized structural parameters (variance excluded).
inline int nominal_params(const MethodId& m) {
    switch (m.kind) {
        case Kind::Naive:
        case Kind::RwNoDrift: return 0;
        case Kind::Mean:
        case Kind::WhiteNoise:
        case Kind::RwDrift:
        case Kind::Ses: return 1;
        case Kind::Ar: return m.p + 1;
        case Kind::Ma: return m.q + 1;
        case Kind::Arima: return m.p + m.q + 1;
        case Kind::Holt: return 2;
        case Kind::DampedHolt:
        case Kind::HoltWinters: return 3;
        case Kind::GbtLags: return kGbtTrees * 8;  // depth-3 leaves per tree
        case Kind::Rnn: return 4 * kRnnHidden * (1 + kRnnHidden + 1) + kRnnHidden + 1;
    }
    return 0;
}

inline int min_train_length(const MethodId& m) {
    switch (m.kind) {
        case Kind::Naive:
        case Kind::Mean:
        case Kind::WhiteNoise:
        case Kind::RwNoDrift: return 2;
        case Kind::RwDrift: return 3;
        case Kind::Ar: return m.p + 3;
        case Kind::Ma: return m.q + 3;
        case Kind::Arima: return m.p + m.d + m.q + 3;
        case Kind::Ses: return 3;
        case Kind::Holt:
        case Kind::DampedHolt: return 4;
        case Kind::HoltWinters: return 2 * m.period;
        case Kind::GbtLags: return kGbtLags + 3;
        case Kind::Rnn: return 10;
    }
    return 2;
}

// ---------------------------------------------------------------------------
// Fitted state
// ---------------------------------------------------------------------------

/// Fitted method state plus the Gaussian likelihood summary used by the
/// information criteria. Only the fields a given method needs are filled.
struct FittedForecaster {
    MethodId method;

    double sigma2 = 0.0;       // residual variance of one-step in-sample errors
    double loglik = 0.0;       // Gaussian log-likelihood from those residuals
    int d_q = 0;               // structural parameter count
    int n_eff = 0;             // residual count (likelihood sample size)
    int train_length = 0;
    bool converged = true;
    bool perfect_fit = false;  // sigma2 == 0

    // Closed-form / linear states
    double last = 0.0;
    double level = 0.0;
    double trend = 0.0;
    double drift = 0.0;
    double constant = 0.0;
    std::vector<double> ar_coef, ma_coef;
    double alpha = 0.0, beta = 0.0, gamma = 0.0, damping = 1.0;
    std::vector<double> season;      // HoltWinters, length = period
    std::vector<double> y_tail;      // recent observations (AR / ARIMA / GBT recursions)
    std::vector<double> eps_tail;    // recent innovations (MA / ARIMA)

    GbtModel gbt;

    LstmParams rnn_cell;
    Eigen::VectorXd rnn_w;
    double rnn_b = 0.0;
    double rnn_mu = 0.0, rnn_sd = 1.0;
    Eigen::VectorXd rnn_h, rnn_c;
    double rnn_last = 0.0;  // last standardized observation
};

// ---------------------------------------------------------------------------
// Nelder-Mead simplex for the conditional-sum-of-squares fits
// ---------------------------------------------------------------------------

namespace detail {

struct SimplexResult {
    std::vector<double> x;
    double value = kInf;
    bool converged = false;
};

inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x0, const std::vector<double>& step,
                                 double tol = 1e-8, int max_iter = 500) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    SimplexResult res;
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        std::vector<std::size_t> ord(n + 1);
        for (std::size_t i = 0; i <= n; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = ord[0], worst = ord[n], second = ord[n - 1];
        // Mixed absolute/relative spread on the objective.
        if (vals[worst] - vals[best] <= tol * (1.0 + std::abs(vals[best]))) {
            res.converged = true;
            break;
        }
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k] / static_cast<double>(n);
        }
        auto combine = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t k = 0; k < n; ++k)
                p[k] = centroid[k] + coef * (pts[worst][k] - centroid[k]);
            return p;
        };
        const auto refl = combine(-1.0);
        const double f_refl = f(refl);
        if (f_refl < vals[best]) {
            const auto expa = combine(-2.0);
            const double f_expa = f(expa);
            if (f_expa < f_refl) {
                pts[worst] = expa;
                vals[worst] = f_expa;
            } else {
                pts[worst] = refl;
                vals[worst] = f_refl;
            }
        } else if (f_refl < vals[second]) {
            pts[worst] = refl;
            vals[worst] = f_refl;
        } else {
            const auto contr = combine(f_refl < vals[worst] ? -0.5 : 0.5);
            const double f_contr = f(contr);
            if (f_contr < std::min(f_refl, vals[worst])) {
                pts[worst] = contr;
                vals[worst] = f_contr;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t k = 0; k < n; ++k)
                        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (vals[i] < vals[best]) best = i;
    res.x = pts[best];
    res.value = vals[best];
    return res;
}

inline std::vector<double> difference(const std::vector<double>& y, int d) {
    std::vector<double> z = y;
    for (int k = 0; k < d; ++k) {
        std::vector<double> next(z.size() - 1);
        for (std::size_t t = 1; t < z.size(); ++t) next[t - 1] = z[t] - z[t - 1];
        z = std::move(next);
    }
    return z;
}

/// CSS innovations for an ARMA(p,q) with constant on z; presample values and
/// innovations are treated as zero. Returns the innovation sequence; entries
/// before index p are zero by convention.
inline std::vector<double> arma_innovations(const std::vector<double>& z, double c,
                                            const std::vector<double>& phi,
                                            const std::vector<double>& theta) {
    const std::size_t n = z.size();
    const std::size_t p = phi.size(), q = theta.size();
    std::vector<double> eps(n, 0.0);
    for (std::size_t t = p; t < n; ++t) {
        double pred = c;
        for (std::size_t i = 0; i < p; ++i) pred += phi[i] * z[t - 1 - i];
        for (std::size_t j = 0; j < q; ++j)
            if (t >= j + 1) pred += theta[j] * eps[t - 1 - j];
        eps[t] = z[t] - pred;
        if (!std::isfinite(eps[t])) {
            std::fill(eps.begin(), eps.end(), 1e150);
            break;
        }
    }
    return eps;
}

inline double arma_css(const std::vector<double>& z, double c, const std::vector<double>& phi,
                       const std::vector<double>& theta) {
    const auto eps = arma_innovations(z, c, phi, theta);
    double s = 0.0;
    for (std::size_t t = phi.size(); t < eps.size(); ++t) s += eps[t] * eps[t];
    return std::isfinite(s) ? s : 1e300;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One-step-ahead prediction paths (frozen parameters, actual observations)
// ---------------------------------------------------------------------------

/// Predictions y_hat[t] for t in [start, n) given the observations before t,
/// with the model's fitted parameters held fixed. Serves double duty: the
/// in-sample residuals at fit time and rolling-origin evaluation afterwards.
inline std::pair<int, std::vector<double>> one_step_path(const FittedForecaster& f,
                                                         const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    const MethodId& m = f.method;
    std::vector<double> pred;
    int start = 0;
    switch (m.kind) {
        case Kind::Naive:
        case Kind::RwNoDrift: {
            start = 1;
            for (int t = 1; t < n; ++t) pred.push_back(y[static_cast<std::size_t>(t - 1)]);
            break;
        }
        case Kind::RwDrift: {
            start = 1;
            for (int t = 1; t < n; ++t) pred.push_back(y[static_cast<std::size_t>(t - 1)] + f.drift);
            break;
        }
        case Kind::Mean:
        case Kind::WhiteNoise: {
            start = 0;
            pred.assign(static_cast<std::size_t>(n), f.level);
            break;
        }
        case Kind::Ar: {
            start = m.p;
            for (int t = m.p; t < n; ++t) {
                double v = f.constant;
                for (int i = 0; i < m.p; ++i) v += f.ar_coef[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(t - 1 - i)];
                pred.push_back(v);
            }
            break;
        }
        case Kind::Ma:
        case Kind::Arima: {
            const int d = m.kind == Kind::Ma ? 0 : m.d;
            const int p = m.kind == Kind::Ma ? 0 : m.p;
            const auto z = detail::difference(y, d);
            const auto eps = detail::arma_innovations(z, f.constant, f.ar_coef, f.ma_coef);
            start = d + p;
            for (int t = start; t < n; ++t) {
                const std::size_t zt = static_cast<std::size_t>(t - d);
                double base = 0.0;
                if (d == 1) base = y[static_cast<std::size_t>(t - 1)];
                else if (d == 2) base = 2 * y[static_cast<std::size_t>(t - 1)] - y[static_cast<std::size_t>(t - 2)];
                pred.push_back(base + (z[zt] - eps[zt]));
            }
            break;
        }
        case Kind::Ses: {
            start = 1;
            double level = y[0];
            for (int t = 1; t < n; ++t) {
                pred.push_back(level);
                level = f.alpha * y[static_cast<std::size_t>(t)] + (1.0 - f.alpha) * level;
            }
            break;
        }
        case Kind::Holt:
        case Kind::DampedHolt: {
            start = 2;
            const double phi = m.kind == Kind::Holt ? 1.0 : f.damping;
            double level = y[0], trend = y[1] - y[0];
            // Advance once so states reflect y[1] before the first prediction.
            {
                const double prev = level;
                level = f.alpha * y[1] + (1.0 - f.alpha) * (level + phi * trend);
                trend = f.beta * (level - prev) + (1.0 - f.beta) * phi * trend;
            }
            for (int t = 2; t < n; ++t) {
                pred.push_back(level + phi * trend);
                const double prev = level;
                level = f.alpha * y[static_cast<std::size_t>(t)] + (1.0 - f.alpha) * (level + phi * trend);
                trend = f.beta * (level - prev) + (1.0 - f.beta) * phi * trend;
            }
            break;
        }
        case Kind::HoltWinters: {
            const int period = m.period;
            start = 2 * period;
            double mean1 = 0, mean2 = 0;
            for (int k = 0; k < period; ++k) {
                mean1 += y[static_cast<std::size_t>(k)];
                mean2 += y[static_cast<std::size_t>(period + k)];
            }
            mean1 /= period;
            mean2 /= period;
            std::vector<double> s(static_cast<std::size_t>(period));
            for (int k = 0; k < period; ++k) s[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k)] - mean1;
            double level = mean1, trend = (mean2 - mean1) / period;
            // Warm the states through the first two seasons without scoring.
            std::vector<double> shist = s;
            auto season_at = [&](int t) -> double& { return shist[static_cast<std::size_t>(t % period)]; };
            for (int t = period; t < n; ++t) {
                const double s_old = season_at(t);
                const double yhat = level + trend + s_old;
                if (t >= start) pred.push_back(yhat);
                const double prev = level;
                level = f.alpha * (y[static_cast<std::size_t>(t)] - s_old) + (1.0 - f.alpha) * (level + trend);
                trend = f.beta * (level - prev) + (1.0 - f.beta) * trend;
                season_at(t) = f.gamma * (y[static_cast<std::size_t>(t)] - prev - trend) + (1.0 - f.gamma) * s_old;
            }
            break;
        }
        case Kind::GbtLags: {
            start = kGbtLags;
            std::vector<double> x(kGbtLags);
            for (int t = kGbtLags; t < n; ++t) {
                for (int l = 0; l < kGbtLags; ++l) x[static_cast<std::size_t>(l)] = y[static_cast<std::size_t>(t - 1 - l)];
                pred.push_back(f.gbt.predict(x));
            }
            break;
        }
        case Kind::Rnn: {
            start = 1;
            Eigen::MatrixXd x(n, 1);
            for (int t = 0; t < n; ++t) x(t, 0) = (y[static_cast<std::size_t>(t)] - f.rnn_mu) / f.rnn_sd;
            const auto cache = lstm_forward(f.rnn_cell, x);
            for (int t = 1; t < n; ++t) {
                const double z = f.rnn_w.dot(cache.h.row(t - 1)) + f.rnn_b;
                pred.push_back(f.rnn_mu + f.rnn_sd * z);
            }
            break;
        }
    }
    return {start, pred};
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace detail {

inline void finalize_likelihood(FittedForecaster& f, const std::vector<double>& y) {
    const auto [start, pred] = one_step_path(f, y);
    // Common burn-in: every method with a modest warmup scores the same
    // residual window, keeping information criteria comparable across
    // methods with different lag depths.
    const int n = static_cast<int>(y.size());
    const int burn = std::max(start, std::min(30, n / 2));
    double sse = 0.0;
    int n_res = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const int t = start + static_cast<int>(k);
        if (t < burn) continue;
        const double r = y[static_cast<std::size_t>(t)] - pred[k];
        sse += r * r;
        ++n_res;
    }
    f.n_eff = n_res;
    f.sigma2 = n_res > 0 ? sse / n_res : 0.0;
    if (f.sigma2 <= 0.0) {
        f.perfect_fit = true;
        f.sigma2 = 0.0;
        f.loglik = kInf;
    } else {
        // Likelihood is evaluated at the full training length so models with
        // different warmups stay comparable under the information criteria.
        f.loglik = -0.5 * f.train_length * (std::log(2.0 * M_PI * f.sigma2) + 1.0);
    }
}

inline double ets_sse(const FittedForecaster& f, const std::vector<double>& y) {
    const auto [start, pred] = one_step_path(f, y);
    double sse = 0.0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const double r = y[static_cast<std::size_t>(start) + k] - pred[k];
        sse += r * r;
    }
    return sse;
}

// Allocation-free objective loops for the grid search; they accumulate the
// same sums in the same order as one_step_path, so results are bit-identical.

inline double ses_sse(const std::vector<double>& y, double alpha) {
    double level = y[0], sse = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        const double r = y[t] - level;
        sse += r * r;
        level = alpha * y[t] + (1.0 - alpha) * level;
    }
    return sse;
}

inline double holt_sse(const std::vector<double>& y, double alpha, double beta, double phi) {
    double level = y[0], trend = y[1] - y[0], sse = 0.0;
    {
        const double prev = level;
        level = alpha * y[1] + (1.0 - alpha) * (level + phi * trend);
        trend = beta * (level - prev) + (1.0 - beta) * phi * trend;
    }
    for (std::size_t t = 2; t < y.size(); ++t) {
        const double r = y[t] - (level + phi * trend);
        sse += r * r;
        const double prev = level;
        level = alpha * y[t] + (1.0 - alpha) * (level + phi * trend);
        trend = beta * (level - prev) + (1.0 - beta) * phi * trend;
    }
    return sse;
}

inline double hw_sse(const std::vector<double>& y, int period, double alpha, double beta,
                     double gamma, std::vector<double>& season_buf) {
    double mean1 = 0, mean2 = 0;
    for (int k = 0; k < period; ++k) {
        mean1 += y[static_cast<std::size_t>(k)];
        mean2 += y[static_cast<std::size_t>(period + k)];
    }
    mean1 /= period;
    mean2 /= period;
    season_buf.resize(static_cast<std::size_t>(period));
    for (int k = 0; k < period; ++k) season_buf[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k)] - mean1;
    double level = mean1, trend = (mean2 - mean1) / period, sse = 0.0;
    const int n = static_cast<int>(y.size());
    for (int t = period; t < n; ++t) {
        double& s_slot = season_buf[static_cast<std::size_t>(t % period)];
        const double s_old = s_slot;
        if (t >= 2 * period) {
            const double r = y[static_cast<std::size_t>(t)] - (level + trend + s_old);
            sse += r * r;
        }
        const double prev = level;
        level = alpha * (y[static_cast<std::size_t>(t)] - s_old) + (1.0 - alpha) * (level + trend);
        trend = beta * (level - prev) + (1.0 - beta) * trend;
        s_slot = gamma * (y[static_cast<std::size_t>(t)] - prev - trend) + (1.0 - gamma) * s_old;
    }
    return sse;
}

/// Coarse grid at `coarse` resolution over each axis range, then one fine
/// pass at `fine` resolution around the best cell.
inline std::vector<double> grid_search(
    const std::function<double(const std::vector<double>&)>& objective,
    const std::vector<std::pair<double, double>>& ranges, double coarse = 0.05, double fine = 0.01) {
    const std::size_t dims = ranges.size();
    auto axis_values = [&](std::size_t k, double center, double step, double halfwidth) {
        std::vector<double> vals;
        const double lo = std::max(ranges[k].first, center - halfwidth);
        const double hi = std::min(ranges[k].second, center + halfwidth);
        for (double v = lo; v <= hi + 1e-12; v += step) vals.push_back(std::min(v, ranges[k].second));
        return vals;
    };
    auto sweep = [&](const std::vector<std::vector<double>>& axes) {
        std::vector<std::size_t> idx(dims, 0);
        std::vector<double> best;
        double best_val = kInf;
        while (true) {
            std::vector<double> x(dims);
            for (std::size_t k = 0; k < dims; ++k) x[k] = axes[k][idx[k]];
            const double v = objective(x);
            if (v < best_val) {
                best_val = v;
                best = x;
            }
            std::size_t k = 0;
            while (k < dims && ++idx[k] == axes[k].size()) {
                idx[k] = 0;
                ++k;
            }
            if (k == dims) break;
        }
        return best;
    };
    std::vector<std::vector<double>> coarse_axes;
    for (std::size_t k = 0; k < dims; ++k)
        coarse_axes.push_back(axis_values(k, 0.5 * (ranges[k].first + ranges[k].second), coarse,
                                          0.5 * (ranges[k].second - ranges[k].first)));
    const auto best_coarse = sweep(coarse_axes);
    std::vector<std::vector<double>> fine_axes;
    for (std::size_t k = 0; k < dims; ++k) fine_axes.push_back(axis_values(k, best_coarse[k], fine, coarse));
    return sweep(fine_axes);
}

}  // namespace detail

/// Fit a forecasting method. Closed-form where possible; conditional sum of
/// squares with a simplex search for the ARMA family; grid search for the
/// smoothing family; boosted trees and the recurrent net for the learners.
/// Deterministic under `seed` for the stochastic fits.
inline FittedForecaster fit(const MethodId& method, const std::vector<double>& y,
                            std::uint64_t seed = 0) {
    const int n = static_cast<int>(y.size());
    if (n < min_train_length(method))
        throw DataError(method.name() + " needs at least " + std::to_string(min_train_length(method)) +
                        " observations, got " + std::to_string(n));
    if (!all_finite(y)) throw NumericError(method.name() + ": training series has non-finite values");

    FittedForecaster f;
    f.method = method;
    f.d_q = nominal_params(method);
    f.train_length = n;
    f.last = y[static_cast<std::size_t>(n - 1)];

    switch (method.kind) {
        case Kind::Naive:
        case Kind::RwNoDrift:
            break;
        case Kind::Mean:
        case Kind::WhiteNoise:
            f.level = mean_of(y);
            break;
        case Kind::RwDrift: {
            double s = 0.0;
            for (int t = 1; t < n; ++t) s += y[static_cast<std::size_t>(t)] - y[static_cast<std::size_t>(t - 1)];
            f.drift = s / (n - 1);
            break;
        }
        case Kind::Ar: {
            const int p = method.p;
            const int rows = n - p;
            Eigen::MatrixXd x(rows, p + 1);
            Eigen::VectorXd target(rows);
            for (int r = 0; r < rows; ++r) {
                x(r, 0) = 1.0;
                for (int i = 0; i < p; ++i) x(r, i + 1) = y[static_cast<std::size_t>(p + r - 1 - i)];
                target(r) = y[static_cast<std::size_t>(p + r)];
            }
            Eigen::VectorXd beta = x.colPivHouseholderQr().solve(target);
            f.constant = beta(0);
            f.ar_coef.assign(beta.data() + 1, beta.data() + 1 + p);
            f.y_tail.assign(y.end() - p, y.end());
            break;
        }
        case Kind::Ma:
        case Kind::Arima: {
            const int d = method.kind == Kind::Ma ? 0 : method.d;
            const int p = method.kind == Kind::Ma ? 0 : method.p;
            const int q = method.q;
            const auto z = detail::difference(y, d);
            auto unpack = [&](const std::vector<double>& x) {
                const double c = x[0];
                std::vector<double> phi(x.begin() + 1, x.begin() + 1 + p);
                std::vector<double> theta(x.begin() + 1 + p, x.end());
                return std::make_tuple(c, phi, theta);
            };
            const auto objective = [&](const std::vector<double>& x) {
                const auto [c, phi, theta] = unpack(x);
                return detail::arma_css(z, c, phi, theta);
            };
            std::vector<double> x0(static_cast<std::size_t>(1 + p + q), 0.0);
            std::vector<double> step(x0.size(), 0.25);
            step[0] = 0.5 * std::max(1.0, std::abs(mean_of(z)) + sample_stddev(z));
            const auto res = detail::nelder_mead(objective, x0, step);
            std::tie(f.constant, f.ar_coef, f.ma_coef) = unpack(res.x);
            f.converged = res.converged;
            const auto eps = detail::arma_innovations(z, f.constant, f.ar_coef, f.ma_coef);
            const int keep_eps = std::max(q, 1);
            f.eps_tail.assign(eps.end() - std::min<std::size_t>(eps.size(), static_cast<std::size_t>(keep_eps)), eps.end());
            const int keep_y = std::max(p + d, d + 1);
            f.y_tail.assign(y.end() - std::min<std::size_t>(y.size(), static_cast<std::size_t>(keep_y)), y.end());
            break;
        }
        case Kind::Ses: {
            const auto best = detail::grid_search(
                [&](const std::vector<double>& v) { return detail::ses_sse(y, v[0]); }, {{0.0, 1.0}});
            f.alpha = best[0];
            double level = y[0];
            for (int t = 1; t < n; ++t) level = f.alpha * y[static_cast<std::size_t>(t)] + (1.0 - f.alpha) * level;
            f.level = level;
            break;
        }
        case Kind::Holt:
        case Kind::DampedHolt: {
            const bool damped = method.kind == Kind::DampedHolt;
            std::vector<std::pair<double, double>> ranges = {{0.0, 1.0}, {0.0, 1.0}};
            if (damped) ranges.push_back({0.8, 0.98});
            const auto best = detail::grid_search(
                [&](const std::vector<double>& v) {
                    return detail::holt_sse(y, v[0], v[1], damped ? v[2] : 1.0);
                },
                ranges);
            f.alpha = best[0];
            f.beta = best[1];
            f.damping = damped ? best[2] : 1.0;
            double level = y[0], trend = y[1] - y[0];
            for (int t = 1; t < n; ++t) {
                const double prev = level;
                level = f.alpha * y[static_cast<std::size_t>(t)] + (1.0 - f.alpha) * (level + f.damping * trend);
                trend = f.beta * (level - prev) + (1.0 - f.beta) * f.damping * trend;
            }
            f.level = level;
            f.trend = trend;
            break;
        }
        case Kind::HoltWinters: {
            const int period = method.period;
            std::vector<double> season_buf;
            const auto best = detail::grid_search(
                [&](const std::vector<double>& v) {
                    return detail::hw_sse(y, period, v[0], v[1], v[2], season_buf);
                },
                {{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
            f.alpha = best[0];
            f.beta = best[1];
            f.gamma = best[2];
            // Re-run the recursion to capture the final states.
            double mean1 = 0, mean2 = 0;
            for (int k = 0; k < period; ++k) {
                mean1 += y[static_cast<std::size_t>(k)];
                mean2 += y[static_cast<std::size_t>(period + k)];
            }
            mean1 /= period;
            mean2 /= period;
            std::vector<double> s(static_cast<std::size_t>(period));
            for (int k = 0; k < period; ++k) s[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k)] - mean1;
            double level = mean1, trend = (mean2 - mean1) / period;
            for (int t = period; t < n; ++t) {
                double& s_slot = s[static_cast<std::size_t>(t % period)];
                const double s_old = s_slot;
                const double prev = level;
                level = f.alpha * (y[static_cast<std::size_t>(t)] - s_old) + (1.0 - f.alpha) * (level + trend);
                trend = f.beta * (level - prev) + (1.0 - f.beta) * trend;
                s_slot = f.gamma * (y[static_cast<std::size_t>(t)] - prev - trend) + (1.0 - f.gamma) * s_old;
            }
            f.level = level;
            f.trend = trend;
            f.season = s;
            break;
        }
        case Kind::GbtLags: {
            const int rows = n - kGbtLags;
            std::vector<std::vector<double>> x(static_cast<std::size_t>(rows),
                                               std::vector<double>(kGbtLags));
            std::vector<double> target(static_cast<std::size_t>(rows));
            for (int r = 0; r < rows; ++r) {
                for (int l = 0; l < kGbtLags; ++l)
                    x[static_cast<std::size_t>(r)][static_cast<std::size_t>(l)] =
                        y[static_cast<std::size_t>(kGbtLags + r - 1 - l)];
                target[static_cast<std::size_t>(r)] = y[static_cast<std::size_t>(kGbtLags + r)];
            }
            f.gbt = fit_gbt(x, target, kGbtTrees, kGbtDepth, kGbtLearningRate);
            f.y_tail.assign(y.end() - kGbtLags, y.end());
            break;
        }
        case Kind::Rnn: {
            f.rnn_mu = mean_of(y);
            f.rnn_sd = std::max(sample_stddev(y), 1e-9);
            const int window = std::min(kRnnWindow, n - 1);
            Rng rng(mix_seed(seed, fnv1a("rnn_forecaster")));
            f.rnn_cell = LstmParams::init(1, kRnnHidden, rng);
            f.rnn_w = Eigen::VectorXd::Zero(kRnnHidden);
            for (int k = 0; k < kRnnHidden; ++k) f.rnn_w(k) = rng.uniform(-0.1, 0.1);
            f.rnn_b = 0.0;

            const int start = n - 1 - window;
            Eigen::MatrixXd x(window, 1);
            Eigen::VectorXd target(window);
            for (int t = 0; t < window; ++t) {
                x(t, 0) = (y[static_cast<std::size_t>(start + t)] - f.rnn_mu) / f.rnn_sd;
                target(t) = (y[static_cast<std::size_t>(start + t + 1)] - f.rnn_mu) / f.rnn_sd;
            }
            for (int epoch = 0; epoch < kRnnEpochs; ++epoch) {
                const auto cache = lstm_forward(f.rnn_cell, x);
                Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(window, kRnnHidden);
                Eigen::VectorXd dw = Eigen::VectorXd::Zero(kRnnHidden);
                double db = 0.0;
                for (int t = 0; t < window; ++t) {
                    const double pred = f.rnn_w.dot(cache.h.row(t)) + f.rnn_b;
                    const double err = 2.0 * (pred - target(t)) / window;
                    dh.row(t) = err * f.rnn_w.transpose();
                    dw += err * cache.h.row(t).transpose();
                    db += err;
                }
                LstmGrads g = lstm_backward(f.rnn_cell, cache, dh);
                double norm2 = g.w_in.squaredNorm() + g.w_rec.squaredNorm() + g.bias.squaredNorm() +
                               dw.squaredNorm() + db * db;
                double scale = 1.0;
                if (norm2 > 25.0) scale = 5.0 / std::sqrt(norm2);
                const double lr = kRnnLearningRate * scale;
                f.rnn_cell.w_in -= lr * g.w_in;
                f.rnn_cell.w_rec -= lr * g.w_rec;
                f.rnn_cell.bias -= lr * g.bias;
                f.rnn_w -= lr * dw;
                f.rnn_b -= lr * db;
            }
            // Final hidden state over the full training series for forecasting.
            Eigen::MatrixXd full(n, 1);
            for (int t = 0; t < n; ++t) full(t, 0) = (y[static_cast<std::size_t>(t)] - f.rnn_mu) / f.rnn_sd;
            const auto cache = lstm_forward(f.rnn_cell, full);
            f.rnn_h = cache.h.row(n - 1);
            f.rnn_c = cache.c.row(n - 1);
            f.rnn_last = full(n - 1, 0);
            break;
        }
    }

    detail::finalize_likelihood(f, y);
    return f;
}

// ---------------------------------------------------------------------------
// Multi-step forecasts from the end of the training sample
// ---------------------------------------------------------------------------

inline std::vector<double> predict(const FittedForecaster& f, int h) {
    if (h < 1) throw ConfigError("forecast horizon must be >= 1");
    const MethodId& m = f.method;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(h));
    switch (m.kind) {
        case Kind::Naive:
        case Kind::RwNoDrift:
            out.assign(static_cast<std::size_t>(h), f.last);
            break;
        case Kind::Mean:
        case Kind::WhiteNoise:
            out.assign(static_cast<std::size_t>(h), f.level);
            break;
        case Kind::RwDrift:
            for (int k = 1; k <= h; ++k) out.push_back(f.last + k * f.drift);
            break;
        case Kind::Ar: {
            std::vector<double> hist = f.y_tail;
            for (int k = 0; k < h; ++k) {
                double v = f.constant;
                for (int i = 0; i < m.p; ++i)
                    v += f.ar_coef[static_cast<std::size_t>(i)] * hist[hist.size() - 1 - static_cast<std::size_t>(i)];
                hist.push_back(v);
                out.push_back(v);
            }
            break;
        }
        case Kind::Ma:
        case Kind::Arima: {
            const int d = m.kind == Kind::Ma ? 0 : m.d;
            const int p = m.kind == Kind::Ma ? 0 : m.p;
            const int q = m.q;
            // Differenced history tail and innovation tail from the fit.
            std::vector<double> z_hist;
            {
                const auto z_tail = detail::difference(f.y_tail, d);
                z_hist = z_tail;
            }
            std::vector<double> eps = f.eps_tail;
            std::vector<double> z_future;
            for (int k = 0; k < h; ++k) {
                double v = f.constant;
                for (int i = 0; i < p; ++i) {
                    const std::size_t idx = z_hist.size() - 1 - static_cast<std::size_t>(i);
                    v += f.ar_coef[static_cast<std::size_t>(i)] * z_hist[idx];
                }
                for (int j = 0; j < q; ++j) {
                    const int back = k - j;  // future innovations are zero
                    if (back <= 0 && static_cast<int>(eps.size()) + back - 1 >= 0)
                        v += f.ma_coef[static_cast<std::size_t>(j)] *
                             eps[static_cast<std::size_t>(static_cast<int>(eps.size()) + back - 1)];
                }
                z_hist.push_back(v);
                z_future.push_back(v);
            }
            // Integrate back to the original scale.
            std::vector<double> y_hist(f.y_tail.end() - std::min<std::size_t>(f.y_tail.size(), 2), f.y_tail.end());
            for (int k = 0; k < h; ++k) {
                double base = 0.0;
                if (d == 1) base = y_hist.back();
                else if (d == 2) base = 2 * y_hist.back() - y_hist[y_hist.size() - 2];
                const double v = base + z_future[static_cast<std::size_t>(k)];
                y_hist.push_back(v);
                out.push_back(v);
            }
            break;
        }
        case Kind::Ses:
            out.assign(static_cast<std::size_t>(h), f.level);
            break;
        case Kind::Holt:
            for (int k = 1; k <= h; ++k) out.push_back(f.level + k * f.trend);
            break;
        case Kind::DampedHolt: {
            double damp_sum = 0.0, power = 1.0;
            for (int k = 1; k <= h; ++k) {
                power *= f.damping;
                damp_sum += power;
                out.push_back(f.level + damp_sum * f.trend);
            }
            break;
        }
        case Kind::HoltWinters: {
            const int period = m.period;
            for (int k = 1; k <= h; ++k) {
                const int idx = (f.train_length + k - 1) % period;
                out.push_back(f.level + k * f.trend + f.season[static_cast<std::size_t>(idx)]);
            }
            break;
        }
        case Kind::GbtLags: {
            std::vector<double> hist = f.y_tail;
            std::vector<double> x(kGbtLags);
            for (int k = 0; k < h; ++k) {
                for (int l = 0; l < kGbtLags; ++l) x[static_cast<std::size_t>(l)] = hist[hist.size() - 1 - static_cast<std::size_t>(l)];
                const double v = f.gbt.predict(x);
                hist.push_back(v);
                out.push_back(v);
            }
            break;
        }
        case Kind::Rnn: {
            Eigen::VectorXd hv = f.rnn_h, cv = f.rnn_c;
            const int u = f.rnn_cell.hidden;
            for (int k = 0; k < h; ++k) {
                const double z_next = f.rnn_w.dot(hv) + f.rnn_b;
                out.push_back(f.rnn_mu + f.rnn_sd * z_next);
                // Advance the cell on the predicted value.
                Eigen::VectorXd xin(1);
                xin(0) = z_next;
                Eigen::VectorXd zg = f.rnn_cell.w_in * xin + f.rnn_cell.w_rec * hv + f.rnn_cell.bias;
                for (int i = 0; i < u; ++i) {
                    const double gi = sigmoid(zg(i));
                    const double gf = sigmoid(zg(u + i));
                    const double gg = std::tanh(zg(2 * u + i));
                    const double go = sigmoid(zg(3 * u + i));
                    cv(i) = gf * cv(i) + gi * gg;
                    hv(i) = go * std::tanh(cv(i));
                }
            }
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Information criteria
// ---------------------------------------------------------------------------

enum class IcKind { Aic, Bic };

struct IcResult {
    double value = 0.0;
    bool degenerate = false;  // perfect fit: -inf sentinel
};

inline IcResult information_criterion_checked(const FittedForecaster& f, IcKind kind) {
    if (f.perfect_fit) return {-kInf, true};
    const double penalty = kind == IcKind::Aic ? 2.0 * f.d_q
                                               : f.d_q * std::log(static_cast<double>(f.train_length));
    return {-2.0 * f.loglik + penalty, false};
}

inline double information_criterion(const FittedForecaster& f, IcKind kind) {
    return information_criterion_checked(f, kind).value;
}

// ---------------------------------------------------------------------------
// JSON round trip (method id + parameter state)
// ---------------------------------------------------------------------------

inline nlohmann::json forecaster_to_json(const FittedForecaster& f) {
    nlohmann::json j;
    j["method"] = f.method.name();
    j["sigma2"] = f.sigma2;
    j["loglik"] = f.perfect_fit ? 0.0 : f.loglik;
    j["perfect_fit"] = f.perfect_fit;
    j["d_q"] = f.d_q;
    j["n_eff"] = f.n_eff;
    j["train_length"] = f.train_length;
    j["converged"] = f.converged;
    nlohmann::json s;
    s["last"] = f.last;
    s["level"] = f.level;
    s["trend"] = f.trend;
    s["drift"] = f.drift;
    s["constant"] = f.constant;
    s["ar_coef"] = f.ar_coef;
    s["ma_coef"] = f.ma_coef;
    s["alpha"] = f.alpha;
    s["beta"] = f.beta;
    s["gamma"] = f.gamma;
    s["damping"] = f.damping;
    s["season"] = f.season;
    s["y_tail"] = f.y_tail;
    s["eps_tail"] = f.eps_tail;
    if (f.method.kind == Kind::GbtLags) {
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : f.gbt.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& nd : t.nodes)
                nodes.push_back({nd.leaf, nd.feature, nd.threshold, nd.left, nd.right, nd.value});
            trees.push_back(nodes);
        }
        s["gbt"] = {{"base", f.gbt.base}, {"learning_rate", f.gbt.learning_rate}, {"trees", trees}};
    }
    if (f.method.kind == Kind::Rnn) {
        auto mat = [](const Eigen::MatrixXd& m) {
            std::vector<double> v(m.data(), m.data() + m.size());
            return v;
        };
        s["rnn"] = {{"hidden", f.rnn_cell.hidden},
                    {"w_in", mat(f.rnn_cell.w_in)},
                    {"w_rec", mat(f.rnn_cell.w_rec)},
                    {"bias", mat(f.rnn_cell.bias)},
                    {"w_out", mat(f.rnn_w)},
                    {"b_out", f.rnn_b},
                    {"mu", f.rnn_mu},
                    {"sd", f.rnn_sd},
                    {"h", mat(f.rnn_h)},
                    {"c", mat(f.rnn_c)},
                    {"last", f.rnn_last}};
    }
    j["state"] = s;
    return j;
}

inline FittedForecaster forecaster_from_json(const nlohmann::json& j) {
    FittedForecaster f;
    f.method = parse_method(j["method"].get<std::string>());
    f.sigma2 = j["sigma2"];
    f.perfect_fit = j["perfect_fit"];
    f.loglik = f.perfect_fit ? kInf : j["loglik"].get<double>();
    f.d_q = j["d_q"];
    f.n_eff = j["n_eff"];
    f.train_length = j["train_length"];
    f.converged = j["converged"];
    const auto& s = j["state"];
    f.last = s["last"];
    f.level = s["level"];
    f.trend = s["trend"];
    f.drift = s["drift"];
    f.constant = s["constant"];
    f.ar_coef = s["ar_coef"].get<std::vector<double>>();
    f.ma_coef = s["ma_coef"].get<std::vector<double>>();
    f.alpha = s["alpha"];
    f.beta = s["beta"];
    f.gamma = s["gamma"];
    f.damping = s["damping"];
    f.season = s["season"].get<std::vector<double>>();
    f.y_tail = s["y_tail"].get<std::vector<double>>();
    f.eps_tail = s["eps_tail"].get<std::vector<double>>();
    if (f.method.kind == Kind::GbtLags) {
        const auto& g = s["gbt"];
        f.gbt.base = g["base"];
        f.gbt.learning_rate = g["learning_rate"];
        for (const auto& tj : g["trees"]) {
            RegressionTree t;
            for (const auto& nj : tj) {
                RegressionTree::Node nd;
                nd.leaf = nj[0];
                nd.feature = nj[1];
                nd.threshold = nj[2];
                nd.left = nj[3];
                nd.right = nj[4];
                nd.value = nj[5];
                t.nodes.push_back(nd);
            }
            f.gbt.trees.push_back(std::move(t));
        }
    }
    if (f.method.kind == Kind::Rnn) {
        const auto& r = s["rnn"];
        const int u = r["hidden"];
        f.rnn_cell.hidden = u;
        f.rnn_cell.input_dim = 1;
        auto to_mat = [](const std::vector<double>& v, int rows, int cols) {
            Eigen::MatrixXd m(rows, cols);
            std::copy(v.begin(), v.end(), m.data());
            return m;
        };
        f.rnn_cell.w_in = to_mat(r["w_in"].get<std::vector<double>>(), 4 * u, 1);
        f.rnn_cell.w_rec = to_mat(r["w_rec"].get<std::vector<double>>(), 4 * u, u);
        f.rnn_cell.bias = to_mat(r["bias"].get<std::vector<double>>(), 4 * u, 1);
        f.rnn_w = to_mat(r["w_out"].get<std::vector<double>>(), u, 1);
        f.rnn_b = r["b_out"];
        f.rnn_mu = r["mu"];
        f.rnn_sd = r["sd"];
        f.rnn_h = to_mat(r["h"].get<std::vector<double>>(), u, 1);
        f.rnn_c = to_mat(r["c"].get<std::vector<double>>(), u, 1);
        f.rnn_last = r["last"];
    }
    return f;
}

}  // namespace tsrec
