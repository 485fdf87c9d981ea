#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsrec/common.hpp"

namespace tsrec {

/// Aligned panel of N univariate series over a shared timeline. Optional
/// high/low/volume channels ride along when the source data carries them.
/// Engineered features and cluster labels are filled in later by the
/// features module; until then `features` is empty and `cluster_id` is -1.
struct TimeSeriesPanel {
    std::vector<std::string> entities;
    std::vector<std::string> dates;
    Eigen::MatrixXd values;  // N x T

    bool has_ohlcv = false;
    Eigen::MatrixXd high, low, volume;  // N x T when has_ohlcv

    std::vector<int> cluster_id;
    std::vector<Eigen::MatrixXd> features;  // per entity, T x F
    std::vector<std::string> feature_names;
    int feature_warmup = 0;

    int n_entities() const { return static_cast<int>(entities.size()); }
    int length() const { return static_cast<int>(dates.size()); }

    std::vector<double> series(int i, int t_end = -1) const {
        const int end = t_end < 0 ? length() : t_end;
        std::vector<double> out(static_cast<std::size_t>(end));
        for (int t = 0; t < end; ++t) out[static_cast<std::size_t>(t)] = values(i, t);
        return out;
    }

    int entity_index(const std::string& id) const {
        for (int i = 0; i < n_entities(); ++i)
            if (entities[i] == id) return i;
        return -1;
    }
};

/// Entity-by-entity multi-hot relation encoding. A pair is related under
/// type k when both entities share membership k; storage is a symmetric
/// sparse neighbor list. The diagonal is always empty.
struct RelationGraph {
    int n_types = 0;
    int n_entities = 0;
    // neighbors[i]: sorted (j, relation type ids) pairs, j != i
    std::vector<std::vector<std::pair<int, std::vector<int>>>> neighbors;

    const std::vector<int>* relation_types(int j, int i) const {
        for (const auto& [other, types] : neighbors[static_cast<std::size_t>(i)])
            if (other == j) return &types;
        return nullptr;
    }

    /// Multi-hot vector a(j,i) of length n_types; zero when unrelated.
    Eigen::VectorXd relation_vector(int j, int i) const {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n_types);
        if (const auto* types = relation_types(j, i))
            for (int k : *types) a(k) = 1.0;
        return a;
    }

    std::size_t n_related_pairs() const {
        std::size_t c = 0;
        for (const auto& nb : neighbors) c += nb.size();
        return c / 2;
    }

    double relation_ratio() const {
        const double total = 0.5 * n_entities * (n_entities - 1);
        return total > 0 ? static_cast<double>(n_related_pairs()) / total : 0.0;
    }
};

/// Membership list: entity index -> set of relation type ids it belongs to.
using MembershipList = std::vector<std::vector<int>>;

inline RelationGraph graph_from_memberships(const MembershipList& members, int n_types,
                                            std::vector<std::string>* warnings = nullptr) {
    RelationGraph g;
    g.n_types = n_types;
    g.n_entities = static_cast<int>(members.size());
    g.neighbors.assign(members.size(), {});

    // Invert: type -> member entities, then connect every pair per type.
    std::vector<std::vector<int>> by_type(static_cast<std::size_t>(n_types));
    for (std::size_t i = 0; i < members.size(); ++i)
        for (int k : members[i]) by_type[static_cast<std::size_t>(k)].push_back(static_cast<int>(i));

    std::vector<std::map<int, std::vector<int>>> nb(members.size());
    for (int k = 0; k < n_types; ++k) {
        const auto& m = by_type[static_cast<std::size_t>(k)];
        for (std::size_t a = 0; a < m.size(); ++a)
            for (std::size_t b = a + 1; b < m.size(); ++b) {
                nb[static_cast<std::size_t>(m[a])][m[b]].push_back(k);
                nb[static_cast<std::size_t>(m[b])][m[a]].push_back(k);
            }
    }
    for (std::size_t i = 0; i < members.size(); ++i)
        for (auto& [j, types] : nb[i]) g.neighbors[i].emplace_back(j, types);

    if (warnings && g.n_entities >= 2 && g.relation_ratio() < 0.05) {
        warnings->push_back("relation ratio " + fmt_double(g.relation_ratio()) +
                            " is below 0.05; relational signal may be too sparse");
    }
    return g;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

/// Minimal CSV splitting with double-quote support for fields that carry
/// commas (method names like arima orders).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && cur.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

/// Load a long-format CSV `entity_id,date,value[,high,low,volume]` into an
/// aligned panel. The timeline is the intersection of all entities' date
/// sets; a row with an empty value field marks a missing observation.
/// Entities whose missing fraction exceeds `fill_limit` are dropped with a
/// warning; surviving gaps are forward-filled (leading gaps take the first
/// observed value).
inline TimeSeriesPanel load_panel(const std::string& path, double fill_limit = 0.05,
                                  std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open values file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty values file: " + path);
    const auto header = detail::split_csv_line(line);
    bool ohlcv = false;
    if (header.size() == 3 && header[0] == "entity_id" && header[1] == "date" && header[2] == "value") {
        ohlcv = false;
    } else if (header.size() == 6 && header[0] == "entity_id" && header[1] == "date" &&
               header[2] == "value" && header[3] == "high" && header[4] == "low" &&
               header[5] == "volume") {
        ohlcv = true;
    } else {
        throw DataError("values file header must be entity_id,date,value[,high,low,volume]: " + path);
    }

    struct Cell {
        bool present = false;
        double value = 0, high = 0, low = 0, volume = 0;
    };
    std::map<std::string, std::map<std::string, Cell>> rows;  // entity -> date -> cell
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != header.size())
            throw DataError("row " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        Cell c;
        if (!f[2].empty()) {
            if (!detail::parse_double(f[2], c.value))
                throw DataError("row " + std::to_string(line_no) + ": unparseable value '" + f[2] + "'");
            c.present = true;
        }
        if (ohlcv && c.present) {
            if (!detail::parse_double(f[3], c.high) || !detail::parse_double(f[4], c.low) ||
                !detail::parse_double(f[5], c.volume))
                throw DataError("row " + std::to_string(line_no) + ": unparseable high/low/volume");
        }
        rows[f[0]][f[1]] = c;
    }
    if (rows.size() < 2) throw DataError("panel needs at least 2 entities, found " + std::to_string(rows.size()));

    // Timeline: dates every entity has a row for (present or missing-marked).
    std::set<std::string> timeline;
    bool first = true;
    for (const auto& [id, by_date] : rows) {
        std::set<std::string> own;
        for (const auto& [d, _] : by_date) own.insert(d);
        if (first) {
            timeline = std::move(own);
            first = false;
        } else {
            std::set<std::string> inter;
            std::set_intersection(timeline.begin(), timeline.end(), own.begin(), own.end(),
                                  std::inserter(inter, inter.begin()));
            timeline = std::move(inter);
        }
    }
    if (timeline.size() < 2) throw DataError("aligned timeline has fewer than 2 dates");
    const std::vector<std::string> dates(timeline.begin(), timeline.end());
    const int T = static_cast<int>(dates.size());

    std::vector<std::string> kept;
    for (const auto& [id, by_date] : rows) {
        int missing = 0;
        for (const auto& d : dates)
            if (!by_date.at(d).present) ++missing;
        const double frac = static_cast<double>(missing) / T;
        if (frac > fill_limit) {
            if (warnings)
                warnings->push_back("entity " + id + " dropped: missing fraction " + fmt_double(frac) +
                                    " exceeds " + fmt_double(fill_limit));
        } else {
            kept.push_back(id);
        }
    }
    if (kept.size() < 2)
        throw DataError("fewer than 2 entities survive the missing-value filter");

    TimeSeriesPanel p;
    p.entities = kept;
    p.dates = dates;
    p.has_ohlcv = ohlcv;
    const int N = p.n_entities();
    p.values.resize(N, T);
    if (ohlcv) {
        p.high.resize(N, T);
        p.low.resize(N, T);
        p.volume.resize(N, T);
    }
    p.cluster_id.assign(static_cast<std::size_t>(N), -1);

    for (int i = 0; i < N; ++i) {
        const auto& by_date = rows.at(p.entities[static_cast<std::size_t>(i)]);
        std::optional<Cell> last;
        // Leading gaps are filled from the first observed cell.
        for (const auto& d : dates) {
            const Cell& c = by_date.at(d);
            if (c.present) {
                last = c;
                break;
            }
        }
        if (!last) throw DataError("entity " + p.entities[static_cast<std::size_t>(i)] + " has no observations");
        for (int t = 0; t < T; ++t) {
            const Cell& c = by_date.at(dates[static_cast<std::size_t>(t)]);
            if (c.present) last = c;
            p.values(i, t) = last->value;
            if (ohlcv) {
                p.high(i, t) = last->high;
                p.low(i, t) = last->low;
                p.volume(i, t) = last->volume;
            }
        }
    }
    return p;
}

/// Load `entity_id,relation_type_id` membership rows and connect every pair
/// of entities sharing a membership. Unknown entities are skipped with a
/// warning. Type ids are remapped densely in sorted order.
inline RelationGraph load_relations(const std::string& path, const TimeSeriesPanel& panel,
                                    std::vector<std::string>* warnings = nullptr,
                                    MembershipList* memberships_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open relations file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty relations file: " + path);
    if (detail::split_csv_line(line) != std::vector<std::string>{"entity_id", "relation_type_id"})
        throw DataError("relations file header must be entity_id,relation_type_id: " + path);

    std::map<std::string, int> index;
    for (int i = 0; i < panel.n_entities(); ++i) index[panel.entities[static_cast<std::size_t>(i)]] = i;

    std::vector<std::pair<int, std::string>> raw;  // (entity idx, type label)
    std::set<std::string> type_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 2)
            throw DataError("row " + std::to_string(line_no) + ": expected 2 fields, got " +
                            std::to_string(f.size()));
        const auto it = index.find(f[0]);
        if (it == index.end()) {
            if (warnings) warnings->push_back("relations row " + std::to_string(line_no) +
                                              ": unknown entity " + f[0] + " skipped");
            continue;
        }
        raw.emplace_back(it->second, f[1]);
        type_labels.insert(f[1]);
    }

    // Numeric labels keep their value as the type id so ids survive a save/load
    // round trip even when some types have no members; other labels are
    // remapped densely in sorted order.
    const bool all_numeric = std::all_of(type_labels.begin(), type_labels.end(), [](const std::string& s) {
        return !s.empty() && s.size() <= 9 && s.find_first_not_of("0123456789") == std::string::npos;
    });
    std::map<std::string, int> type_index;
    for (const auto& t : type_labels)
        type_index[t] = all_numeric ? std::stoi(t) : static_cast<int>(type_index.size());

    int n_types = 0;
    for (const auto& [label, k] : type_index) n_types = std::max(n_types, k + 1);

    MembershipList members(static_cast<std::size_t>(panel.n_entities()));
    for (const auto& [e, t] : raw) {
        auto& m = members[static_cast<std::size_t>(e)];
        const int k = type_index[t];
        if (std::find(m.begin(), m.end(), k) == m.end()) m.push_back(k);
    }
    for (auto& m : members) std::sort(m.begin(), m.end());
    if (memberships_out) *memberships_out = members;
    return graph_from_memberships(members, n_types, warnings);
}

// ---------------------------------------------------------------------------
// Synthetic panel with planted best-model structure
// ---------------------------------------------------------------------------

/// Generator families. Relation wiring follows family membership, so the
/// relation graph carries signal about which model family fits each series.
enum class Family { RandomWalk, Trend, Seasonal, Ar1 };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::RandomWalk: return "random_walk";
        case Family::Trend: return "trend";
        case Family::Seasonal: return "seasonal";
        case Family::Ar1: return "ar1";
    }
    return "?";
}

struct SyntheticSpec {
    int n_entities = 200;
    int series_length = 365;
    double frac_random_walk = 0.25;
    double frac_trend = 0.25;
    double frac_seasonal = 0.25;
    double frac_ar1 = 0.25;
    int n_relation_types = 8;
    double p_intra = 0.35;  // membership prob. for a family's own relation types
    double p_inter = 0.02;  // membership prob. elsewhere
    double noise_scale = 1.0;
    std::uint64_t seed = 42;

    void validate() const {
        if (n_entities < 2) throw ConfigError("synthetic spec: n_entities must be >= 2");
        if (series_length < 2) throw ConfigError("synthetic spec: series_length must be >= 2");
        const double s = frac_random_walk + frac_trend + frac_seasonal + frac_ar1;
        if (std::abs(s - 1.0) > 1e-9)
            throw ConfigError("synthetic spec: family fractions must sum to 1, got " + fmt_double(s));
        for (double f : {frac_random_walk, frac_trend, frac_seasonal, frac_ar1})
            if (f < 0.0 || f > 1.0) throw ConfigError("synthetic spec: fractions must be in [0,1]");
        for (double p : {p_intra, p_inter})
            if (p < 0.0 || p > 1.0) throw ConfigError("synthetic spec: probabilities must be in [0,1]");
        if (n_relation_types < 1) throw ConfigError("synthetic spec: n_relation_types must be >= 1");
        if (noise_scale < 0.0) throw ConfigError("synthetic spec: noise_scale must be >= 0");
    }
};

struct SyntheticPanel {
    TimeSeriesPanel panel;
    RelationGraph graph;
    MembershipList memberships;
    std::vector<Family> planted;  // per entity
};

/// Pure function of the spec: same spec and seed, bit-identical output.
inline SyntheticPanel generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const int N = spec.n_entities, T = spec.series_length;

    std::vector<Family> planted;
    planted.reserve(static_cast<std::size_t>(N));
    const double fr[4] = {spec.frac_random_walk, spec.frac_trend, spec.frac_seasonal, spec.frac_ar1};
    const Family fam[4] = {Family::RandomWalk, Family::Trend, Family::Seasonal, Family::Ar1};
    // Largest-remainder allocation so counts match the fractions exactly.
    int counts[4], assigned = 0;
    double rem[4];
    for (int k = 0; k < 4; ++k) {
        const double exact = fr[k] * N;
        counts[k] = static_cast<int>(exact);
        rem[k] = exact - counts[k];
        assigned += counts[k];
    }
    while (assigned < N) {
        int best = 0;
        for (int k = 1; k < 4; ++k)
            if (rem[k] > rem[best]) best = k;
        ++counts[best];
        rem[best] = -1;
        ++assigned;
    }
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < counts[k]; ++c) planted.push_back(fam[k]);

    SyntheticPanel out;
    out.planted = planted;
    TimeSeriesPanel& p = out.panel;
    p.values.resize(N, T);
    p.cluster_id.assign(static_cast<std::size_t>(N), -1);
    {
        char buf[24];
        for (int i = 0; i < N; ++i) {
            std::snprintf(buf, sizeof(buf), "e%04d", i);
            p.entities.emplace_back(buf);
        }
        for (int t = 0; t < T; ++t) {
            std::snprintf(buf, sizeof(buf), "t%05d", t);
            p.dates.emplace_back(buf);
        }
    }

    // Shared weekly pattern for the seasonal family (per-panel, not per-entity).
    Rng panel_rng(mix_seed(spec.seed, fnv1a("panel")));
    std::vector<double> pattern(7);
    for (double& v : pattern) v = panel_rng.normal();
    {
        const double m = mean_of(pattern);
        for (double& v : pattern) v -= m;
    }

    for (int i = 0; i < N; ++i) {
        Rng rng(mix_seed(spec.seed, fnv1a("series/" + p.entities[static_cast<std::size_t>(i)])));
        const double sigma = spec.noise_scale;
        const double base = 100.0 * (0.5 + rng.uniform());
        switch (planted[static_cast<std::size_t>(i)]) {
            case Family::RandomWalk: {
                // Sticky random walk: the level persists and moves only
                // occasionally, as in intermittent demand or infrequently
                // repriced quotes. On no-move days the last observation is
                // exactly right, so the label concentrates on it.
                double x = base;
                for (int t = 0; t < T; ++t) {
                    p.values(i, t) = x;
                    if (rng.bernoulli(0.12))
                        x += (rng.bernoulli(0.5) ? 1.0 : -1.0) * sigma * rng.uniform(2.0, 6.0);
                }
                break;
            }
            case Family::Trend: {
                const double slope = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.05, 0.2) * sigma * 3.0;
                for (int t = 0; t < T; ++t) p.values(i, t) = base + slope * t + 0.5 * sigma * rng.normal();
                break;
            }
            case Family::Seasonal: {
                const double amp = rng.uniform(3.0, 6.0) * sigma;
                for (int t = 0; t < T; ++t)
                    p.values(i, t) = base + amp * pattern[static_cast<std::size_t>(t % 7)] + 0.5 * sigma * rng.normal();
                break;
            }
            case Family::Ar1: {
                const double phi = rng.uniform(0.7, 0.9);
                double x = 0.0;
                for (int t = 0; t < T; ++t) {
                    p.values(i, t) = base + x;
                    x = phi * x + sigma * rng.normal();
                }
                break;
            }
        }
    }

    // Relation wiring: each relation type is affiliated with one family;
    // entities join affiliated types with p_intra and others with p_inter.
    const int K = spec.n_relation_types;
    std::vector<Family> type_family(static_cast<std::size_t>(K));
    {
        std::vector<Family> present;
        for (int k = 0; k < 4; ++k)
            if (counts[k] > 0) present.push_back(fam[k]);
        for (int k = 0; k < K; ++k) type_family[static_cast<std::size_t>(k)] = present[static_cast<std::size_t>(k) % present.size()];
    }
    out.memberships.assign(static_cast<std::size_t>(N), {});
    for (int i = 0; i < N; ++i) {
        Rng rng(mix_seed(spec.seed, fnv1a("membership/" + p.entities[static_cast<std::size_t>(i)])));
        for (int k = 0; k < K; ++k) {
            const double prob =
                type_family[static_cast<std::size_t>(k)] == planted[static_cast<std::size_t>(i)] ? spec.p_intra : spec.p_inter;
            if (rng.bernoulli(prob)) out.memberships[static_cast<std::size_t>(i)].push_back(k);
        }
    }
    out.graph = graph_from_memberships(out.memberships, K);
    return out;
}

// ---------------------------------------------------------------------------
// Panel directory persistence: values.csv, relations.csv, meta.json
// ---------------------------------------------------------------------------

inline void save_panel(const std::string& dir, const TimeSeriesPanel& panel,
                       const MembershipList& memberships, std::uint64_t seed,
                       const std::vector<Family>* planted = nullptr) {
    {
        std::ofstream out(dir + "/values.csv");
        if (!out) throw DataError("cannot write " + dir + "/values.csv");
        out << (panel.has_ohlcv ? "entity_id,date,value,high,low,volume\n" : "entity_id,date,value\n");
        for (int i = 0; i < panel.n_entities(); ++i)
            for (int t = 0; t < panel.length(); ++t) {
                out << panel.entities[static_cast<std::size_t>(i)] << ','
                    << panel.dates[static_cast<std::size_t>(t)] << ',' << fmt_double(panel.values(i, t));
                if (panel.has_ohlcv)
                    out << ',' << fmt_double(panel.high(i, t)) << ',' << fmt_double(panel.low(i, t))
                        << ',' << fmt_double(panel.volume(i, t));
                out << '\n';
            }
    }
    {
        std::ofstream out(dir + "/relations.csv");
        if (!out) throw DataError("cannot write " + dir + "/relations.csv");
        out << "entity_id,relation_type_id\n";
        for (std::size_t i = 0; i < memberships.size(); ++i)
            for (int k : memberships[i])
                out << panel.entities[i] << ',' << k << '\n';
    }
    {
        nlohmann::json meta;
        meta["entities"] = panel.entities;
        meta["T"] = panel.length();
        int k_max = -1;
        for (const auto& m : memberships)
            for (int k : m) k_max = std::max(k_max, k);
        meta["K"] = k_max + 1;
        meta["seed"] = seed;
        meta["has_ohlcv"] = panel.has_ohlcv;
        if (planted) {
            std::vector<std::string> names;
            for (Family f : *planted) names.emplace_back(family_name(f));
            meta["planted_families"] = names;
        }
        std::ofstream out(dir + "/meta.json");
        if (!out) throw DataError("cannot write " + dir + "/meta.json");
        out << meta.dump(2) << '\n';
    }
}

struct LoadedPanel {
    TimeSeriesPanel panel;
    RelationGraph graph;
    MembershipList memberships;
    std::uint64_t seed = 0;
};

inline LoadedPanel load_panel_dir(const std::string& dir, double fill_limit = 0.05,
                                  std::vector<std::string>* warnings = nullptr) {
    LoadedPanel out;
    out.panel = load_panel(dir + "/values.csv", fill_limit, warnings);
    out.graph = load_relations(dir + "/relations.csv", out.panel, warnings, &out.memberships);
    std::ifstream meta_in(dir + "/meta.json");
    if (meta_in) {
        nlohmann::json meta;
        meta_in >> meta;
        if (meta.contains("seed")) out.seed = meta["seed"].get<std::uint64_t>();
        // K from meta wins when trailing types have no members.
        if (meta.contains("K")) {
            const int k = meta["K"].get<int>();
            if (k > out.graph.n_types) {
                out.graph = graph_from_memberships(out.memberships, k, nullptr);
            }
        }
    }
    return out;
}

}  // namespace tsrec
