#include "tsrec/labeler.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace tsrec;

namespace {

TimeSeriesPanel visible_slice(const TimeSeriesPanel& p, int t_end) {
    TimeSeriesPanel v = p;
    v.values = p.values.leftCols(t_end).eval();
    v.dates.assign(p.dates.begin(), p.dates.begin() + t_end);
    return v;
}

}  // namespace

TEST(Folds, ExpandingWindowConstruction) {
    const auto plan = make_folds(10, 3, 1, 7);
    ASSERT_EQ(plan.n_folds(), 3);
    EXPECT_EQ(plan.folds[0].first, (Range{0, 7}));
    EXPECT_EQ(plan.folds[0].second, (Range{7, 8}));
    EXPECT_EQ(plan.folds[1].first, (Range{0, 8}));
    EXPECT_EQ(plan.folds[1].second, (Range{8, 9}));
    EXPECT_EQ(plan.folds[2].first, (Range{0, 9}));
    EXPECT_EQ(plan.folds[2].second, (Range{9, 10}));
}

TEST(Folds, SingleFoldIsHoldout) {
    const auto plan = make_folds(10, 1, 2, 8);
    ASSERT_EQ(plan.n_folds(), 1);
    EXPECT_EQ(plan.folds[0].first, (Range{0, 8}));
    EXPECT_EQ(plan.folds[0].second, (Range{8, 10}));
}

TEST(Folds, YearLongPlanCoversTailWithDisjointTests) {
    const auto plan = make_folds(365, 60, 1, 305);
    ASSERT_EQ(plan.n_folds(), 60);
    // Brute-force audit: tests disjoint, chronological, after their train
    // range, and covering exactly the last 60 indices.
    std::vector<bool> covered(365, false);
    for (const auto& [train, test] : plan.folds) {
        EXPECT_EQ(train.begin, 0);
        EXPECT_EQ(test.begin, train.end);
        EXPECT_EQ(test.size(), 1);
        for (int t = test.begin; t < test.end; ++t) {
            EXPECT_FALSE(covered[static_cast<std::size_t>(t)]);
            covered[static_cast<std::size_t>(t)] = true;
        }
    }
    for (int t = 0; t < 365; ++t) EXPECT_EQ(covered[static_cast<std::size_t>(t)], t >= 305);
    // Expanding: each fold's train end strictly before the next one's.
    for (int k = 1; k < 60; ++k)
        EXPECT_LT(plan.folds[static_cast<std::size_t>(k - 1)].first.end,
                  plan.folds[static_cast<std::size_t>(k)].first.end);
}

TEST(Folds, InfeasiblePlanNamesTheInequality) {
    try {
        make_folds(10, 5, 2, 7);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("min_train + n_folds*h"), std::string::npos);
    }
}

TEST(Metrics, PerfectForecastScoresZero) {
    const std::vector<double> a = {1, 2, 3};
    EXPECT_DOUBLE_EQ(score(a, a, Metric::Mse), 0.0);
    EXPECT_DOUBLE_EQ(score(a, a, Metric::Smape), 0.0);
    EXPECT_DOUBLE_EQ(score(a, a, Metric::SmapeRatio), 0.0);
}

TEST(Metrics, DirectFormulas) {
    EXPECT_DOUBLE_EQ(score({100}, {110}, Metric::Mse), 100.0);
    EXPECT_NEAR(score({100}, {110}, Metric::Smape), 20.0 / 210.0, 1e-12);
    EXPECT_NEAR(score({100}, {110}, Metric::SmapeRatio), 10.0 / 210.0, 1e-12);
}

TEST(Metrics, ZeroOverZeroTermCountsAsZero) {
    EXPECT_DOUBLE_EQ(score({0, 100}, {0, 100}, Metric::Smape), 0.0);
}

TEST(Metrics, LengthMismatchIsTypedError) {
    EXPECT_THROW(score({1, 2}, {1}, Metric::Mse), ConfigError);
    EXPECT_THROW(score({}, {}, Metric::Mse), ConfigError);
}

TEST(Metrics, SmapeBoundedAndMseMatchesBruteForce) {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t n = 1 + rng.uniform_index(8);
        std::vector<double> a(n), f(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-50, 50);
            f[i] = rng.uniform(-50, 50);
        }
        const double smape = score(a, f, Metric::Smape);
        EXPECT_GE(smape, 0.0);
        EXPECT_LE(smape, 2.0);
        double brute = 0;
        for (std::size_t i = 0; i < n; ++i) brute += (a[i] - f[i]) * (a[i] - f[i]);
        brute /= static_cast<double>(n);
        EXPECT_NEAR(score(a, f, Metric::Mse), brute, 1e-12);
        EXPECT_GE(score(a, f, Metric::Mse), 0.0);
    }
}

TEST(Labeler, SingletonMethodSetLabelsEverything) {
    SyntheticSpec spec;
    spec.n_entities = 4;
    spec.series_length = 60;
    spec.seed = 3;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(60, 5, 1, 55);
    const auto [labels, sm] = label_best(s.panel, {{Kind::Naive}}, plan, Metric::Smape, 1);
    for (int e = 0; e < 4; ++e) EXPECT_EQ(labels.best_method(e).name(), "naive");
}

TEST(Labeler, FailedMethodGetsInfiniteScoreWithReason) {
    SyntheticSpec spec;
    spec.n_entities = 3;
    spec.series_length = 40;
    spec.seed = 4;
    const auto s = generate_synthetic(spec);
    // holt_winters(20) needs 40 training points; the first folds have fewer.
    const auto plan = make_folds(40, 4, 1, 30);
    const auto sm = score_methods(s.panel, {{Kind::Naive}, make_holt_winters(20)}, plan,
                                  Metric::Smape, 1);
    EXPECT_TRUE(std::isinf(sm.mean_score(0, 1)));
    EXPECT_FALSE(sm.failures.empty());
    EXPECT_NE(sm.failures[0].find("holt_winters(20)"), std::string::npos);
    // Labelling still works: the failing method can never win.
    const auto labels = labels_from_scores(sm);
    for (int e = 0; e < 3; ++e) EXPECT_EQ(labels.best_method(e).name(), "naive");
}

TEST(Labeler, DeterministicAndMethodOrderInvariant) {
    SyntheticSpec spec;
    spec.n_entities = 5;
    spec.series_length = 80;
    spec.seed = 6;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(80, 6, 1, 74);
    std::vector<MethodId> methods = {{Kind::Naive}, {Kind::Mean}, make_ar(1), {Kind::Ses}, {Kind::Rnn}};
    const auto [l1, s1] = label_best(s.panel, methods, plan, Metric::Smape, 9);
    const auto [l2, s2] = label_best(s.panel, methods, plan, Metric::Smape, 9);
    EXPECT_EQ(l1.best, l2.best);
    EXPECT_EQ(s1.scores, s2.scores);

    std::vector<MethodId> reversed(methods.rbegin(), methods.rend());
    const auto [l3, s3] = label_best(s.panel, reversed, plan, Metric::Smape, 9);
    for (int e = 0; e < 5; ++e)
        EXPECT_EQ(l1.best_method(e).name(), l3.best_method(e).name());
}

TEST(Labeler, TieBreaksPreferFewerParametersThenName) {
    // naive and rw_no_drift produce identical forecasts, so scores tie and
    // the lexicographically smaller zero-parameter name must win.
    SyntheticSpec spec;
    spec.n_entities = 3;
    spec.series_length = 60;
    spec.frac_random_walk = 1.0;
    spec.frac_trend = spec.frac_seasonal = spec.frac_ar1 = 0.0;
    spec.seed = 8;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(60, 5, 1, 55);
    const auto [labels, sm] =
        label_best(s.panel, {{Kind::RwNoDrift}, {Kind::Naive}}, plan, Metric::Smape, 1);
    for (int e = 0; e < 3; ++e) {
        EXPECT_EQ(sm.mean_score(e, 0), sm.mean_score(e, 1));
        EXPECT_EQ(labels.best_method(e).name(), "naive");
    }
}

// Fitting must never look at a fold's test range: perturb it and refit.
TEST(Labeler, NoLeakageFromTestRangesIntoFits) {
    SyntheticSpec spec;
    spec.n_entities = 3;
    spec.series_length = 100;
    spec.seed = 12;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(100, 5, 1, 95);
    for (const auto& method : {MethodId{Kind::Naive}, make_ar(2), MethodId{Kind::Ses}}) {
        for (const auto& [train, test] : plan.folds) {
            auto series = s.panel.series(0);
            std::vector<double> slice(series.begin() + train.begin, series.begin() + train.end);
            const auto baseline = forecaster_to_json(fit(method, slice, 5)).dump();
            auto mutated = series;
            for (int t = test.begin; t < test.end; ++t) mutated[static_cast<std::size_t>(t)] += 1000.0;
            std::vector<double> slice2(mutated.begin() + train.begin, mutated.begin() + train.end);
            EXPECT_EQ(baseline, forecaster_to_json(fit(method, slice2, 5)).dump());
        }
    }
}

TEST(Labeler, StickyWalkPanelLabelsNaiveModal) {
    SyntheticSpec spec;
    spec.n_entities = 10;
    spec.series_length = 150;
    spec.frac_random_walk = 1.0;
    spec.frac_trend = spec.frac_seasonal = spec.frac_ar1 = 0.0;
    spec.seed = 42;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(150, 10, 1, 140);
    const auto [labels, sm] = label_best(s.panel, default_method_space(), plan, Metric::Smape, 7);
    EXPECT_EQ(labels.methods[static_cast<std::size_t>(labels.modal_class())].name(), "naive");
}

// Half sticky walks, half strongly seasonal: the walk half should label
// naive nearly everywhere and the seasonal half must not.
TEST(Labeler, MixedPanelRecoversNaiveOnRandomWalkHalf) {
    SyntheticSpec spec;
    spec.n_entities = 10;
    spec.series_length = 150;
    spec.frac_random_walk = 0.5;
    spec.frac_trend = 0.0;
    spec.frac_seasonal = 0.5;
    spec.frac_ar1 = 0.0;
    spec.seed = 42;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(150, 10, 1, 140);
    const auto [labels, sm] = label_best(s.panel, default_method_space(), plan, Metric::Smape, 7);
    int rw_naive = 0, rw_total = 0;
    for (int e = 0; e < 10; ++e) {
        if (s.planted[static_cast<std::size_t>(e)] != Family::RandomWalk) continue;
        ++rw_total;
        if (labels.best_method(e).name() == "naive") ++rw_naive;
    }
    ASSERT_EQ(rw_total, 5);
    EXPECT_GE(rw_naive, 4);  // at least 80 percent
}

TEST(Labeler, LabelsCsvRoundTrip) {
    SyntheticSpec spec;
    spec.n_entities = 4;
    spec.series_length = 60;
    spec.seed = 5;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(60, 4, 1, 56);
    const auto [labels, sm] =
        label_best(s.panel, {{Kind::Naive}, {Kind::Mean}, make_ar(1)}, plan, Metric::Smape, 2);
    const auto dir = test_util::temp_dir("labels_rt");
    save_labels(dir + "/labels.csv", labels);
    const auto loaded = load_labels(dir + "/labels.csv");
    EXPECT_EQ(loaded.entities, labels.entities);
    EXPECT_EQ(loaded.best, labels.best);
    for (std::size_t e = 0; e < labels.entities.size(); ++e)
        for (std::size_t m = 0; m < labels.methods.size(); ++m)
            EXPECT_DOUBLE_EQ(loaded.mean_score[e][m], labels.mean_score[e][m]);
}

TEST(Labeler, ScoresJsonRoundTrip) {
    SyntheticSpec spec;
    spec.n_entities = 3;
    spec.series_length = 50;
    spec.seed = 13;
    const auto s = generate_synthetic(spec);
    const auto plan = make_folds(50, 3, 1, 47);
    const auto sm = score_methods(s.panel, {{Kind::Naive}, make_holt_winters(20)}, plan,
                                  Metric::Mse, 3);
    const auto dir = test_util::temp_dir("scores_rt");
    const auto key = panel_hash(s.panel);
    save_scores(dir + "/scores.json", sm, key);
    const auto loaded = load_scores(dir + "/scores.json");
    EXPECT_EQ(loaded.scores, sm.scores);  // includes the +inf cells
    EXPECT_EQ(loaded.entities, sm.entities);
    EXPECT_EQ(loaded.metric, sm.metric);
}
