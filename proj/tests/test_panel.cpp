#include "tsrec/panel.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "test_util.hpp"

using namespace tsrec;

namespace {

std::string three_entity_csv() {
    std::ostringstream s;
    s << "entity_id,date,value\n";
    for (const char* e : {"a", "b", "c"})
        for (int t = 0; t < 10; ++t)
            s << e << ",2020-01-" << (t < 9 ? "0" : "") << (t + 1) << "," << (t + 1) << "\n";
    return s.str();
}

}  // namespace

TEST(Panel, LoadsAlignedPanelWithoutGaps) {
    const auto dir = test_util::temp_dir("panel_load");
    test_util::write_file(dir + "/values.csv", three_entity_csv());
    const auto p = load_panel(dir + "/values.csv");
    EXPECT_EQ(p.n_entities(), 3);
    EXPECT_EQ(p.length(), 10);
    EXPECT_DOUBLE_EQ(p.values(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(p.values(2, 9), 10.0);
}

TEST(Panel, DropsEntityExceedingFillLimit) {
    const auto dir = test_util::temp_dir("panel_drop");
    std::ostringstream s;
    s << "entity_id,date,value\n";
    for (int t = 0; t < 20; ++t) {
        s << "good,d" << (t < 10 ? "0" : "") << t << "," << t << "\n";
        s << "ok,d" << (t < 10 ? "0" : "") << t << "," << 2 * t << "\n";
        // 2 of 20 missing = 10% > 5%
        s << "bad,d" << (t < 10 ? "0" : "") << t << "," << (t == 3 || t == 7 ? "" : std::to_string(t)) << "\n";
    }
    test_util::write_file(dir + "/values.csv", s.str());
    std::vector<std::string> warnings;
    const auto p = load_panel(dir + "/values.csv", 0.05, &warnings);
    EXPECT_EQ(p.n_entities(), 2);
    EXPECT_EQ(p.entity_index("bad"), -1);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("bad"), std::string::npos);
}

TEST(Panel, ForwardFillsSmallGaps) {
    const auto dir = test_util::temp_dir("panel_fill");
    std::ostringstream s;
    s << "entity_id,date,value\n";
    for (int t = 0; t < 50; ++t) {
        s << "x,d" << (t < 10 ? "0" : "") << t << "," << (t == 20 ? "" : std::to_string(t)) << "\n";
        s << "y,d" << (t < 10 ? "0" : "") << t << "," << t << "\n";
    }
    test_util::write_file(dir + "/values.csv", s.str());
    const auto p = load_panel(dir + "/values.csv", 0.05);
    EXPECT_EQ(p.n_entities(), 2);
    const int xi = p.entity_index("x");
    EXPECT_DOUBLE_EQ(p.values(xi, 20), 19.0);  // gap takes the previous value
    EXPECT_DOUBLE_EQ(p.values(xi, 21), 21.0);
}

TEST(Panel, UnparseableRowReportsLineNumber) {
    const auto dir = test_util::temp_dir("panel_badrow");
    test_util::write_file(dir + "/values.csv",
                          "entity_id,date,value\na,d0,1\na,d1,oops\nb,d0,1\nb,d1,2\n");
    try {
        load_panel(dir + "/values.csv");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    }
}

TEST(Panel, FewerThanTwoEntitiesIsHardError) {
    const auto dir = test_util::temp_dir("panel_one");
    test_util::write_file(dir + "/values.csv", "entity_id,date,value\na,d0,1\na,d1,2\n");
    EXPECT_THROW(load_panel(dir + "/values.csv"), DataError);
}

TEST(Relations, SharedMembershipSetsSymmetricBit) {
    const auto dir = test_util::temp_dir("rel_shared");
    test_util::write_file(dir + "/values.csv", three_entity_csv());
    std::ostringstream s;
    s << "entity_id,relation_type_id\n";
    for (int k = 0; k < 8; ++k) s << "c," << k << "\n";  // keeps type ids 0..7 dense
    s << "a,7\nb,7\n";
    test_util::write_file(dir + "/relations.csv", s.str());
    const auto p = load_panel(dir + "/values.csv");
    const auto g = load_relations(dir + "/relations.csv", p);
    EXPECT_EQ(g.n_types, 8);
    const int a = p.entity_index("a"), b = p.entity_index("b");
    EXPECT_DOUBLE_EQ(g.relation_vector(a, b)(7), 1.0);
    EXPECT_DOUBLE_EQ(g.relation_vector(b, a)(7), 1.0);
    EXPECT_EQ(g.relation_vector(a, b).sum(), 1.0);
}

TEST(Relations, EntityWithoutMembershipHasNoNeighbors) {
    const auto dir = test_util::temp_dir("rel_empty");
    test_util::write_file(dir + "/values.csv", three_entity_csv());
    test_util::write_file(dir + "/relations.csv", "entity_id,relation_type_id\na,0\nb,0\n");
    const auto p = load_panel(dir + "/values.csv");
    const auto g = load_relations(dir + "/relations.csv", p);
    EXPECT_TRUE(g.neighbors[static_cast<std::size_t>(p.entity_index("c"))].empty());
}

TEST(Relations, UnknownEntitySkippedWithWarning) {
    const auto dir = test_util::temp_dir("rel_unknown");
    test_util::write_file(dir + "/values.csv", three_entity_csv());
    test_util::write_file(dir + "/relations.csv", "entity_id,relation_type_id\na,0\nb,0\nghost,0\n");
    const auto p = load_panel(dir + "/values.csv");
    std::vector<std::string> warnings;
    const auto g = load_relations(dir + "/relations.csv", p, &warnings);
    EXPECT_EQ(g.n_related_pairs(), 1u);
    ASSERT_FALSE(warnings.empty());
    EXPECT_NE(warnings[0].find("ghost"), std::string::npos);
}

// Exchange-listing-shaped input: 972 entities, 112 relation types arranged as
// disjoint industry groups sized so the shared-membership pair count is 5745.
TEST(Relations, LargeMembershipPairCount) {
    const auto dir = test_util::temp_dir("rel_large");
    std::ostringstream vals, rels;
    vals << "entity_id,date,value\n";
    char id[16];
    for (int i = 0; i < 972; ++i) {
        std::snprintf(id, sizeof(id), "s%04d", i);
        vals << id << ",d0,1\n" << id << ",d1,2\n";
    }
    rels << "entity_id,relation_type_id\n";
    int entity = 0, type = 0;
    auto group = [&](int size) {
        for (int m = 0; m < size; ++m) {
            std::snprintf(id, sizeof(id), "s%04d", entity++);
            rels << id << "," << type << "\n";
        }
        ++type;
    };
    group(100);                            // C(100,2) = 4950 pairs
    for (int g = 0; g < 78; ++g) group(5); // 78 * C(5,2) = 780 pairs
    group(6);                              // C(6,2)   =   15 pairs
    while (type < 112) group(1);           // singleton types, no pairs
    ASSERT_EQ(type, 112);
    test_util::write_file(dir + "/values.csv", vals.str());
    test_util::write_file(dir + "/relations.csv", rels.str());
    const auto p = load_panel(dir + "/values.csv");
    const auto g = load_relations(dir + "/relations.csv", p);
    EXPECT_EQ(p.n_entities(), 972);
    EXPECT_EQ(g.n_types, 112);
    EXPECT_EQ(g.n_related_pairs(), 5745u);
}

TEST(Relations, SymmetryAndZeroDiagonalHoldForRandomMemberships) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        const int n = 12, k_types = 5;
        MembershipList members(n);
        for (auto& m : members)
            for (int k = 0; k < k_types; ++k)
                if (rng.bernoulli(0.4)) m.push_back(k);
        const auto g = graph_from_memberships(members, k_types);
        for (int i = 0; i < n; ++i) {
            EXPECT_EQ(g.relation_types(i, i), nullptr);
            for (int j = 0; j < n; ++j)
                EXPECT_TRUE(g.relation_vector(j, i) == g.relation_vector(i, j));
        }
    }
}

TEST(Synthetic, DeterministicUnderSeed) {
    SyntheticSpec spec;
    spec.n_entities = 12;
    spec.series_length = 40;
    spec.seed = 42;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_TRUE(a.panel.values == b.panel.values);
    EXPECT_EQ(a.memberships, b.memberships);
    EXPECT_EQ(a.planted, b.planted);
}

TEST(Synthetic, DegenerateAllRandomWalkMix) {
    SyntheticSpec spec;
    spec.n_entities = 8;
    spec.series_length = 80;
    spec.frac_random_walk = 1.0;
    spec.frac_trend = spec.frac_seasonal = spec.frac_ar1 = 0.0;
    spec.noise_scale = 1.0;
    spec.seed = 42;
    const auto s = generate_synthetic(spec);
    for (Family f : s.planted) EXPECT_EQ(f, Family::RandomWalk);
    // Cumulative step path: the level persists on most days and moves by a
    // nonzero increment on the rest.
    for (int i = 0; i < 8; ++i) {
        int moves = 0, holds = 0;
        for (int t = 1; t < 80; ++t) {
            const double d = s.panel.values(i, t) - s.panel.values(i, t - 1);
            if (d == 0.0) ++holds;
            else ++moves;
        }
        EXPECT_GT(holds, 0) << "entity " << i;
        EXPECT_GT(moves, 0) << "entity " << i;
    }
}

TEST(Synthetic, FamilyCountsFollowFractions) {
    SyntheticSpec spec;
    spec.n_entities = 10;
    spec.series_length = 20;
    spec.frac_random_walk = 0.5;
    spec.frac_trend = 0.0;
    spec.frac_seasonal = 0.5;
    spec.frac_ar1 = 0.0;
    const auto s = generate_synthetic(spec);
    int rw = 0, seasonal = 0;
    for (Family f : s.planted) {
        rw += f == Family::RandomWalk;
        seasonal += f == Family::Seasonal;
    }
    EXPECT_EQ(rw, 5);
    EXPECT_EQ(seasonal, 5);
}

TEST(Synthetic, InvalidSpecRejected) {
    SyntheticSpec spec;
    spec.frac_random_walk = 0.9;  // fractions now sum to 1.65
    EXPECT_THROW(generate_synthetic(spec), ConfigError);
    SyntheticSpec bad_prob;
    bad_prob.p_intra = 1.5;
    EXPECT_THROW(generate_synthetic(bad_prob), ConfigError);
}

TEST(Panel, IngestionIsIdempotent) {
    SyntheticSpec spec;
    spec.n_entities = 6;
    spec.series_length = 25;
    spec.seed = 7;
    const auto s = generate_synthetic(spec);

    const auto dir1 = test_util::temp_dir("panel_round1");
    save_panel(dir1, s.panel, s.memberships, spec.seed);
    const auto loaded = load_panel_dir(dir1);
    EXPECT_TRUE(loaded.panel.values == s.panel.values);
    EXPECT_EQ(loaded.panel.entities, s.panel.entities);

    const auto dir2 = test_util::temp_dir("panel_round2");
    save_panel(dir2, loaded.panel, loaded.memberships, loaded.seed);
    EXPECT_EQ(test_util::read_file(dir1 + "/values.csv"), test_util::read_file(dir2 + "/values.csv"));
    EXPECT_EQ(test_util::read_file(dir1 + "/relations.csv"),
              test_util::read_file(dir2 + "/relations.csv"));
}

TEST(Relations, SparseGraphEmitsRatioWarning) {
    MembershipList members(30);
    members[0] = {0};
    members[1] = {0};
    std::vector<std::string> warnings;
    graph_from_memberships(members, 1, &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("relation ratio"), std::string::npos);
}
