#include "ngl/partition.hpp"

#include <numeric>
#include <set>

#include <gtest/gtest.h>

namespace ngl {
namespace {

// Oracle: union-find over uncut tree edges of the whole truncation.
struct Components {
    std::vector<VertexId> parent;
    explicit Components(std::uint64_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    VertexId find(VertexId x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(VertexId a, VertexId b) { parent[find(a)] = find(b); }
};

Components flood(const CutSet& cuts) {
    const Truncation& t = cuts.truncation();
    Components c(t.vertex_count());
    for (VertexId v = 1; v < t.vertex_count(); ++v)
        if (!cuts.cut_above(v)) c.unite(v, Truncation::parent(v));
    return c;
}

TEST(ValidateSequence, DeskScaleSequenceIsSurrogateOnly) {
    auto rep = validate_sequence({{3, 8, 14}, 3, SequenceMode::surrogate});
    ASSERT_EQ(rep.gaps.size(), 2u);
    EXPECT_FALSE(rep.gaps[0].tower_ok);
    EXPECT_TRUE(rep.gaps[0].surrogate_ok);
    EXPECT_TRUE(rep.surrogate_valid());
    EXPECT_FALSE(rep.tower_valid());
}

TEST(ValidateSequence, RejectsNonIncreasing) {
    EXPECT_THROW(validate_sequence({{3, 3}, 3, SequenceMode::surrogate}), ValidationError);
    EXPECT_THROW(validate_sequence({{5, 4}, 3, SequenceMode::surrogate}), ValidationError);
}

TEST(ValidateSequence, TowerGapEqualityCase) {
    const std::uint64_t two32 = std::uint64_t{1} << 32;
    auto ok = validate_sequence({{3, 3 + two32}, 3, SequenceMode::tower_valid});
    EXPECT_TRUE(ok.gaps[0].tower_ok);
    EXPECT_TRUE(ok.tower_valid());
    auto short_by_one = validate_sequence({{3, 3 + two32 - 1}, 3, SequenceMode::tower_valid});
    EXPECT_FALSE(short_by_one.gaps[0].tower_ok);
    // l_0 < d disqualifies even with a good gap.
    EXPECT_FALSE(validate_sequence({{2, 2 + (std::uint64_t{1} << 16)}, 3, SequenceMode::tower_valid}).tower_valid());
}

TEST(ValidateSequence, IrrationalLogarithm) {
    // d = 4: threshold 2^32 * log2(3) = 6807362105.98...
    const std::uint64_t l0 = 4;
    EXPECT_TRUE(validate_sequence({{3, 3 + 6807362106ULL, 3 + 6807362106ULL + 2}, 4, {}}).gaps[0].tower_ok);
    EXPECT_FALSE(validate_sequence({{3, 3 + 6807362105ULL}, 4, {}}).gaps[0].tower_ok);
    // d = 5: log2(4) = 2 exactly.
    EXPECT_TRUE(validate_sequence({{3, 3 + (std::uint64_t{2} << 32)}, 5, {}}).gaps[0].tower_ok);
    EXPECT_FALSE(validate_sequence({{3, 2 + (std::uint64_t{2} << 32)}, 5, {}}).gaps[0].tower_ok);
    EXPECT_FALSE(validate_sequence({{l0, l0 + (std::uint64_t{1} << 40)}, 4, {}}).gaps[0].tower_ok);
}

TEST(EdgeIndex, MinimumOfGenerations) {
    Truncation t(8);
    EXPECT_EQ(edge_index(t, VertexAddr{0, 5}, VertexAddr{1, 2}), 0);
    EXPECT_EQ(edge_index(t, VertexAddr{5, 3}, VertexAddr{6, 1}), 5);
    EXPECT_THROW(edge_index(t, VertexAddr{0, 5}, VertexAddr{0, 4}), AddressError);
    EXPECT_THROW(edge_index(t, VertexAddr{0, 5}, VertexAddr{2, 0}), AddressError);
}

TEST(LevelClusters, BandArithmetic) {
    Truncation t(15);
    auto cuts = CutSet::level_set(t, {3, 8, 14});
    Cluster mid = cluster_of(cuts, VertexAddr{6, 5});
    EXPECT_EQ(mid.size, 31u);
    EXPECT_EQ(mid.band, 0);
    EXPECT_EQ(t.generation(mid.top), 8);
    EXPECT_FALSE(mid.open);
    EXPECT_EQ(mid.boundary.size(), 16u);
    EXPECT_EQ(boundary_ratio(mid), make_rational(16, 31));
    EXPECT_LE(boundary_ratio(mid), make_rational(2, 3));

    Cluster bottom = cluster_of(cuts, VertexAddr{2, 77});
    EXPECT_EQ(bottom.size, 15u);
    EXPECT_EQ(bottom.band, -1);
    EXPECT_EQ(bottom.boundary.size(), 8u);
    for (VertexId b : bottom.boundary) EXPECT_EQ(t.generation(b), 0);
    EXPECT_EQ(t.generation(bottom.top), 3);

    Cluster apex = cluster_of(cuts, t.apex());
    EXPECT_TRUE(apex.open);
    EXPECT_EQ(apex.size, 1u);
}

TEST(LevelClusters, TileAndMatchClosedFormOnDepth20) {
    Truncation t(20);
    auto cuts = CutSet::level_set(t, {2, 5, 9, 14, 18});
    Components comp = flood(cuts);
    std::map<VertexId, std::uint64_t> sizes;
    for (VertexId v = 0; v < t.vertex_count(); ++v) sizes[comp.find(v)]++;
    std::uint64_t total = 0;
    std::size_t checked = 0;
    for (auto [root, size] : sizes) {
        total += size;
        VertexId top = cluster_top(cuts, root);
        EXPECT_EQ(comp.find(top), root);
        if (top != Truncation::apex_id()) {
            EXPECT_EQ(size, level_cluster_size(cuts, t.generation(top)));
            if (++checked % 97 == 0) {
                Cluster k = cluster_at_top(cuts, top);
                EXPECT_EQ(k.size, size);
                EXPECT_LE(boundary_ratio(k), make_rational(2, 3));
            }
        }
    }
    EXPECT_EQ(total, t.vertex_count());
    EXPECT_EQ(sizes[comp.find(0)], (std::uint64_t{1} << 2) - 1);  // generations 19..20
}

TEST(SelectJ, PreconditionsAreConfigErrors) {
    Truncation t(20);
    EXPECT_THROW(select_J(t, {3, 8, 14}, make_rational(1, 24), 25, 0, 1), ConfigError);
    EXPECT_THROW(select_J(t, {1, 4, 9}, make_rational(1, 2), 2, 0, 1), ConfigError);  // L not > 1/eps
    EXPECT_THROW(select_J(t, {1, 4, 9}, make_rational(1, 1), 2, 2, 1), ConfigError);  // k0 out of range
    EXPECT_NO_THROW(select_J(t, {1, 4, 9}, make_rational(1, 1), 2, 0, 1));
    EXPECT_EQ(minimal_k0({3, 8, 14}, 5), 1);
    EXPECT_EQ(minimal_k0({3, 8, 14}, 25), -1);
}

TEST(SelectJ, ClassesHaveExactlyOneRepresentative) {
    Truncation t(12);
    auto j = select_J(t, {1, 4, 9}, make_rational(1, 1), 2, 0, 99);
    EXPECT_EQ(j.active_levels(), (std::vector<int>{4, 9}));
    for (int l : {4, 9}) {
        VertexId first_anc = t.generation_count(l + 2) - 1;
        for (VertexId a = first_anc; a < first_anc + t.generation_count(l + 2); ++a) {
            int reps = 0, members = 0;
            for (VertexId v = 0; v < t.vertex_count(); ++v) {
                if (t.generation(v) != l || !t.is_ancestor(a, v)) continue;
                ++members;
                reps += j.cut_above(v) ? 1 : 0;
            }
            EXPECT_EQ(members, 4);  // 2^L
            EXPECT_EQ(reps, 1);
        }
    }
}

TEST(SelectJ, HalfOfSiblingEdgesSurviveWithLOne) {
    Truncation t(6);
    auto j = select_J(t, {1, 3}, make_rational(2, 1), 1, 0, 5);
    int survive = 0;
    for (VertexId v = 0; v < t.vertex_count(); ++v)
        if (t.generation(v) == 3 && j.cut_above(v)) {
            ++survive;
            EXPECT_FALSE(j.cut_above(Truncation::sibling(v)));
        }
    EXPECT_EQ(survive, 4);  // 8 edges at index 3, one of each sibling pair
}

TEST(SelectJ, SubsetOfLevelCutsAndAtMostOneIncidence) {
    Truncation t(14);
    auto lv = std::vector<int>{1, 4, 8, 11};
    auto i = CutSet::level_set(t, lv);
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto j = select_J(t, lv, make_rational(1, 1), 2, 0, seed);
        for (VertexId v = 0; v < t.vertex_count(); ++v) {
            if (j.cut_above(v)) EXPECT_TRUE(i.cut_above(v));
            int incident = 0;
            if (j.cut_above(v)) ++incident;
            if (t.generation(v) > 0)
                incident += j.cut_above(Truncation::left_child(v)) + j.cut_above(Truncation::right_child(v));
            EXPECT_LE(incident, 1) << t.format(v);
        }
    }
}

TEST(SelectJ, DeterministicPerSeed) {
    Truncation t(14);
    auto lv = std::vector<int>{1, 4, 8, 11};
    auto a = select_J(t, lv, make_rational(1, 1), 2, 0, 7).lower_endpoints();
    auto b = select_J(t, lv, make_rational(1, 1), 2, 0, 7).lower_endpoints();
    auto c = select_J(t, lv, make_rational(1, 1), 2, 0, 8).lower_endpoints();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_EQ(a.size(), c.size());
}

TEST(SelectJ, LevelClustersNestInsideJClusters) {
    Truncation t(14);
    auto lv = std::vector<int>{1, 4, 8, 11};
    auto i = CutSet::level_set(t, lv);
    auto j = select_J(t, lv, make_rational(1, 1), 2, 0, 3);
    Rng rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        VertexId u = uniform_below(rng, t.vertex_count());
        Cluster ki = cluster_of(i, u);
        Cluster kj = cluster_of(j, u);
        EXPECT_TRUE(std::includes(kj.vertices.begin(), kj.vertices.end(), ki.vertices.begin(), ki.vertices.end()));
    }
}

TEST(SelectJ, OutBoundIsRespectedOnClosedClusters) {
    // L = 3 > 2 / eps with eps = 1; every closed cluster obeys |out| <= eps/2 |V|.
    Truncation t(16);
    auto lv = std::vector<int>{1, 5, 9, 13};
    const Rational eps = make_rational(1, 1);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto j = select_J(t, lv, eps, 3, 0, seed);
        std::size_t closed = 0;
        for (VertexId v : j.lower_endpoints()) {
            Cluster k = cluster_at_top(j, v);
            ASSERT_FALSE(k.open);
            ++closed;
            EXPECT_LE(boundary_ratio(k), eps / 2);
            for (VertexId o : k.boundary) EXPECT_NE(o, k.top);
        }
        EXPECT_GT(closed, 0u);
    }
}

TEST(SelectJ, DeepRatioStaysSmall) {
    // L = 8 on a depth-20 truncation; one J edge per 2^L class keeps out small.
    Truncation t(20);
    auto j = select_J(t, {1, 10}, make_rational(1, 7), 8, 0, 12);
    for (VertexId v : j.lower_endpoints()) {
        Cluster k = cluster_at_top(j, v);
        EXPECT_LE(boundary_ratio(k), make_rational(1, 16));
    }
    EXPECT_EQ(j.lower_endpoints().size(), 4u);  // 2^(20-10-8) classes
}

TEST(Ratio11, DirectEvaluation) {
    Truncation t(8);
    auto cuts = CutSet::level_set(t, {1, 6});
    Cluster k = cluster_of(cuts, VertexAddr{4, 0});
    ASSERT_EQ(k.size, 31u);
    auto r = ratio_11(t, k.boundary.front(), k, 3);
    EXPECT_EQ(r.tree_size, 7u);
    EXPECT_NEAR(r.value(), 7.0 / std::log2(31.0), 1e-12);
    EXPECT_NEAR(r.value(), 1.41, 0.01);
    EXPECT_THROW(ratio_11(t, k.top, k, 3), ValidationError);
}

TEST(Ratio11, TowerGapBound) {
    // gap 2^(2^(l+2)) + 1 with l = 1: |T(v)| / log|V(K)| <= (2^(l+2) - 1) / 2^(2^(l+2)).
    GrowthRatio r{7, (BigInt(1) << 257) - 1, 3};
    GrowthRatio bound{7, BigInt(1) << 256, 3};
    EXPECT_TRUE(ratio_leq(r, bound));
    EXPECT_LE(r.value(), 7.0 / 256.0);
}

TEST(Ratio11, JRatioNoLargerThanLevelRatioAtMatchedVertices) {
    // Each out vertex of a J cluster is the parent of a J edge, hence also a
    // leaf of its own level-set cluster, which J only enlarges.
    Truncation t(14);
    auto lv = std::vector<int>{1, 4, 8, 11};
    auto i = CutSet::level_set(t, lv);
    auto j = select_J(t, lv, make_rational(1, 1), 2, 0, 3);
    int compared = 0;
    for (VertexId x : j.lower_endpoints()) {
        Cluster kj = cluster_of(j, Truncation::parent(x));
        if (kj.open) continue;
        for (VertexId o : kj.boundary) {
            Cluster ki = cluster_of(i, o);
            ASSERT_TRUE(std::binary_search(ki.boundary.begin(), ki.boundary.end(), o));
            EXPECT_TRUE(std::includes(kj.vertices.begin(), kj.vertices.end(), ki.vertices.begin(), ki.vertices.end()));
            EXPECT_TRUE(ratio_leq(ratio_11(t, o, kj, 3), ratio_11(t, o, ki, 3)));
            ++compared;
        }
    }
    EXPECT_GT(compared, 0);
}

TEST(CutSetExport, SortedEdgeLines) {
    Truncation t(4);
    auto cuts = CutSet::level_set(t, {2});
    std::ostringstream os;
    cuts.write_edges(os);
    EXPECT_EQ(os.str(), "g:2/00 g:3/0\ng:2/01 g:3/0\ng:2/10 g:3/1\ng:2/11 g:3/1\n");
}

}  // namespace
}  // namespace ngl
