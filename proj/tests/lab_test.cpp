#include "ngl/lab.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ngl/girth_graph.hpp"
#include "ngl/overlay.hpp"
#include "ngl/product.hpp"

namespace ngl {
namespace {

auto csr_oracle(const GirthGraph& g) {
    return [&g](const std::uint32_t& v, std::vector<std::uint32_t>& out) {
        for (auto w : g.adj[v]) out.push_back(w);
    };
}

TEST(BallProfile, CanopyLeafRadiusTwo) {
    Truncation t(6);
    auto e = canopy_ensemble(t);
    VertexId leaf = t.vertex_count() - 1;
    auto p = ball_profile<VertexId>(e.nbrs, leaf, 2, 3, "leaf");
    // leaf, parent, sibling, grandparent
    EXPECT_EQ(p.sizes, (std::vector<std::uint64_t>{1, 2, 4}));
    EXPECT_EQ(p.contaminated_from, -1);
}

TEST(BallProfile, ThreeRegularTree) {
    auto nb = [](const T3Addr& w, std::vector<T3Addr>& out) {
        for (int a = 0; a < 3; ++a) out.push_back(w.times(a));
    };
    auto p = ball_profile<T3Addr>(nb, T3Addr::root(), 2, 3, "t3");
    EXPECT_EQ(p.sizes[2], 10u);
}

TEST(BallProfile, HighGirthClusterBeatsTreeBound) {
    auto g = generate(1023, 3, default_girth_target(1023, 3), 11);
    int r = g.achieved_girth / 2;
    for (std::uint32_t v = 0; v < g.n; v += 17) {
        auto p = ball_profile<std::uint32_t>(csr_oracle(g), v, r, 3, std::to_string(v));
        EXPECT_GE(p.sizes[r], std::uint64_t{1} << r);
        for (int k = 1; k <= r; ++k) {
            EXPECT_LE(p.sizes[k], 3 * (std::uint64_t{1} << k) - 2);  // Moore bound for max degree 3
            if (k >= 3) EXPECT_LE(p.exponent(k), 3.0);
        }
    }
}

TEST(BallProfile, ContaminationMarksFirstBoundaryRadius) {
    Truncation t(8);
    auto e = canopy_ensemble(t, 2);
    VertexId v = t.id(VertexAddr{4, 0});
    auto p = ball_profile<VertexId>(e.nbrs, v, 6, e.guarded, 3, "v");
    // generation 7 is the first guarded one, three steps up
    EXPECT_EQ(p.contaminated_from, 3);
    EXPECT_FALSE(p.contaminated(2));
    EXPECT_TRUE(p.contaminated(5));
}

TEST(BallProfile, VisitCapFlagsTruncation) {
    auto nb = [](const T3Addr& w, std::vector<T3Addr>& out) {
        for (int a = 0; a < 3; ++a) out.push_back(w.times(a));
    };
    auto p = ball_profile<T3Addr>(nb, T3Addr::root(), 6, [](const T3Addr&) { return false; }, 3, "t3", 50);
    EXPECT_GE(p.contaminated_from, 1);
    EXPECT_LE(p.contaminated_from, 5);
}

// Oracle: the same instance exported as an edge list and searched as plain
// adjacency lists.
TEST(BallProfile, LazyOracleMatchesExportedEdges) {
    for (auto variant : {Variant::W_I, Variant::W_star_J}) {
        Truncation t(13);
        CutSet cuts = variant == Variant::W_I ? CutSet::level_set(t, {3, 8, 12})
                                              : select_J(t, {1, 4, 9}, Rational(1), 2, 0, 3);
        Rational eps = variant == Variant::W_I ? Rational(0) : make_rational(1, 24);
        OverlayGraph g(cuts, OverlayConfig{variant, 3, eps, 5});
        std::stringstream ss;
        g.write_edges(ss);
        std::string hash;
        std::uint64_t n = 0;
        ss >> hash >> n;
        std::vector<std::vector<VertexId>> adj(n);
        VertexId a, b;
        while (ss >> a >> b) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        auto plain = [&](const VertexId& v, std::vector<VertexId>& out) {
            for (VertexId w : adj[v]) out.push_back(w);
        };
        Rng rng(2);
        for (int i = 0; i < 30; ++i) {
            VertexId o = uniform_below(rng, n);
            auto lazy = ball_profile<VertexId>(g.oracle(), o, 12, 3, "o");
            auto flat = ball_profile<VertexId>(plain, o, 12, 3, "o");
            EXPECT_EQ(lazy.sizes, flat.sizes);
        }
    }
}

TEST(BallProfile, CsvColumns) {
    GrowthProfile p{"x", 3, {1, 3, 7}, 2, std::nullopt};
    std::ostringstream os;
    write_profiles_csv_header(os, 3);
    write_profile_csv(os, p);
    EXPECT_EQ(os.str(),
              "root,r,ball,exponent,log_base_2_exponent,contaminated\n"
              "x,0,1,,,0\n"
              "x,1,3,3,1.58496250072,0\n"
              "x,2,7,2.64575131106,1.40367746103,1\n");
}

TEST(GrowthEstimates, SingleVertexIsDegenerate) {
    auto nb = [](const int&, std::vector<int>&) {};
    auto p = ball_profile<int>(nb, 0, 4, 3, "solo");
    EXPECT_THROW(growth_estimates({p}), InsufficientDataError);
}

TEST(GrowthEstimates, AllContaminatedIsAnError) {
    GrowthProfile p{"x", 3, {1, 3, 7}, 1, std::nullopt};
    EXPECT_THROW(growth_estimates({p}), InsufficientDataError);
    EXPECT_THROW(growth_estimates({}), InsufficientDataError);
}

TEST(GrowthEstimates, MaxAndWitnessMin) {
    GrowthProfile a{"a", 3, {1, 3, 9, 20}, -1, 3};
    GrowthProfile b{"b", 3, {1, 4, 10, 22}, 3, 2};
    auto e = growth_estimates({a, b});
    EXPECT_DOUBLE_EQ(e.upper, 4.0);
    EXPECT_EQ(e.upper_root, "b");
    EXPECT_EQ(e.upper_r, 1);
    EXPECT_TRUE(e.lower_from_witness);
    EXPECT_DOUBLE_EQ(e.lower, std::cbrt(20.0));
    EXPECT_EQ(e.lower_root, "a");
    auto w = growth_estimates({a, b}, Window{2, 3});
    EXPECT_DOUBLE_EQ(w.upper, std::sqrt(10.0));
}

TEST(GrowthEstimates, PermutationInvariant) {
    auto g = generate(1023, 3, default_girth_target(1023, 3), 3);
    std::vector<GrowthProfile> ps;
    for (std::uint32_t v = 0; v < 40; ++v) {
        ps.push_back(ball_profile<std::uint32_t>(csr_oracle(g), v * 25, 5, 3, std::to_string(v)));
        if (v % 3 == 0) ps.back().witness_radius = 1 + v % 5;
    }
    auto ref = growth_estimates(ps);
    std::mt19937 rng(4);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(ps.begin(), ps.end(), rng);
        auto e = growth_estimates(ps);
        EXPECT_EQ(e.upper, ref.upper);
        EXPECT_EQ(e.upper_root, ref.upper_root);
        EXPECT_EQ(e.upper_r, ref.upper_r);
        EXPECT_EQ(e.lower, ref.lower);
        EXPECT_EQ(e.lower_root, ref.lower_root);
    }
}

TEST(GrowthEstimates, ExpClusterUpperNearBranching) {
    auto g = generate(1023, 3, default_girth_target(1023, 3), 9);
    int r = g.achieved_girth / 2;
    std::vector<GrowthProfile> ps;
    for (std::uint32_t v = 0; v < g.n; v += 31) ps.push_back(ball_profile<std::uint32_t>(csr_oracle(g), v, r, 3, std::to_string(v)));
    auto e = growth_estimates(ps, Window{r, r});
    EXPECT_GE(e.upper, 2.0);
    EXPECT_LE(e.upper, 3.0);
}

TEST(GrowthEstimates, WitnessLowerDecreasesWithDepth) {
    Truncation t(15);
    // three increasing crossings below the apex need four levels
    OverlayGraph g(CutSet::level_set(t, {2, 5, 9, 13}), OverlayConfig{Variant::W_I, 3, Rational(0), 7});
    Rng rng(6);
    std::vector<double> mean(4, 0.0);
    int roots = 0;
    for (int attempt = 0; attempt < 200 && roots < 6; ++attempt) {
        VertexId o = RootLaw(t).sample_id(rng);
        if (t.generation(o) > 2 || g.guarded(o)) continue;
        std::vector<double> ex(4);
        try {
            for (int m = 1; m <= 3; ++m) ex[m] = *witness_lower(g, o, m).exponent;
        } catch (const BoundaryError&) {
            continue;
        }
        for (int m = 1; m <= 3; ++m) mean[m] += ex[m];
        ++roots;
    }
    ASSERT_EQ(roots, 6);
    EXPECT_GE(mean[1], mean[2]);
    EXPECT_GE(mean[2], mean[3]);
}

TEST(Mtp, NeighborTransportBalancesExactly) {
    Truncation t(16);
    auto r = mtp_test(canopy_ensemble(t), transports::each_neighbor<VertexId>(), {10000, 100000, 1});
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.mean_out, r.mean_in);
    EXPECT_EQ(r.stderr_diff, 0.0);
    EXPECT_GE(r.accepted, 10000u);
}

TEST(Mtp, ParentTransportOnCanopy) {
    Truncation t(16);
    auto r = mtp_test(canopy_ensemble(t), parent_transport(), {10000, 100000, 2});
    EXPECT_TRUE(r.pass) << r.mean_out << " vs " << r.mean_in << " se " << r.stderr_diff;
    EXPECT_DOUBLE_EQ(r.mean_out, 1.0);
    EXPECT_NEAR(r.mean_in, 1.0, 4 * r.stderr_diff);
    EXPECT_LT(r.rejection_rate(), 0.01);
}

TEST(Mtp, LeafOnlyControlFails) {
    Truncation t(16);
    auto r = mtp_test(canopy_leaf_ensemble(t), parent_transport(), {10000, 100000, 3});
    EXPECT_FALSE(r.pass);
    EXPECT_EQ(r.mean_out, 1.0);
    EXPECT_EQ(r.mean_in, 0.0);
}

TEST(Mtp, TooFewAcceptedSamplesFail) {
    Truncation t(5);
    auto r = mtp_test(canopy_ensemble(t, 3), transports::each_neighbor<VertexId>(), {10000, 500, 1});
    EXPECT_FALSE(r.pass);
    EXPECT_LT(r.accepted, 10000u);
}

TEST(Mtp, TransportReadsOnlyTheLocalBall) {
    Truncation t(12);
    auto e = canopy_ensemble(t);
    auto spec = transports::each_neighbor<VertexId>();
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        VertexId o = e.root(rng);
        auto base = mtp_sample(e, spec, o);
        // attach a phantom neighbor to every vertex farther than 2 rho from o
        auto far = e;
        far.nbrs = [&, o](const VertexId& v, std::vector<VertexId>& out) {
            e.nbrs(v, out);
            if (t.tree_path(o, v).size() > 3) out.push_back(t.vertex_count() + v);
        };
        auto pert = mtp_sample(far, spec, o);
        ASSERT_EQ(base.has_value(), pert.has_value());
        if (base) EXPECT_EQ(*base, *pert);
    }
}

TEST(Mtp, OverlayEnsemblesBalance) {
    Truncation t(15);
    for (auto variant : {Variant::W_I, Variant::W_star_J}) {
        CutSet cuts = variant == Variant::W_I ? CutSet::level_set(t, {3, 8, 14})
                                              : select_J(t, {1, 4, 9}, Rational(1), 2, 0, 3);
        Rational eps = variant == Variant::W_I ? Rational(0) : make_rational(1, 24);
        OverlayGraph g(cuts, OverlayConfig{variant, 3, eps, 7});
        Ensemble<VertexId> e{to_string(variant), g.oracle(), [&](const VertexId& v) { return g.guarded(v); },
                             [&](Rng& rng) { return RootLaw(t).sample_id(rng); }};
        auto cut_up = transports::along<VertexId>("cut_up", [&](const VertexId& x, const VertexId& y) {
            return g.cuts().cut_above(x) && y == Truncation::parent(x);
        });
        for (const auto& spec : {transports::each_neighbor<VertexId>(), cut_up}) {
            auto r = mtp_test(e, spec, {10000, 100000, 4});
            EXPECT_TRUE(r.pass) << e.name << ' ' << spec.name << ": " << r.mean_out << " vs " << r.mean_in;
            EXPECT_GE(r.accepted, 10000u);
        }
    }
}

}  // namespace
}  // namespace ngl
