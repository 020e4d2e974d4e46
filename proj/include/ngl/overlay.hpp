#pragma once

// Cluster-replacement overlays on a canopy truncation: every cluster of a
// cut set is rewired as a Hamiltonian path or a high-girth graph, while the
// cut edges themselves are kept.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ngl/canopy.hpp"
#include "ngl/error.hpp"
#include "ngl/exact.hpp"
#include "ngl/girth_graph.hpp"
#include "ngl/partition.hpp"
#include "ngl/rng.hpp"
#include "ngl/search.hpp"

namespace ngl {

enum class Variant { W_I, W_star_J };
enum class ClusterType { path, exp };

inline const char* to_string(ClusterType t) { return t == ClusterType::path ? "path" : "exp"; }
inline const char* to_string(Variant v) { return v == Variant::W_I ? "W_I" : "W_star_J"; }

/// Fair coin per cluster, keyed by (seed, top).
class TypeAssignment {
public:
    explicit TypeAssignment(std::uint64_t seed = 1) : seed_(seed) {}
    ClusterType operator()(VertexId top) const noexcept {
        return (mix_key(seed_, {tag::type, top}) & 1) ? ClusterType::exp : ClusterType::path;
    }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

/// Hamiltonian path through K: boundary first, then the rest, top last.
/// Returned as the visiting order (global ids).
inline std::vector<VertexId> path_order(const Cluster& k, std::uint64_t seed) {
    if (k.size <= 1) return k.vertices;
    if (std::binary_search(k.boundary.begin(), k.boundary.end(), k.top))
        throw ConstraintError("cluster top is a boundary vertex; no path can start at the boundary and end at top");
    std::vector<VertexId> head = k.boundary, tail;
    tail.reserve(k.size - head.size());
    for (VertexId v : k.vertices)
        if (v != k.top && !std::binary_search(k.boundary.begin(), k.boundary.end(), v)) tail.push_back(v);
    Rng rng = stream(seed, {tag::path_order, k.top});
    shuffle(std::span<VertexId>(head), rng);
    shuffle(std::span<VertexId>(tail), rng);
    head.insert(head.end(), tail.begin(), tail.end());
    head.push_back(k.top);
    return head;
}

inline std::vector<std::pair<VertexId, VertexId>> new_path(const Cluster& k, std::uint64_t seed) {
    auto order = path_order(k, seed);
    std::vector<std::pair<VertexId, VertexId>> edges;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) edges.emplace_back(order[i], order[i + 1]);
    return edges;
}

/// Uniform subset of K minus (boundary and top) of size ceil(eps/2 |K|).
inline std::vector<VertexId> draw_ext(const Cluster& k, const Rational& eps, std::uint64_t seed) {
    Rational want = eps * Rational(BigInt(k.size)) / 2;
    BigInt s = numerator(want) / denominator(want);
    if (s * denominator(want) != numerator(want)) ++s;
    std::vector<VertexId> pool;
    for (VertexId v : k.vertices)
        if (v != k.top && !std::binary_search(k.boundary.begin(), k.boundary.end(), v)) pool.push_back(v);
    std::size_t take = std::min<std::size_t>(pool.size(), s.convert_to<std::size_t>());
    Rng rng = stream(seed, {tag::ext, k.top});
    shuffle(std::span<VertexId>(pool), rng);
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// The materialized replacement of one cluster.
struct Replacement {
    Cluster cluster;
    ClusterType type = ClusterType::path;
    std::vector<std::vector<std::uint32_t>> adj;  // local indices into cluster.vertices
    int achieved_girth = infinite_girth;
    int target_girth = 0;
    int default_target = 0;
    std::vector<VertexId> ext;     // sorted
    std::vector<VertexId> marked;  // sorted; pruned vertices of an exp cluster
    std::vector<Edge> pruned;      // local edges removed by the pruning
    std::optional<VertexId> exceptional;
    bool complete = false;  // too small for the generator, K_n used instead

    bool fell_back() const { return type == ClusterType::exp && !complete && target_girth < default_target; }
    std::size_t degree_in(VertexId v) const { return adj[cluster.local_index(v)].size(); }
    /// Fraction of vertices of degree d - 1 inside the replacement graph.
    double deficient_fraction(int d) const {
        std::size_t c = 0;
        for (const auto& a : adj) c += (a.size() + 1 == static_cast<std::size_t>(d));
        return adj.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(adj.size());
    }
};

struct OverlayConfig {
    Variant variant = Variant::W_I;
    int d = 3;
    Rational eps{0};  // ext density; for W_star_J also bounds the marked set
    std::uint64_t seed = 1;
    std::uint64_t max_cluster = std::uint64_t{1} << 22;
    GenerateOptions gen{8, true};
};

class OverlayGraph {
public:
    OverlayGraph(CutSet cuts, OverlayConfig cfg)
        : cuts_(std::move(cuts)), cfg_(std::move(cfg)), types_(cfg_.seed), cache_(std::make_shared<Cache>()) {
        if (cfg_.d < 3) throw ConfigError("overlay: d must be at least 3");
        if (cfg_.eps < 0) throw ConfigError("overlay: epsilon must be nonnegative");
        if (cfg_.variant == Variant::W_star_J) {
            if (cuts_.kind() != CutKind::J) throw ConfigError("W_star_J needs a selected cut set");
            Rational lim(BigInt(1), BigInt(cfg_.d) * (cfg_.d - 1) * (cfg_.d - 1));
            if (!(cfg_.eps < lim)) throw ConfigError("W_star_J needs epsilon < 1/(d(d-1)^2)");
        }
    }

    const Truncation& truncation() const noexcept { return cuts_.truncation(); }
    const CutSet& cuts() const noexcept { return cuts_; }
    const OverlayConfig& config() const noexcept { return cfg_; }
    const TypeAssignment& types() const noexcept { return types_; }
    int d() const noexcept { return cfg_.d; }

    VertexId top_of(VertexId v) const { return cluster_top(cuts_, v); }
    bool guarded(VertexId v) const { return top_of(v) == Truncation::apex_id(); }
    ClusterType type_of(VertexId v) const { return types_(top_of(v)); }

    /// Replacement of the cluster containing v, built on first touch.
    std::shared_ptr<const Replacement> replacement(VertexId v) const {
        if (!truncation().valid(v)) throw AddressError("overlay: vertex out of range");
        VertexId top = top_of(v);
        {
            std::lock_guard lk(cache_->mu);
            auto it = cache_->map.find(top);
            if (it != cache_->map.end()) return it->second;
        }
        auto built = std::make_shared<const Replacement>(build(top));
        std::lock_guard lk(cache_->mu);
        return cache_->map.emplace(top, std::move(built)).first->second;
    }

    void neighbors(VertexId v, std::vector<VertexId>& out) const {
        auto rep = replacement(v);
        for (std::uint32_t j : rep->adj[rep->cluster.local_index(v)]) out.push_back(rep->cluster.vertices[j]);
        cut_neighbors(v, out);
    }
    std::vector<VertexId> adjacency(VertexId v) const {
        std::vector<VertexId> out;
        neighbors(v, out);
        std::sort(out.begin(), out.end());
        return out;
    }
    std::vector<VertexAddr> adjacency(const VertexAddr& v) const {
        std::vector<VertexAddr> out;
        for (VertexId w : adjacency(truncation().id(v))) out.push_back(truncation().addr(w));
        return out;
    }

    void cut_neighbors(VertexId v, std::vector<VertexId>& out) const {
        if (cuts_.cut_above(v)) out.push_back(Truncation::parent(v));
        if (truncation().generation(v) > 0)
            for (VertexId c : {Truncation::left_child(v), Truncation::right_child(v)})
                if (cuts_.cut_above(c)) out.push_back(c);
    }

    /// Oracle view for the search utilities.
    auto oracle() const {
        return [this](const VertexId& v, std::vector<VertexId>& out) { neighbors(v, out); };
    }

    /// Materializes every cluster (small truncations only).
    std::vector<std::shared_ptr<const Replacement>> materialize_all() const {
        std::vector<std::shared_ptr<const Replacement>> out;
        for (VertexId v = 0; v < truncation().vertex_count(); ++v)
            if (v == Truncation::apex_id() || cuts_.cut_above(v)) out.push_back(replacement(v));
        return out;
    }
    std::vector<std::shared_ptr<const Replacement>> materialized() const {
        std::lock_guard lk(cache_->mu);
        std::vector<std::shared_ptr<const Replacement>> out;
        for (const auto& [top, rep] : cache_->map) out.push_back(rep);
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a->cluster.top < b->cluster.top; });
        return out;
    }

    std::size_t max_degree() const {
        std::size_t best = 0;
        std::vector<VertexId> buf;
        for (VertexId v = 0; v < truncation().vertex_count(); ++v) {
            buf.clear();
            neighbors(v, buf);
            best = std::max(best, buf.size());
        }
        return best;
    }
    std::size_t degree_cap() const { return cfg_.variant == Variant::W_I ? cfg_.d + 2 : cfg_.d; }

    /// One "a b" line per edge with a < b, heap ids, after a "# n" header.
    void write_edges(std::ostream& os) const {
        os << "# " << truncation().vertex_count() << '\n';
        std::vector<VertexId> buf;
        for (VertexId v = 0; v < truncation().vertex_count(); ++v) {
            buf.clear();
            neighbors(v, buf);
            std::sort(buf.begin(), buf.end());
            for (VertexId w : buf)
                if (v < w) os << v << ' ' << w << '\n';
        }
    }

private:
    struct Cache {
        std::mutex mu;
        std::unordered_map<VertexId, std::shared_ptr<const Replacement>> map;
    };

    Replacement build(VertexId top) const {
        Replacement r;
        r.cluster = cluster_at_top(cuts_, top, cfg_.max_cluster);
        r.type = types_(top);
        const Cluster& k = r.cluster;
        auto n = static_cast<std::uint32_t>(k.size);
        r.adj.assign(n, {});
        r.ext = draw_ext(k, cfg_.eps, cfg_.seed);
        if (r.type == ClusterType::path) {
            for (auto [a, b] : new_path(k, cfg_.seed)) {
                auto i = static_cast<std::uint32_t>(k.local_index(a));
                auto j = static_cast<std::uint32_t>(k.local_index(b));
                r.adj[i].push_back(j);
                r.adj[j].push_back(i);
            }
            r.achieved_girth = infinite_girth;
            return r;
        }
        r.default_target = default_girth_target(n, cfg_.d);
        GirthGraph g;
        std::string where = " in cluster " + truncation().format(truncation().addr(top));
        try {
            if (n <= static_cast<std::uint32_t>(cfg_.d)) {
                g = complete_graph(n, cfg_.d);
                r.complete = true;
            } else if (cfg_.variant == Variant::W_I) {
                g = generate(n, cfg_.d, r.default_target, mix_key(cfg_.seed, {tag::girth, top}), cfg_.gen);
            } else {
                std::vector<VertexId> mk = k.boundary;
                mk.insert(mk.end(), r.ext.begin(), r.ext.end());
                bool top_cut = cuts_.cut_above(top);
                if (!top_cut && truncation().generation(top) > 0)
                    for (VertexId c : {Truncation::left_child(top), Truncation::right_child(top)})
                        top_cut = top_cut || cuts_.cut_above(c);
                if (top_cut) mk.push_back(top);
                std::sort(mk.begin(), mk.end());
                std::vector<std::uint32_t> local;
                for (VertexId v : mk) local.push_back(static_cast<std::uint32_t>(k.local_index(v)));
                GenerateOptions opt = cfg_.gen;
                opt.measure = false;  // pruning re-measures
                g = generate_constrained(n, cfg_.d, local, r.default_target, mix_key(cfg_.seed, {tag::girth, top}),
                                         opt);
                g = prune_marked(g, mix_key(cfg_.seed, {tag::prune, top}));
                r.marked = std::move(mk);
            }
        } catch (const ConstraintError& e) {
            throw ConstraintError(e.what() + where);
        } catch (const GenerationError& e) {
            throw GenerationError(e.what() + where, e.best_girth());
        }
        r.adj = std::move(g.adj);
        r.pruned = std::move(g.pruned);
        r.achieved_girth = g.achieved_girth;
        r.target_girth = g.target_girth;
        if (g.exceptional) r.exceptional = k.vertices[*g.exceptional];
        return r;
    }

    CutSet cuts_;
    OverlayConfig cfg_;
    TypeAssignment types_;
    std::shared_ptr<Cache> cache_;
};

/// Ordered cut edges (by lower endpoint) crossed by consecutive steps of a path.
inline std::vector<VertexId> crossed_cuts(const CutSet& cuts, const std::vector<VertexId>& path) {
    const Truncation& t = cuts.truncation();
    std::vector<VertexId> seq;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        VertexId a = path[i], b = path[i + 1];
        if (t.adjacent(a, b) && cuts.contains(a, b)) seq.push_back(t.generation(a) < t.generation(b) ? a : b);
    }
    return seq;
}

inline std::vector<VertexId> tree_cut_sequence(const CutSet& cuts, VertexId u, VertexId v) {
    return crossed_cuts(cuts, cuts.truncation().tree_path(u, v));
}

/// Level indices of the sequence are strictly increasing.
inline bool increasing_indices(const CutSet& cuts, const std::vector<VertexId>& seq) {
    const Truncation& t = cuts.truncation();
    for (std::size_t i = 0; i + 1 < seq.size(); ++i)
        if (cuts.level_index(t.generation(seq[i])) >= cuts.level_index(t.generation(seq[i + 1]))) return false;
    return true;
}

/// A vertex a few generations away from u through the tree: climb 2..10
/// generations, then descend a random number of steps at random.
inline VertexId sample_nearby(const Truncation& t, VertexId u, Rng& rng) {
    int up = 2 + static_cast<int>(uniform_below(rng, 9));
    for (int i = 0; i < up && u != Truncation::apex_id(); ++i) u = Truncation::parent(u);
    int down = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(up) + 1));
    for (int i = 0; i < down && t.generation(u) > 0; ++i)
        u = uniform_below(rng, 2) ? Truncation::right_child(u) : Truncation::left_child(u);
    return u;
}

struct CutSequenceReport {
    std::vector<VertexId> reference;  // cut sequence of the tree path
    int paths = 0;
    int violations = 0;
    bool ok() const { return violations == 0; }
};

/// Compares the cut-edge sequence of a shortest path and of `trials`
/// randomly weighted shortest (hence simple) paths with the tree path.
inline CutSequenceReport check_cut_sequence(const OverlayGraph& g, VertexId u, VertexId v, int trials, std::uint64_t seed,
                                 std::uint64_t max_visits = std::uint64_t{1} << 20) {
    CutSequenceReport rep;
    rep.reference = tree_cut_sequence(g.cuts(), u, v);
    auto nb = g.oracle();
    auto check = [&](const std::optional<std::vector<VertexId>>& p) {
        if (!p) throw ConnectivityError("no overlay path between the probe vertices");
        ++rep.paths;
        if (crossed_cuts(g.cuts(), *p) != rep.reference) ++rep.violations;
    };
    check(bfs_path_to<VertexId>(
        nb, u, [&](VertexId x) { return x == v; }, [](VertexId) { return true; }, max_visits));
    for (int k = 0; k < trials; ++k) {
        auto w = [&](VertexId a, VertexId b) {
            auto h = mix_key(seed, {tag::trial, static_cast<std::uint64_t>(k), std::min(a, b), std::max(a, b)});
            return 1.0 + static_cast<double>(h % 1000) / 100.0;
        };
        check(weighted_path<VertexId>(nb, u, v, w, max_visits));
    }
    return rep;
}

struct BallCount {
    std::uint64_t size = 0;
    bool contaminated = false;  // touched the open cluster
    bool truncated = false;
};

inline BallCount overlay_ball(const OverlayGraph& g, VertexId o, int r,
                              std::uint64_t cap = std::uint64_t{1} << 24) {
    BallCount b;
    auto p = bfs_ball<VertexId>(
        g.oracle(), o, r, cap, [&](VertexId x, int) { b.contaminated = b.contaminated || g.guarded(x); },
        [](VertexId) { return true; });
    b.size = p.total();
    b.truncated = p.truncated;
    return b;
}

struct LowerWitness {
    std::vector<VertexId> path;
    int L = 0;
    VertexId target = 0;
    std::uint64_t cluster_size = 0;
    double c = 0;  // boundary ratio of the target cluster
    std::size_t crossings = 0;
    bool length_ok = false;  // L >= (1 - c)|K_t|
    BallCount ball;          // |B_L(o)|
    double ball_bound = 0;   // 3 (L / (1 - c))^2
    bool ball_ok = false;
    std::optional<double> exponent;  // |B_L|^(1/L), undefined for L = 0
};

struct UpperWitness {
    std::vector<VertexId> path;
    int L = 0;
    int r = 0;
    VertexId target = 0;
    std::uint64_t cluster_size = 0;
    std::size_t crossings = 0;
    BallCount ball;  // |B_{L+r}(o)|
    double threshold = 0;
    bool ball_ok = false;
    std::optional<double> exponent;
};

namespace detail {

inline std::vector<VertexId> witness_path(const OverlayGraph& g, VertexId o, std::size_t m, bool want_exp,
                                          std::uint64_t max_visits) {
    const CutSet& cuts = g.cuts();
    auto target = [&](VertexId x) {
        if (g.guarded(x)) return false;
        VertexId top = g.top_of(x);
        if (g.types()(top) != (want_exp ? ClusterType::exp : ClusterType::path)) return false;
        if (want_exp) {
            auto rep = g.replacement(x);
            if (!std::binary_search(rep->cluster.boundary.begin(), rep->cluster.boundary.end(), x)) return false;
        } else if (x != top) {
            return false;
        }
        // every crossing goes upward, so K(x) is entered through its leaves
        auto seq = tree_cut_sequence(cuts, o, x);
        if (seq.size() < m || !increasing_indices(cuts, seq)) return false;
        const Truncation& t = cuts.truncation();
        return std::all_of(seq.begin(), seq.end(), [&](VertexId v) { return t.is_ancestor(v, o); });
    };
    auto path = bfs_path_to<VertexId>(
        g.oracle(), o, target, [&](VertexId x) { return !g.guarded(x); }, max_visits);
    if (!path) throw BoundaryError("no admissible witness target below the open cluster; truncation too small");
    return *path;
}

}  // namespace detail

/// Minimal path from o to the top of a closed path cluster across >= m cut
/// edges of increasing index, with the small-ball estimates along it.
inline LowerWitness witness_lower(const OverlayGraph& g, VertexId o, std::size_t m,
                                  std::uint64_t max_visits = std::uint64_t{1} << 24) {
    if (g.guarded(o)) throw BoundaryError("witness root lies in the open cluster");
    LowerWitness w;
    w.path = detail::witness_path(g, o, m, false, max_visits);
    w.L = static_cast<int>(w.path.size()) - 1;
    w.target = w.path.back();
    auto rep = g.replacement(w.target);
    w.cluster_size = rep->cluster.size;
    w.c = to_double(boundary_ratio(rep->cluster));
    w.crossings = tree_cut_sequence(g.cuts(), o, w.target).size();
    w.length_ok = static_cast<double>(w.L) >= (1.0 - w.c) * static_cast<double>(w.cluster_size) - 1e-9;
    w.ball = overlay_ball(g, o, w.L);
    double scaled = static_cast<double>(w.L) / (1.0 - w.c);
    w.ball_bound = 3.0 * scaled * scaled;
    w.ball_ok = static_cast<double>(w.ball.size) <= w.ball_bound;
    if (w.L > 0) w.exponent = std::pow(static_cast<double>(w.ball.size), 1.0 / w.L);
    return w;
}

/// Minimal path from o to a boundary vertex of a closed exp cluster across
/// >= m cut edges of increasing index, and the ball that cluster forces.
inline UpperWitness witness_upper(const OverlayGraph& g, VertexId o, std::size_t m, std::uint64_t seed = 1,
                                  std::uint64_t max_visits = std::uint64_t{1} << 24) {
    if (g.guarded(o)) throw BoundaryError("witness root lies in the open cluster");
    UpperWitness w;
    w.path = detail::witness_path(g, o, m, true, max_visits);
    w.L = static_cast<int>(w.path.size()) - 1;
    w.target = w.path.back();
    auto rep = g.replacement(w.target);
    w.cluster_size = rep->cluster.size;
    w.crossings = tree_cut_sequence(g.cuts(), o, w.target).size();
    int by_log = floor_log(w.cluster_size, g.d() - 1) / 2;
    w.r = rep->achieved_girth == infinite_girth ? by_log : std::min(rep->achieved_girth / 2, by_log);
    if (g.config().variant == Variant::W_I) {
        w.threshold = std::pow(static_cast<double>(g.d() - 1), w.r);
    } else {
        GWOracle oracle{g.d(), rep->deficient_fraction(g.d())};
        w.threshold = static_cast<double>(gw_percentile(oracle, w.r, 0.05, 2000, seed));
    }
    w.ball = overlay_ball(g, o, w.L + w.r);
    w.ball_ok = static_cast<double>(w.ball.size) >= w.threshold;
    if (w.L + w.r > 0) w.exponent = std::pow(static_cast<double>(w.ball.size), 1.0 / (w.L + w.r));
    return w;
}

}  // namespace ngl
