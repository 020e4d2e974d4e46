#pragma once

// Products of canopy truncations: a fiber coordinate in a depth-N1 tree and
// a position in a depth-N2 fiber. Each fiber carries a W*(J') overlay;
// lucky vertices trade their vertical cut edge for a horizontal one.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ngl/canopy.hpp"
#include "ngl/error.hpp"
#include "ngl/exact.hpp"
#include "ngl/overlay.hpp"
#include "ngl/partition.hpp"
#include "ngl/rng.hpp"
#include "ngl/search.hpp"

namespace ngl {

struct PVertex {
    VertexAddr first;   // fiber coordinate
    VertexAddr second;  // position inside the fiber

    friend auto operator<=>(const PVertex&, const PVertex&) = default;
};

/// Per-index epsilon: the geometric schedule 1/(4^k d (d-1)^2), or an
/// override list (the last entry repeats).
class EpsSchedule {
public:
    static EpsSchedule geometric(int d) {
        EpsSchedule s;
        s.d_ = d;
        return s;
    }
    static EpsSchedule overridden(std::vector<Rational> values) {
        if (values.empty()) throw ConfigError("override schedule needs at least one value");
        for (const auto& v : values)
            if (v <= 0) throw ConfigError("override schedule values must be positive");
        EpsSchedule s;
        s.values_ = std::move(values);
        return s;
    }
    /// "geometric" or "override:a,b,c" with rational entries.
    static EpsSchedule parse(const std::string& text, int d) {
        if (text == "geometric") return geometric(d);
        const std::string prefix = "override:";
        if (text.rfind(prefix, 0) != 0) throw ConfigError("unknown eps schedule: " + text);
        std::vector<Rational> vals;
        std::string rest = text.substr(prefix.size());
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            std::size_t comma = rest.find(',', pos);
            if (comma == std::string::npos) comma = rest.size();
            vals.push_back(parse_rational(rest.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        return overridden(std::move(vals));
    }

    bool is_geometric() const noexcept { return values_.empty(); }
    Rational at(int k) const {
        if (k < 0) throw ConfigError("eps schedule index must be nonnegative");
        if (is_geometric()) {
            BigInt den = BigInt(d_) * (d_ - 1) * (d_ - 1);
            for (int i = 0; i < k; ++i) den *= 4;
            return Rational(BigInt(1), den);
        }
        return values_[std::min<std::size_t>(static_cast<std::size_t>(k), values_.size() - 1)];
    }
    std::string describe() const {
        if (is_geometric()) return "geometric";
        std::string s = "override:";
        for (std::size_t i = 0; i < values_.size(); ++i) s += (i ? "," : "") + to_string(values_[i]);
        return s;
    }

private:
    int d_ = 3;
    std::vector<Rational> values_;
};

/// Number of product vertices with an upward path to (a, b): T(a) x T(b).
inline BigInt tbox_size(int gen_first, int gen_second) {
    return BigInt(subtree_size(gen_first)) * BigInt(subtree_size(gen_second));
}
inline BigInt tbox_size(const PVertex& u) { return tbox_size(u.first.generation, u.second.generation); }

/// tbox <= eps * log_{d-1}(cluster size).
inline bool turnable_bound(const BigInt& tbox, const Rational& eps, int d, std::uint64_t cluster_size) {
    if (cluster_size <= 1) return false;
    return leq_eps_log(tbox, eps, d - 1, BigInt(cluster_size));
}

namespace detail {

/// Size of the cluster topped by `top`, pretending the cut edges above the
/// vertices in `skip` are absent; stops counting past `cap`.
inline std::uint64_t cluster_size_skipping(const CutSet& cuts, VertexId top, const std::vector<VertexId>& skip,
                                           std::uint64_t cap) {
    const Truncation& t = cuts.truncation();
    auto cut = [&](VertexId c) {
        return cuts.cut_above(c) && std::find(skip.begin(), skip.end(), c) == skip.end();
    };
    std::uint64_t count = 0;
    std::vector<VertexId> stack{top};
    while (!stack.empty()) {
        VertexId x = stack.back();
        stack.pop_back();
        if (++count > cap) return count;
        if (t.generation(x) == 0) continue;
        for (VertexId c : {Truncation::left_child(x), Truncation::right_child(x)})
            if (!cut(c)) stack.push_back(c);
    }
    return count;
}

inline VertexId top_skipping(const CutSet& cuts, VertexId x, const std::vector<VertexId>& skip) {
    while (x != Truncation::apex_id()) {
        if (cuts.cut_above(x) && std::find(skip.begin(), skip.end(), x) == skip.end()) return x;
        x = Truncation::parent(x);
    }
    return x;
}

/// Smallest cluster size satisfying the bound, as a flood cap (saturating).
inline std::uint64_t size_needed(const BigInt& tbox, const Rational& eps, int d, std::uint64_t limit) {
    double expo = tbox.convert_to<double>() / to_double(eps) * std::log2(static_cast<double>(d - 1));
    if (expo >= 62) return limit;
    return std::min(limit, static_cast<std::uint64_t>(std::ceil(std::exp2(expo))) + 1);
}

}  // namespace detail

/// The vertical edge above x in a fiber of index `fiber_gen` is turnable
/// with respect to the next fiber's cut set. Open clusters never qualify.
inline bool is_turnable(const CutSet& next, VertexId x, int fiber_gen, const EpsSchedule& sched, int d) {
    VertexId top = cluster_top(next, x);
    if (top == Truncation::apex_id()) return false;
    BigInt tbox = tbox_size(fiber_gen + 1, next.truncation().generation(x));
    Rational eps = sched.at(fiber_gen + 1);
    std::uint64_t cap = detail::size_needed(tbox, eps, d, next.truncation().vertex_count());
    return turnable_bound(tbox, eps, d, cluster_size_capped(next, top, cap));
}

struct ProductConfig {
    int d = 3;
    int fiber_depth = 4;  // N1
    int depth = 16;       // N2
    std::vector<int> levels{1, 6, 11};
    int L = 4;
    int k0 = 0;
    Rational eps_J{BigInt(1), BigInt(2)};       // drives the selection of J (needs L * eps_J > 1)
    Rational fiber_eps{BigInt(1), BigInt(13)};  // ext density of every fiber overlay
    // 14 (2^{k+1} - 1): closed level-11 clusters pass the bound, bare level-6 tops do not
    EpsSchedule schedule = EpsSchedule::overridden({Rational(42), Rational(42), Rational(98), Rational(210), Rational(434)});
    int turn_targets = 64;
    std::uint64_t seed = 1;
    std::uint64_t max_cluster = std::uint64_t{1} << 22;
};

struct FiberThinning {
    VertexId fiber = 0;
    std::size_t targeted = 0;
    std::size_t realized = 0;  // targets made turnable
    std::size_t removed = 0;   // cut edges dropped from the next fiber
    std::size_t turnable = 0;  // |J_turn| after thinning
};

struct Thinned {
    std::vector<CutSet> jprime;
    std::vector<std::vector<VertexId>> turnable;  // sorted lower endpoints per fiber
    std::vector<FiberThinning> stats;
};

/// Greedy thinning by increasing fiber index: for the lowest `targets` cut
/// edges f of each fiber, drop the next fiber's cut edges on the upward
/// path of f's lower endpoint, one level at a time, until the bound holds.
inline Thinned thin_Jprime(const Truncation& fibers, const std::vector<CutSet>& base, const EpsSchedule& sched,
                           int d, int targets) {
    Thinned out;
    for (const auto& j : base) out.jprime.push_back(thin_copy(j));
    out.turnable.assign(base.size(), {});
    out.stats.assign(base.size(), {});
    for (VertexId v = 0; v < base.size(); ++v) out.stats[v].fiber = v;
    auto by_index = [&](const CutSet& c) {
        auto xs = c.lower_endpoints();
        const Truncation& t = c.truncation();
        std::sort(xs.begin(), xs.end(), [&](VertexId a, VertexId b) {
            return std::pair(t.generation(a), a) < std::pair(t.generation(b), b);
        });
        return xs;
    };
    for (int i = 0; i < fibers.depth(); ++i) {
        std::vector<VertexId> level;
        for (VertexId v = 0; v < fibers.vertex_count(); ++v)
            if (fibers.generation(v) == i) level.push_back(v);
        for (VertexId v : level) {
            CutSet& next = out.jprime[Truncation::parent(v)];
            const Truncation& t = next.truncation();
            auto xs = by_index(out.jprime[v]);
            if (xs.size() > static_cast<std::size_t>(targets)) xs.resize(static_cast<std::size_t>(targets));
            FiberThinning& st = out.stats[v];
            st.targeted = xs.size();
            for (VertexId x : xs) {
                std::vector<VertexId> above;
                for (VertexId y = x;; y = Truncation::parent(y)) {
                    if (next.cut_above(y)) above.push_back(y);
                    if (Truncation::parent(y) == Truncation::apex_id()) break;
                }
                BigInt tbox = tbox_size(i + 1, t.generation(x));
                Rational eps = sched.at(i + 1);
                std::uint64_t cap = detail::size_needed(tbox, eps, d, t.vertex_count());
                for (std::size_t k = 0; k <= above.size(); ++k) {
                    std::vector<VertexId> skip(above.begin(), above.begin() + static_cast<std::ptrdiff_t>(k));
                    VertexId top = detail::top_skipping(next, x, skip);
                    if (top == Truncation::apex_id()) break;
                    if (!turnable_bound(tbox, eps, d, detail::cluster_size_skipping(next, top, skip, cap))) continue;
                    for (VertexId y : skip) next.remove(y);
                    st.removed += skip.size();
                    ++st.realized;
                    break;
                }
            }
        }
        for (VertexId v : level) {
            const CutSet& next = out.jprime[Truncation::parent(v)];
            for (VertexId x : out.jprime[v].lower_endpoints())
                if (is_turnable(next, x, i, sched, d)) out.turnable[v].push_back(x);
            std::sort(out.turnable[v].begin(), out.turnable[v].end());
            out.stats[v].turnable = out.turnable[v].size();
        }
    }
    return out;
}

/// Product graph with the lucky rewiring; vertex ids are fiber * |fiber| + position.
class UGraph {
public:
    using Id = std::uint64_t;

    explicit UGraph(ProductConfig cfg) : cfg_(std::move(cfg)), fibers_(cfg_.fiber_depth), inner_(cfg_.depth) {
        if (cfg_.fiber_depth < 1) throw ConfigError("product: fiber depth must be at least 1");
        if (cfg_.turn_targets < 0) throw ConfigError("product: turn targets must be nonnegative");
        for (VertexId v = 0; v < fibers_.vertex_count(); ++v)
            base_.push_back(select_J(inner_, cfg_.levels, cfg_.eps_J, cfg_.L, cfg_.k0, fiber_key(v, 0)));
        thin_ = thin_Jprime(fibers_, base_, cfg_.schedule, cfg_.d, cfg_.turn_targets);
        for (VertexId v = 0; v < fibers_.vertex_count(); ++v)
            overlays_.emplace_back(thin_.jprime[v], OverlayConfig{Variant::W_star_J, cfg_.d, cfg_.fiber_eps,
                                                                  fiber_key(v, 1), cfg_.max_cluster, {8, true}});
        lucky_src_.assign(fibers_.vertex_count(), {});
        lucky_dst_.assign(fibers_.vertex_count(), {});
        for (VertexId u = 1; u < fibers_.vertex_count(); ++u) {
            VertexId up = Truncation::parent(u);
            const CutSet& sib = thin_.jprime[Truncation::sibling(u)];
            for (VertexId x : thin_.turnable[u]) {
                auto rep = overlays_[up].replacement(x);
                if (!std::binary_search(rep->ext.begin(), rep->ext.end(), x)) continue;
                if (sib.cut_above(x)) continue;
                lucky_src_[u].insert(x);
                lucky_dst_[up].emplace(x, u);
            }
        }
        for (VertexId u = 0; u < fibers_.vertex_count(); ++u)
            for (VertexId x : lucky_src_[u]) {
                std::vector<Id> buf;
                neighbors(id(u, x), buf);
                if (buf.size() > static_cast<std::size_t>(cfg_.d)) throw ValidationError("lucky source exceeds degree d");
                buf.clear();
                neighbors(id(Truncation::parent(u), x), buf);
                if (buf.size() > static_cast<std::size_t>(cfg_.d)) throw ValidationError("lucky target exceeds degree d");
            }
    }

    const ProductConfig& config() const noexcept { return cfg_; }
    const Truncation& fibers() const noexcept { return fibers_; }
    const Truncation& inner() const noexcept { return inner_; }
    const OverlayGraph& overlay(VertexId fiber) const { return overlays_.at(fiber); }
    const CutSet& jprime(VertexId fiber) const { return thin_.jprime.at(fiber); }
    const CutSet& base_J(VertexId fiber) const { return base_.at(fiber); }
    const std::vector<VertexId>& turnable(VertexId fiber) const { return thin_.turnable.at(fiber); }
    const std::vector<FiberThinning>& thinning() const noexcept { return thin_.stats; }

    Id vertex_count() const noexcept { return fibers_.vertex_count() * inner_.vertex_count(); }
    Id id(VertexId fiber, VertexId pos) const noexcept { return fiber * inner_.vertex_count() + pos; }
    Id id(const PVertex& p) const { return id(fibers_.id(p.first), inner_.id(p.second)); }
    VertexId fiber_of(Id x) const noexcept { return x / inner_.vertex_count(); }
    VertexId pos_of(Id x) const noexcept { return x % inner_.vertex_count(); }
    PVertex pvertex(Id x) const { return {fibers_.addr(fiber_of(x)), inner_.addr(pos_of(x))}; }

    bool is_lucky(Id x) const { return lucky_src_[fiber_of(x)].contains(pos_of(x)); }
    std::size_t lucky_count() const {
        std::size_t s = 0;
        for (const auto& l : lucky_src_) s += l.size();
        return s;
    }
    std::vector<Id> lucky() const {
        std::vector<Id> out;
        for (VertexId u = 0; u < lucky_src_.size(); ++u)
            for (VertexId x : lucky_src_[u]) out.push_back(id(u, x));
        std::sort(out.begin(), out.end());
        return out;
    }
    /// Lucky source whose horizontal edge ends at x, if any.
    std::optional<Id> lucky_source_into(Id x) const {
        const auto& m = lucky_dst_[fiber_of(x)];
        auto it = m.find(pos_of(x));
        if (it == m.end()) return std::nullopt;
        return id(it->second, pos_of(x));
    }
    bool guarded(Id x) const { return overlays_[fiber_of(x)].guarded(pos_of(x)); }

    void neighbors(Id x, std::vector<Id>& out) const {
        VertexId u = fiber_of(x), p = pos_of(x);
        const OverlayGraph& g = overlays_[u];
        std::vector<VertexId> buf;
        g.neighbors(p, buf);
        bool src = lucky_src_[u].contains(p);
        for (VertexId w : buf) {
            if (src && p != Truncation::apex_id() && w == Truncation::parent(p)) continue;  // F-up removed
            if (w != Truncation::apex_id() && Truncation::parent(w) == p && lucky_src_[u].contains(w)) continue;
            out.push_back(id(u, w));
        }
        if (src) out.push_back(id(Truncation::parent(u), p));
        auto it = lucky_dst_[u].find(p);
        if (it != lucky_dst_[u].end()) out.push_back(id(it->second, p));
    }
    std::vector<Id> adjacency(Id x) const {
        std::vector<Id> out;
        neighbors(x, out);
        std::sort(out.begin(), out.end());
        return out;
    }
    auto oracle() const {
        return [this](const Id& x, std::vector<Id>& out) { neighbors(x, out); };
    }

    /// Vertical edges removed by the rewiring are J' edges; horizontal edges are lucky.
    bool is_special_edge(Id a, Id b) const {
        if (fiber_of(a) == fiber_of(b)) {
            VertexId pa = pos_of(a), pb = pos_of(b);
            return inner_.adjacent(pa, pb) && jprime(fiber_of(a)).contains(pa, pb);
        }
        return true;
    }

    std::size_t max_degree() const {
        std::size_t best = 0;
        std::vector<Id> buf;
        for (Id x = 0; x < vertex_count(); ++x) {
            buf.clear();
            neighbors(x, buf);
            best = std::max(best, buf.size());
        }
        return best;
    }

private:
    std::uint64_t fiber_key(VertexId v, std::uint64_t which) const {
        return mix_key(cfg_.seed, {tag::fiber, v, which});
    }

    ProductConfig cfg_;
    Truncation fibers_;
    Truncation inner_;
    std::vector<CutSet> base_;
    Thinned thin_;
    std::vector<OverlayGraph> overlays_;
    std::vector<std::unordered_set<VertexId>> lucky_src_;                // per fiber: lucky positions
    std::vector<std::unordered_map<VertexId, VertexId>> lucky_dst_;      // per fiber: position -> source fiber
};

/// Ordered special edges (J' and lucky horizontal) crossed along a path.
inline std::vector<std::pair<UGraph::Id, UGraph::Id>> special_crossings(const UGraph& g,
                                                                      const std::vector<UGraph::Id>& path) {
    std::vector<std::pair<UGraph::Id, UGraph::Id>> seq;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (g.is_special_edge(path[i], path[i + 1]))
            seq.emplace_back(std::min(path[i], path[i + 1]), std::max(path[i], path[i + 1]));
    return seq;
}

struct PathInvarianceReport {
    int paths = 0;
    int violations = 0;
    std::size_t horizontal = 0;  // lucky edges on the reference path
};

inline PathInvarianceReport check_path_invariance(const UGraph& g, UGraph::Id a, UGraph::Id b, int trials,
                                                  std::uint64_t seed,
                                                  std::uint64_t max_visits = std::uint64_t{1} << 21) {
    PathInvarianceReport rep;
    auto nb = g.oracle();
    auto ref = bfs_path_to<UGraph::Id>(
        nb, a, [&](UGraph::Id x) { return x == b; }, [](UGraph::Id) { return true; }, max_visits);
    if (!ref) throw ConnectivityError("no product path between the probe vertices");
    auto want = special_crossings(g, *ref);
    for (auto [x, y] : want) rep.horizontal += g.fiber_of(x) != g.fiber_of(y);
    rep.paths = 1;
    for (int k = 0; k < trials; ++k) {
        auto w = [&](UGraph::Id x, UGraph::Id y) {
            auto h = mix_key(seed, {tag::trial, static_cast<std::uint64_t>(k), std::min(x, y), std::max(x, y)});
            return 1.0 + static_cast<double>(h % 1000) / 100.0;
        };
        auto p = weighted_path<UGraph::Id>(nb, a, b, w, max_visits);
        if (!p) throw ConnectivityError("no product path between the probe vertices");
        ++rep.paths;
        if (special_crossings(g, *p) != want) ++rep.violations;
    }
    return rep;
}

/// Reduced word in the free product of three involutions, i.e. a vertex of
/// the 3-regular tree: 2 bits per letter, length in the top byte.
struct T3Addr {
    std::uint32_t code = 0;

    int length() const noexcept { return static_cast<int>(code >> 24); }
    int letter(int i) const noexcept { return static_cast<int>((code >> (2 * i)) & 3u); }
    int last() const noexcept { return length() ? letter(length() - 1) : -1; }
    static T3Addr root() noexcept { return {}; }
    T3Addr times(int a) const {
        if (a < 0 || a > 2) throw AddressError("T3 letter out of range");
        int n = length();
        if (n && last() == a) return {static_cast<std::uint32_t>(((n - 1) << 24) | (code & ((1u << (2 * (n - 1))) - 1)))};
        if (n >= 12) throw AddressError("T3 word too long");
        std::uint32_t body = (code & 0xFFFFFFu) | (static_cast<std::uint32_t>(a) << (2 * n));
        return {static_cast<std::uint32_t>((n + 1) << 24) | body};
    }
    bool reduced() const noexcept {
        for (int i = 0; i + 1 < length(); ++i)
            if (letter(i) == letter(i + 1) || letter(i) > 2) return false;
        return length() == 0 || letter(length() - 1) <= 2;
    }
    friend auto operator<=>(const T3Addr&, const T3Addr&) = default;
};

inline std::uint64_t t3_ball_size(int R) { return 1 + 3 * ((std::uint64_t{1} << R) - 1); }

struct UT3Vertex {
    UGraph::Id x = 0;
    T3Addr w;
    friend auto operator<=>(const UT3Vertex&, const UT3Vertex&) = default;
};

}  // namespace ngl

template <>
struct std::hash<ngl::T3Addr> {
    std::size_t operator()(const ngl::T3Addr& w) const noexcept { return ngl::splitmix64(w.code); }
};

template <>
struct std::hash<ngl::UT3Vertex> {
    std::size_t operator()(const ngl::UT3Vertex& v) const noexcept {
        return ngl::splitmix64(v.x * 0x9E3779B97F4A7C15ull ^ v.w.code);
    }
};

namespace ngl {

/// Cartesian product with the 3-regular tree, tree coordinate cut at radius R.
class UT3Graph {
public:
    UT3Graph(const UGraph& u, int R) : u_(&u), R_(R) {
        if (R < 0 || R > 12) throw ConfigError("UT3 radius must be in [0, 12]");
    }
    int radius() const noexcept { return R_; }
    void neighbors(const UT3Vertex& v, std::vector<UT3Vertex>& out) const {
        std::vector<UGraph::Id> buf;
        u_->neighbors(v.x, buf);
        for (auto y : buf) out.push_back({y, v.w});
        for (int a = 0; a < 3; ++a) {
            if (v.w.length() >= R_ && v.w.last() != a) continue;
            out.push_back({v.x, v.w.times(a)});
        }
    }
    auto oracle() const {
        return [this](const UT3Vertex& v, std::vector<UT3Vertex>& out) { neighbors(v, out); };
    }

private:
    const UGraph* u_;
    int R_;
};

/// Right-hand sides of the product ball estimate at radius r, from the
/// factor's ball sizes b[k] = |B_k(o1)|.
struct ProductBound {
    BigInt direct;  // |B_r(o)| in the product
    BigInt middle;  // |B_r| + 3 sum_{i=1..r} 2^{i-1} |B_{r-i}|
    BigInt coarse;  // 6 r 2^r |B_r|
    bool holds() const { return direct <= middle && middle <= coarse; }
};

inline ProductBound product_bound(const std::vector<std::uint64_t>& b, int r, std::uint64_t direct) {
    ProductBound pb;
    pb.direct = direct;
    pb.middle = BigInt(b.at(static_cast<std::size_t>(r)));
    for (int i = 1; i <= r; ++i) pb.middle += BigInt(3) * (BigInt(1) << (i - 1)) * BigInt(b.at(static_cast<std::size_t>(r - i)));
    pb.coarse = BigInt(6) * r * (BigInt(1) << r) * BigInt(b.at(static_cast<std::size_t>(r)));
    return pb;
}

}  // namespace ngl
