#ifndef NGL_PARTITION_HPP
#define NGL_PARTITION_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <memory>
#include <ostream>
#include <unordered_set>
#include <vector>

#include "ngl/canopy.hpp"
#include "ngl/exact.hpp"
#include "ngl/rng.hpp"

namespace ngl {

enum class SequenceMode { tower_valid, surrogate, invalid };

struct IndexSequence {
    std::vector<std::uint64_t> levels;
    int d = 3;
    SequenceMode mode = SequenceMode::surrogate;
};

struct GapCheck {
    std::size_t index = 0;        // gap between levels[index] and levels[index + 1]
    std::uint64_t gap = 0;
    bool tower_ok = false;
    bool surrogate_ok = false;
};

struct SequenceReport {
    bool first_level_ok = false;  // l_0 >= d
    std::vector<GapCheck> gaps;
    SequenceMode qualifies = SequenceMode::invalid;

    bool tower_valid() const { return qualifies == SequenceMode::tower_valid; }
    bool surrogate_valid() const { return qualifies != SequenceMode::invalid; }
};

namespace detail {

// gap >= 2^(2^(level+2)) * log2(d-1), decided exactly. For d-1 a power of two
// the right side is an integer; otherwise log2(d-1) is irrational and a
// 100-digit comparison cannot tie.
inline bool tower_gap_ok(std::uint64_t level, std::uint64_t gap, int d) {
    if (d <= 2) return true;
    if (level + 2 >= 7) return false;  // 2^(2^(l+2)) >= 2^128 exceeds any 64-bit gap
    unsigned e = 1u << (level + 2);
    BigInt threshold_pow = BigInt(1) << e;
    unsigned m = static_cast<unsigned>(d - 1);
    if ((m & (m - 1)) == 0) {
        unsigned a = static_cast<unsigned>(std::countr_zero(m));
        return BigInt(gap) >= threshold_pow * a;
    }
    using Float = boost::multiprecision::cpp_bin_float_100;
    Float rhs = Float(threshold_pow) * boost::multiprecision::log2(Float(m));
    return Float(gap) >= rhs;
}

}  // namespace detail

/// Checks strict increase (throws otherwise) and reports, per gap, whether
/// the exponential-tower spacing holds and whether the desk-scale surrogate
/// rule (gap >= 2) holds.
inline SequenceReport validate_sequence(const IndexSequence& seq) {
    if (seq.levels.empty()) throw ValidationError("index sequence is empty");
    if (seq.levels.front() < 1) throw ValidationError("levels must be positive");
    for (std::size_t i = 0; i + 1 < seq.levels.size(); ++i)
        if (seq.levels[i + 1] <= seq.levels[i]) throw ValidationError("levels must be strictly increasing");

    SequenceReport rep;
    rep.first_level_ok = seq.levels.front() >= static_cast<std::uint64_t>(seq.d);
    bool tower = rep.first_level_ok;
    bool surrogate = true;
    for (std::size_t i = 0; i + 1 < seq.levels.size(); ++i) {
        GapCheck g;
        g.index = i;
        g.gap = seq.levels[i + 1] - seq.levels[i];
        g.tower_ok = detail::tower_gap_ok(seq.levels[i], g.gap, seq.d);
        g.surrogate_ok = g.gap >= 2;
        tower = tower && g.tower_ok;
        surrogate = surrogate && g.surrogate_ok;
        rep.gaps.push_back(g);
    }
    rep.qualifies = tower ? SequenceMode::tower_valid : surrogate ? SequenceMode::surrogate : SequenceMode::invalid;
    return rep;
}

/// ind(e) = min of the endpoint generations.
inline int edge_index(const Truncation& t, VertexId u, VertexId v) {
    if (!t.valid(u) || !t.valid(v) || !t.adjacent(u, v)) throw AddressError("edge_index: vertices are not adjacent");
    return std::min(t.generation(u), t.generation(v));
}
inline int edge_index(const Truncation& t, const VertexAddr& u, const VertexAddr& v) {
    return edge_index(t, t.id(u), t.id(v));
}

enum class CutKind { I, J };

/// A set of tree edges to cut. Every tree edge is identified by its lower
/// endpoint, so a cut set is a predicate on vertices: `cut_above(v)` says
/// whether the edge from v to its parent is cut.
///
/// Kind I cuts every edge whose index is one of the levels. Kind J keeps,
/// for each level above k0, one representative per class of 2^L vertices
/// sharing their ancestor L generations up; the representative is a keyed
/// hash of (seed, level, ancestor), so the predicate is O(1) and lazy.
/// Levels whose classes would reach past the apex contribute no J edges.
class CutSet {
public:
    static CutSet level_set(Truncation t, std::vector<int> levels) {
        CutSet c(t, CutKind::I, std::move(levels));
        for (std::size_t m = 0; m < c.levels_.size(); ++m)
            if (c.levels_[m] < t.depth()) c.active_[c.levels_[m]] = static_cast<int>(m);
        return c;
    }

    static CutSet selected(Truncation t, std::vector<int> levels, int L, int k0, std::uint64_t seed) {
        CutSet c(t, CutKind::J, std::move(levels));
        c.L_ = L;
        c.k0_ = k0;
        c.seed_ = seed;
        for (std::size_t m = static_cast<std::size_t>(k0) + 1; m < c.levels_.size(); ++m) {
            int l = c.levels_[m];
            if (l + L <= t.depth()) c.active_[l] = static_cast<int>(m);
            else if (l < t.depth()) c.truncated_levels_.push_back(l);
        }
        return c;
    }

    CutKind kind() const noexcept { return kind_; }
    const Truncation& truncation() const noexcept { return t_; }
    const std::vector<int>& levels() const noexcept { return levels_; }
    int L() const noexcept { return L_; }
    int k0() const noexcept { return k0_; }
    std::uint64_t seed() const noexcept { return seed_; }
    // J levels skipped because their classes do not fit under the apex.
    const std::vector<int>& truncated_levels() const noexcept { return truncated_levels_; }

    /// Generations that carry cut edges.
    std::vector<int> active_levels() const {
        std::vector<int> out;
        for (int g = 0; g <= t_.depth(); ++g)
            if (active_[g] >= 0) out.push_back(g);
        return out;
    }
    /// Index m into levels() if generation g carries cut edges, else -1.
    int level_index(int g) const noexcept { return (g >= 0 && g <= t_.depth()) ? active_[g] : -1; }

    /// Position in [0, 2^L) of the representative of the class under `ancestor`.
    std::uint64_t representative_position(int level, VertexId ancestor) const noexcept {
        std::uint64_t mask = (L_ >= 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << L_) - 1);
        return mix_key(seed_, {tag::select_j, static_cast<std::uint64_t>(level), ancestor}) & mask;
    }

    bool cut_above(VertexId v) const noexcept {
        if (v == Truncation::apex_id()) return false;
        int g = t_.generation(v);
        if (active_[g] < 0) return false;
        if (kind_ == CutKind::I) return true;
        VertexId a = Truncation::ancestor(v, L_);
        std::uint64_t pos = (v + 1) & ((std::uint64_t{1} << L_) - 1);
        if (pos != representative_position(g, a)) return false;
        return !removed_ || !removed_->contains(v);
    }

    bool contains(VertexId a, VertexId b) const {
        if (!t_.adjacent(a, b)) throw AddressError("cut set query on non-adjacent pair");
        return cut_above(t_.generation(a) < t_.generation(b) ? a : b);
    }

    /// Drops the edge above v (J thinning). Has no effect on I.
    void remove(VertexId v) {
        if (!removed_) removed_ = std::make_shared<std::unordered_set<VertexId>>();
        removed_->insert(v);
    }
    std::size_t removed_count() const noexcept { return removed_ ? removed_->size() : 0; }

    /// Number of cut edges at generation g (ignores removals for J).
    std::uint64_t level_edge_count(int g) const noexcept {
        if (active_[g] < 0) return 0;
        if (kind_ == CutKind::I) return t_.generation_count(g);
        return t_.generation_count(g + L_);
    }

    /// Lower endpoints of all cut edges, in id order. Intended for export and
    /// tests; the count can be large on deep truncations.
    std::vector<VertexId> lower_endpoints() const {
        std::vector<VertexId> out;
        for (int g = t_.depth(); g >= 0; --g) {
            if (active_[g] < 0) continue;
            VertexId first = t_.generation_count(g) - 1;
            if (kind_ == CutKind::I) {
                for (VertexId v = first; v < first + t_.generation_count(g); ++v) out.push_back(v);
            } else {
                VertexId afirst = t_.generation_count(g + L_) - 1;
                for (VertexId a = afirst; a < afirst + t_.generation_count(g + L_); ++a) {
                    VertexId v = ((a + 1) << L_) - 1 + representative_position(g, a);
                    if (!removed_ || !removed_->contains(v)) out.push_back(v);
                }
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Sorted "u v" lines, u the lower endpoint.
    void write_edges(std::ostream& os) const {
        for (VertexId v : lower_endpoints()) os << t_.format(v) << ' ' << t_.format(Truncation::parent(v)) << '\n';
    }

private:
    CutSet(Truncation t, CutKind kind, std::vector<int> levels)
        : t_(t), kind_(kind), levels_(std::move(levels)), active_(static_cast<std::size_t>(t.depth()) + 1, -1) {
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (levels_[i] < 1) throw ConfigError("cut levels must be positive");
            if (i > 0 && levels_[i] <= levels_[i - 1]) throw ConfigError("cut levels must be strictly increasing");
        }
    }

    Truncation t_;
    CutKind kind_;
    std::vector<int> levels_;
    std::vector<int> active_;
    std::vector<int> truncated_levels_;
    int L_ = 0;
    int k0_ = -1;
    std::uint64_t seed_ = 0;
    // Shared so copies of a thinned set stay cheap; thinning copies first.
    std::shared_ptr<std::unordered_set<VertexId>> removed_;

    friend CutSet thin_copy(const CutSet&);
};

/// Copy of a J set whose removal list can be extended independently.
inline CutSet thin_copy(const CutSet& c) {
    CutSet out = c;
    if (c.removed_) out.removed_ = std::make_shared<std::unordered_set<VertexId>>(*c.removed_);
    return out;
}

/// Smallest k0 whose following gap exceeds L, or -1.
inline int minimal_k0(const std::vector<int>& levels, int L) {
    for (std::size_t k = 0; k + 1 < levels.size(); ++k)
        if (levels[k + 1] - levels[k] > L) return static_cast<int>(k);
    return -1;
}

/// Builds J from the level set: requires L > 1/eps and a gap larger than L
/// right after level k0.
inline CutSet select_J(Truncation t, const std::vector<int>& levels, const Rational& eps, int L, int k0,
                       std::uint64_t seed) {
    if (eps <= 0) throw ConfigError("select_J: epsilon must be positive");
    if (L < 1 || L > 62) throw ConfigError("select_J: L must be in [1, 62]");
    if (Rational(L) * eps <= 1) throw ConfigError("select_J: L must exceed 1/epsilon");
    if (k0 < 0 || static_cast<std::size_t>(k0) + 1 >= levels.size())
        throw ConfigError("select_J: k0 must index a gap of the level sequence");
    if (levels[k0 + 1] - levels[k0] <= L) throw ConfigError("select_J: gap after level k0 must exceed L");
    return CutSet::selected(t, levels, L, k0, seed);
}

/// A component of the truncation after deleting the cut edges.
struct Cluster {
    CutKind kind = CutKind::I;
    VertexId top = 0;
    std::vector<VertexId> vertices;  // sorted
    std::vector<VertexId> boundary;  // sorted: leaf(K) for I, out_J(K) for J
    std::uint64_t size = 0;
    int band = -1;  // level index of the top's cut edge minus one; -1 is the bottom band
    bool open = false;  // contains the apex, so it is a truncated piece of a larger cluster

    bool contains(VertexId v) const { return std::binary_search(vertices.begin(), vertices.end(), v); }
    std::size_t local_index(VertexId v) const {
        auto it = std::lower_bound(vertices.begin(), vertices.end(), v);
        if (it == vertices.end() || *it != v) throw AddressError("vertex not in cluster");
        return static_cast<std::size_t>(it - vertices.begin());
    }
};

/// The top of v's cluster: the first vertex on v's upward path whose
/// parent edge is cut, or the apex.
inline VertexId cluster_top(const CutSet& cuts, VertexId v) {
    while (v != Truncation::apex_id() && !cuts.cut_above(v)) v = Truncation::parent(v);
    return v;
}

/// Cluster size by flood fill from the top, stopping once it exceeds `cap`
/// (then returns cap + 1).
inline std::uint64_t cluster_size_capped(const CutSet& cuts, VertexId top,
                                         std::uint64_t cap = std::numeric_limits<std::uint64_t>::max() - 1) {
    const Truncation& t = cuts.truncation();
    std::uint64_t count = 0;
    std::vector<VertexId> stack{top};
    while (!stack.empty()) {
        VertexId x = stack.back();
        stack.pop_back();
        if (++count > cap) return cap + 1;
        if (t.generation(x) == 0) continue;
        for (VertexId c : {Truncation::left_child(x), Truncation::right_child(x)})
            if (!cuts.cut_above(c)) stack.push_back(c);
    }
    return count;
}

/// Closed-form size of a level-set cluster whose top is at generation g.
inline std::uint64_t level_cluster_size(const CutSet& cuts, int top_generation) {
    const auto& lv = cuts.levels();
    int below = -1;
    for (int l : lv)
        if (l < top_generation) below = l;
    int span = top_generation - below;  // generations below+1 .. top
    return (std::uint64_t{1} << span) - 1;
}

inline int cluster_band(const CutSet& cuts, VertexId top) {
    const Truncation& t = cuts.truncation();
    if (top == Truncation::apex_id()) {
        int last = -1;
        for (std::size_t m = 0; m < cuts.levels().size(); ++m)
            if (cuts.levels()[m] < t.depth()) last = static_cast<int>(m);
        return last;
    }
    return cuts.level_index(t.generation(top)) - 1;
}

/// Flood fill of the cluster with the given top. Throws BoundaryError if it
/// holds more than `max_size` vertices.
inline Cluster cluster_at_top(const CutSet& cuts, VertexId top,
                              std::uint64_t max_size = std::uint64_t{1} << 22) {
    const Truncation& t = cuts.truncation();
    Cluster k;
    k.kind = cuts.kind();
    k.top = top;
    k.open = (top == Truncation::apex_id());
    k.band = cluster_band(cuts, top);
    std::vector<VertexId> stack{top};
    while (!stack.empty()) {
        VertexId x = stack.back();
        stack.pop_back();
        k.vertices.push_back(x);
        if (k.vertices.size() > max_size)
            throw BoundaryError("cluster under " + t.format(top) + " exceeds the materialization limit");
        bool boundary = false;
        if (t.generation(x) == 0) {
            boundary = (k.kind == CutKind::I);
        } else {
            for (VertexId c : {Truncation::left_child(x), Truncation::right_child(x)}) {
                if (cuts.cut_above(c)) boundary = true;
                else stack.push_back(c);
            }
        }
        if (boundary && !(k.kind == CutKind::J && x == top)) k.boundary.push_back(x);
    }
    std::sort(k.vertices.begin(), k.vertices.end());
    std::sort(k.boundary.begin(), k.boundary.end());
    k.size = k.vertices.size();
    return k;
}

inline Cluster cluster_of(const CutSet& cuts, VertexId v, std::uint64_t max_size = std::uint64_t{1} << 22) {
    if (!cuts.truncation().valid(v)) throw AddressError("cluster_of: vertex out of range");
    return cluster_at_top(cuts, cluster_top(cuts, v), max_size);
}
inline Cluster cluster_of(const CutSet& cuts, const VertexAddr& v, std::uint64_t max_size = std::uint64_t{1} << 22) {
    return cluster_of(cuts, cuts.truncation().id(v), max_size);
}

inline Rational boundary_ratio(const Cluster& k) {
    if (k.size == 0) return Rational(0);
    return Rational(BigInt(k.boundary.size()), BigInt(k.size));
}

/// |T(v)| / log_(d-1) |V(K)| for a boundary vertex v of K. The value is
/// irrational in general; comparisons between two such ratios are exact.
struct GrowthRatio {
    std::uint64_t tree_size = 0;   // |T(v)|
    BigInt cluster_size = 1;       // |V(K)|
    int d = 3;

    double value() const {
        double lg = log_base(cluster_size.convert_to<double>(), d - 1);
        return lg == 0.0 ? std::numeric_limits<double>::infinity() : static_cast<double>(tree_size) / lg;
    }
};

inline GrowthRatio ratio_11(const Truncation& t, VertexId v, const Cluster& k, int d) {
    if (!std::binary_search(k.boundary.begin(), k.boundary.end(), v))
        throw ValidationError("ratio_11: vertex is not on the cluster boundary");
    return {subtree_size(t.generation(v)), BigInt(k.size), d};
}

/// a <= b exactly. Both ratios share the logarithm base, so it cancels:
/// Ta / log Ka <= Tb / log Kb  <=>  Kb^Ta <= Ka^Tb.
inline bool ratio_leq(const GrowthRatio& a, const GrowthRatio& b) {
    if (a.cluster_size <= 1) return b.cluster_size <= 1;  // a is infinite
    if (b.cluster_size <= 1) return true;
    return pow_leq(b.cluster_size, a.tree_size, a.cluster_size, b.tree_size);
}

/// CSV inventory line set: id, band, size, boundary_count, open_flag.
inline void write_cluster_csv_header(std::ostream& os) { os << "id,band,size,boundary_count,open_flag\n"; }
inline void write_cluster_csv(std::ostream& os, const Truncation& t, const Cluster& k) {
    os << t.format(k.top) << ',' << k.band << ',' << k.size << ',' << k.boundary.size() << ',' << (k.open ? 1 : 0)
       << '\n';
}

}  // namespace ngl

#endif  // NGL_PARTITION_HPP
