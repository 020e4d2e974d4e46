#ifndef NGL_CANOPY_HPP
#define NGL_CANOPY_HPP

#include <bit>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ngl/error.hpp"
#include "ngl/rng.hpp"

namespace ngl {

// Dense vertex index of a truncation: apex is 0, children of i are 2i+1
// (left, bit 0) and 2i+2 (right, bit 1). Ordering ids orders vertices by
// generation (descending) and then by descent path.
using VertexId = std::uint64_t;

/// A vertex of the depth-N canopy truncation: its generation (distance to
/// the leaf level) and the descent from the apex, most significant bit
/// first. The path has exactly N - generation bits.
struct VertexAddr {
    int generation = 0;
    std::uint64_t path = 0;

    friend auto operator<=>(const VertexAddr&, const VertexAddr&) = default;
};

/// Finite stand-in for the canopy tree: the complete binary tree whose
/// leaves form generation 0 and whose apex sits at generation `depth`.
class Truncation {
public:
    static constexpr int max_depth = 62;

    explicit Truncation(int depth) : depth_(depth) {
        if (depth < 1 || depth > max_depth) throw ConfigError("truncation depth must be in [1, 62]");
    }

    int depth() const noexcept { return depth_; }
    std::uint64_t vertex_count() const noexcept { return (std::uint64_t{2} << depth_) - 1; }
    std::uint64_t generation_count(int k) const noexcept { return std::uint64_t{1} << (depth_ - k); }
    VertexAddr apex() const noexcept { return {depth_, 0}; }
    static constexpr VertexId apex_id() noexcept { return 0; }

    bool valid(const VertexAddr& v) const noexcept {
        return v.generation >= 0 && v.generation <= depth_ &&
               (depth_ - v.generation == 64 || (v.path >> (depth_ - v.generation)) == 0);
    }
    void check(const VertexAddr& v) const {
        if (!valid(v)) throw AddressError("vertex address out of range for truncation depth " + std::to_string(depth_));
    }
    bool valid(VertexId id) const noexcept { return id < vertex_count(); }

    VertexId id(const VertexAddr& v) const {
        check(v);
        return (std::uint64_t{1} << (depth_ - v.generation)) - 1 + v.path;
    }
    VertexAddr addr(VertexId id) const {
        if (!valid(id)) throw AddressError("vertex id out of range");
        int level = std::bit_width(id + 1) - 1;
        return {depth_ - level, id + 1 - (std::uint64_t{1} << level)};
    }

    int generation(VertexId id) const noexcept { return depth_ - (std::bit_width(id + 1) - 1); }
    static constexpr VertexId parent(VertexId id) noexcept { return (id - 1) / 2; }
    static constexpr VertexId left_child(VertexId id) noexcept { return 2 * id + 1; }
    static constexpr VertexId right_child(VertexId id) noexcept { return 2 * id + 2; }
    static constexpr VertexId sibling(VertexId id) noexcept { return (id % 2 == 1) ? id + 1 : id - 1; }
    static constexpr VertexId ancestor(VertexId id, int steps) noexcept {
        return ((id + 1) >> steps) - 1;
    }
    bool is_leaf(VertexId id) const noexcept { return generation(id) == 0; }

    /// Parent (when not the apex) followed by the two children (when not a leaf).
    std::vector<VertexId> neighbors(VertexId id) const {
        std::vector<VertexId> out;
        if (id != apex_id()) out.push_back(parent(id));
        if (generation(id) > 0) {
            out.push_back(left_child(id));
            out.push_back(right_child(id));
        }
        return out;
    }
    std::vector<VertexAddr> neighbors(const VertexAddr& v) const {
        std::vector<VertexAddr> out;
        for (VertexId u : neighbors(id(v))) out.push_back(addr(u));
        return out;
    }

    bool adjacent(VertexId a, VertexId b) const noexcept {
        return (a != 0 && parent(a) == b) || (b != 0 && parent(b) == a);
    }

    /// v followed by its first `steps` ancestors.
    std::vector<VertexAddr> upward_path(const VertexAddr& v, int steps) const {
        check(v);
        if (steps < 0 || v.generation + steps > depth_)
            throw BoundaryError("upward path would pass the truncation apex");
        std::vector<VertexAddr> out;
        out.reserve(static_cast<std::size_t>(steps) + 1);
        VertexAddr cur = v;
        out.push_back(cur);
        for (int i = 0; i < steps; ++i) {
            cur = {cur.generation + 1, cur.path >> 1};
            out.push_back(cur);
        }
        return out;
    }

    /// True if `anc` lies on the upward path of `v` (inclusive).
    bool is_ancestor(VertexId anc, VertexId v) const noexcept {
        int diff = generation(anc) - generation(v);
        return diff >= 0 && ancestor(v, diff) == anc;
    }

    VertexId lowest_common_ancestor(VertexId a, VertexId b) const noexcept {
        int ga = generation(a), gb = generation(b);
        if (ga < gb) a = ancestor(a, gb - ga);
        else b = ancestor(b, ga - gb);
        while (a != b) {
            a = parent(a);
            b = parent(b);
        }
        return a;
    }

    /// Tree path a -> b, inclusive of both ends.
    std::vector<VertexId> tree_path(VertexId a, VertexId b) const {
        VertexId top = lowest_common_ancestor(a, b);
        std::vector<VertexId> up, down;
        for (VertexId x = a; x != top; x = parent(x)) up.push_back(x);
        up.push_back(top);
        for (VertexId x = b; x != top; x = parent(x)) down.push_back(x);
        up.insert(up.end(), down.rbegin(), down.rend());
        return up;
    }

    std::string format(const VertexAddr& v) const {
        check(v);
        std::string s = "g:" + std::to_string(v.generation) + "/";
        int len = depth_ - v.generation;
        for (int i = len - 1; i >= 0; --i) s.push_back(((v.path >> i) & 1) ? '1' : '0');
        return s;
    }
    std::string format(VertexId id) const { return format(addr(id)); }

    VertexAddr parse(std::string_view text) const {
        if (text.substr(0, 2) != "g:") throw AddressError("address must start with 'g:'");
        auto slash = text.find('/');
        if (slash == std::string_view::npos) throw AddressError("address missing '/'");
        VertexAddr v;
        try {
            v.generation = std::stoi(std::string(text.substr(2, slash - 2)));
        } catch (const std::exception&) {
            throw AddressError("bad generation in address");
        }
        auto bits = text.substr(slash + 1);
        if (static_cast<int>(bits.size()) != depth_ - v.generation)
            throw AddressError("path length does not match generation");
        for (char c : bits) {
            if (c != '0' && c != '1') throw AddressError("path must be a bit string");
            v.path = (v.path << 1) | static_cast<std::uint64_t>(c - '0');
        }
        check(v);
        return v;
    }

private:
    int depth_;
};

/// |T(v)|: vertices whose upward path passes through a generation-g vertex.
constexpr std::uint64_t subtree_size(int generation) noexcept {
    return (std::uint64_t{2} << generation) - 1;
}
inline std::uint64_t subtree_size(const VertexAddr& v) noexcept { return subtree_size(v.generation); }

/// Root law of a truncation: a uniform vertex, i.e. generation k with
/// probability 2^(N-k) / (2^(N+1) - 1). Tends to 2^-(k+1) as N grows.
class RootLaw {
public:
    explicit RootLaw(Truncation t) : t_(t) {}

    std::uint64_t numerator(int k) const noexcept { return t_.generation_count(k); }
    std::uint64_t denominator() const noexcept { return t_.vertex_count(); }
    double probability(int k) const noexcept {
        return static_cast<double>(numerator(k)) / static_cast<double>(denominator());
    }
    const Truncation& truncation() const noexcept { return t_; }

    VertexId sample_id(Rng& rng) const { return uniform_below(rng, t_.vertex_count()); }
    VertexAddr sample(Rng& rng) const { return t_.addr(sample_id(rng)); }

private:
    Truncation t_;
};

}  // namespace ngl

#endif  // NGL_CANOPY_HPP
