#ifndef NGL_GIRTH_GRAPH_HPP
#define NGL_GIRTH_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ngl/error.hpp"
#include "ngl/exact.hpp"
#include "ngl/rng.hpp"

namespace ngl {

inline constexpr int infinite_girth = std::numeric_limits<int>::max();

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Explicit simple graph on vertices 0..n-1 with its recorded girth, the
/// optional exceptional vertex of degree d-1, and the marked vertices.
struct GirthGraph {
    std::uint32_t n = 0;
    int d = 3;
    std::vector<std::vector<std::uint32_t>> adj;
    int achieved_girth = infinite_girth;
    int target_girth = 3;  // the target actually met (after any fallback)
    int restarts = 0;
    std::optional<std::uint32_t> exceptional;
    std::vector<std::uint32_t> marked;  // sorted
    std::vector<Edge> pruned;           // edges removed by prune_marked, (marked, other)

    std::size_t degree(std::uint32_t v) const { return adj[v].size(); }
    bool has_edge(std::uint32_t a, std::uint32_t b) const {
        return std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end();
    }
    std::size_t edge_count() const {
        std::size_t s = 0;
        for (const auto& a : adj) s += a.size();
        return s / 2;
    }
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (std::uint32_t v = 0; v < n; ++v)
            for (std::uint32_t w : adj[v])
                if (v < w) out.emplace_back(v, w);
        std::sort(out.begin(), out.end());
        return out;
    }
    bool is_marked(std::uint32_t v) const { return std::binary_search(marked.begin(), marked.end(), v); }
};

/// Shortest cycle length by BFS from every vertex, ignoring the tree edge
/// back to the parent. Each search stops once it cannot beat the best cycle
/// found so far, which keeps the cost near n times a girth-radius ball.
inline int girth(const std::vector<std::vector<std::uint32_t>>& adj) {
    const std::size_t n = adj.size();
    // Flat copy; the BFS below is bound by memory latency.
    std::vector<std::uint32_t> offset(n + 1, 0), target;
    for (std::size_t v = 0; v < n; ++v) offset[v + 1] = offset[v] + static_cast<std::uint32_t>(adj[v].size());
    target.reserve(offset[n]);
    for (const auto& a : adj) target.insert(target.end(), a.begin(), a.end());

    int best = infinite_girth;
    std::vector<int> dist(n, -1);
    std::vector<std::uint32_t> par(n), queue;
    for (std::uint32_t s = 0; s < n; ++s) {
        queue.clear();
        queue.push_back(s);
        dist[s] = 0;
        par[s] = s;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            std::uint32_t x = queue[head];
            if (best != infinite_girth && 2 * dist[x] + 1 >= best) break;
            for (std::uint32_t i = offset[x]; i < offset[x + 1]; ++i) {
                std::uint32_t y = target[i];
                if (dist[y] < 0) {
                    dist[y] = dist[x] + 1;
                    par[y] = x;
                    queue.push_back(y);
                } else if (par[x] != y) {
                    best = std::min(best, dist[x] + dist[y] + 1);
                }
            }
        }
        for (std::uint32_t v : queue) dist[v] = -1;
    }
    return best;
}
inline int girth(const GirthGraph& g) { return girth(g.adj); }

/// Largest k with (d-1)^k <= n.
inline int floor_log(std::uint64_t n, int base) {
    int k = 0;
    BigInt p = base;
    while (p <= n) {
        p *= base;
        ++k;
    }
    return k;
}

inline int default_girth_target(std::uint64_t n, int d) { return std::max(3, floor_log(n, d - 1) - 2); }

struct GenerateOptions {
    int retries = 8;          // restarts per target
    bool auto_fallback = false;  // lower the target after `retries` failed restarts
    bool measure = true;         // compute the exact girth; otherwise record the target as a lower bound
};

namespace detail {

// Reusable bounded BFS scratch space.
class DistanceProbe {
public:
    explicit DistanceProbe(std::size_t n) : mark_(n, 0), dist_(n, 0) {}

    // True if dist(u, w) <= limit.
    bool within(const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t u, std::uint32_t w, int limit) {
        if (u == w) return true;
        if (limit <= 0) return false;
        int ru = (limit + 1) / 2, rw = limit - ru;
        ++stamp_;
        bfs(adj, u, ru, [&](std::uint32_t x, int dx) {
            mark_[x] = stamp_;
            dist_[x] = dx;
            return false;
        });
        std::uint32_t own = stamp_;
        ++stamp_;
        bool hit = false;
        bfs(adj, w, rw, [&](std::uint32_t x, int dx) {
            if (seen_u(x, own) && dist_[x] + dx <= limit) hit = true;
            return hit;
        });
        return hit;
    }

    // Vertices at distance <= radius from u, with their distances.
    template <class F>
    void ball(const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t u, int radius, F&& visit) {
        ++stamp_;
        bfs(adj, u, radius, [&](std::uint32_t x, int dx) {
            visit(x, dx);
            return false;
        });
    }

private:
    bool seen_u(std::uint32_t x, std::uint32_t own) const { return mark_[x] == own; }

    // Visits vertices within `radius` of s in BFS order; stops early when
    // the callback returns true.
    template <class F>
    void bfs(const std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t s, int radius, F&& visit) {
        if (own_mark_.size() < adj.size()) own_mark_.assign(adj.size(), 0);
        if (level_.size() < adj.size()) level_.assign(adj.size(), 0);
        queue_.clear();
        queue_.push_back(s);
        own_mark_[s] = stamp_;
        level_[s] = 0;
        for (std::size_t head = 0; head < queue_.size(); ++head) {
            std::uint32_t x = queue_[head];
            if (visit(x, level_[x])) return;
            if (level_[x] == radius) continue;
            for (std::uint32_t y : adj[x]) {
                if (own_mark_[y] == stamp_) continue;
                own_mark_[y] = stamp_;
                level_[y] = level_[x] + 1;
                queue_.push_back(y);
            }
        }
    }

    std::vector<std::uint32_t> mark_;
    std::vector<int> dist_;
    std::vector<std::uint32_t> own_mark_;
    std::vector<int> level_;
    std::vector<std::uint32_t> queue_;
    std::uint32_t stamp_ = 0;
};

inline bool connected(const std::vector<std::vector<std::uint32_t>>& adj) {
    if (adj.empty()) return true;
    std::vector<char> seen(adj.size(), 0);
    std::vector<std::uint32_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
        std::uint32_t x = stack.back();
        stack.pop_back();
        for (std::uint32_t y : adj[x])
            if (!seen[y]) {
                seen[y] = 1;
                ++count;
                stack.push_back(y);
            }
    }
    return count == adj.size();
}

inline void erase_edge(std::vector<std::vector<std::uint32_t>>& adj, std::uint32_t a, std::uint32_t b) {
    auto& la = adj[a];
    la.erase(std::find(la.begin(), la.end(), b));
    auto& lb = adj[b];
    lb.erase(std::find(lb.begin(), lb.end(), a));
}

// One run of the random greedy edge process at a fixed girth target.
class GreedyRun {
public:
    GreedyRun(std::uint32_t n, int d, int target, const std::vector<char>& marked,
              std::optional<std::uint32_t> exceptional, Rng& rng)
        : n_(n), d_(d), target_(target), marked_(marked), exceptional_(exceptional), rng_(rng), adj_(n), probe_(n) {
        cap_.assign(n, static_cast<std::uint32_t>(d));
        if (exceptional_) cap_[*exceptional_] = static_cast<std::uint32_t>(d - 1);
        pos_.assign(n, 0);
        for (std::uint32_t v = 0; v < n; ++v) {
            pos_[v] = open_.size();
            open_.push_back(v);
        }
        for (auto& a : adj_) a.reserve(static_cast<std::size_t>(d));
    }

    // Returns true when every vertex reached its cap.
    bool run() {
        while (!open_.empty()) {
            if (auto e = pick_pair()) {
                add(e->first, e->second);
                continue;
            }
            if (!repair()) return false;
        }
        return true;
    }

    std::vector<std::vector<std::uint32_t>> take() { return std::move(adj_); }

private:
    bool is_open(std::uint32_t v) const { return adj_[v].size() < cap_[v]; }

    bool marked_near(std::uint32_t v) const {
        for (std::uint32_t y : adj_[v])
            if (marked_[y]) return true;
        return false;
    }

    // Local rules for inserting {a, b}, without the girth distance test.
    bool locally_ok(std::uint32_t a, std::uint32_t b) const {
        if (a == b || !is_open(a) || !is_open(b)) return false;
        for (std::uint32_t y : adj_[a])
            if (y == b) return false;
        if (!marked_.empty()) {
            if (marked_[a] && marked_[b]) return false;
            if (marked_[a] && marked_near(b)) return false;
            if (marked_[b] && marked_near(a)) return false;
            if (exceptional_ && ((*exceptional_ == a && marked_[b]) || (*exceptional_ == b && marked_[a])))
                return false;
        }
        return true;
    }

    bool admissible(std::uint32_t a, std::uint32_t b) {
        return locally_ok(a, b) && !probe_.within(adj_, a, b, target_ - 2);
    }

    void add(std::uint32_t a, std::uint32_t b) {
        adj_[a].push_back(b);
        adj_[b].push_back(a);
        for (std::uint32_t v : {a, b})
            if (!is_open(v)) close(v);
    }

    void close(std::uint32_t v) {
        std::size_t p = pos_[v];
        std::uint32_t last = open_.back();
        open_[p] = last;
        pos_[last] = p;
        open_.pop_back();
    }

    void reopen(std::uint32_t v) {
        pos_[v] = open_.size();
        open_.push_back(v);
    }

    // Uniform over admissible pairs: rejection sampling first, exhaustive
    // enumeration when rejection keeps failing.
    std::optional<Edge> pick_pair() {
        const std::size_t m = open_.size();
        if (m < 2) return std::nullopt;
        for (int attempt = 0; attempt < 64; ++attempt) {
            std::uint32_t a = open_[uniform_below(rng_, m)];
            std::uint32_t b = open_[uniform_below(rng_, m)];
            if (admissible(a, b)) return Edge{a, b};
        }
        // One ball per open vertex, then O(1) membership tests.
        std::vector<Edge> all;
        std::vector<std::uint32_t> near_stamp(n_, 0);
        std::uint32_t stamp = 0;
        for (std::size_t i = 0; i < m; ++i) {
            std::uint32_t a = open_[i];
            ++stamp;
            probe_.ball(adj_, a, target_ - 2, [&](std::uint32_t x, int) { near_stamp[x] = stamp; });
            for (std::size_t j = i + 1; j < m; ++j) {
                std::uint32_t b = open_[j];
                if (near_stamp[b] != stamp && locally_ok(a, b)) all.emplace_back(std::min(a, b), std::max(a, b));
            }
        }
        if (all.empty()) return std::nullopt;
        return all[uniform_below(rng_, all.size())];
    }

    // Degree-preserving switch: drop a random edge {x, y} and attach its
    // ends to open vertices u and w (u == w allowed when u lacks two).
    bool repair() {
        const std::size_t m = open_.size();
        for (int i = 0; i < 400; ++i) {
            std::uint32_t u = open_[uniform_below(rng_, m)];
            std::uint32_t w = open_[uniform_below(rng_, m)];
            if (u == w && cap_[u] - adj_[u].size() < 2) continue;
            std::uint32_t x = static_cast<std::uint32_t>(uniform_below(rng_, n_));
            if (adj_[x].empty()) continue;
            std::uint32_t y = adj_[x][uniform_below(rng_, adj_[x].size())];
            if (x == u || x == w || y == u || y == w) continue;
            erase_edge(adj_, x, y);
            restore_open(x);
            restore_open(y);
            if (admissible(u, x)) {
                add(u, x);
                if (admissible(w, y)) {
                    add(w, y);
                    return true;
                }
                erase_edge(adj_, u, x);
                restore_open(u);
                restore_open(x);
            }
            add(x, y);
        }
        return false;
    }

    void restore_open(std::uint32_t v) {
        if (is_open(v) && (pos_[v] >= open_.size() || open_[pos_[v]] != v)) reopen(v);
    }

    std::uint32_t n_;
    int d_;
    int target_;
    const std::vector<char>& marked_;
    std::optional<std::uint32_t> exceptional_;
    Rng& rng_;
    std::vector<std::vector<std::uint32_t>> adj_;
    std::vector<std::uint32_t> cap_;
    std::vector<std::uint32_t> open_;
    std::vector<std::size_t> pos_;
    DistanceProbe probe_;
};

inline GirthGraph generate_impl(std::uint32_t n, int d, int girth_target, const std::vector<std::uint32_t>& marked,
                                std::uint64_t seed, const GenerateOptions& opt) {
    if (d < 2) throw ConfigError("generate: d must be at least 2");
    if (n <= static_cast<std::uint32_t>(d)) throw ConfigError("generate: need n > d");
    if (girth_target < 3) throw ConfigError("generate: girth target must be at least 3");

    std::vector<char> is_marked;
    if (!marked.empty()) {
        is_marked.assign(n, 0);
        for (std::uint32_t v : marked) {
            if (v >= n) throw ConstraintError("marked vertex out of range");
            is_marked[v] = 1;
        }
    }

    int best = 0;
    int target = girth_target;
    int restarts = 0;
    for (;;) {
        for (int attempt = 0; attempt < opt.retries; ++attempt, ++restarts) {
            Rng rng = stream(seed, {tag::girth, static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(attempt)});
            std::optional<std::uint32_t> exceptional;
            if ((static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(d)) % 2 == 1) {
                std::vector<std::uint32_t> pool;
                for (std::uint32_t v = 0; v < n; ++v)
                    if (is_marked.empty() || !is_marked[v]) pool.push_back(v);
                exceptional = pool[uniform_below(rng, pool.size())];
            }
            GreedyRun run(n, d, target, is_marked, exceptional, rng);
            bool complete = run.run();
            auto adj = run.take();
            if (!complete) {
                best = std::max(best, target - 1);
                continue;
            }
            best = std::max(best, target);
            if (!connected(adj)) continue;
            int g = opt.measure ? girth(adj) : target;
            GirthGraph out;
            out.n = n;
            out.d = d;
            out.adj = std::move(adj);
            for (auto& a : out.adj) std::sort(a.begin(), a.end());
            out.achieved_girth = g;
            out.target_girth = target;
            out.restarts = restarts;
            out.exceptional = exceptional;
            out.marked = marked;
            std::sort(out.marked.begin(), out.marked.end());
            return out;
        }
        if (!opt.auto_fallback || target <= 3)
            throw GenerationError("could not reach girth " + std::to_string(target) + " on " + std::to_string(n) +
                                      " vertices",
                                  best);
        --target;
    }
}

}  // namespace detail

/// Random greedy high-girth near-d-regular graph: admissible pairs (both
/// endpoints below their cap, distance >= target - 1) are added uniformly
/// at random; stalls are repaired by edge switches, then by restarts.
/// If n*d is odd one uniformly chosen vertex is capped at d - 1.
inline GirthGraph generate(std::uint32_t n, int d, int girth_target, std::uint64_t seed,
                           GenerateOptions opt = {}) {
    return detail::generate_impl(n, d, girth_target, {}, seed, opt);
}

/// As generate, and additionally no two marked vertices end up within
/// distance 2, and the exceptional vertex is neither marked nor adjacent
/// to a marked vertex.
inline GirthGraph generate_constrained(std::uint32_t n, int d, const std::vector<std::uint32_t>& marked,
                                       int girth_target, std::uint64_t seed, GenerateOptions opt = {}) {
    // |marked| <= n / (d (d-1)^2)
    std::uint64_t room = static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(d - 1) * (d - 1);
    if (static_cast<std::uint64_t>(marked.size()) * room > n)
        throw ConstraintError("marked set too dense: " + std::to_string(marked.size()) + " of " + std::to_string(n));
    return detail::generate_impl(n, d, girth_target, marked, seed, opt);
}

/// Minimum pairwise distance among `vertices` (capped: returns limit + 1
/// if all pairs are farther than limit).
inline int min_pairwise_distance(const GirthGraph& g, const std::vector<std::uint32_t>& vertices, int limit) {
    std::vector<char> in(g.n, 0);
    for (std::uint32_t v : vertices) in[v] = 1;
    detail::DistanceProbe probe(g.n);
    int best = limit + 1;
    for (std::uint32_t v : vertices)
        probe.ball(g.adj, v, limit, [&](std::uint32_t x, int dx) {
            if (x != v && in[x]) best = std::min(best, dx);
        });
    return best;
}

/// Removes one uniformly chosen incident edge at every marked vertex.
inline GirthGraph prune_marked(const GirthGraph& g, std::uint64_t seed) {
    if (!g.marked.empty() && min_pairwise_distance(g, g.marked, 2) < 3)
        throw ConstraintError("prune_marked: marked vertices closer than 3");
    GirthGraph out = g;
    for (std::uint32_t v : g.marked) {
        if (out.adj[v].empty()) continue;
        Rng rng = stream(seed, {tag::prune, v});
        std::uint32_t w = out.adj[v][uniform_below(rng, out.adj[v].size())];
        detail::erase_edge(out.adj, v, w);
        out.pruned.emplace_back(v, w);
    }
    out.achieved_girth = girth(out);
    return out;
}

/// Complete graph K_n, used when a cluster is too small to be d-regular.
inline GirthGraph complete_graph(std::uint32_t n, int d) {
    GirthGraph g;
    g.n = n;
    g.d = d;
    g.adj.resize(n);
    for (std::uint32_t a = 0; a < n; ++a)
        for (std::uint32_t b = 0; b < n; ++b)
            if (a != b) g.adj[a].push_back(b);
    g.achieved_girth = girth(g);
    g.target_girth = std::min(g.achieved_girth, 3);
    return g;
}

/// Edge list: header "n d girth", then one "i j" line per edge (i < j).
inline void write_edge_list(std::ostream& os, const GirthGraph& g) {
    os << g.n << ' ' << g.d << ' ';
    if (g.achieved_girth == infinite_girth) os << "inf";
    else os << g.achieved_girth;
    os << '\n';
    for (auto [a, b] : g.edges()) os << a << ' ' << b << '\n';
}

inline GirthGraph read_edge_list(std::istream& is) {
    GirthGraph g;
    std::string girth_text;
    if (!(is >> g.n >> g.d >> girth_text)) throw ValidationError("edge list: bad header");
    g.achieved_girth = girth_text == "inf" ? infinite_girth : std::stoi(girth_text);
    g.adj.resize(g.n);
    std::uint32_t a, b;
    while (is >> a >> b) {
        if (a >= g.n || b >= g.n || a == b || g.has_edge(a, b)) throw ValidationError("edge list: bad edge");
        g.adj[a].push_back(b);
        g.adj[b].push_back(a);
    }
    for (auto& l : g.adj) std::sort(l.begin(), l.end());
    return g;
}

/// Galton-Watson comparison process: each individual has d-1 children with
/// probability 1 - eta and d-2 with probability eta.
struct GWOracle {
    int d = 3;
    double eta = 0.0;

    double mean() const { return (d - 1) - eta; }
    void check() const {
        if (eta < 0.0 || eta >= 1.0) throw ConfigError("GW oracle: eta must be in [0, 1)");
        if (d >= 3 && mean() <= 1.0) throw ConfigError("GW oracle: process must be supercritical");
    }
};

/// Sample of Z_0 + ... + Z_r.
inline std::uint64_t gw_total_progeny(const GWOracle& o, int r, Rng& rng) {
    std::uint64_t z = 1, total = 1;
    for (int i = 0; i < r; ++i) {
        std::uint64_t defects = o.eta > 0 ? std::binomial_distribution<std::uint64_t>(z, o.eta)(rng) : 0;
        z = z * static_cast<std::uint64_t>(o.d - 1) - defects;
        total += z;
    }
    return total;
}

/// Monte Carlo q-quantile of the cumulative progeny through generation r
/// (lower empirical quantile: the ceil(q S)-th smallest of S samples).
inline std::uint64_t gw_percentile(const GWOracle& o, int r, double q, int samples, std::uint64_t seed) {
    o.check();
    if (r < 0) throw ConfigError("gw_percentile: r must be nonnegative");
    if (samples < 1000) throw ConfigError("gw_percentile: need at least 1000 samples");
    if (q < 0.0 || q > 1.0) throw ConfigError("gw_percentile: q must be in [0, 1]");
    Rng rng = stream(seed, {tag::sample, static_cast<std::uint64_t>(r)});
    std::vector<std::uint64_t> xs(static_cast<std::size_t>(samples));
    for (auto& x : xs) x = gw_total_progeny(o, r, rng);
    std::sort(xs.begin(), xs.end());
    std::size_t idx = q <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(q * samples)) - 1;
    return xs[std::min(idx, xs.size() - 1)];
}

}  // namespace ngl

#endif  // NGL_GIRTH_GRAPH_HPP
