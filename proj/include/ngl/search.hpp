#pragma once

// Breadth-first utilities over implicit graphs. A neighbor oracle is any
// callable `void(const Id&, std::vector<Id>&)` that appends neighbors.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "ngl/error.hpp"

namespace ngl {

struct BallProfile {
    std::vector<std::uint64_t> shell;  // shell[r] = |S_r|
    bool truncated = false;            // stopped at the visit cap

    std::uint64_t ball(std::size_t r) const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i <= r && i < shell.size(); ++i) s += shell[i];
        return s;
    }
    std::uint64_t total() const { return ball(shell.size()); }
};

/// Shell sizes of B_radius(src). `touch` is called once per reached vertex
/// with its distance; `expand` decides whether a reached vertex is expanded.
template <class Id, class Nbrs, class Touch, class Expand>
BallProfile bfs_ball(const Nbrs& nbrs, const Id& src, int radius, std::uint64_t cap, Touch&& touch, Expand&& expand) {
    BallProfile p;
    std::unordered_map<Id, int> dist;
    std::vector<Id> frontier{src}, next, buf;
    dist.emplace(src, 0);
    touch(src, 0);
    p.shell.push_back(1);
    for (int r = 0; r < radius && !frontier.empty(); ++r) {
        next.clear();
        for (const Id& x : frontier) {
            if (!expand(x)) continue;
            buf.clear();
            nbrs(x, buf);
            for (const Id& y : buf) {
                if (!dist.emplace(y, r + 1).second) continue;
                touch(y, r + 1);
                next.push_back(y);
                if (dist.size() >= cap) {
                    p.truncated = true;
                    p.shell.push_back(next.size());
                    return p;
                }
            }
        }
        if (next.empty()) break;
        p.shell.push_back(next.size());
        std::swap(frontier, next);
    }
    return p;
}

template <class Id, class Nbrs>
BallProfile bfs_ball(const Nbrs& nbrs, const Id& src, int radius,
                     std::uint64_t cap = std::numeric_limits<std::uint64_t>::max()) {
    return bfs_ball(nbrs, src, radius, cap, [](const Id&, int) {}, [](const Id&) { return true; });
}

/// Shortest path from src to the nearest vertex satisfying `target`; among
/// equally near targets the smallest (operator<) wins. `admit` filters which
/// vertices may be entered at all.
template <class Id, class Nbrs, class Target, class Admit>
std::optional<std::vector<Id>> bfs_path_to(const Nbrs& nbrs, const Id& src, Target&& target, Admit&& admit,
                                           std::uint64_t max_visits) {
    std::unordered_map<Id, Id> parent;
    parent.emplace(src, src);
    std::vector<Id> frontier{src}, next, buf;
    auto unwind = [&](Id x) {
        std::vector<Id> path{x};
        while (!(x == src)) {
            x = parent.at(x);
            path.push_back(x);
        }
        std::reverse(path.begin(), path.end());
        return path;
    };
    while (!frontier.empty()) {
        std::optional<Id> best;
        for (const Id& x : frontier)
            if (target(x) && (!best || x < *best)) best = x;
        if (best) return unwind(*best);
        next.clear();
        for (const Id& x : frontier) {
            buf.clear();
            nbrs(x, buf);
            for (const Id& y : buf) {
                if (parent.contains(y) || !admit(y)) continue;
                parent.emplace(y, x);
                next.push_back(y);
            }
        }
        if (parent.size() > max_visits) return std::nullopt;
        std::swap(frontier, next);
    }
    return std::nullopt;
}

/// Shortest path under positive edge weights `w(a, b)`; Dijkstra paths are
/// simple, so random weights give random simple paths.
template <class Id, class Nbrs, class Weight>
std::optional<std::vector<Id>> weighted_path(const Nbrs& nbrs, const Id& src, const Id& dst, Weight&& w,
                                             std::uint64_t max_visits) {
    using Item = std::pair<double, Id>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    std::unordered_map<Id, std::pair<double, Id>> best;  // distance, parent
    std::unordered_map<Id, char> done;
    best.emplace(src, std::pair{0.0, src});
    pq.emplace(0.0, src);
    std::vector<Id> buf;
    while (!pq.empty()) {
        auto [dx, x] = pq.top();
        pq.pop();
        if (done.contains(x)) continue;
        done.emplace(x, 1);
        if (x == dst) {
            std::vector<Id> path{x};
            while (!(x == src)) {
                x = best.at(x).second;
                path.push_back(x);
            }
            std::reverse(path.begin(), path.end());
            return path;
        }
        if (done.size() > max_visits) return std::nullopt;
        buf.clear();
        nbrs(x, buf);
        for (const Id& y : buf) {
            double dy = dx + w(x, y);
            auto it = best.find(y);
            if (it == best.end() || dy < it->second.first) {
                best.insert_or_assign(y, std::pair{dy, x});
                pq.emplace(dy, y);
            }
        }
    }
    return std::nullopt;
}

}  // namespace ngl
