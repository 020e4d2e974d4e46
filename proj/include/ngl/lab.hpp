#pragma once

// Measurement layer: ball-growth profiles, growth-rate estimators and
// sampled mass-transport balance checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ngl/canopy.hpp"
#include "ngl/error.hpp"
#include "ngl/rng.hpp"
#include "ngl/search.hpp"

namespace ngl {

struct GrowthProfile {
    std::string root;
    int d = 3;
    std::vector<std::uint64_t> sizes;  // sizes[r] = |B_r(root)|, r = 0..r_max
    int contaminated_from = -1;        // first radius touching a boundary, -1 if none
    std::optional<int> witness_radius;

    int r_max() const noexcept { return static_cast<int>(sizes.size()) - 1; }
    bool contaminated(int r) const noexcept { return contaminated_from >= 0 && r >= contaminated_from; }
    /// The ball stopped growing: the component is exhausted by radius r.
    bool exhausted(int r) const noexcept { return r >= 1 && sizes[r] == sizes[r - 1]; }
    bool usable(int r) const noexcept { return r >= 1 && r <= r_max() && !contaminated(r) && !exhausted(r); }
    double exponent(int r) const {
        if (r < 1) throw ValidationError("exponent needs r >= 1");
        return std::pow(static_cast<double>(sizes.at(r)), 1.0 / r);
    }
    /// log_{d-1} |B_r| / r
    double log_exponent(int r) const {
        if (r < 1) throw ValidationError("exponent needs r >= 1");
        return std::log(static_cast<double>(sizes.at(r))) / std::log(static_cast<double>(d - 1)) / r;
    }
};

/// BFS layer counts around `root` up to r_max. `boundary(x)` marks vertices
/// in the guard zone or on the truncation edge; the first radius at which
/// one is reached (or the visit cap is hit) flags the rest of the profile.
template <class Id, class Nbrs, class Boundary>
GrowthProfile ball_profile(const Nbrs& nbrs, const Id& root, int r_max, Boundary&& boundary, int d,
                           std::string label, std::uint64_t cap = std::uint64_t{1} << 26) {
    if (r_max < 0) throw ConfigError("ball_profile: r_max must be nonnegative");
    GrowthProfile p;
    p.root = std::move(label);
    p.d = d;
    int hit = -1;
    auto bp = bfs_ball<Id>(
        nbrs, root, r_max, cap,
        [&](const Id& x, int r) {
            if ((hit < 0 || r < hit) && boundary(x)) hit = r;
        },
        [](const Id&) { return true; });
    if (bp.truncated) {
        int at = static_cast<int>(bp.shell.size()) - 1;
        hit = hit < 0 ? at : std::min(hit, at);
    }
    for (int r = 0; r <= r_max; ++r) p.sizes.push_back(bp.ball(static_cast<std::size_t>(r)));
    p.contaminated_from = hit;
    return p;
}

template <class Id, class Nbrs>
GrowthProfile ball_profile(const Nbrs& nbrs, const Id& root, int r_max, int d, std::string label) {
    return ball_profile<Id>(nbrs, root, r_max, [](const Id&) { return false; }, d, std::move(label));
}

inline std::string format_decimal(double x, int digits = 12) {
    std::ostringstream os;
    os << std::setprecision(digits) << x;
    return os.str();
}

inline void write_profiles_csv_header(std::ostream& os, int d) {
    os << "root,r,ball,exponent,log_base_" << d - 1 << "_exponent,contaminated\n";
}

inline void write_profile_csv(std::ostream& os, const GrowthProfile& p) {
    for (int r = 0; r <= p.r_max(); ++r) {
        os << p.root << ',' << r << ',' << p.sizes[r] << ',';
        if (r >= 1) os << format_decimal(p.exponent(r)) << ',' << format_decimal(p.log_exponent(r));
        else os << ',';
        os << ',' << (p.contaminated(r) ? 1 : 0) << '\n';
    }
}

struct GrowthEstimates {
    double upper = 0;
    std::string upper_root;
    int upper_r = 0;
    double lower = 0;
    std::string lower_root;
    int lower_r = 0;
    bool lower_from_witness = false;  // false: no witness radii supplied, window minimum used
};

struct Window {
    int lo = 1;
    int hi = std::numeric_limits<int>::max();
};

/// Upper: largest exponent over the window; lower: smallest exponent at the
/// supplied witness radii (window minimum when none is supplied). Ties go to
/// the smallest (root, r) so the result does not depend on list order.
inline GrowthEstimates growth_estimates(const std::vector<GrowthProfile>& profiles, Window w = {}) {
    using Key = std::tuple<double, std::string, int>;
    std::optional<Key> up, lo, lo_w;
    auto better_max = [](const Key& a, const Key& b) {
        return std::get<0>(a) > std::get<0>(b) || (std::get<0>(a) == std::get<0>(b) && a < b);
    };
    for (const auto& p : profiles) {
        for (int r = std::max(1, w.lo); r <= std::min(p.r_max(), w.hi); ++r) {
            if (!p.usable(r)) continue;
            Key k{p.exponent(r), p.root, r};
            if (!up || better_max(k, *up)) up = k;
            if (!lo || k < *lo) lo = k;
        }
        if (p.witness_radius && p.usable(*p.witness_radius)) {
            Key k{p.exponent(*p.witness_radius), p.root, *p.witness_radius};
            if (!lo_w || k < *lo_w) lo_w = k;
        }
    }
    if (!up) throw InsufficientDataError("growth_estimates: no uncontaminated growing radius in any profile");
    GrowthEstimates e;
    std::tie(e.upper, e.upper_root, e.upper_r) = *up;
    e.lower_from_witness = lo_w.has_value();
    std::tie(e.lower, e.lower_root, e.lower_r) = lo_w ? *lo_w : *lo;
    return e;
}

/// A graph with a root law: neighbor oracle, guard-zone predicate, root sampler.
template <class Id>
struct Ensemble {
    std::string name;
    std::function<void(const Id&, std::vector<Id>&)> nbrs;
    std::function<bool(const Id&)> guarded;
    std::function<Id(Rng&)> root;
};

/// Mass f(x -> y) for y within distance rho of x; must depend only on the
/// rho-neighborhood of x.
template <class Id>
struct TransportSpec {
    std::string name;
    int rho = 1;
    std::function<double(const Ensemble<Id>&, const Id&, const Id&)> f;
};

struct MtpOptions {
    std::uint64_t min_accepted = 10000;
    std::uint64_t max_draws = 200000;
    std::uint64_t seed = 1;
};

struct MtpResult {
    std::string ensemble;
    std::string transport;
    std::uint64_t draws = 0;
    std::uint64_t accepted = 0;
    double mean_out = 0;
    double mean_in = 0;
    double stderr_diff = 0;  // standard error of the per-sample difference out - in
    bool pass = false;

    double rejection_rate() const { return draws ? 1.0 - static_cast<double>(accepted) / draws : 0.0; }
};

/// Mass sent and received at o, or nothing when the 2 rho ball of o meets
/// the guard zone.
template <class Id>
std::optional<std::pair<double, double>> mtp_sample(const Ensemble<Id>& ens, const TransportSpec<Id>& spec,
                                                    const Id& o) {
    std::vector<Id> near;
    bool clean = true;
    bfs_ball<Id>(
        ens.nbrs, o, 2 * spec.rho, std::numeric_limits<std::uint64_t>::max(),
        [&](const Id& x, int r) {
            if (ens.guarded(x)) clean = false;
            if (r <= spec.rho) near.push_back(x);
        },
        [&](const Id&) { return clean; });
    if (!clean) return std::nullopt;
    double out = 0, in = 0;
    for (const Id& y : near) {
        out += spec.f(ens, o, y);
        in += spec.f(ens, y, o);
    }
    return std::pair{out, in};
}

/// Samples roots until `min_accepted` of them have a guard-free 2 rho ball,
/// and compares mass sent with mass received at the root.
template <class Id>
MtpResult mtp_test(const Ensemble<Id>& ens, const TransportSpec<Id>& spec, const MtpOptions& opt = {}) {
    MtpResult res;
    res.ensemble = ens.name;
    res.transport = spec.name;
    Rng rng = stream(opt.seed, {tag::sample});
    double s_out = 0, s_in = 0, s_d = 0, s_dd = 0;
    while (res.accepted < opt.min_accepted && res.draws < opt.max_draws) {
        ++res.draws;
        auto m = mtp_sample(ens, spec, ens.root(rng));
        if (!m) continue;
        ++res.accepted;
        double diff = m->first - m->second;
        s_out += m->first;
        s_in += m->second;
        s_d += diff;
        s_dd += diff * diff;
    }
    if (res.accepted == 0) return res;
    auto n = static_cast<double>(res.accepted);
    res.mean_out = s_out / n;
    res.mean_in = s_in / n;
    double mean_d = s_d / n;
    double var = res.accepted > 1 ? std::max(0.0, (s_dd - n * mean_d * mean_d) / (n - 1)) : 0.0;
    res.stderr_diff = std::sqrt(var / n);
    res.pass = res.accepted >= opt.min_accepted && std::abs(mean_d) <= 3.0 * res.stderr_diff;
    return res;
}

namespace transports {

template <class Id>
TransportSpec<Id> each_neighbor() {
    return {"each_neighbor", 1, [](const Ensemble<Id>& e, const Id& x, const Id& y) {
                std::vector<Id> nb;
                e.nbrs(x, nb);
                return static_cast<double>(std::count(nb.begin(), nb.end(), y));
            }};
}

/// Sends 1 from x to y when `edge_up(x, y)` (y is the upper endpoint of a
/// distinguished edge at x).
template <class Id>
TransportSpec<Id> along(std::string name, std::function<bool(const Id&, const Id&)> edge_up) {
    return {std::move(name), 1,
            [edge_up = std::move(edge_up)](const Ensemble<Id>&, const Id& x, const Id& y) {
                return edge_up(x, y) ? 1.0 : 0.0;
            }};
}

}  // namespace transports

/// The canopy truncation under the uniform (root-law) vertex choice; the
/// top `guard` generations form the guard zone.
inline Ensemble<VertexId> canopy_ensemble(const Truncation& t, int guard = 2) {
    return {"canopy",
            [&t](const VertexId& v, std::vector<VertexId>& out) {
                for (VertexId w : t.neighbors(v)) out.push_back(w);
            },
            [&t, guard](const VertexId& v) { return t.generation(v) > t.depth() - guard; },
            [&t](Rng& rng) { return RootLaw(t).sample_id(rng); }};
}

/// Control: roots only at leaves, which is not a unimodular law.
inline Ensemble<VertexId> canopy_leaf_ensemble(const Truncation& t, int guard = 2) {
    auto e = canopy_ensemble(t, guard);
    e.name = "canopy_leaf_only";
    e.root = [&t](Rng& rng) {
        std::uint64_t first = t.vertex_count() - t.generation_count(0);
        return first + uniform_below(rng, t.generation_count(0));
    };
    return e;
}

inline TransportSpec<VertexId> parent_transport() {
    return transports::along<VertexId>("to_parent", [](const VertexId& x, const VertexId& y) {
        return x != Truncation::apex_id() && y == Truncation::parent(x);
    });
}

}  // namespace ngl
