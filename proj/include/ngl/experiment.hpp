#pragma once

// Experiment runs: key-value configuration (file, NGL_ environment, flags),
// the check suites per graph family, and hashed output files.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

#include <boost/uuid/detail/sha1.hpp>
#include <json.hpp>

#include "ngl/canopy.hpp"
#include "ngl/error.hpp"
#include "ngl/exact.hpp"
#include "ngl/girth_graph.hpp"
#include "ngl/lab.hpp"
#include "ngl/overlay.hpp"
#include "ngl/partition.hpp"
#include "ngl/product.hpp"
#include "ngl/rng.hpp"

namespace ngl {

struct ConfigKey {
    const char* name;
    const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"graph", "W_I | W_star_J | U | UT3"},
        {"d", "target degree"},
        {"depth", "truncation depth (fiber depth N2 for U)"},
        {"levels", "comma-separated cut levels"},
        {"seed", "master seed"},
        {"eps", "ext density of W_star_J clusters"},
        {"eps_J", "epsilon driving the selection of J (L > 1/eps_J)"},
        {"L", "class depth of the J selection"},
        {"k0", "first selected gap of the J selection"},
        {"fiber_depth", "depth N1 of the fiber tree (U, UT3)"},
        {"fiber_eps", "ext density of every fiber overlay (U, UT3)"},
        {"schedule", "turnability schedule: geometric | override:a,b,..."},
        {"turn_targets", "cut edges per fiber the thinning tries to make turnable"},
        {"R", "radius of the tree coordinate (UT3)"},
        {"checks", "auto or a comma list of check names"},
        {"roots", "number of sampled roots for profiles and witnesses"},
        {"r_max", "largest profile radius"},
        {"path_pairs", "vertex pairs for the path invariance checks"},
        {"path_trials", "random alternative paths per pair"},
        {"mtp_samples", "accepted samples per transport"},
        {"edges", "write edges.txt (true | false)"},
        {"strict", "abort when a check fails (true | false)"},
        {"out", "output directory"},
        {"max_cluster", "largest cluster materialized"},
    };
    return keys;
}

inline std::string trim(std::string s) {
    auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && sp(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && sp(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

class ExperimentConfig {
public:
    static bool known(const std::string& key) {
        for (const auto& k : config_keys())
            if (key == k.name) return true;
        return false;
    }

    void set(const std::string& key, const std::string& value) {
        if (!known(key)) throw ConfigError("unknown config key: " + key);
        values_[key] = trim(value);
    }
    bool has(const std::string& key) const { return values_.contains(key); }
    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key: " + key);
        return it->second;
    }
    std::int64_t get_int(const std::string& key) const {
        try {
            std::size_t used = 0;
            auto v = std::stoll(get(key), &used);
            if (used != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::logic_error&) {
            throw ConfigError("config key " + key + " needs an integer, got '" + get(key) + "'");
        }
    }
    std::uint64_t get_count(const std::string& key) const {
        auto v = get_int(key);
        if (v < 0) throw ConfigError("config key " + key + " must be nonnegative");
        return static_cast<std::uint64_t>(v);
    }
    Rational get_rational(const std::string& key) const {
        try {
            return parse_rational(get(key));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " needs a rational, got '" + get(key) + "'");
        }
    }
    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key " + key + " needs true or false, got '" + v + "'");
    }
    std::vector<int> get_ints(const std::string& key) const {
        std::vector<int> out;
        for (const auto& part : split(get(key), ',')) {
            try {
                out.push_back(std::stoi(part));
            } catch (const std::logic_error&) {
                throw ConfigError("config key " + key + " needs integers, got '" + part + "'");
            }
        }
        return out;
    }
    std::vector<std::string> get_list(const std::string& key) const { return split(get(key), ','); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// "key = value" lines; '#' starts a comment.
    static ExperimentConfig parse_text(const std::string& text) {
        ExperimentConfig c;
        std::istringstream is(text);
        std::string line;
        int no = 0;
        while (std::getline(is, line)) {
            ++no;
            if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
            if (trim(line).empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
            c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        }
        return c;
    }
    static ExperimentConfig load(const std::filesystem::path& file) {
        std::ifstream in(file);
        if (!in) throw ConfigError("cannot read config file " + file.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str());
    }

    static ExperimentConfig defaults(const std::string& graph) {
        ExperimentConfig c;
        std::map<std::string, std::string> common{
            {"graph", graph}, {"d", "3"}, {"k0", "0"}, {"R", "3"}, {"checks", "auto"}, {"roots", "20"},
            {"r_max", "10"}, {"path_pairs", "1000"}, {"path_trials", "1"}, {"mtp_samples", "10000"},
            {"edges", "true"}, {"strict", "true"}, {"out", "ngl_out"}, {"max_cluster", "4194304"},
            {"fiber_depth", "4"}, {"fiber_eps", "1/13"}, {"schedule", "override:42,42,98,210,434"},
            {"turn_targets", "64"}, {"eps", "0"}, {"eps_J", "1/2"}, {"L", "2"}};
        for (const auto& [k, v] : common) c.set(k, v);
        if (graph == "W_I") {
            c.set("depth", "15");
            c.set("levels", "3,8,14");
            c.set("seed", "7");
        } else if (graph == "W_star_J") {
            c.set("depth", "14");
            c.set("levels", "1,4,9");
            c.set("seed", "7");
            c.set("eps", "1/24");
            c.set("eps_J", "1");
        } else if (graph == "U" || graph == "UT3") {
            c.set("depth", "16");
            c.set("levels", "1,6,11");
            c.set("L", "4");
            c.set("seed", "1");
            c.set("path_pairs", "500");
            if (graph == "UT3") {
                c.set("r_max", "8");
                c.set("roots", "50");
                c.set("edges", "false");
            }
        } else {
            throw ConfigError("unknown graph family: " + graph);
        }
        return c;
    }

private:
    std::map<std::string, std::string> values_;
};

using EnvLookup = std::function<const char*(const char*)>;

/// Defaults for the chosen graph, then the file, then NGL_<KEY> environment
/// variables, then flags.
inline ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                       const std::map<std::string, std::string>& flags,
                                       const EnvLookup& env = [](const char* n) { return std::getenv(n); }) {
    ExperimentConfig over;
    if (file) over = ExperimentConfig::load(*file);
    for (const auto& k : config_keys()) {
        std::string name = "NGL_";
        for (const char* p = k.name; *p; ++p) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(*p))));
        if (const char* v = env(name.c_str())) over.set(k.name, v);
    }
    for (const auto& [k, v] : flags) over.set(k, v);
    ExperimentConfig c = ExperimentConfig::defaults(over.has("graph") ? over.get("graph") : "W_I");
    for (const auto& [k, v] : over.values()) c.set(k, v);
    return c;
}

// ---- hashing ----

inline std::string sha1_hex(boost::uuids::detail::sha1& h) {
    boost::uuids::detail::sha1::digest_type digest;
    h.get_digest(digest);
    char buf[41];
    for (int i = 0; i < 5; ++i) std::snprintf(buf + 8 * i, 9, "%08x", digest[i]);
    return std::string(buf, 40);
}

/// Git blob id of a byte string.
inline std::string git_blob_hash(const std::string& bytes) {
    boost::uuids::detail::sha1 h;
    std::string head = "blob " + std::to_string(bytes.size());
    h.process_bytes(head.data(), head.size() + 1);  // includes the terminating NUL
    h.process_bytes(bytes.data(), bytes.size());
    return sha1_hex(h);
}

inline std::string git_blob_hash_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + file.string());
    boost::uuids::detail::sha1 h;
    std::string head = "blob " + std::to_string(std::filesystem::file_size(file));
    h.process_bytes(head.data(), head.size() + 1);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) h.process_bytes(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return sha1_hex(h);
}

// ---- builders ----

inline Variant variant_of(const ExperimentConfig& c) {
    const std::string& g = c.get("graph");
    if (g == "W_I") return Variant::W_I;
    if (g == "W_star_J") return Variant::W_star_J;
    throw ConfigError("graph " + g + " is not an overlay family");
}

inline OverlayGraph build_overlay(const ExperimentConfig& c) {
    Variant v = variant_of(c);
    Truncation t(static_cast<int>(c.get_int("depth")));
    auto levels = c.get_ints("levels");
    auto seed = c.get_count("seed");
    CutSet cuts = v == Variant::W_I
                      ? CutSet::level_set(t, levels)
                      : select_J(t, levels, c.get_rational("eps_J"), static_cast<int>(c.get_int("L")),
                                 static_cast<int>(c.get_int("k0")), seed);
    return OverlayGraph(std::move(cuts), OverlayConfig{v, static_cast<int>(c.get_int("d")), c.get_rational("eps"), seed,
                                                       c.get_count("max_cluster"), {8, true}});
}

inline ProductConfig product_config(const ExperimentConfig& c) {
    ProductConfig p;
    p.d = static_cast<int>(c.get_int("d"));
    p.fiber_depth = static_cast<int>(c.get_int("fiber_depth"));
    p.depth = static_cast<int>(c.get_int("depth"));
    p.levels = c.get_ints("levels");
    p.L = static_cast<int>(c.get_int("L"));
    p.k0 = static_cast<int>(c.get_int("k0"));
    p.eps_J = c.get_rational("eps_J");
    p.fiber_eps = c.get_rational("fiber_eps");
    p.schedule = EpsSchedule::parse(c.get("schedule"), p.d);
    p.turn_targets = static_cast<int>(c.get_int("turn_targets"));
    p.seed = c.get_count("seed");
    p.max_cluster = c.get_count("max_cluster");
    return p;
}

// ---- checks ----

struct CheckResult {
    std::string name;
    std::string status;  // pass | fail | skip
    std::string detail;
    double seconds = 0;
};

struct ExperimentManifest {
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    std::vector<CheckResult> checks;
    std::map<std::string, std::string> outputs;  // file name -> git blob id
    std::string output_hash;                     // over the sorted (file, id) list
    double seconds = 0;
    nlohmann::ordered_json inventory = nlohmann::ordered_json::object();

    bool passed() const {
        return std::none_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == "fail"; });
    }
    const CheckResult* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["config"] = config;
        j["seed"] = seed;
        auto& cs = j["checks"] = nlohmann::ordered_json::array();
        for (const auto& c : checks) cs.push_back({{"name", c.name}, {"status", c.status}, {"detail", c.detail}});
        j["outputs"] = outputs;
        j["output_hash"] = output_hash;
        j["inventory"] = inventory;
        auto& tm = j["timings"] = nlohmann::ordered_json::object();
        for (const auto& c : checks) tm[c.name] = c.seconds;
        tm["total"] = seconds;
        return j;
    }
};

namespace detail {

inline std::string kv(std::initializer_list<std::pair<const char*, std::string>> items) {
    std::string s;
    for (const auto& [k, v] : items) {
        if (!s.empty()) s += ' ';
        s += std::string(k) + '=' + v;
    }
    return s;
}
inline std::string num(double x) { return format_decimal(x, 6); }
template <class T>
std::string num(T x) requires std::is_integral_v<T> {
    return std::to_string(x);
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

struct Outcome {
    bool ok = true;
    std::string detail;
};

inline std::vector<std::string> default_checks(const std::string& graph) {
    if (graph == "W_I") return {"degrees", "clusters", "girths", "cut_sequence", "witnesses", "profiles", "mtp"};
    if (graph == "W_star_J")
        return {"degrees", "jconditions", "marking", "girths", "cut_sequence", "witnesses", "profiles", "mtp"};
    if (graph == "U") return {"degrees", "lucky", "lucky_rate", "girths", "path_invariance", "profiles"};
    return {"degrees", "product_bound", "profiles"};
}

inline std::vector<VertexId> overlay_roots(const OverlayGraph& g, std::size_t n, std::uint64_t seed) {
    Rng rng = stream(seed, {tag::root});
    RootLaw law(g.truncation());
    std::vector<VertexId> out;
    for (std::size_t tries = 0; out.size() < n && tries < 1000 * n + 1000; ++tries) {
        VertexId v = law.sample_id(rng);
        if (!g.guarded(v)) out.push_back(v);
    }
    return out;
}

inline Outcome girth_outcome(const std::vector<std::shared_ptr<const Replacement>>& reps) {
    std::size_t checked = 0, bad = 0, fallbacks = 0, open = 0;
    int lo = infinite_girth;
    for (const auto& r : reps) {
        if (r->type != ClusterType::exp || r->complete) continue;
        if (r->cluster.open) {
            ++open;  // excluded from measurements
            continue;
        }
        ++checked;
        int g = girth(r->adj);
        if (g != r->achieved_girth || g < r->target_girth) ++bad;
        fallbacks += r->fell_back();
        lo = std::min(lo, g);
    }
    return {bad == 0, kv({{"clusters", num(checked)},
                          {"mismatches", num(bad)},
                          {"fallbacks", num(fallbacks)},
                          {"min_girth", lo == infinite_girth ? "inf" : num(lo)},
                          {"open_skipped", num(open)}})};
}

}  // namespace detail

struct RunContext {
    const ExperimentConfig& cfg;
    std::vector<GrowthProfile> profiles;
};

namespace detail {

inline void run_overlay_checks(const OverlayGraph& g, RunContext& ctx, const std::vector<std::string>& names,
                               const std::function<void(const std::string&, const std::function<Outcome()>&)>& run) {
    const ExperimentConfig& c = ctx.cfg;
    const Truncation& t = g.truncation();
    const CutSet& cuts = g.cuts();
    auto seed = c.get_count("seed");
    bool wsj = g.config().variant == Variant::W_star_J;
    std::map<VertexId, int> witness_L;
    for (const auto& name : names) {
        if (name == "degrees") {
            run(name, [&] {
                std::size_t m = g.max_degree();
                return Outcome{m <= g.degree_cap(), kv({{"max", num(m)}, {"cap", num(g.degree_cap())}})};
            });
        } else if (name == "clusters" && !wsj) {
            run(name, [&] {
                std::size_t checked = 0, bad = 0;
                for (VertexId v : cuts.lower_endpoints()) {
                    ++checked;
                    if (cluster_size_capped(cuts, v) != level_cluster_size(cuts, t.generation(v))) ++bad;
                }
                return Outcome{bad == 0, kv({{"closed_clusters", num(checked)}, {"mismatches", num(bad)}})};
            });
        } else if (name == "jconditions" && wsj) {
            run(name, [&] {
                auto level = CutSet::level_set(t, cuts.levels());
                std::size_t bad1 = 0, bad2 = 0, closed = 0, not_subset = 0;
                for (VertexId v = 0; v < t.vertex_count(); ++v) {
                    int inc = cuts.cut_above(v);
                    if (t.generation(v) > 0)
                        inc += cuts.cut_above(Truncation::left_child(v)) + cuts.cut_above(Truncation::right_child(v));
                    bad1 += inc > 1;
                    not_subset += cuts.cut_above(v) && !level.cut_above(v);
                }
                Rational half = g.config().eps / 2;
                Rational worst(0);
                for (VertexId v : cuts.lower_endpoints()) {
                    Cluster k = cluster_at_top(cuts, v, g.config().max_cluster);
                    ++closed;
                    Rational r = boundary_ratio(k);
                    worst = std::max(worst, r);
                    bad2 += r > half;
                }
                return Outcome{bad1 == 0 && bad2 == 0 && not_subset == 0,
                               kv({{"cond1_violations", num(bad1)},
                                   {"cond2_violations", num(bad2)},
                                   {"closed_clusters", num(closed)},
                                   {"max_out_ratio", to_string(worst)},
                                   {"bound", to_string(half)},
                                   {"outside_I", num(not_subset)}})};
            });
        } else if (name == "marking" && wsj) {
            run(name, [&] {
                std::size_t clusters = 0, bad_count = 0, bad_set = 0, too_close = 0, marked = 0, top_marked = 0;
                for (const auto& r : g.materialize_all()) {
                    if (r->type != ClusterType::exp || r->complete) continue;
                    ++clusters;
                    const Cluster& k = r->cluster;
                    std::vector<VertexId> want = k.boundary;
                    want.insert(want.end(), r->ext.begin(), r->ext.end());
                    std::sort(want.begin(), want.end());
                    want.erase(std::unique(want.begin(), want.end()), want.end());
                    std::vector<VertexId> rest;
                    std::set_difference(r->marked.begin(), r->marked.end(), want.begin(), want.end(),
                                        std::back_inserter(rest));
                    bool top_only = rest.empty() || (rest.size() == 1 && rest[0] == k.top);
                    if (!std::includes(r->marked.begin(), r->marked.end(), want.begin(), want.end()) || !top_only)
                        ++bad_set;
                    top_marked += rest.size();
                    marked += r->marked.size();
                    if (r->pruned.size() != r->marked.size()) ++bad_count;
                    GirthGraph pre;
                    pre.n = static_cast<std::uint32_t>(k.size);
                    pre.adj = r->adj;
                    for (auto [a, b] : r->pruned) {
                        pre.adj[a].push_back(b);
                        pre.adj[b].push_back(a);
                    }
                    std::vector<std::uint32_t> local;
                    for (VertexId v : r->marked) local.push_back(static_cast<std::uint32_t>(k.local_index(v)));
                    if (min_pairwise_distance(pre, local, 2) < 3) ++too_close;
                }
                return Outcome{bad_count == 0 && bad_set == 0 && too_close == 0,
                               kv({{"exp_clusters", num(clusters)},
                                   {"marked", num(marked)},
                                   {"tops_marked", num(top_marked)},
                                   {"prune_count_mismatch", num(bad_count)},
                                   {"marked_set_mismatch", num(bad_set)},
                                   {"closer_than_3", num(too_close)}})};
            });
        } else if (name == "girths") {
            run(name, [&] { return girth_outcome(g.materialize_all()); });
        } else if (name == "cut_sequence") {
            run(name, [&] {
                auto pairs = c.get_count("path_pairs");
                int trials = static_cast<int>(c.get_int("path_trials"));
                Rng rng = stream(seed, {tag::trial, 0});
                RootLaw law(t);
                std::uint64_t done = 0, paths = 0, nonempty = 0;
                int violations = 0;
                while (done < pairs) {
                    VertexId u = law.sample_id(rng);
                    VertexId v = sample_nearby(t, u, rng);
                    if (g.guarded(u) || g.guarded(v)) continue;
                    auto rep = check_cut_sequence(g, u, v, trials, mix_key(seed, {tag::trial, done + 1}));
                    violations += rep.violations;
                    paths += static_cast<std::uint64_t>(rep.paths);
                    nonempty += !rep.reference.empty();
                    ++done;
                }
                return Outcome{violations == 0, kv({{"pairs", num(done)},
                                                    {"paths", num(paths)},
                                                    {"crossing_pairs", num(nonempty)},
                                                    {"violations", num(violations)}})};
            });
        } else if (name == "witnesses") {
            run(name, [&] {
                auto roots = overlay_roots(g, c.get_count("roots"), seed);
                std::size_t lower = 0, missing = 0, len_bad = 0, ball_bad = 0, upper = 0, upper_ok = 0;
                std::vector<double> sum(4, 0.0);
                std::vector<int> cnt(4, 0);
                for (VertexId o : roots) {
                    for (std::size_t m = 1; m <= 3; ++m) {
                        try {
                            auto w = witness_lower(g, o, m);
                            ++lower;
                            len_bad += !w.length_ok;
                            ball_bad += !w.ball_ok;
                            if (w.exponent) {
                                sum[m] += *w.exponent;
                                ++cnt[m];
                            }
                            if (m == 1) witness_L[o] = w.L;
                        } catch (const BoundaryError&) {
                            ++missing;
                        }
                    }
                    try {
                        auto w = witness_upper(g, o, 0, mix_key(seed, {tag::sample, o}));
                        ++upper;
                        upper_ok += w.ball_ok;
                    } catch (const BoundaryError&) {
                        ++missing;
                    }
                }
                auto mean = [&](int m) { return cnt[m] ? num(sum[m] / cnt[m]) : std::string("na"); };
                // the W_I upper bound is deterministic; the W_star_J one is a 95% branching-process percentile
                bool upper_exact_ok = wsj || upper_ok == upper;
                return Outcome{len_bad == 0 && ball_bad == 0 && upper_exact_ok,
                               kv({{"lower", num(lower)},
                                   {"unavailable", num(missing)},
                                   {"length_violations", num(len_bad)},
                                   {"ball_violations", num(ball_bad)},
                                   {"mean_exp_m1", mean(1)},
                                   {"mean_exp_m2", mean(2)},
                                   {"mean_exp_m3", mean(3)},
                                   {"upper", num(upper)},
                                   {"upper_above_threshold", num(upper_ok)}})};
            });
        } else if (name == "profiles") {
            run(name, [&] {
                int r_max = static_cast<int>(c.get_int("r_max"));
                for (VertexId o : overlay_roots(g, c.get_count("roots"), seed)) {
                    auto p = ball_profile<VertexId>(
                        g.oracle(), o, r_max, [&](VertexId x) { return g.guarded(x); }, g.d(), t.format(o));
                    if (auto it = witness_L.find(o); it != witness_L.end() && it->second >= 1 && it->second <= r_max)
                        p.witness_radius = it->second;
                    ctx.profiles.push_back(std::move(p));
                }
                try {
                    auto e = growth_estimates(ctx.profiles);
                    return Outcome{true, kv({{"profiles", num(ctx.profiles.size())},
                                             {"upper", num(e.upper)},
                                             {"upper_r", num(e.upper_r)},
                                             {"lower", num(e.lower)},
                                             {"lower_r", num(e.lower_r)},
                                             {"lower_from_witness", e.lower_from_witness ? "1" : "0"}})};
                } catch (const InsufficientDataError& e) {
                    return Outcome{false, e.what()};
                }
            });
        } else if (name == "mtp") {
            run(name, [&] {
                Ensemble<VertexId> ens{to_string(g.config().variant), g.oracle(),
                                       [&](const VertexId& v) { return g.guarded(v); },
                                       [&t](Rng& rng) { return RootLaw(t).sample_id(rng); }};
                auto cut_up = transports::along<VertexId>("cut_up", [&](const VertexId& x, const VertexId& y) {
                    return cuts.cut_above(x) && y == Truncation::parent(x);
                });
                MtpOptions opt{c.get_count("mtp_samples"), 20 * c.get_count("mtp_samples"), seed};
                bool ok = true;
                std::string detail;
                for (const auto& spec : {transports::each_neighbor<VertexId>(), cut_up}) {
                    auto r = mtp_test(ens, spec, opt);
                    ok = ok && r.pass;
                    if (!detail.empty()) detail += "; ";
                    detail += spec.name + ": " +
                              kv({{"out", num(r.mean_out)},
                                  {"in", num(r.mean_in)},
                                  {"se", num(r.stderr_diff)},
                                  {"accepted", num(r.accepted)},
                                  {"rejected", num(r.draws - r.accepted)},
                                  {"pass", r.pass ? "1" : "0"}});
                }
                return Outcome{ok, detail};
            });
        } else {
            run(name, nullptr);
        }
    }
}

struct ProductScan {
    std::size_t max_degree = 0;
    std::size_t horizontal = 0;      // horizontal edges seen from both ends
    std::size_t bad_horizontal = 0;  // horizontal edge whose lower end is not a lucky source
    std::size_t bad_removed = 0;     // lucky source still holding its vertical edge
    std::size_t removed_not_jprime = 0;
    std::size_t bad_clause = 0;
};

inline ProductScan scan_product(const UGraph& g) {
    ProductScan s;
    std::vector<UGraph::Id> buf;
    for (UGraph::Id a = 0; a < g.vertex_count(); ++a) {
        buf.clear();
        g.neighbors(a, buf);
        s.max_degree = std::max(s.max_degree, buf.size());
        for (auto b : buf) {
            if (g.fiber_of(a) == g.fiber_of(b)) continue;
            ++s.horizontal;
            auto src = g.fiber_of(a) > g.fiber_of(b) ? a : b;
            auto dst = src == a ? b : a;
            if (!g.is_lucky(src) || g.pos_of(src) != g.pos_of(dst) ||
                Truncation::parent(g.fiber_of(src)) != g.fiber_of(dst))
                ++s.bad_horizontal;
        }
    }
    for (auto v : g.lucky()) {
        VertexId u = g.fiber_of(v), x = g.pos_of(v);
        auto nb = g.adjacency(v);
        if (std::binary_search(nb.begin(), nb.end(), g.id(u, Truncation::parent(x)))) ++s.bad_removed;
        if (!g.jprime(u).cut_above(x)) ++s.removed_not_jprime;
        const auto& turn = g.turnable(u);
        auto ext = g.overlay(Truncation::parent(u)).replacement(x)->ext;
        bool c1 = std::binary_search(turn.begin(), turn.end(), x);
        bool c2 = std::binary_search(ext.begin(), ext.end(), x);
        bool c3 = !g.jprime(Truncation::sibling(u)).cut_above(x);
        if (!(c1 && c2 && c3)) ++s.bad_clause;
    }
    return s;
}

struct LuckyRate {
    std::uint64_t turnable = 0;
    std::uint64_t lucky = 0;
    double expected = 0;
    double se = 0;
    double rate() const { return turnable ? static_cast<double>(lucky) / turnable : 0.0; }
    double z() const { return se > 0 ? (rate() - expected) / se : 0.0; }
};

inline LuckyRate lucky_rate(const UGraph& g) {
    LuckyRate r;
    for (VertexId u = 1; u < g.fibers().vertex_count(); ++u) r.turnable += g.turnable(u).size();
    r.lucky = g.lucky_count();
    r.expected = to_double(g.config().fiber_eps) / 2;
    if (r.turnable) r.se = std::sqrt(r.expected * (1 - r.expected) / static_cast<double>(r.turnable));
    return r;
}

inline std::vector<UGraph::Id> product_roots(const UGraph& g, std::size_t n, std::uint64_t seed) {
    Rng rng = stream(seed, {tag::root});
    std::vector<UGraph::Id> out;
    for (std::size_t tries = 0; out.size() < n && tries < 1000 * n + 1000; ++tries) {
        UGraph::Id x = uniform_below(rng, g.vertex_count());
        if (!g.guarded(x)) out.push_back(x);
    }
    return out;
}

inline std::string product_label(const UGraph& g, UGraph::Id x) {
    return g.fibers().format(g.fiber_of(x)) + "|" + g.inner().format(g.pos_of(x));
}

inline void run_product_checks(const UGraph& g, bool ut3, RunContext& ctx, const std::vector<std::string>& names,
                               const std::function<void(const std::string&, const std::function<Outcome()>&)>& run) {
    const ExperimentConfig& c = ctx.cfg;
    auto seed = c.get_count("seed");
    std::optional<ProductScan> scan;
    auto get_scan = [&]() -> const ProductScan& {
        if (!scan) scan = scan_product(g);
        return *scan;
    };
    int d = g.config().d;
    int r_max = static_cast<int>(c.get_int("r_max"));
    for (const auto& name : names) {
        if (name == "degrees" && !ut3) {
            run(name, [&] {
                auto m = get_scan().max_degree;
                return Outcome{m <= static_cast<std::size_t>(d), kv({{"max", num(m)}, {"cap", num(d)}})};
            });
        } else if (name == "degrees" && ut3) {
            run(name, [&] {
                UT3Graph h(g, static_cast<int>(c.get_int("R")));
                std::size_t worst = 0, seen = 0;
                std::vector<UT3Vertex> buf;
                for (auto o : product_roots(g, c.get_count("roots"), seed)) {
                    bfs_ball<UT3Vertex>(
                        h.oracle(), UT3Vertex{o, T3Addr::root()}, std::min(r_max, 4), std::uint64_t{1} << 22,
                        [&](const UT3Vertex& v, int) {
                            buf.clear();
                            h.neighbors(v, buf);
                            worst = std::max(worst, buf.size());
                            ++seen;
                        },
                        [](const UT3Vertex&) { return true; });
                }
                return Outcome{worst <= static_cast<std::size_t>(d + 3),
                               kv({{"max", num(worst)}, {"cap", num(d + 3)}, {"vertices_seen", num(seen)}})};
            });
        } else if (name == "lucky" && !ut3) {
            run(name, [&] {
                const auto& s = get_scan();
                return Outcome{s.bad_horizontal == 0 && s.bad_removed == 0 && s.removed_not_jprime == 0 &&
                                   s.bad_clause == 0,
                               kv({{"lucky", num(g.lucky_count())},
                                   {"horizontal_edges", num(s.horizontal / 2)},
                                   {"horizontal_not_from_lucky", num(s.bad_horizontal)},
                                   {"vertical_kept", num(s.bad_removed)},
                                   {"removed_outside_Jprime", num(s.removed_not_jprime)},
                                   {"clause_violations", num(s.bad_clause)}})};
            });
        } else if (name == "lucky_rate" && !ut3) {
            run(name, [&] {
                auto r = lucky_rate(g);
                return Outcome{r.turnable > 0 && std::abs(r.z()) <= 4.0,
                               kv({{"turnable", num(r.turnable)},
                                   {"lucky", num(r.lucky)},
                                   {"rate", num(r.rate())},
                                   {"expected", num(r.expected)},
                                   {"z", num(r.z())}})};
            });
        } else if (name == "girths" && !ut3) {
            run(name, [&] {
                std::vector<std::shared_ptr<const Replacement>> reps;
                for (VertexId u = 0; u < g.fibers().vertex_count(); ++u)
                    for (auto& r : g.overlay(u).materialized()) reps.push_back(r);
                return girth_outcome(reps);
            });
        } else if (name == "path_invariance" && !ut3) {
            run(name, [&] {
                auto lucky = g.lucky();
                Rng rng = stream(seed, {tag::trial, 0});
                auto walk = [&](UGraph::Id x, int steps) {
                    std::vector<UGraph::Id> nb;
                    for (int i = 0; i < steps; ++i) {
                        nb.clear();
                        g.neighbors(x, nb);
                        if (nb.empty()) break;
                        x = nb[uniform_below(rng, nb.size())];
                    }
                    return x;
                };
                auto pairs = c.get_count("path_pairs");
                int trials = static_cast<int>(c.get_int("path_trials"));
                std::uint64_t done = 0, horizontal = 0;
                int violations = 0;
                while (done < pairs) {
                    UGraph::Id a, b;
                    if (!lucky.empty()) {
                        auto l = lucky[uniform_below(rng, lucky.size())];
                        a = walk(l, 1 + static_cast<int>(uniform_below(rng, 4)));
                        b = walk(g.id(Truncation::parent(g.fiber_of(l)), g.pos_of(l)),
                                 1 + static_cast<int>(uniform_below(rng, 4)));
                    } else {
                        a = uniform_below(rng, g.vertex_count());
                        b = walk(a, 6);
                    }
                    if (g.guarded(a) || g.guarded(b)) continue;
                    auto rep = check_path_invariance(g, a, b, trials, mix_key(seed, {tag::trial, done + 1}));
                    violations += rep.violations;
                    horizontal += rep.horizontal;
                    ++done;
                }
                return Outcome{violations == 0, kv({{"pairs", num(done)},
                                                    {"horizontal_on_reference", num(horizontal)},
                                                    {"violations", num(violations)}})};
            });
        } else if (name == "product_bound" && ut3) {
            run(name, [&] {
                UT3Graph h(g, std::min(r_max, 12));
                std::size_t checks = 0, bad = 0;
                for (auto o : product_roots(g, c.get_count("roots"), seed)) {
                    auto base = bfs_ball<UGraph::Id>(g.oracle(), o, r_max);
                    std::vector<std::uint64_t> b;
                    for (int r = 0; r <= r_max; ++r) b.push_back(base.ball(static_cast<std::size_t>(r)));
                    auto p = bfs_ball<UT3Vertex>(h.oracle(), UT3Vertex{o, T3Addr::root()}, r_max);
                    for (int r = 1; r <= r_max; ++r) {
                        ++checks;
                        bad += !product_bound(b, r, p.ball(static_cast<std::size_t>(r))).holds();
                    }
                }
                return Outcome{bad == 0, kv({{"comparisons", num(checks)}, {"exceptions", num(bad)}})};
            });
        } else if (name == "profiles") {
            run(name, [&] {
                auto roots = product_roots(g, c.get_count("roots"), seed);
                if (ut3) {
                    UT3Graph h(g, static_cast<int>(c.get_int("R")));
                    for (auto o : roots)
                        ctx.profiles.push_back(ball_profile<UT3Vertex>(
                            h.oracle(), UT3Vertex{o, T3Addr::root()}, r_max,
                            [&](const UT3Vertex& v) { return g.guarded(v.x) || v.w.length() >= h.radius(); }, d,
                            product_label(g, o)));
                } else {
                    for (auto o : roots)
                        ctx.profiles.push_back(ball_profile<UGraph::Id>(
                            g.oracle(), o, r_max, [&](UGraph::Id x) { return g.guarded(x); }, d, product_label(g, o)));
                }
                try {
                    auto e = growth_estimates(ctx.profiles);
                    return Outcome{true, kv({{"profiles", num(ctx.profiles.size())},
                                             {"upper", num(e.upper)},
                                             {"upper_r", num(e.upper_r)},
                                             {"lower", num(e.lower)},
                                             {"lower_r", num(e.lower_r)}})};
                } catch (const InsufficientDataError& e) {
                    return Outcome{false, e.what()};
                }
            });
        } else {
            run(name, nullptr);
        }
    }
}

/// Clusters grouped by (type, size, open, target girth, achieved girth).
inline nlohmann::ordered_json overlay_inventory(const OverlayGraph& g) {
    using Key = std::tuple<std::string, std::uint64_t, bool, int, int>;
    std::map<Key, std::uint64_t> groups;
    for (const auto& r : g.materialize_all())
        ++groups[Key{r->type == ClusterType::exp ? "exp" : "path", r->cluster.size, r->cluster.open, r->target_girth,
                     r->achieved_girth == infinite_girth ? -1 : r->achieved_girth}];
    nlohmann::ordered_json j;
    j["vertices"] = g.truncation().vertex_count();
    auto& cs = j["clusters"] = nlohmann::ordered_json::array();
    for (const auto& [k, n] : groups) {
        const auto& [type, size, open, target, achieved] = k;
        cs.push_back({{"type", type},
                      {"size", size},
                      {"open", open},
                      {"target_girth", target},
                      {"achieved_girth", achieved},
                      {"count", n}});
    }
    return j;
}

inline void write_product_edges(std::ostream& os, const UGraph& g) {
    os << "# " << g.vertex_count() << '\n';
    std::vector<UGraph::Id> buf;
    for (UGraph::Id a = 0; a < g.vertex_count(); ++a) {
        buf.clear();
        g.neighbors(a, buf);
        std::sort(buf.begin(), buf.end());
        for (auto b : buf)
            if (a < b) os << a << ' ' << b << '\n';
    }
}

}  // namespace detail

/// Builds the configured graph, runs its checks and writes manifest.json,
/// checks.csv, profiles.csv and (optionally) edges.txt into the output
/// directory. In strict mode a failed check raises ValidationError naming it.
inline ExperimentManifest run_experiment(const ExperimentConfig& cfg) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    ExperimentManifest man;
    man.config = cfg.values();
    man.seed = cfg.get_count("seed");
    const std::string graph = cfg.get("graph");
    std::filesystem::path out = cfg.get("out");
    std::filesystem::create_directories(out);

    std::vector<std::string> names = cfg.get("checks") == "auto" ? detail::default_checks(graph) : cfg.get_list("checks");
    RunContext ctx{cfg, {}};
    auto run = [&](const std::string& name, const std::function<detail::Outcome()>& f) {
        CheckResult r;
        r.name = name;
        if (!f) {
            r.status = "skip";
            r.detail = "not applicable to " + graph;
        } else {
            auto s = clock::now();
            auto o = f();
            r.seconds = std::chrono::duration<double>(clock::now() - s).count();
            r.status = o.ok ? "pass" : "fail";
            r.detail = o.detail;
        }
        man.checks.push_back(std::move(r));
    };

    std::function<void(std::ostream&)> edges;
    std::optional<OverlayGraph> overlay;
    std::optional<UGraph> product;
    int d = static_cast<int>(cfg.get_int("d"));
    if (graph == "W_I" || graph == "W_star_J") {
        overlay.emplace(build_overlay(cfg));
        detail::run_overlay_checks(*overlay, ctx, names, run);
        man.inventory = detail::overlay_inventory(*overlay);
        edges = [&](std::ostream& os) { overlay->write_edges(os); };
    } else {
        product.emplace(product_config(cfg));
        detail::run_product_checks(*product, graph == "UT3", ctx, names, run);
        man.inventory = {{"vertices", product->vertex_count()}};
        if (graph == "U") edges = [&](std::ostream& os) { detail::write_product_edges(os, *product); };
    }

    {
        std::ofstream os(out / "checks.csv");
        os << "name,status,detail\n";
        for (const auto& c : man.checks) os << c.name << ',' << c.status << ',' << detail::csv_quote(c.detail) << '\n';
    }
    {
        std::ofstream os(out / "profiles.csv");
        write_profiles_csv_header(os, d);
        for (const auto& p : ctx.profiles) write_profile_csv(os, p);
    }
    std::vector<std::string> files{"checks.csv", "profiles.csv"};
    if (edges && cfg.get_bool("edges")) {
        std::ofstream os(out / "edges.txt");
        edges(os);
        files.push_back("edges.txt");
    }
    std::string listing;
    for (const auto& f : files) {
        man.outputs[f] = git_blob_hash_file(out / f);
        listing += f + ' ' + man.outputs[f] + '\n';
    }
    man.output_hash = git_blob_hash(listing);
    man.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    {
        std::ofstream os(out / "manifest.json");
        os << man.to_json().dump(2) << '\n';
    }
    if (cfg.get_bool("strict"))
        for (const auto& c : man.checks)
            if (c.status == "fail") throw ValidationError("invariant failed: " + c.name + " (" + c.detail + ")");
    return man;
}

}  // namespace ngl
