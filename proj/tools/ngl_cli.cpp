// ngl: build, measure and check finite truncations of the overlay graphs.

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ngl/experiment.hpp"
#include "ngl/girth_graph.hpp"

namespace fs = std::filesystem;

namespace {

// Every config key as a --key flag, plus --config.
struct ConfigFlags {
    std::string file;
    std::deque<std::pair<std::string, CLI::Option*>> opts;
    std::deque<std::string> values;

    void attach(CLI::App& app) {
        app.add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
        for (const auto& k : ngl::config_keys()) {
            values.emplace_back();
            opts.emplace_back(k.name, app.add_option(std::string("--") + k.name, values.back(), k.help));
        }
    }

    std::map<std::string, std::string> given() const {
        std::map<std::string, std::string> out;
        for (std::size_t i = 0; i < opts.size(); ++i)
            if (opts[i].second->count()) out[opts[i].first] = values[i];
        return out;
    }
};

struct RunCommand {
    std::string name;
    std::string checks;  // used when --checks is not given
    ConfigFlags flags;
    std::string mode;
    std::string epsilon;
    CLI::App* app = nullptr;
};

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

void print_checks(const ngl::ExperimentManifest& m) {
    for (const auto& c : m.checks) std::cout << pad(c.name, 16) << pad(c.status, 6) << c.detail << '\n';
}

int run_command(RunCommand& rc) {
    auto flags = rc.flags.given();
    if (!rc.mode.empty()) {
        if (rc.mode == "I") flags["graph"] = "W_I";
        else if (rc.mode == "J") flags["graph"] = "W_star_J";
        else throw ngl::ConfigError("--mode must be I or J");
    }
    if (!rc.epsilon.empty()) flags["eps"] = rc.epsilon;
    if (!flags.contains("checks")) flags["checks"] = rc.checks;

    // --out may name the manifest file itself rather than the directory
    std::optional<fs::path> manifest_as;
    if (auto it = flags.find("out"); it != flags.end() && fs::path(it->second).extension() == ".json") {
        manifest_as = fs::path(it->second);
        it->second = manifest_as->parent_path().empty() ? "." : manifest_as->parent_path().string();
    }

    std::optional<fs::path> file;
    if (!rc.flags.file.empty()) file = rc.flags.file;
    auto cfg = ngl::resolve_config(file, flags);
    bool strict = cfg.get_bool("strict");
    cfg.set("strict", "false");
    auto m = ngl::run_experiment(cfg);

    fs::path dir = cfg.get("out");
    if (manifest_as && manifest_as->filename() != "manifest.json")
        fs::copy_file(dir / "manifest.json", *manifest_as, fs::copy_options::overwrite_existing);
    print_checks(m);
    std::cout << "output_hash " << m.output_hash << "\nwritten to " << dir.string() << '\n';
    if (!m.passed()) {
        for (const auto& c : m.checks)
            if (c.status == "fail") std::cerr << "invariant failed: " << c.name << " (" << c.detail << ")\n";
        return strict ? 1 : 0;
    }
    return 0;
}

std::vector<std::uint32_t> parse_sizes(const std::string& s) {
    std::vector<std::uint32_t> out;
    for (const auto& part : ngl::split(s, ',')) {
        auto t = ngl::trim(part);
        if (t.empty()) continue;
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size() || v < 2) throw ngl::ConfigError("bad vertex count: " + t);
        out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
}

struct BenchArgs {
    std::string sizes = "64,256,1024";
    int d = 3;
    int target = 0;  // 0: default target for each size
    std::uint64_t seed = 1;
    int repeats = 1;
    std::string export_dir;
};

int girth_bench(const BenchArgs& a) {
    if (a.d < 3) throw ngl::ConfigError("girth-bench needs d >= 3");
    if (!a.export_dir.empty()) fs::create_directories(a.export_dir);
    std::cout << "n,d,target,achieved,retries,seconds\n";
    for (auto n : parse_sizes(a.sizes)) {
        int target = a.target > 0 ? a.target : ngl::default_girth_target(n, a.d);
        for (int rep = 0; rep < a.repeats; ++rep) {
            std::uint64_t seed = a.seed + static_cast<std::uint64_t>(rep);
            auto t0 = std::chrono::steady_clock::now();
            auto g = ngl::generate(n, a.d, target, seed);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << n << ',' << a.d << ',' << target << ','
                      << (g.achieved_girth == ngl::infinite_girth ? std::string("inf") : std::to_string(g.achieved_girth))
                      << ',' << g.restarts << ',' << std::fixed << std::setprecision(3) << secs << '\n'
                      << std::defaultfloat;
            if (!a.export_dir.empty()) {
                std::ofstream os(fs::path(a.export_dir) /
                                 ("n" + std::to_string(n) + "_d" + std::to_string(a.d) + "_s" + std::to_string(seed) + ".txt"));
                ngl::write_edge_list(os, g);
            }
        }
    }
    return 0;
}

int report(const std::string& path, bool verify) {
    fs::path p = path;
    if (fs::is_directory(p)) p /= "manifest.json";
    std::ifstream in(p);
    if (!in) throw ngl::ConfigError("cannot read " + p.string());
    auto j = nlohmann::json::parse(in);
    std::cout << "graph " << j["config"].value("graph", "?") << "  seed " << j["seed"] << '\n';
    int failed = 0;
    for (const auto& c : j["checks"]) {
        std::string status = c["status"];
        failed += status == "fail";
        std::cout << pad(c["name"], 16) << pad(status, 6) << c["detail"].get<std::string>() << '\n';
    }
    if (j.contains("timings")) std::cout << "seconds " << j["timings"].value("total", 0.0) << '\n';
    std::cout << "output_hash " << j["output_hash"].get<std::string>() << '\n';
    int mismatched = 0;
    if (verify) {
        for (const auto& [file, id] : j["outputs"].items()) {
            fs::path f = p.parent_path() / file;
            bool ok = fs::exists(f) && ngl::git_blob_hash_file(f) == id.get<std::string>();
            mismatched += !ok;
            std::cout << pad(file, 16) << (ok ? "ok" : "MISMATCH") << '\n';
        }
    }
    return failed || mismatched ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graphs without a growth rate: construction and measurement"};
    app.require_subcommand(1);

    std::deque<RunCommand> runs;
    auto add_run = [&](const std::string& name, const std::string& help, const std::string& checks) -> RunCommand& {
        auto& rc = runs.emplace_back();
        rc.name = name;
        rc.checks = checks;
        rc.app = app.add_subcommand(name, help);
        rc.flags.attach(*rc.app);
        return rc;
    };
    auto& build = add_run("build", "build a graph, record its clusters and girths", "degrees,girths");
    build.app->add_option("--mode", build.mode, "I for W_I, J for W_star_J");
    build.app->add_option("--epsilon", build.epsilon, "same as --eps");
    add_run("measure", "ball-growth profiles and growth estimates", "profiles");
    add_run("witness", "witness paths and their ball inequalities", "witnesses");
    add_run("mtp", "mass-transport balance on the root law", "mtp");
    add_run("check", "every check that applies to the graph", "auto");

    BenchArgs bench;
    auto* gb = app.add_subcommand("girth-bench", "time the high-girth generator, CSV on stdout");
    gb->add_option("--n", bench.sizes, "comma-separated vertex counts");
    gb->add_option("--d", bench.d, "degree");
    gb->add_option("--target", bench.target, "girth target (default per size)");
    gb->add_option("--seed", bench.seed, "first seed");
    gb->add_option("--repeats", bench.repeats, "seeds per size")->check(CLI::PositiveNumber);
    gb->add_option("--export", bench.export_dir, "write edge lists into this directory");

    std::string manifest = "ngl_out";
    bool verify = false;
    auto* rep = app.add_subcommand("report", "summarize a manifest.json");
    rep->add_option("manifest", manifest, "manifest file or output directory");
    rep->add_flag("--verify", verify, "recompute output hashes");

    CLI11_PARSE(app, argc, argv);

    try {
        for (auto& rc : runs)
            if (rc.app->parsed()) return run_command(rc);
        if (gb->parsed()) return girth_bench(bench);
        if (rep->parsed()) return report(manifest, verify);
    } catch (const ngl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
