// SPDX-License-Identifier: Apache-2.0
//
// fbft: run, sweep, replay and check simulator scenarios.
// Exit status: 0 ok, 1 safety violation or replay mismatch, 2 usage or
// configuration error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fbft/analysis.hpp"
#include "fbft/harness.hpp"
#include "fbft/trace_io.hpp"

namespace {

using namespace fbft;

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kUsage = 2;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::string out;
    std::optional<Tick> horizon;
    std::vector<std::uint32_t> ns;
    std::string trace;
    bool quiet = false;
};

void print_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    std::cout << "timestamp=" << buf << '\n';
}

std::string out_path(const std::string& dir, const std::string& stem, std::uint64_t seed,
                     const std::string& ext) {
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / (stem + "-seed" + std::to_string(seed) + ext)).string();
}

Scenario load(const Options& o) {
    Scenario s = parse_scenario_file(o.config);
    if (o.seed) s.sim.seed = *o.seed;
    if (o.horizon) s.sim.horizon = *o.horizon;
    if (!o.out.empty()) s.out = o.out;
    s.sim.validate();
    return s;
}

int cmd_run(const Options& o) {
    Scenario s = load(o);
    RunOutcome run = run_scenario(s.sim);
    const std::string report = format_report(run);
    if (!s.out.empty()) {
        write_trace_file(out_path(s.out, "trace", s.sim.seed, ".jsonl"), run.trace);
        std::ofstream(out_path(s.out, "report", s.sim.seed, ".txt")) << report;
    }
    if (o.quiet) {
        std::cout << "safety_ok=" << (run.safety.ok() ? "true" : "false") << '\n';
        std::cout << "trace_digest=" << run.digest.hex() << '\n';
    } else {
        std::cout << report;
    }
    print_timestamp();
    return run.safety.ok() ? kOk : kViolation;
}

int cmd_sweep(const Options& o) {
    Scenario s = load(o);
    std::vector<std::uint64_t> seeds;
    if (!o.seeds.empty()) seeds = parse_seed_range(o.seeds);
    else if (s.seeds) seeds = *s.seeds;
    else seeds = {s.sim.seed};
    if (seeds.empty()) {
        std::cerr << "error: empty seed range\n";
        return kUsage;
    }
    std::vector<std::uint32_t> ns = o.ns;
    if (ns.empty()) ns = {s.sim.protocol.n};
    if (!s.sim.faults.empty() && (ns.size() > 1 || ns.front() != s.sim.protocol.n)) {
        std::cerr << "error: --n cannot be combined with per-replica faults\n";
        return kUsage;
    }
    std::vector<SimConfig> configs;
    for (auto n : ns)
        for (auto seed : seeds) {
            SimConfig c = s.sim;
            c.protocol.n = n;
            c.protocol.f = n > 0 ? (n - 1) / 3 : 0;
            c.seed = seed;
            c.protocol.run_seed = seed;
            c.validate();
            configs.push_back(c);
        }

    std::vector<SweepPoint> points(configs.size());
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t base = 0; base < configs.size(); base += workers) {
        std::vector<std::future<void>> batch;
        for (std::size_t i = base; i < std::min(configs.size(), base + workers); ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                SweepPoint& p = points[i];
                p.n = configs[i].protocol.n;
                p.seed = configs[i].seed;
                try {
                    RunOutcome run = run_scenario(configs[i]);
                    p.safe = run.safety.ok();
                    p.metrics = run.metrics;
                    p.digest = run.digest;
                    if (!s.out.empty())
                        write_trace_file(out_path(s.out, "trace-n" + std::to_string(p.n), p.seed, ".jsonl"),
                                         run.trace);
                } catch (const std::exception& e) {
                    p.error = e.what();
                }
            }));
        }
        for (auto& f : batch) f.get();
    }
    const std::string report = format_sweep(points);
    if (!s.out.empty()) std::ofstream(std::filesystem::path(s.out) / "sweep.txt") << report;
    if (!o.quiet) std::cout << report;
    print_timestamp();
    for (const auto& p : points)
        if (!p.error.empty() || !p.safe) return kViolation;
    return kOk;
}

int cmd_replay(const Options& o) {
    StoredTrace stored = read_trace_file(o.trace);
    ReplayResult r = replay(stored);
    std::cout << "expected_digest=" << r.expected.hex() << '\n';
    std::cout << "actual_digest=" << r.actual.hex() << '\n';
    std::cout << "replay=" << (r.match ? "match" : "DigestMismatch") << '\n';
    if (!r.match) std::cout << "reason=" << r.reason << '\n';
    print_timestamp();
    return r.match ? kOk : kViolation;
}

int cmd_check(const Options& o) {
    StoredTrace stored = read_trace_file(o.trace);
    SafetyReport s = check_safety(stored.trace);
    std::cout << "safety_ok=" << (s.ok() ? "true" : "false") << '\n';
    std::cout << "prefix_consistent=" << (s.prefix_consistent ? "true" : "false") << '\n';
    if (s.first_divergence)
        std::cout << "first_divergence=" << s.first_divergence->first << ","
                  << s.first_divergence->second << "@" << s.first_divergence->height << '\n';
    std::cout << "lemma1_violations=" << s.lemma1_violations.size() << '\n';
    std::cout << "lemma2_violations=" << s.lemma2_violations.size() << '\n';
    std::cout << "lemma3_violations=" << s.lemma3_violations.size() << '\n';
    for (const auto& note : s.notes) std::cout << "note=" << note << '\n';
    print_timestamp();
    return s.ok() ? kOk : kViolation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator harness for chained BFT with an asynchronous fallback view-change"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Scenario INI file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory for traces and reports");
        sub->add_option("--horizon", o.horizon, "Override the run horizon in ticks");
        sub->add_flag("--quiet", o.quiet, "Print only the essentials");
    };

    auto* run = app.add_subcommand("run", "Run one seeded simulation");
    common(run);
    run->add_option("--seed", o.seed, "Override the seed");

    auto* sweep = app.add_subcommand("sweep", "Run a grid of replica counts and seeds");
    common(sweep);
    sweep->add_option("--seed", o.seed, "Single seed");
    sweep->add_option("--seeds", o.seeds, "Seed range a..b (inclusive)");
    sweep->add_option("--n", o.ns, "Replica counts (n = 3f+1)")->delimiter(',');

    auto* rep = app.add_subcommand("replay", "Re-execute a stored trace and compare digests");
    rep->add_option("trace", o.trace, "Trace file")->required();
    rep->add_flag("--quiet", o.quiet);

    auto* chk = app.add_subcommand("check", "Check safety properties of a stored trace");
    chk->add_option("trace", o.trace, "Trace file")->required();
    chk->add_flag("--quiet", o.quiet);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return cmd_run(o);
        if (*sweep) return cmd_sweep(o);
        if (*rep) return cmd_replay(o);
        if (*chk) return cmd_check(o);
    } catch (const ConfigError& e) {
        std::cerr << "ConfigParseError: " << e.what() << '\n';
        return kUsage;
    } catch (const TraceFormatError& e) {
        std::cerr << "MalformedTrace: " << e.what() << '\n';
        return kUsage;
    } catch (const AnalysisError& e) {
        std::cerr << "AnalysisError: " << e.what() << '\n';
        return kViolation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
