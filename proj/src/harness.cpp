// SPDX-License-Identifier: Apache-2.0

#include "fbft/harness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fbft/crypto.hpp"
#include "fbft/trace_io.hpp"

namespace fbft {

namespace {

namespace pt = boost::property_tree;

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

DelayRule to_rule(const std::string& key, const std::string& v) {
    auto colon = v.find(':');
    if (colon == std::string::npos) throw ConfigError("'" + key + "' expects min:max");
    return DelayRule{to_u64(key, v.substr(0, colon)), to_u64(key, v.substr(colon + 1))};
}

void apply_protocol(const pt::ptree& sec, SimConfig& cfg) {
    for (const auto& [key, node] : sec) {
        const std::string v = node.data();
        auto& p = cfg.protocol;
        if (key == "n") p.n = static_cast<std::uint32_t>(to_u64(key, v));
        else if (key == "f") p.f = static_cast<std::uint32_t>(to_u64(key, v));
        else if (key == "variant") {
            auto x = variant_from_string(v);
            if (!x) throw ConfigError("unknown variant '" + v + "'");
            p.variant = *x;
        } else if (key == "pacemaker") {
            auto x = pacemaker_from_string(v);
            if (!x) throw ConfigError("unknown pacemaker '" + v + "'");
            p.pacemaker = *x;
        } else if (key == "timeout_duration") p.timeout_duration = to_u64(key, v);
        else if (key == "leader_rotation_period") p.leader_rotation_period = to_u64(key, v);
        else if (key == "adopt_foreign_fchains") p.adopt_foreign_fchains = to_bool(key, v);
        else throw ConfigError("unknown key '" + key + "' in [protocol]");
    }
}

void apply_network(const pt::ptree& sec, SimConfig& cfg) {
    auto& a = cfg.adversary;
    for (const auto& [key, node] : sec) {
        const std::string v = node.data();
        if (key == "model") {
            auto m = network_model_from_string(v);
            if (!m) throw ConfigError("unknown network model '" + v + "'");
            a.model = *m;
        } else if (key == "delta") a.delta = to_u64(key, v);
        else if (key == "gst") a.gst = to_u64(key, v);
        else if (key == "pre_gst_delay_bound") a.pre_gst_delay_bound = to_u64(key, v);
        else if (key == "default_min") a.default_delay.min = to_u64(key, v);
        else if (key == "default_max") a.default_delay.max = to_u64(key, v);
        else if (key == "revealed_leader_delay") a.revealed_leader_delay = to_rule(key, v);
        else if (key.starts_with("delay_")) {
            auto kind = message_kind_from_string(key.substr(6));
            if (!kind) throw ConfigError("unknown message kind in '" + key + "'");
            a.per_kind[*kind] = to_rule(key, v);
        } else throw ConfigError("unknown key '" + key + "' in [network]");
    }
}

void apply_faults(const pt::ptree& sec, std::map<std::uint64_t, FaultSpec>& out) {
    for (const auto& [key, node] : sec) {
        if (!key.starts_with("replica_")) throw ConfigError("unknown key '" + key + "' in [faults]");
        const auto id = to_u64(key, key.substr(8));
        auto spec = fault_from_string(node.data());
        if (!spec) throw ConfigError("bad fault '" + node.data() + "' for " + key);
        out[id] = *spec;
    }
}

void apply_run(const pt::ptree& sec, Scenario& s) {
    for (const auto& [key, node] : sec) {
        const std::string v = node.data();
        if (key == "horizon") s.sim.horizon = to_u64(key, v);
        else if (key == "seed") s.sim.seed = to_u64(key, v);
        else if (key == "seeds") s.seeds = parse_seed_range(v);
        else if (key == "out") s.out = v;
        else throw ConfigError("unknown key '" + key + "' in [run]");
    }
}

std::string fmt(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << x;
    return os.str();
}

}  // namespace

std::vector<std::uint64_t> parse_seed_range(const std::string& s) {
    auto dots = s.find("..");
    if (dots == std::string::npos) return {to_u64("seeds", s)};
    const auto lo = to_u64("seeds", s.substr(0, dots));
    const auto hi = to_u64("seeds", s.substr(dots + 2));
    std::vector<std::uint64_t> out;
    for (auto x = lo; x <= hi && hi >= lo; ++x) {
        out.push_back(x);
        if (x == hi) break;
    }
    return out;
}

Scenario parse_scenario(std::istream& is) {
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("scenario syntax: ") + e.what());
    }
    Scenario s;
    std::map<std::uint64_t, FaultSpec> faults;
    for (const auto& [name, sec] : tree) {
        if (sec.empty() && !sec.data().empty())
            throw ConfigError("key '" + name + "' outside any section");
        if (name == "protocol") apply_protocol(sec, s.sim);
        else if (name == "network") apply_network(sec, s.sim);
        else if (name == "faults") apply_faults(sec, faults);
        else if (name == "run") apply_run(sec, s);
        else if (name == "test") {
            for (const auto& [key, node] : sec) {
                if (key != "inject_double_commit") throw ConfigError("unknown key '" + key + "' in [test]");
                s.sim.inject_double_commit = to_bool(key, node.data());
            }
        } else throw ConfigError("unknown section [" + name + "]");
    }
    if (!faults.empty()) {
        s.sim.faults.assign(s.sim.protocol.n, FaultSpec{});
        for (const auto& [id, f] : faults) {
            if (id >= s.sim.protocol.n) throw ConfigError("fault for replica outside [0, n)");
            s.sim.faults[id] = f;
        }
    }
    s.sim.protocol.run_seed = s.sim.seed;
    s.sim.validate();
    return s;
}

Scenario parse_scenario_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read scenario file '" + path + "'");
    return parse_scenario(is);
}

RunOutcome run_scenario(const SimConfig& cfg) {
    RunOutcome out;
    out.trace = simulate(cfg);
    out.safety = check_safety(out.trace);
    out.metrics = measure(out.trace);
    out.digest = trace_digest(out.trace);
    return out;
}

std::string format_report(const RunOutcome& run) {
    const auto& t = run.trace;
    const auto& m = run.metrics;
    const auto& s = run.safety;
    std::ostringstream os;
    os << "config=" << config_to_json(t.config).dump() << '\n';
    os << "seed=" << t.config.seed << '\n';
    os << "election_prf=" << kElectionPrf << '\n';
    os << "trace_digest=" << run.digest.hex() << '\n';
    os << "records=" << t.records.size() << '\n';
    os << "undelivered=" << t.undelivered << '\n';
    os << "horizon_too_small=" << (t.horizon_too_small() ? "true" : "false") << '\n';
    os << "safety_ok=" << (s.ok() ? "true" : "false") << '\n';
    os << "prefix_consistent=" << (s.prefix_consistent ? "true" : "false") << '\n';
    if (s.first_divergence)
        os << "first_divergence=" << s.first_divergence->first << "," << s.first_divergence->second
           << "@" << s.first_divergence->height << '\n';
    os << "lemma1_violations=" << s.lemma1_violations.size() << '\n';
    os << "lemma2_violations=" << s.lemma2_violations.size() << '\n';
    os << "lemma3_violations=" << s.lemma3_violations.size() << '\n';
    for (const auto& note : s.notes) os << "note=" << note << '\n';
    os << "commits_total=" << m.commits_total << '\n';
    os << "messages_total=" << m.messages_total << '\n';
    os << "authenticator_units_total=" << m.authenticator_units_total << '\n';
    os << "messages_per_commit=" << fmt(m.messages_per_commit) << '\n';
    os << "timeout_messages_total=" << m.timeout_messages_total << '\n';
    os << "mean_latency_ticks=" << fmt(m.mean_latency_ticks()) << '\n';
    if (m.constant_delay) os << "constant_delay=" << *m.constant_delay << '\n';
    os << "fallback_instances=" << m.fallback_instances << '\n';
    os << "fallback_instances_with_commit=" << m.fallback_instances_with_commit << '\n';

    nlohmann::ordered_json j;
    j["seed"] = t.config.seed;
    j["trace_digest"] = run.digest.hex();
    j["safety_ok"] = s.ok();
    j["commits_total"] = m.commits_total;
    j["messages_total"] = m.messages_total;
    j["authenticator_units_total"] = m.authenticator_units_total;
    j["messages_per_commit"] = m.messages_per_commit;
    j["timeout_messages_total"] = m.timeout_messages_total;
    j["fallback_instances"] = m.fallback_instances;
    j["fallback_instances_with_commit"] = m.fallback_instances_with_commit;
    nlohmann::ordered_json lat = nlohmann::ordered_json::object();
    for (const auto& [k, c] : m.latency_ticks) lat[std::to_string(k)] = c;
    j["latency_ticks"] = std::move(lat);
    if (!m.latency_hops.empty()) {
        nlohmann::ordered_json hops = nlohmann::ordered_json::object();
        for (const auto& [k, c] : m.latency_hops) hops[std::to_string(k)] = c;
        j["latency_hops"] = std::move(hops);
    }
    os << "summary_json=" << j.dump() << '\n';
    return os.str();
}

std::string format_sweep(const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << "points=" << points.size() << '\n';
    std::map<std::uint32_t, std::vector<const SweepPoint*>> by_n;
    std::vector<MetricsReport> ok_reports;
    std::size_t failures = 0, unsafe = 0;
    for (const auto& p : points) {
        os << "point n=" << p.n << " seed=" << p.seed;
        if (!p.error.empty()) {
            ++failures;
            os << " error=" << p.error << '\n';
            continue;
        }
        if (!p.safe) ++unsafe;
        os << " safe=" << (p.safe ? "true" : "false") << " commits=" << p.metrics.commits_total
           << " messages_per_commit=" << fmt(p.metrics.messages_per_commit)
           << " mean_latency_ticks=" << fmt(p.metrics.mean_latency_ticks())
           << " fallback_instances=" << p.metrics.fallback_instances
           << " fallback_with_commit=" << p.metrics.fallback_instances_with_commit
           << " digest=" << p.digest.short_hex() << '\n';
        by_n[p.n].push_back(&p);
        ok_reports.push_back(p.metrics);
    }
    os << "failures=" << failures << '\n';
    os << "unsafe=" << unsafe << '\n';

    std::vector<double> xs, ys;
    for (const auto& [n, pts] : by_n) {
        double sum = 0;
        std::size_t count = 0;
        for (const auto* p : pts)
            if (p->metrics.commits_total) {
                sum += p->metrics.messages_per_commit;
                ++count;
            }
        if (!count) continue;
        const double mean = sum / static_cast<double>(count);
        os << "mean_messages_per_commit n=" << n << " value=" << fmt(mean) << '\n';
        xs.push_back(n);
        ys.push_back(mean);
    }
    if (xs.size() >= 2) {
        auto fit = linear_fit(xs, ys);
        os << "linear_fit slope=" << fmt(fit.slope) << " intercept=" << fmt(fit.intercept)
           << " r2=" << fmt(fit.r2) << '\n';
    }
    for (const auto& [n, pts] : by_n) {
        std::uint64_t instances = 0, msgs = 0;
        for (const auto* p : pts)
            for (const auto& [v, c] : p->metrics.fallback_messages) {
                ++instances;
                msgs += c;
            }
        if (instances)
            os << "fallback_messages_per_instance n=" << n
               << " value=" << fmt(static_cast<double>(msgs) / static_cast<double>(instances)) << '\n';
    }
    try {
        auto f = fallback_stats(std::span<const MetricsReport>(ok_reports));
        auto ci = clopper_pearson(f.with_commit, f.instances);
        os << "fallback_frequency=" << fmt(f.frequency) << " instances=" << f.instances
           << " ci95=[" << fmt(ci.lo) << "," << fmt(ci.hi) << "]\n";
    } catch (const AnalysisError&) {
        os << "fallback_frequency=none\n";
    }
    return os.str();
}

}  // namespace fbft
