// SPDX-License-Identifier: Apache-2.0

#include "fbft/trace_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace fbft {

namespace {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

constexpr std::string_view kFormat = "fbft-trace/1";

ojson rule_json(const DelayRule& r) { return ojson::array({r.min, r.max}); }

DelayRule rule_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("delay range must be [min, max]");
    return DelayRule{j.at(0).get<Tick>(), j.at(1).get<Tick>()};
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, const char* where) {
    std::set<std::string_view> allowed(keys);
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
}

ojson block_json(const BlockInfo& b) {
    ojson j;
    j["id"] = b.id.hex();
    j["round"] = b.round;
    j["view"] = b.view;
    j["height"] = b.height;
    j["proposer"] = b.proposer;
    j["parent"] = b.parent.hex();
    j["parent_round"] = b.parent_round;
    j["parent_view"] = b.parent_view;
    j["parent_height"] = b.parent_height;
    j["parent_proposer"] = b.parent_proposer;
    return j;
}

BlockInfo block_from(const json& j) {
    BlockInfo b;
    b.id = Digest::from_hex(j.at("id").get<std::string>());
    b.round = j.at("round").get<Round>();
    b.view = j.at("view").get<View>();
    b.height = j.at("height").get<std::uint8_t>();
    b.proposer = j.at("proposer").get<ReplicaId>();
    b.parent = Digest::from_hex(j.at("parent").get<std::string>());
    b.parent_round = j.at("parent_round").get<Round>();
    b.parent_view = j.at("parent_view").get<View>();
    b.parent_height = j.at("parent_height").get<std::uint8_t>();
    b.parent_proposer = j.at("parent_proposer").get<ReplicaId>();
    return b;
}

ojson record_json(const TraceRecord& r, std::size_t seq) {
    ojson j;
    j["seq"] = seq;
    j["t"] = r.at;
    j["type"] = std::string(to_string(r.type));
    switch (r.type) {
        case RecordType::deliver:
            j["from"] = r.from;
            j["to"] = r.replica;
            j["sent_at"] = r.sent_at;
            j["idx"] = r.send_index;
            j["kind"] = std::string(to_string(r.kind));
            j["units"] = r.units;
            if (r.fallback_view) j["fview"] = *r.fallback_view;
            j["summary"] = r.summary;
            if (r.block) j["block"] = block_json(*r.block);
            break;
        case RecordType::timer:
            j["replica"] = r.replica;
            j["round"] = r.round;
            break;
        case RecordType::commit: {
            j["replica"] = r.replica;
            ojson ids = ojson::array();
            for (const auto& id : r.blocks) ids.push_back(id.hex());
            j["blocks"] = std::move(ids);
            j["head"] = r.head.hex();
            break;
        }
        case RecordType::cert:
            j["replica"] = r.replica;
            j["cert"] = std::string(to_string(r.cert.kind));
            j["block"] = r.cert.block.hex();
            j["round"] = r.cert.round;
            j["view"] = r.cert.view;
            j["height"] = r.cert.height;
            j["proposer"] = r.cert.proposer;
            j["elected"] = r.cert.elected;
            j["signers"] = r.cert.signers;
            break;
        case RecordType::mode:
            j["replica"] = r.replica;
            j["mode"] = r.mode;
            j["view"] = r.view;
            break;
    }
    return j;
}

TraceRecord record_from(const json& j) {
    TraceRecord r;
    r.at = j.at("t").get<Tick>();
    const auto type = j.at("type").get<std::string>();
    if (type == "deliver") {
        r.type = RecordType::deliver;
        r.from = j.at("from").get<ReplicaId>();
        r.replica = j.at("to").get<ReplicaId>();
        r.sent_at = j.at("sent_at").get<Tick>();
        r.send_index = j.at("idx").get<std::uint64_t>();
        auto kind = message_kind_from_string(j.at("kind").get<std::string>());
        if (!kind) throw TraceFormatError("unknown message kind");
        r.kind = *kind;
        r.units = j.at("units").get<std::uint32_t>();
        if (j.contains("fview")) r.fallback_view = j.at("fview").get<View>();
        r.summary = j.at("summary").get<std::string>();
        if (j.contains("block")) r.block = block_from(j.at("block"));
    } else if (type == "timer") {
        r.type = RecordType::timer;
        r.replica = j.at("replica").get<ReplicaId>();
        r.round = j.at("round").get<Round>();
    } else if (type == "commit") {
        r.type = RecordType::commit;
        r.replica = j.at("replica").get<ReplicaId>();
        for (const auto& id : j.at("blocks")) r.blocks.push_back(Digest::from_hex(id.get<std::string>()));
        r.head = Digest::from_hex(j.at("head").get<std::string>());
    } else if (type == "cert") {
        r.type = RecordType::cert;
        r.replica = j.at("replica").get<ReplicaId>();
        auto kind = cert_kind_from_string(j.at("cert").get<std::string>());
        if (!kind) throw TraceFormatError("unknown certificate kind");
        r.cert.kind = *kind;
        r.cert.block = Digest::from_hex(j.at("block").get<std::string>());
        r.cert.round = j.at("round").get<Round>();
        r.cert.view = j.at("view").get<View>();
        r.cert.height = j.at("height").get<std::uint8_t>();
        r.cert.proposer = j.at("proposer").get<ReplicaId>();
        r.cert.elected = j.at("elected").get<ReplicaId>();
        r.cert.signers = j.at("signers").get<std::uint32_t>();
    } else if (type == "mode") {
        r.type = RecordType::mode;
        r.replica = j.at("replica").get<ReplicaId>();
        r.mode = j.at("mode").get<bool>();
        r.view = j.at("view").get<View>();
    } else {
        throw TraceFormatError("unknown record type '" + type + "'");
    }
    return r;
}

}  // namespace

ojson config_to_json(const SimConfig& cfg) {
    ojson j;
    const auto& p = cfg.protocol;
    j["protocol"] = {
        {"n", p.n},
        {"f", p.f},
        {"variant", std::string(to_string(p.variant))},
        {"pacemaker", std::string(to_string(p.pacemaker))},
        {"timeout_duration", p.timeout_duration},
        {"leader_rotation_period", p.leader_rotation_period},
        {"adopt_foreign_fchains", p.adopt_foreign_fchains},
    };
    const auto& a = cfg.adversary;
    ojson net;
    net["model"] = std::string(to_string(a.model));
    net["delta"] = a.delta;
    net["gst"] = a.gst;
    net["pre_gst_delay_bound"] = a.pre_gst_delay_bound;
    net["default"] = rule_json(a.default_delay);
    ojson per = ojson::object();
    for (const auto& [k, r] : a.per_kind) per[std::string(to_string(k))] = rule_json(r);
    net["per_kind"] = std::move(per);
    net["revealed_leader_delay"] = a.revealed_leader_delay ? rule_json(*a.revealed_leader_delay) : ojson();
    j["network"] = std::move(net);
    ojson faults = ojson::array();
    for (ReplicaId r = 0; r < p.n; ++r) faults.push_back(to_string(cfg.fault_of(r)));
    j["faults"] = std::move(faults);
    j["run"] = {
        {"horizon", cfg.horizon},
        {"seed", cfg.seed},
        {"inject_double_commit", cfg.inject_double_commit},
    };
    return j;
}

SimConfig config_from_json(const json& j) {
    SimConfig cfg;
    try {
        reject_unknown(j, {"protocol", "network", "faults", "run"}, "config");
        const auto& p = j.at("protocol");
        reject_unknown(p, {"n", "f", "variant", "pacemaker", "timeout_duration",
                           "leader_rotation_period", "adopt_foreign_fchains"},
                       "protocol");
        cfg.protocol.n = p.at("n").get<std::uint32_t>();
        cfg.protocol.f = p.at("f").get<std::uint32_t>();
        auto variant = variant_from_string(p.at("variant").get<std::string>());
        auto pacemaker = pacemaker_from_string(p.at("pacemaker").get<std::string>());
        if (!variant || !pacemaker) throw ConfigError("bad variant or pacemaker");
        cfg.protocol.variant = *variant;
        cfg.protocol.pacemaker = *pacemaker;
        cfg.protocol.timeout_duration = p.at("timeout_duration").get<Tick>();
        cfg.protocol.leader_rotation_period = p.at("leader_rotation_period").get<Round>();
        cfg.protocol.adopt_foreign_fchains = p.at("adopt_foreign_fchains").get<bool>();

        const auto& n = j.at("network");
        reject_unknown(n, {"model", "delta", "gst", "pre_gst_delay_bound", "default", "per_kind",
                           "revealed_leader_delay"},
                       "network");
        auto model = network_model_from_string(n.at("model").get<std::string>());
        if (!model) throw ConfigError("bad network model");
        cfg.adversary.model = *model;
        cfg.adversary.delta = n.at("delta").get<Tick>();
        cfg.adversary.gst = n.at("gst").get<Tick>();
        cfg.adversary.pre_gst_delay_bound = n.at("pre_gst_delay_bound").get<Tick>();
        cfg.adversary.default_delay = rule_from(n.at("default"));
        for (const auto& [k, v] : n.at("per_kind").items()) {
            auto kind = message_kind_from_string(k);
            if (!kind) throw ConfigError("unknown message kind '" + k + "'");
            cfg.adversary.per_kind[*kind] = rule_from(v);
        }
        if (!n.at("revealed_leader_delay").is_null())
            cfg.adversary.revealed_leader_delay = rule_from(n.at("revealed_leader_delay"));

        for (const auto& f : j.at("faults")) {
            auto spec = fault_from_string(f.get<std::string>());
            if (!spec) throw ConfigError("bad fault spec");
            cfg.faults.push_back(*spec);
        }
        const auto& run = j.at("run");
        reject_unknown(run, {"horizon", "seed", "inject_double_commit"}, "run");
        cfg.horizon = run.at("horizon").get<Tick>();
        cfg.seed = run.at("seed").get<std::uint64_t>();
        cfg.inject_double_commit = run.at("inject_double_commit").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.protocol.run_seed = cfg.seed;
    cfg.validate();
    return cfg;
}

std::vector<std::string> trace_lines(const Trace& t) {
    std::vector<std::string> lines;
    lines.reserve(t.records.size() + 1);
    ojson header;
    header["type"] = "header";
    header["format"] = std::string(kFormat);
    header["config"] = config_to_json(t.config);
    header["sends"] = t.sends;
    header["undelivered"] = t.undelivered;
    lines.push_back(header.dump());
    for (std::size_t i = 0; i < t.records.size(); ++i) lines.push_back(record_json(t.records[i], i).dump());
    return lines;
}

Digest lines_digest(const std::vector<std::string>& lines) {
    DigestBuilder b;
    for (const auto& l : lines) {
        b.add(std::string_view(l));
        b.add(std::string_view("\n"));
    }
    return b.finish();
}

Digest trace_digest(const Trace& t) { return lines_digest(trace_lines(t)); }

void write_trace(std::ostream& os, const Trace& t) {
    auto lines = trace_lines(t);
    for (const auto& l : lines) os << l << '\n';
    ojson footer;
    footer["type"] = "digest";
    footer["records"] = t.records.size();
    footer["sha256"] = lines_digest(lines).hex();
    os << footer.dump() << '\n';
}

void write_trace_file(const std::string& path, const Trace& t) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_trace(os, t);
    if (!os) throw std::runtime_error("failed writing " + path);
}

StoredTrace read_trace(std::istream& is) {
    StoredTrace out;
    std::string line;
    bool have_header = false, have_footer = false;
    try {
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (have_footer) throw TraceFormatError("content after digest line");
            json j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "header" || j.at("format").get<std::string>() != kFormat)
                    throw TraceFormatError("missing trace header");
                out.trace.config = config_from_json(j.at("config"));
                out.trace.sends = j.at("sends").get<std::uint64_t>();
                out.trace.undelivered = j.at("undelivered").get<std::uint64_t>();
                have_header = true;
                out.lines.push_back(line);
                continue;
            }
            if (type == "digest") {
                out.stored_digest = Digest::from_hex(j.at("sha256").get<std::string>());
                have_footer = true;
                continue;
            }
            out.trace.records.push_back(record_from(j));
            out.lines.push_back(line);
        }
    } catch (const json::exception& e) {
        throw TraceFormatError(std::string("malformed trace line: ") + e.what());
    } catch (const ConfigError& e) {
        throw TraceFormatError(std::string("bad trace config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw TraceFormatError(std::string("malformed trace field: ") + e.what());
    }
    if (!have_header) throw TraceFormatError("empty trace");
    if (!have_footer) throw TraceFormatError("missing digest line");
    return out;
}

StoredTrace read_trace_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw TraceFormatError("cannot open " + path);
    return read_trace(is);
}

ReplayResult replay(const StoredTrace& stored) {
    ReplayResult res;
    res.expected = stored.stored_digest;
    ReplayDelays delays;
    for (const auto& r : stored.trace.records)
        if (r.type == RecordType::deliver && r.from != r.replica && r.at >= r.sent_at)
            delays[r.send_index] = r.at - r.sent_at;

    Trace fresh = simulate(stored.trace.config, &delays);
    auto lines = trace_lines(fresh);
    res.actual = lines_digest(lines);

    const std::size_t common = std::min(lines.size(), stored.lines.size());
    for (std::size_t i = 0; i < common; ++i)
        if (lines[i] != stored.lines[i]) {
            res.first_mismatch = i;
            break;
        }
    if (!res.first_mismatch && lines.size() != stored.lines.size()) res.first_mismatch = common;

    if (lines_digest(stored.lines) != stored.stored_digest) {
        res.reason = "stored digest does not cover stored lines";
    } else if (res.first_mismatch) {
        res.reason = "re-executed trace differs at line " + std::to_string(*res.first_mismatch);
    } else if (res.actual != res.expected) {
        res.reason = "digest mismatch";
    } else {
        res.match = true;
    }
    return res;
}

}  // namespace fbft
