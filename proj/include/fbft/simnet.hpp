// SPDX-License-Identifier: Apache-2.0
//
// Seeded discrete-event network simulator. Virtual time is integer ticks;
// events run in (time, seq) order. The run produces a flat trace that the
// analysis module consumes and the trace I/O layer serializes.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fbft/replica.hpp"
#include "fbft/types.hpp"

namespace fbft {

enum class NetworkModel { synchronous, partial_synchrony, asynchronous };

std::string_view to_string(NetworkModel m);
std::optional<NetworkModel> network_model_from_string(std::string_view s);

/// Inclusive delay range in ticks.
struct DelayRule {
    Tick min = 1;
    Tick max = 1;
    friend bool operator==(const DelayRule&, const DelayRule&) = default;
};

struct AdversaryModel {
    NetworkModel model = NetworkModel::synchronous;
    Tick delta = 1;
    Tick gst = 0;
    Tick pre_gst_delay_bound = 0;  // 0 means 4 * delta
    DelayRule default_delay{1, 1};
    std::map<MessageKind, DelayRule> per_kind;
    /// Extra rule for fallback messages sent by a view's elected leader, once
    /// the election is revealed (f+1 coin shares sent for that view).
    std::optional<DelayRule> revealed_leader_delay;

    void validate() const;
};

enum class FaultKind { honest, crash, mute_leader, equivocate };

struct FaultSpec {
    FaultKind kind = FaultKind::honest;
    Tick at = 0;  // crash time

    friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

/// "honest", "crash@T", "mute", "equivocate".
std::string to_string(const FaultSpec& f);
std::optional<FaultSpec> fault_from_string(std::string_view s);

struct SimConfig {
    ReplicaConfig protocol;
    AdversaryModel adversary;
    std::vector<FaultSpec> faults;  // empty or size n
    Tick horizon = 1000;
    std::uint64_t seed = 0;
    bool inject_double_commit = false;  // test hook

    /// Re-validates protocol and network settings and the fault budget.
    void validate() const;
    FaultSpec fault_of(ReplicaId r) const;
    bool honest(ReplicaId r) const { return fault_of(r).kind == FaultKind::honest; }
};

/// Reveals a view's elected leader to the adversary only after f+1 distinct
/// coin shares for that view have been sent.
class ElectionOracle {
public:
    ElectionOracle(std::uint64_t seed, std::uint32_t n, std::uint32_t f);

    void observe(ReplicaId from, const WireMessage& m);
    std::optional<ReplicaId> revealed(View v) const;

private:
    std::uint64_t seed_;
    std::uint32_t n_;
    std::uint32_t f_;
    std::map<View, std::set<ReplicaId>> shares_;
};

/// Deterministic seeded stream; ranges use 128-bit multiply-high reduction.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed) : gen_(seed) {}
    /// Uniform in [lo, hi].
    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);

private:
    std::mt19937_64 gen_;
};

/// Delay for one unicast under the model; always >= 1.
Tick adversary_delay(const AdversaryModel& model, const WireMessage& m, ReplicaId from,
                     ReplicaId to, Tick now, SimRng& rng, const ElectionOracle* oracle);

// ---------------------------------------------------------------------------
// Trace

/// Header fields of a block as seen on the wire.
struct BlockInfo {
    Digest id;
    Round round = 0;
    View view = 0;
    std::uint8_t height = 0;  // 0 for regular blocks
    ReplicaId proposer = 0;
    Digest parent;
    Round parent_round = 0;
    View parent_view = 0;
    std::uint8_t parent_height = 0;
    ReplicaId parent_proposer = 0;

    bool fallback() const { return height != 0; }
    friend bool operator==(const BlockInfo&, const BlockInfo&) = default;
};

BlockInfo block_info(const Block& b, ReplicaId proposer);

enum class CertKind { qc, fqc, tc, ftc, coin };
std::string_view to_string(CertKind k);
std::optional<CertKind> cert_kind_from_string(std::string_view s);

struct CertInfo {
    CertKind kind = CertKind::qc;
    Digest block;
    Round round = 0;
    View view = 0;
    std::uint8_t height = 0;
    ReplicaId proposer = 0;
    ReplicaId elected = 0;
    std::uint32_t signers = 0;

    friend bool operator==(const CertInfo&, const CertInfo&) = default;
};

CertInfo cert_info(const Certificate& c);

enum class RecordType { deliver, timer, commit, cert, mode };
std::string_view to_string(RecordType t);

struct TraceRecord {
    RecordType type = RecordType::deliver;
    Tick at = 0;
    ReplicaId replica = 0;  // receiver, timer owner, committer, certificate former

    // deliver
    ReplicaId from = 0;
    Tick sent_at = 0;
    std::uint64_t send_index = 0;
    MessageKind kind = MessageKind::proposal;
    std::uint32_t units = 0;
    std::optional<View> fallback_view;
    std::optional<BlockInfo> block;
    std::string summary;

    // timer
    Round round = 0;

    // commit
    std::vector<Digest> blocks;
    Digest head;

    // cert
    CertInfo cert;

    // mode
    bool mode = false;
    View view = 0;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct Trace {
    SimConfig config;
    std::vector<TraceRecord> records;
    std::uint64_t sends = 0;
    std::uint64_t undelivered = 0;  // sends scheduled past the horizon
    std::map<std::string, std::uint64_t> drops;

    bool horizon_too_small() const { return undelivered > 0; }
};

/// Recorded per-send delays, keyed by global send index.
using ReplayDelays = std::unordered_map<std::uint64_t, Tick>;

class Simulator {
public:
    explicit Simulator(SimConfig cfg);

    /// Runs until the horizon or event exhaustion. With `replay`, recorded
    /// delays override the adversary for the sends they cover.
    Trace run(const ReplayDelays* replay = nullptr);

    const Replica& replica(ReplicaId r) const { return *replicas_.at(r); }
    const SimConfig& config() const { return cfg_; }

private:
    struct Event {
        Tick time = 0;
        std::uint64_t seq = 0;
        bool timer = false;
        ReplicaId to = 0;
        ReplicaId from = 0;
        Tick sent_at = 0;
        std::uint64_t send_index = 0;
        std::shared_ptr<const WireMessage> msg;
        Round round = 0;
        std::uint64_t generation = 0;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    bool crashed(ReplicaId r, Tick t) const;
    void apply(ReplicaId r, Actions actions);
    void filter_byzantine(ReplicaId r, Actions& actions) const;
    void unicast(ReplicaId from, ReplicaId to, std::shared_ptr<const WireMessage> m);
    void multicast_equivocating(ReplicaId from, const msg::Proposal& p);
    void deliver(const Event& e);
    void fire_timer(const Event& e);
    void inject_double_commit();

    SimConfig cfg_;
    std::vector<std::unique_ptr<Replica>> replicas_;
    std::vector<std::uint64_t> timer_generation_;
    SimRng rng_;
    ElectionOracle oracle_;
    std::vector<Event> heap_;
    std::uint64_t seq_ = 0;
    Tick now_ = 0;
    const ReplayDelays* replay_ = nullptr;
    Trace trace_;
};

/// Convenience: construct, run, return the trace.
Trace simulate(const SimConfig& cfg, const ReplayDelays* replay = nullptr);

}  // namespace fbft
