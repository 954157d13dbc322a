// SPDX-License-Identifier: Apache-2.0
//
// Per-replica protocol state machine: chained steady state, the baseline
// timeout-certificate pacemaker, and the asynchronous fallback view-change
// with its 3-chain and 2-chain variants. A replica is a single-threaded
// event handler: each input returns the actions it produced.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fbft/crypto.hpp"
#include "fbft/types.hpp"

namespace fbft {

enum class Variant { three_chain, two_chain };
enum class PacemakerKind { baseline_tc, async_fallback };

std::string_view to_string(Variant v);
std::string_view to_string(PacemakerKind p);
std::optional<Variant> variant_from_string(std::string_view s);
std::optional<PacemakerKind> pacemaker_from_string(std::string_view s);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ReplicaConfig {
    std::uint32_t n = 4;
    std::uint32_t f = 1;
    Variant variant = Variant::three_chain;
    PacemakerKind pacemaker = PacemakerKind::async_fallback;
    Tick timeout_duration = 10;
    Round leader_rotation_period = 4;
    bool adopt_foreign_fchains = false;  // forced on by two_chain
    std::uint64_t run_seed = 0;
    std::size_t buffer_cap_per_peer = 1024;

    /// Throws ConfigError unless n = 3f+1, f >= 1 and the period is >= 1.
    void validate() const;

    std::size_t quorum() const { return 2 * f + 1; }
    std::size_t coin_threshold() const { return f + 1; }
    bool adopts() const { return adopt_foreign_fchains || variant == Variant::two_chain; }
    std::uint8_t chain_length() const { return variant == Variant::two_chain ? 2 : 3; }
};

/// Round-robin leader: replica floor((round-1)/period) mod n.
ReplicaId leader_of(Round round, const ReplicaConfig& cfg);

enum class DropReason {
    invalid_certificate,
    invalid_message,
    stale_round,
    stale_view,
    stale_timer,
    equivocation,
    wrong_recipient,
    wrong_height,
    not_in_fallback,
    lock_violation,
    buffer_overflow,
};

std::string_view to_string(DropReason r);

namespace action {

struct Send {
    ReplicaId to = 0;
    WireMessage msg;
};
struct Multicast {
    WireMessage msg;
};
struct SetTimer {
    Round round = 0;
    Tick duration = 0;
};
struct CancelTimers {};
/// Newly committed blocks in chain order; `head` is the block the commit
/// rule fired on (the last entry of `blocks`).
struct CommitNotice {
    std::vector<Digest> blocks;
    Digest head;
};
struct CertificateFormed {
    Certificate cert;
};
struct ModeChange {
    bool mode = false;
    View view = 0;
};
struct Dropped {
    DropReason reason;
    MessageKind kind;
};

}  // namespace action

using OutputAction =
    std::variant<action::Send, action::Multicast, action::SetTimer, action::CancelTimers,
                 action::CommitNotice, action::CertificateFormed, action::ModeChange,
                 action::Dropped>;
using Actions = std::vector<OutputAction>;

struct ReplicaState {
    Round r_vote = 0;
    Rank rank_lock{};
    Round r_cur = 1;
    View v_cur = 0;
    QuorumCert qc_high;
    bool mode = false;
    std::vector<Round> fvoted_round;
    std::vector<std::uint8_t> fvoted_height;
    std::vector<Digest> committed_log;
    CoinHistory coin_history;
};

class Replica {
public:
    Replica(ReplicaConfig cfg, ReplicaId self);

    /// Enter round 1; the round-1 leader also proposes.
    Actions start();
    Actions on_message(ReplicaId from, const WireMessage& m);
    Actions on_timer(Round round);

    ReplicaId id() const { return self_; }
    const ReplicaConfig& config() const { return cfg_; }
    const ReplicaState& state() const { return st_; }
    const ThresholdScheme& scheme() const { return scheme_; }

    const Block* find_block(const Digest& id) const;
    bool is_endorsed(const QuorumCert& qc) const;
    Rank rank(const QuorumCert& qc) const;
    std::size_t buffered() const { return buffer_.size(); }

    /// External-validity hook consulted before proposing or voting.
    void set_validity_predicate(std::function<bool(const TxnBatch&)> pred) {
        validity_ = std::move(pred);
    }

    /// Deterministic payload the replica attaches to its proposals.
    static TxnBatch payload_for(ReplicaId proposer, Round round, View view, std::uint8_t height,
                                std::uint64_t salt = 0);

private:
    enum class Disposition { done, defer };

    struct ShareAcc {
        std::vector<Share> shares;
        SignerSet signers;
        bool formed = false;
    };

    Disposition dispatch(ReplicaId from, const WireMessage& m);
    Disposition on_proposal(ReplicaId from, const msg::Proposal& p);
    void on_vote(ReplicaId from, const msg::Vote& v);
    void on_timeout(ReplicaId from, const msg::Timeout& t);
    void on_tc(const TimeoutCert& tc);
    void on_ftc(const FallbackTC& ftc);
    Disposition on_fblock(ReplicaId from, const msg::FBProposal& p);
    void on_fvote(ReplicaId from, const msg::FBVote& v);
    void on_fqc_relay(ReplicaId from, const msg::FQCRelay& r);
    void on_coin_share(ReplicaId from, const msg::CoinShare& c);
    void on_coin_qc(const CoinQC& coin);
    void on_sync_request(ReplicaId from, const msg::SyncRequest& r);
    void on_sync_response(const msg::SyncResponse& r);

    // Lock, Advance Round and Commit for a QC or endorsed f-QC.
    void observe_qc(const QuorumCert& qc);
    void apply_lock(const QuorumCert& qc);
    void advance_round(Round target, const TimeoutCert* tc);
    void enter_round(const TimeoutCert* tc);
    void propose();
    bool try_commit(const QuorumCert& qc);  // false while blocks are missing
    void commit_from(const Digest& head);

    void enter_fallback(const FallbackTC& ftc);
    void propose_fblock(const QuorumCert& parent, std::uint8_t height,
                        std::optional<FallbackTC> ftc);
    void on_certified_fblock(const QuorumCert& fqc);
    void check_election();
    void check_coin(View v);
    void try_form_ftc(View v);
    void exit_fallback(const CoinQC& coin);
    void record_fqc(const QuorumCert& fqc);
    void refresh_endorsed(View v);
    std::set<Digest> endorsed_closure(View v, ReplicaId leader) const;

    bool store_block(const Block& b);
    bool verify_block(const Block& b) const;
    void request_block(const Digest& id, const SignerSet& holders);
    bool add_share(ShareAcc& acc, const Share& s) const;
    void resolve_pending();
    bool usable(const QuorumCert& qc) const;
    bool known(const Digest& id) const { return blocks_.count(id) != 0; }
    bool valid_payload(const TxnBatch& t) const { return !validity_ || validity_(t); }

    void buffer(ReplicaId from, const WireMessage& m);
    void retry_buffered();
    void drop(DropReason r, MessageKind k);

    void send(ReplicaId to, WireMessage m);
    void multicast(WireMessage m);
    void emit(OutputAction a) { out_.push_back(std::move(a)); }
    Actions take();

    ReplicaConfig cfg_;
    ReplicaId self_;
    ThresholdScheme scheme_;
    ReplicaState st_;
    std::function<bool(const TxnBatch&)> validity_;

    std::unordered_map<Digest, Block, DigestHash> blocks_;
    std::unordered_set<Digest, DigestHash> committed_;
    std::map<View, std::vector<Digest>> fblocks_by_view_;
    std::unordered_map<Digest, QuorumCert, DigestHash> fqcs_;
    std::map<View, std::vector<Digest>> fqcs_by_view_;
    std::map<View, Rank> endorsed_observed_;
    mutable std::map<View, std::pair<std::uint64_t, std::set<Digest>>> closure_cache_;

    std::map<Digest, ShareAcc> vote_acc_;
    std::map<Digest, ShareAcc> fvote_acc_;
    std::map<Round, ShareAcc> round_timeouts_;
    std::map<View, ShareAcc> view_timeouts_;
    std::map<View, ShareAcc> coin_acc_;
    std::map<View, std::set<ReplicaId>> completed_;
    std::map<View, CoinQC> future_coins_;

    std::map<std::pair<Round, View>, Digest> seen_proposals_;
    std::set<std::pair<Round, View>> proposed_;
    std::map<View, std::uint8_t> proposed_height_;
    std::set<View> relayed_;
    std::set<View> coin_sent_;
    std::optional<View> entered_view_;
    Round stop_voting_round_ = 0;
    std::optional<Round> timer_round_;
    std::optional<View> timeout_sent_;

    std::vector<QuorumCert> pending_locks_;
    std::vector<QuorumCert> pending_commit_qcs_;
    std::vector<Digest> pending_commits_;
    std::set<Digest> requested_;

    std::deque<std::pair<ReplicaId, WireMessage>> buffer_;
    std::vector<std::size_t> buffered_per_peer_;
    std::uint64_t epoch_ = 0;
    std::uint64_t retried_epoch_ = 0;
    bool retrying_ = false;

    Actions out_;
};

}  // namespace fbft
