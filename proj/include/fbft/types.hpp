// SPDX-License-Identifier: Apache-2.0
//
// Protocol data shared by every component: identifiers, ranks, blocks,
// certificates and wire messages.

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fbft {

using ReplicaId = std::uint32_t;
using Round = std::uint64_t;
using View = std::uint64_t;
using Tick = std::uint64_t;

/// 256-bit digest (SHA-256). Used for block ids, signed-message ids and
/// trace digests.
struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    std::string hex() const;
    std::string short_hex() const { return hex().substr(0, 10); }
    bool is_zero() const;
    std::uint64_t prefix64() const;

    static Digest from_hex(std::string_view hex);

    friend auto operator<=>(const Digest&, const Digest&) = default;
};

struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept {
        return static_cast<std::size_t>(d.prefix64());
    }
};

/// Incremental SHA-256 over a canonical big-endian field encoding.
class DigestBuilder {
public:
    DigestBuilder();
    ~DigestBuilder();
    DigestBuilder(const DigestBuilder&) = delete;
    DigestBuilder& operator=(const DigestBuilder&) = delete;

    DigestBuilder& add(std::uint64_t v);
    DigestBuilder& add(std::uint32_t v);
    DigestBuilder& add(std::uint8_t v);
    DigestBuilder& add(const Digest& d);
    DigestBuilder& add(std::string_view s);
    Digest finish();

private:
    void* ctx_;
};

/// (view, endorsed, round), compared lexicographically; endorsed=true
/// outranks endorsed=false within a view.
struct Rank {
    View view = 0;
    bool endorsed = false;
    Round round = 0;

    friend auto operator<=>(const Rank&, const Rank&) = default;
};

std::string to_string(const Rank& r);

/// Set of distinct replica indices backing a certificate.
class SignerSet {
public:
    SignerSet() = default;
    explicit SignerSet(std::size_t n) : bits_((n + 63) / 64, 0), n_(n) {}

    static SignerSet all(std::size_t n);

    bool insert(ReplicaId id);  // false if already present
    bool contains(ReplicaId id) const;
    std::size_t count() const;
    std::size_t universe() const { return n_; }
    std::vector<ReplicaId> members() const;
    const std::vector<std::uint64_t>& words() const { return bits_; }

    friend bool operator==(const SignerSet&, const SignerSet&) = default;

private:
    std::vector<std::uint64_t> bits_;
    std::size_t n_ = 0;
};

struct TxnBatch {
    std::uint64_t id = 0;
    std::uint64_t size_bytes = 0;

    friend bool operator==(const TxnBatch&, const TxnBatch&) = default;
};

/// Extra fields carried by fallback blocks and their certificates.
struct FallbackTag {
    std::uint8_t height = 0;  // 1..3 (three_chain) or 1..2 (two_chain)
    ReplicaId proposer = 0;

    friend bool operator==(const FallbackTag&, const FallbackTag&) = default;
};

/// Quorum certificate over a regular block (fallback unset) or over a
/// fallback block (f-QC).
struct QuorumCert {
    Digest block;
    Round round = 0;
    View view = 0;
    std::optional<FallbackTag> fallback;
    SignerSet signers;
    std::uint64_t aggregate = 0;  // mock threshold signature

    bool is_fallback() const { return fallback.has_value(); }
    std::uint8_t height() const { return fallback ? fallback->height : 0; }
    ReplicaId proposer() const { return fallback ? fallback->proposer : 0; }

    friend bool operator==(const QuorumCert&, const QuorumCert&) = default;
};

struct TimeoutCert {
    Round round = 0;
    SignerSet signers;
    std::uint64_t aggregate = 0;

    friend bool operator==(const TimeoutCert&, const TimeoutCert&) = default;
};

struct FallbackTC {
    View view = 0;
    SignerSet signers;
    std::uint64_t aggregate = 0;

    friend bool operator==(const FallbackTC&, const FallbackTC&) = default;
};

struct CoinQC {
    View view = 0;
    SignerSet signers;
    ReplicaId elected = 0;
    std::uint64_t aggregate = 0;

    friend bool operator==(const CoinQC&, const CoinQC&) = default;
};

using Certificate = std::variant<QuorumCert, TimeoutCert, FallbackTC, CoinQC>;

/// Known coin-QCs, keyed by the view they close.
using CoinHistory = std::map<View, CoinQC>;

/// A regular block, or a fallback block when `fallback` is set.
struct Block {
    Digest id;
    QuorumCert parent;
    Round round = 0;
    View view = 0;
    TxnBatch payload;
    std::optional<FallbackTag> fallback;

    bool is_fallback() const { return fallback.has_value(); }
    std::uint8_t height() const { return fallback ? fallback->height : 0; }

    friend bool operator==(const Block&, const Block&) = default;
};

/// Digest of the certified content of a QC: (block, round, view[, height,
/// proposer]). Signers and aggregate are excluded so that any quorum over the
/// same block yields the same value.
Digest cert_digest(const QuorumCert& qc);

/// Block id over the canonical field order
/// (parent_certificate_digest, round, view, payload_id[, height, proposer]).
Digest block_digest(const QuorumCert& parent, Round round, View view,
                    const TxnBatch& payload,
                    const std::optional<FallbackTag>& fallback);

/// Builds a block and fills in its id.
Block make_block(QuorumCert parent, Round round, View view, TxnBatch payload,
                 std::optional<FallbackTag> fallback = std::nullopt);

bool id_matches(const Block& b);

/// Genesis block: round 0, view 0, zero parent, payload id 0.
const Block& genesis_block();
const Digest& genesis_id();

Rank rank_with(const QuorumCert& qc, bool endorsed);

/// Rank of a certificate: endorsed iff it is an f-QC whose proposer is the
/// leader elected by the coin-QC of its view.
Rank rank_of(const QuorumCert& qc, const CoinHistory& coins);
Rank rank_of(const Block& b, const CoinHistory& coins);

bool endorsed_by(const QuorumCert& qc, const CoinHistory& coins);

/// Higher-ranked of two QC/f-QCs; ties keep `a`.
const QuorumCert& max_cert(const QuorumCert& a, const QuorumCert& b,
                           const CoinHistory& coins);

// ---------------------------------------------------------------------------
// Signature shares and wire messages

enum class ShareKind : std::uint8_t {
    vote,
    fallback_vote,
    timeout_round,
    timeout_view,
    coin,
};

std::string_view to_string(ShareKind k);

struct Share {
    Digest message;
    ReplicaId signer = 0;
    ShareKind kind = ShareKind::vote;
    std::uint64_t tag = 0;

    friend bool operator==(const Share&, const Share&) = default;
};

// Digest of what each share kind signs.
Digest vote_message(const Digest& block, Round round, View view);
Digest fallback_vote_message(const Digest& block, Round round, View view,
                             const FallbackTag& tag);
Digest timeout_round_message(Round round);
Digest timeout_view_message(View view);
Digest coin_message(View view);

/// Signed message behind a QC or f-QC.
Digest qc_message(const QuorumCert& qc);

namespace msg {

struct Proposal {
    Block block;
    std::optional<CoinQC> coin_evidence;
    friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct Vote {
    Share share;
    Digest block;
    Round round = 0;
    View view = 0;
    friend bool operator==(const Vote&, const Vote&) = default;
};

/// Timeout share for a round (baseline pacemaker) or a view (fallback
/// pacemaker); `target` is that round or view.
struct Timeout {
    Share share;
    std::uint64_t target = 0;
    QuorumCert qc_high;
    friend bool operator==(const Timeout&, const Timeout&) = default;
};

struct TCRelay {
    TimeoutCert tc;
    friend bool operator==(const TCRelay&, const TCRelay&) = default;
};

struct FTCRelay {
    FallbackTC ftc;
    friend bool operator==(const FTCRelay&, const FTCRelay&) = default;
};

struct FBProposal {
    Block block;
    std::optional<FallbackTC> ftc;
    friend bool operator==(const FBProposal&, const FBProposal&) = default;
};

struct FBVote {
    Share share;
    Digest block;
    Round round = 0;
    View view = 0;
    FallbackTag tag;
    friend bool operator==(const FBVote&, const FBVote&) = default;
};

struct FQCRelay {
    QuorumCert fqc;
    std::optional<ReplicaId> counter_signer;
    friend bool operator==(const FQCRelay&, const FQCRelay&) = default;
};

struct CoinShare {
    Share share;
    View view = 0;
    friend bool operator==(const CoinShare&, const CoinShare&) = default;
};

struct CoinQCRelay {
    CoinQC coin;
    friend bool operator==(const CoinQCRelay&, const CoinQCRelay&) = default;
};

struct SyncRequest {
    Digest block;
    friend bool operator==(const SyncRequest&, const SyncRequest&) = default;
};

struct SyncResponse {
    Block block;
    friend bool operator==(const SyncResponse&, const SyncResponse&) = default;
};

}  // namespace msg

using WireMessage =
    std::variant<msg::Proposal, msg::Vote, msg::Timeout, msg::TCRelay,
                 msg::FTCRelay, msg::FBProposal, msg::FBVote, msg::FQCRelay,
                 msg::CoinShare, msg::CoinQCRelay, msg::SyncRequest,
                 msg::SyncResponse>;

enum class MessageKind : std::uint8_t {
    proposal,
    vote,
    timeout,
    tc_relay,
    ftc_relay,
    fb_proposal,
    fb_vote,
    fqc_relay,
    coin_share,
    coin_qc_relay,
    sync_request,
    sync_response,
};

inline constexpr std::size_t kMessageKindCount = 12;

MessageKind kind_of(const WireMessage& m);
std::string_view to_string(MessageKind k);
std::optional<MessageKind> message_kind_from_string(std::string_view s);

/// Authenticator units for a message kind: every certificate, share or
/// threshold signature slot costs one unit. Constant per kind; payload bytes
/// are not counted.
std::uint32_t authenticator_units(MessageKind k);

/// True for the message kinds that only the asynchronous fallback path
/// emits (timeouts included).
bool is_fallback_path(MessageKind k);

/// The view a fallback-path message belongs to, if any.
std::optional<View> fallback_view_of(const WireMessage& m);

/// One-line human summary used in traces and logs.
std::string summarize(const WireMessage& m);

}  // namespace fbft
