// SPDX-License-Identifier: Apache-2.0

#include "fbft/types.hpp"

#include <openssl/evp.h>

#include <bit>
#include <sstream>
#include <stdexcept>

namespace fbft {

namespace {

constexpr char kHex[] = "0123456789abcdef";

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

// --- Digest ----------------------------------------------------------------

std::string Digest::hex() const {
    std::string out;
    out.reserve(64);
    for (auto b : bytes) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xf]);
    }
    return out;
}

bool Digest::is_zero() const {
    for (auto b : bytes)
        if (b != 0) return false;
    return true;
}

std::uint64_t Digest::prefix64() const {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[i];
    return v;
}

Digest Digest::from_hex(std::string_view hex) {
    if (hex.size() != 64) throw std::invalid_argument("digest must be 64 hex chars");
    Digest d;
    for (std::size_t i = 0; i < 32; ++i) {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("bad hex digit in digest");
        d.bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return d;
}

DigestBuilder::DigestBuilder() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 init failed");
}

DigestBuilder::~DigestBuilder() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

DigestBuilder& DigestBuilder::add(std::uint64_t v) {
    std::uint8_t buf[8];
    for (int i = 7; i >= 0; --i) {
        buf[i] = static_cast<std::uint8_t>(v & 0xff);
        v >>= 8;
    }
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), buf, sizeof buf);
    return *this;
}

DigestBuilder& DigestBuilder::add(std::uint32_t v) {
    std::uint8_t buf[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                           static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), buf, sizeof buf);
    return *this;
}

DigestBuilder& DigestBuilder::add(std::uint8_t v) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), &v, 1);
    return *this;
}

DigestBuilder& DigestBuilder::add(const Digest& d) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), d.bytes.data(), d.bytes.size());
    return *this;
}

DigestBuilder& DigestBuilder::add(std::string_view s) {
    add(static_cast<std::uint64_t>(s.size()));
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), s.data(), s.size());
    return *this;
}

Digest DigestBuilder::finish() {
    Digest d;
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), d.bytes.data(), &len);
    return d;
}

// --- Rank / SignerSet ------------------------------------------------------

std::string to_string(const Rank& r) {
    std::ostringstream os;
    os << "(" << r.view << "," << (r.endorsed ? "E" : "-") << "," << r.round << ")";
    return os.str();
}

SignerSet SignerSet::all(std::size_t n) {
    SignerSet s(n);
    for (ReplicaId i = 0; i < n; ++i) s.insert(i);
    return s;
}

bool SignerSet::insert(ReplicaId id) {
    if (id >= n_) throw std::out_of_range("signer outside replica set");
    auto& w = bits_[id / 64];
    std::uint64_t mask = std::uint64_t{1} << (id % 64);
    if (w & mask) return false;
    w |= mask;
    return true;
}

bool SignerSet::contains(ReplicaId id) const {
    if (id >= n_) return false;
    return (bits_[id / 64] >> (id % 64)) & 1u;
}

std::size_t SignerSet::count() const {
    std::size_t c = 0;
    for (auto w : bits_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
}

std::vector<ReplicaId> SignerSet::members() const {
    std::vector<ReplicaId> out;
    for (ReplicaId i = 0; i < n_; ++i)
        if (contains(i)) out.push_back(i);
    return out;
}

// --- Blocks and certificates -----------------------------------------------

Digest cert_digest(const QuorumCert& qc) {
    DigestBuilder b;
    b.add(std::string_view{"qc"}).add(qc.block).add(qc.round).add(qc.view);
    if (qc.fallback) b.add(qc.fallback->height).add(qc.fallback->proposer);
    return b.finish();
}

Digest block_digest(const QuorumCert& parent, Round round, View view, const TxnBatch& payload,
                    const std::optional<FallbackTag>& fallback) {
    DigestBuilder b;
    b.add(cert_digest(parent)).add(round).add(view).add(payload.id);
    if (fallback) b.add(fallback->height).add(fallback->proposer);
    return b.finish();
}

Block make_block(QuorumCert parent, Round round, View view, TxnBatch payload,
                 std::optional<FallbackTag> fallback) {
    Block b;
    b.id = block_digest(parent, round, view, payload, fallback);
    b.parent = std::move(parent);
    b.round = round;
    b.view = view;
    b.payload = payload;
    b.fallback = fallback;
    return b;
}

bool id_matches(const Block& b) {
    return b.id == block_digest(b.parent, b.round, b.view, b.payload, b.fallback);
}

const Block& genesis_block() {
    static const Block g = make_block(QuorumCert{}, 0, 0, TxnBatch{});
    return g;
}

const Digest& genesis_id() { return genesis_block().id; }

Rank rank_with(const QuorumCert& qc, bool endorsed) {
    return Rank{qc.view, qc.is_fallback() && endorsed, qc.round};
}

bool endorsed_by(const QuorumCert& qc, const CoinHistory& coins) {
    if (!qc.fallback) return false;
    auto it = coins.find(qc.view);
    return it != coins.end() && it->second.elected == qc.fallback->proposer;
}

Rank rank_of(const QuorumCert& qc, const CoinHistory& coins) {
    return rank_with(qc, endorsed_by(qc, coins));
}

Rank rank_of(const Block& b, const CoinHistory& coins) {
    bool endorsed = false;
    if (b.fallback) {
        auto it = coins.find(b.view);
        endorsed = it != coins.end() && it->second.elected == b.fallback->proposer;
    }
    return Rank{b.view, endorsed, b.round};
}

const QuorumCert& max_cert(const QuorumCert& a, const QuorumCert& b, const CoinHistory& coins) {
    return rank_of(b, coins) > rank_of(a, coins) ? b : a;
}

// --- Shares / messages -----------------------------------------------------

std::string_view to_string(ShareKind k) {
    switch (k) {
        case ShareKind::vote: return "vote";
        case ShareKind::fallback_vote: return "fallback_vote";
        case ShareKind::timeout_round: return "timeout_round";
        case ShareKind::timeout_view: return "timeout_view";
        case ShareKind::coin: return "coin";
    }
    return "?";
}

Digest vote_message(const Digest& block, Round round, View view) {
    DigestBuilder b;
    b.add(std::string_view{"vote"}).add(block).add(round).add(view);
    return b.finish();
}

Digest fallback_vote_message(const Digest& block, Round round, View view, const FallbackTag& tag) {
    DigestBuilder b;
    b.add(std::string_view{"fvote"}).add(block).add(round).add(view).add(tag.height).add(tag.proposer);
    return b.finish();
}

Digest timeout_round_message(Round round) {
    DigestBuilder b;
    b.add(std::string_view{"timeout-round"}).add(round);
    return b.finish();
}

Digest timeout_view_message(View view) {
    DigestBuilder b;
    b.add(std::string_view{"timeout-view"}).add(view);
    return b.finish();
}

Digest coin_message(View view) {
    DigestBuilder b;
    b.add(std::string_view{"coin"}).add(view);
    return b.finish();
}

Digest qc_message(const QuorumCert& qc) {
    if (qc.fallback) return fallback_vote_message(qc.block, qc.round, qc.view, *qc.fallback);
    return vote_message(qc.block, qc.round, qc.view);
}

MessageKind kind_of(const WireMessage& m) { return static_cast<MessageKind>(m.index()); }

std::string_view to_string(MessageKind k) {
    switch (k) {
        case MessageKind::proposal: return "proposal";
        case MessageKind::vote: return "vote";
        case MessageKind::timeout: return "timeout";
        case MessageKind::tc_relay: return "tc_relay";
        case MessageKind::ftc_relay: return "ftc_relay";
        case MessageKind::fb_proposal: return "fb_proposal";
        case MessageKind::fb_vote: return "fb_vote";
        case MessageKind::fqc_relay: return "fqc_relay";
        case MessageKind::coin_share: return "coin_share";
        case MessageKind::coin_qc_relay: return "coin_qc_relay";
        case MessageKind::sync_request: return "sync_request";
        case MessageKind::sync_response: return "sync_response";
    }
    return "?";
}

std::optional<MessageKind> message_kind_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kMessageKindCount; ++i) {
        auto k = static_cast<MessageKind>(i);
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

std::uint32_t authenticator_units(MessageKind k) {
    switch (k) {
        case MessageKind::proposal: return 2;     // parent QC + coin evidence slot
        case MessageKind::vote: return 1;
        case MessageKind::timeout: return 2;      // share + qc_high
        case MessageKind::tc_relay: return 1;
        case MessageKind::ftc_relay: return 1;
        case MessageKind::fb_proposal: return 2;  // parent (f-)QC + f-TC slot
        case MessageKind::fb_vote: return 1;
        case MessageKind::fqc_relay: return 2;    // f-QC + counter-signature slot
        case MessageKind::coin_share: return 1;
        case MessageKind::coin_qc_relay: return 1;
        case MessageKind::sync_request: return 0;
        case MessageKind::sync_response: return 1;
    }
    return 0;
}

bool is_fallback_path(MessageKind k) {
    switch (k) {
        case MessageKind::timeout:
        case MessageKind::ftc_relay:
        case MessageKind::fb_proposal:
        case MessageKind::fb_vote:
        case MessageKind::fqc_relay:
        case MessageKind::coin_share:
        case MessageKind::coin_qc_relay: return true;
        default: return false;
    }
}

std::optional<View> fallback_view_of(const WireMessage& m) {
    return std::visit(
        overloaded{
            [](const msg::Timeout& t) -> std::optional<View> {
                if (t.share.kind == ShareKind::timeout_view) return t.target;
                return std::nullopt;
            },
            [](const msg::FTCRelay& r) -> std::optional<View> { return r.ftc.view; },
            [](const msg::FBProposal& p) -> std::optional<View> { return p.block.view; },
            [](const msg::FBVote& v) -> std::optional<View> { return v.view; },
            [](const msg::FQCRelay& r) -> std::optional<View> { return r.fqc.view; },
            [](const msg::CoinShare& c) -> std::optional<View> { return c.view; },
            [](const msg::CoinQCRelay& c) -> std::optional<View> { return c.coin.view; },
            [](const auto&) -> std::optional<View> { return std::nullopt; },
        },
        m);
}

std::string summarize(const WireMessage& m) {
    std::ostringstream os;
    os << to_string(kind_of(m));
    std::visit(overloaded{
                   [&](const msg::Proposal& p) {
                       os << " r=" << p.block.round << " v=" << p.block.view
                          << " id=" << p.block.id.short_hex() << " qc.r=" << p.block.parent.round;
                   },
                   [&](const msg::Vote& v) {
                       os << " r=" << v.round << " v=" << v.view << " id=" << v.block.short_hex();
                   },
                   [&](const msg::Timeout& t) {
                       os << " " << to_string(t.share.kind) << "=" << t.target
                          << " qc_high.r=" << t.qc_high.round;
                   },
                   [&](const msg::TCRelay& r) { os << " r=" << r.tc.round; },
                   [&](const msg::FTCRelay& r) { os << " v=" << r.ftc.view; },
                   [&](const msg::FBProposal& p) {
                       os << " h=" << int(p.block.height()) << " r=" << p.block.round
                          << " v=" << p.block.view << " id=" << p.block.id.short_hex();
                   },
                   [&](const msg::FBVote& v) {
                       os << " h=" << int(v.tag.height) << " p=" << v.tag.proposer << " r=" << v.round;
                   },
                   [&](const msg::FQCRelay& r) {
                       os << " h=" << int(r.fqc.height()) << " p=" << r.fqc.proposer()
                          << " v=" << r.fqc.view;
                   },
                   [&](const msg::CoinShare& c) { os << " v=" << c.view; },
                   [&](const msg::CoinQCRelay& c) {
                       os << " v=" << c.coin.view << " L=" << c.coin.elected;
                   },
                   [&](const msg::SyncRequest& s) { os << " id=" << s.block.short_hex(); },
                   [&](const msg::SyncResponse& s) { os << " id=" << s.block.id.short_hex(); },
               },
               m);
    return os.str();
}

}  // namespace fbft
