// SPDX-License-Identifier: Apache-2.0

#include "fbft/crypto.hpp"

#include <stdexcept>

namespace fbft {

std::string_view to_string(CombineError e) {
    switch (e) {
        case CombineError::insufficient_shares: return "InsufficientShares";
        case CombineError::mixed_messages: return "MixedMessages";
        case CombineError::invalid_share: return "InvalidShare";
    }
    return "?";
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

ReplicaId elect_leader(View view, std::uint64_t seed, std::uint32_t n) {
    if (n == 0) throw std::invalid_argument("elect_leader: n must be >= 1");
    std::uint64_t r = mix64(mix64(seed ^ 0x636f696e5f707266ull) ^ view);
    return static_cast<ReplicaId>((static_cast<unsigned __int128>(r) * n) >> 64);
}

ThresholdScheme::ThresholdScheme(std::uint64_t run_seed, std::uint32_t n)
    : seed_(run_seed), key_(mix64(run_seed ^ 0x6465616c6572ull)), n_(n) {
    if (n == 0) throw std::invalid_argument("threshold scheme needs n >= 1");
}

Share ThresholdScheme::make_share(const Digest& message, ReplicaId signer, ShareKind kind) const {
    if (signer >= n_) throw std::out_of_range("share signer outside replica set");
    std::uint64_t t = mix64(key_ ^ message.prefix64());
    t = mix64(t ^ (static_cast<std::uint64_t>(signer) << 8) ^ static_cast<std::uint64_t>(kind));
    return Share{message, signer, kind, t};
}

bool ThresholdScheme::verify_share(const Share& s) const {
    if (s.signer >= n_) return false;
    return make_share(s.message, s.signer, s.kind).tag == s.tag;
}

std::uint64_t ThresholdScheme::aggregate_of(const Digest& message, ShareKind kind,
                                            const SignerSet& signers) const {
    std::uint64_t a = mix64(key_ ^ 0x616767ull ^ message.prefix64());
    a = mix64(a ^ static_cast<std::uint64_t>(kind));
    for (auto w : signers.words()) a = mix64(a ^ w);
    return a;
}

CombineResult ThresholdScheme::combine(std::span<const Share> shares, std::size_t threshold) const {
    if (shares.empty()) {
        if (threshold == 0) return CombineError::mixed_messages;
        return CombineError::insufficient_shares;
    }
    const auto& first = shares.front();
    SignerSet signers(n_);
    for (const auto& s : shares) {
        if (s.message != first.message || s.kind != first.kind) return CombineError::mixed_messages;
        if (!verify_share(s)) return CombineError::invalid_share;
        signers.insert(s.signer);
    }
    if (signers.count() < threshold) return CombineError::insufficient_shares;
    ThresholdSig sig{first.message, first.kind, signers, 0};
    sig.aggregate = aggregate_of(sig.message, sig.kind, sig.signers);
    return sig;
}

bool ThresholdScheme::verify(const Digest& message, ShareKind kind, const SignerSet& signers,
                             std::uint64_t aggregate, std::size_t threshold) const {
    if (signers.universe() != n_) return false;
    if (signers.count() < threshold) return false;
    return aggregate_of(message, kind, signers) == aggregate;
}

bool ThresholdScheme::verify(const QuorumCert& qc, std::size_t quorum) const {
    auto kind = qc.is_fallback() ? ShareKind::fallback_vote : ShareKind::vote;
    return verify(qc_message(qc), kind, qc.signers, qc.aggregate, quorum);
}

bool ThresholdScheme::verify(const TimeoutCert& tc, std::size_t quorum) const {
    return verify(timeout_round_message(tc.round), ShareKind::timeout_round, tc.signers,
                  tc.aggregate, quorum);
}

bool ThresholdScheme::verify(const FallbackTC& ftc, std::size_t quorum) const {
    return verify(timeout_view_message(ftc.view), ShareKind::timeout_view, ftc.signers,
                  ftc.aggregate, quorum);
}

bool ThresholdScheme::verify(const CoinQC& coin, std::size_t threshold) const {
    if (coin.elected != elect_leader(coin.view, seed_, n_)) return false;
    return verify(coin_message(coin.view), ShareKind::coin, coin.signers, coin.aggregate,
                  threshold);
}

QuorumCert ThresholdScheme::genesis_qc() const {
    const Block& g = genesis_block();
    QuorumCert qc;
    qc.block = g.id;
    qc.round = 0;
    qc.view = 0;
    qc.signers = SignerSet::all(n_);
    qc.aggregate = aggregate_of(qc_message(qc), ShareKind::vote, qc.signers);
    return qc;
}

}  // namespace fbft
