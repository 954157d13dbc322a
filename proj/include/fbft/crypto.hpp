// SPDX-License-Identifier: Apache-2.0
//
// Authenticator abstraction. The default scheme is a deterministic keyed-hash
// mock of a threshold signature: shares and aggregates verify only against
// the dealer key the scheme was built with, and aggregates can only be
// produced by combining shares.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>

#include "fbft/types.hpp"

namespace fbft {

enum class CombineError {
    insufficient_shares,
    mixed_messages,
    invalid_share,
};

std::string_view to_string(CombineError e);

/// Result of combining shares: the distinct signer set and its aggregate.
struct ThresholdSig {
    Digest message;
    ShareKind kind = ShareKind::vote;
    SignerSet signers;
    std::uint64_t aggregate = 0;
};

using CombineResult = std::variant<ThresholdSig, CombineError>;

/// Name of the election PRF, recorded in run reports.
inline constexpr std::string_view kElectionPrf = "splitmix64-mulhi";

/// Uniform pseudo-random leader for `view` under `seed`, in [0, n).
ReplicaId elect_leader(View view, std::uint64_t seed, std::uint32_t n);

/// splitmix64 finalizer; exposed for the simulator's seeded streams.
std::uint64_t mix64(std::uint64_t x);

class ThresholdScheme {
public:
    ThresholdScheme(std::uint64_t run_seed, std::uint32_t n);

    std::uint32_t n() const { return n_; }
    std::uint64_t seed() const { return seed_; }

    Share make_share(const Digest& message, ReplicaId signer, ShareKind kind) const;
    bool verify_share(const Share& s) const;

    /// Succeeds iff the shares carry one message/kind and at least
    /// `threshold` distinct valid signers. Duplicate signers count once.
    CombineResult combine(std::span<const Share> shares, std::size_t threshold) const;

    bool verify(const Digest& message, ShareKind kind, const SignerSet& signers,
                std::uint64_t aggregate, std::size_t threshold) const;

    // Certificate checks (signature plus quorum size).
    bool verify(const QuorumCert& qc, std::size_t quorum) const;
    bool verify(const TimeoutCert& tc, std::size_t quorum) const;
    bool verify(const FallbackTC& ftc, std::size_t quorum) const;
    bool verify(const CoinQC& coin, std::size_t threshold) const;

    /// QC over the genesis block signed by every replica.
    QuorumCert genesis_qc() const;

private:
    std::uint64_t aggregate_of(const Digest& message, ShareKind kind,
                               const SignerSet& signers) const;

    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint32_t n_;
};

}  // namespace fbft
