// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <openssl/sha.h>

#include "fbft/types.hpp"

using namespace fbft;

TEST(Rank, LexicographicWithEndorsementBetweenViewAndRound) {
    EXPECT_LT((Rank{0, false, 9}), (Rank{1, false, 1}));
    EXPECT_LT((Rank{1, false, 9}), (Rank{1, true, 1}));
    EXPECT_LT((Rank{1, true, 1}), (Rank{1, true, 2}));
    EXPECT_EQ((Rank{2, true, 3}), (Rank{2, true, 3}));
}

TEST(SignerSet, CountsDistinctMembers) {
    SignerSet s(70);
    EXPECT_TRUE(s.insert(3));
    EXPECT_FALSE(s.insert(3));
    EXPECT_TRUE(s.insert(69));
    EXPECT_EQ(s.count(), 2u);
    EXPECT_TRUE(s.contains(69));
    EXPECT_FALSE(s.contains(4));
    EXPECT_EQ(s.members(), (std::vector<ReplicaId>{3, 69}));
    EXPECT_EQ(SignerSet::all(70).count(), 70u);
}

TEST(Digest, HexRoundTrip) {
    Digest d = DigestBuilder().add(std::string_view("abc")).finish();
    EXPECT_EQ(Digest::from_hex(d.hex()), d);
    EXPECT_EQ(d.hex().size(), 64u);
    EXPECT_FALSE(d.is_zero());
    EXPECT_TRUE(Digest{}.is_zero());
}

// Oracle: the builder hashes a big-endian u64 exactly like raw SHA-256.
TEST(DigestBuilder, MatchesRawSha256OfBigEndianField) {
    const std::uint64_t v = 0x0102030405060708ull;
    unsigned char buf[8] = {1, 2, 3, 4, 5, 6, 7, 8};
    unsigned char expect[32];
    SHA256(buf, sizeof buf, expect);
    Digest d = DigestBuilder().add(v).finish();
    EXPECT_TRUE(std::equal(d.bytes.begin(), d.bytes.end(), expect));
}

TEST(Block, IdDependsOnEveryField) {
    QuorumCert parent;
    parent.block = genesis_id();
    Block a = make_block(parent, 1, 0, TxnBatch{7, 0});
    EXPECT_TRUE(id_matches(a));
    EXPECT_NE(make_block(parent, 2, 0, TxnBatch{7, 0}).id, a.id);
    EXPECT_NE(make_block(parent, 1, 1, TxnBatch{7, 0}).id, a.id);
    EXPECT_NE(make_block(parent, 1, 0, TxnBatch{8, 0}).id, a.id);
    EXPECT_NE(make_block(parent, 1, 0, TxnBatch{7, 0}, FallbackTag{1, 0}).id, a.id);
    EXPECT_NE(make_block(parent, 1, 0, TxnBatch{7, 0}, FallbackTag{1, 0}).id,
              make_block(parent, 1, 0, TxnBatch{7, 0}, FallbackTag{1, 1}).id);
    Block tampered = a;
    tampered.round = 5;
    EXPECT_FALSE(id_matches(tampered));
}

TEST(Block, GenesisIsStable) {
    EXPECT_EQ(genesis_block().round, 0u);
    EXPECT_EQ(genesis_block().id, genesis_id());
    EXPECT_TRUE(id_matches(genesis_block()));
    EXPECT_EQ(genesis_id(), block_digest(QuorumCert{}, 0, 0, TxnBatch{}, std::nullopt));
}

TEST(Certificates, EndorsementFollowsCoin) {
    QuorumCert fqc;
    fqc.round = 4;
    fqc.view = 2;
    fqc.fallback = FallbackTag{1, 3};
    CoinHistory coins;
    EXPECT_FALSE(endorsed_by(fqc, coins));
    EXPECT_EQ(rank_of(fqc, coins), (Rank{2, false, 4}));
    coins[2] = CoinQC{2, {}, 3, 0};
    EXPECT_TRUE(endorsed_by(fqc, coins));
    EXPECT_EQ(rank_of(fqc, coins), (Rank{2, true, 4}));
    coins[2].elected = 1;
    EXPECT_FALSE(endorsed_by(fqc, coins));

    QuorumCert regular;
    regular.round = 9;
    regular.view = 2;
    coins[2].elected = 3;
    EXPECT_EQ(&max_cert(regular, fqc, coins), &fqc);
    EXPECT_EQ(&max_cert(regular, regular, coins), &regular);
}

TEST(Messages, KindsUnitsAndFallbackViews) {
    msg::Vote v;
    EXPECT_EQ(kind_of(WireMessage{v}), MessageKind::vote);
    EXPECT_FALSE(fallback_view_of(WireMessage{v}));
    msg::CoinShare c;
    c.view = 5;
    EXPECT_EQ(fallback_view_of(WireMessage{c}), std::optional<View>(5));
    EXPECT_TRUE(is_fallback_path(MessageKind::fb_vote));
    EXPECT_FALSE(is_fallback_path(MessageKind::proposal));
    for (std::size_t k = 0; k < kMessageKindCount; ++k) {
        auto kind = static_cast<MessageKind>(k);
        if (kind != MessageKind::sync_request) EXPECT_GE(authenticator_units(kind), 1u);
        EXPECT_EQ(message_kind_from_string(to_string(kind)), kind);
    }
    EXPECT_FALSE(message_kind_from_string("nope"));
}
