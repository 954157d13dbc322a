// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fbft/analysis.hpp"
#include "fbft/simnet.hpp"
#include "fbft/trace_io.hpp"

using namespace fbft;

namespace {

SimConfig sync_config(std::uint64_t seed = 1) {
    SimConfig c;
    c.protocol.run_seed = seed;
    c.seed = seed;
    c.horizon = 200;
    return c;
}

SimConfig async_config(std::uint64_t seed = 1) {
    SimConfig c = sync_config(seed);
    c.adversary.model = NetworkModel::asynchronous;
    c.adversary.default_delay = {1, 3};
    c.adversary.per_kind[MessageKind::proposal] = {20, 30};
    c.horizon = 400;
    return c;
}

std::vector<const TraceRecord*> deliveries(const Trace& t) {
    std::vector<const TraceRecord*> out;
    for (const auto& r : t.records)
        if (r.type == RecordType::deliver) out.push_back(&r);
    return out;
}

}  // namespace

TEST(SimRng, UniformStaysInRange) {
    SimRng rng(5);
    std::vector<int> seen(6, 0);
    for (int i = 0; i < 6000; ++i) {
        auto x = rng.uniform(3, 8);
        ASSERT_GE(x, 3u);
        ASSERT_LE(x, 8u);
        ++seen[x - 3];
    }
    for (int s : seen) EXPECT_GT(s, 800);
    EXPECT_EQ(rng.uniform(4, 4), 4u);
}

TEST(AdversaryModel, Validation) {
    AdversaryModel m;
    EXPECT_NO_THROW(m.validate());
    m.default_delay = {0, 3};
    EXPECT_THROW(m.validate(), ConfigError);
    m.default_delay = {4, 3};
    EXPECT_THROW(m.validate(), ConfigError);
    m = AdversaryModel{};
    m.delta = 0;
    EXPECT_THROW(m.validate(), ConfigError);
}

TEST(SimConfig, FaultBudget) {
    SimConfig c = sync_config();
    c.faults.assign(4, FaultSpec{});
    c.faults[0] = FaultSpec{FaultKind::crash, 0};
    EXPECT_NO_THROW(c.validate());
    c.faults[1] = FaultSpec{FaultKind::mute_leader, 0};
    EXPECT_THROW(c.validate(), ConfigError);
    c.faults.resize(3);
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FaultSpec, ParsesAndPrints) {
    for (std::string s : {"honest", "crash@17", "mute", "equivocate"}) {
        auto f = fault_from_string(s);
        ASSERT_TRUE(f) << s;
        EXPECT_EQ(to_string(*f), s);
    }
    EXPECT_EQ(fault_from_string("crash@17")->at, 17u);
    EXPECT_FALSE(fault_from_string("crash@"));
    EXPECT_FALSE(fault_from_string("byzantine"));
}

TEST(Simulator, DeterministicForSeed) {
    auto a = simulate(async_config(7));
    auto b = simulate(async_config(7));
    auto c = simulate(async_config(8));
    EXPECT_EQ(trace_digest(a), trace_digest(b));
    EXPECT_EQ(a.records, b.records);
    EXPECT_NE(trace_digest(a), trace_digest(c));
}

TEST(Simulator, SynchronousDelaysWithinDelta) {
    SimConfig c = sync_config();
    c.adversary.delta = 3;
    auto t = simulate(c);
    for (const auto* r : deliveries(t)) {
        if (r->from == r->replica) {
            EXPECT_EQ(r->at, r->sent_at);
        } else {
            EXPECT_GE(r->at - r->sent_at, 1u);
            EXPECT_LE(r->at - r->sent_at, 3u);
        }
        EXPECT_LE(r->at, c.horizon);
    }
}

TEST(Simulator, PartialSynchronyBoundedAfterGst) {
    SimConfig c = sync_config();
    c.adversary.model = NetworkModel::partial_synchrony;
    c.adversary.delta = 2;
    c.adversary.gst = 60;
    c.adversary.pre_gst_delay_bound = 40;
    c.horizon = 300;
    auto t = simulate(c);
    for (const auto* r : deliveries(t)) {
        if (r->from == r->replica) continue;
        EXPECT_LE(r->at - r->sent_at, 40u);
        EXPECT_LE(r->at, std::max(r->sent_at, c.adversary.gst) + c.adversary.delta);
    }
    EXPECT_TRUE(check_safety(t).ok());
    EXPECT_GT(measure(t).commits_total, 0u);
}

TEST(Simulator, PerKindDelayRules) {
    auto t = simulate(async_config());
    std::size_t proposals = 0;
    for (const auto* r : deliveries(t)) {
        if (r->from == r->replica) continue;
        const Tick d = r->at - r->sent_at;
        if (r->kind == MessageKind::proposal) {
            ++proposals;
            EXPECT_GE(d, 20u);
            EXPECT_LE(d, 30u);
        } else {
            EXPECT_LE(d, 3u);
        }
    }
    EXPECT_GT(proposals, 0u);
}

TEST(Simulator, CrashedReplicaGoesSilent) {
    SimConfig c = async_config();
    c.faults.assign(4, FaultSpec{});
    c.faults[2] = FaultSpec{FaultKind::crash, 50};
    auto t = simulate(c);
    for (const auto& r : t.records) {
        if (r.at < 50) continue;
        // Messages still reach the crashed replica; it never sends again.
        if (r.type == RecordType::deliver && r.from == 2) EXPECT_LT(r.sent_at, 50u);
        if (r.type == RecordType::commit || r.type == RecordType::timer) EXPECT_NE(r.replica, 2u);
    }
    EXPECT_TRUE(check_safety(t).ok());
}

TEST(Simulator, MuteReplicaNeverProposes) {
    SimConfig c = async_config();
    c.faults.assign(4, FaultSpec{});
    c.faults[0] = FaultSpec{FaultKind::mute_leader, 0};
    auto t = simulate(c);
    std::size_t votes_from_mute = 0;
    for (const auto* r : deliveries(t)) {
        if (r->from != 0) continue;
        EXPECT_NE(r->kind, MessageKind::proposal);
        EXPECT_NE(r->kind, MessageKind::fb_proposal);
        votes_from_mute += r->kind == MessageKind::fb_vote;
    }
    EXPECT_GT(votes_from_mute, 0u);
    EXPECT_TRUE(check_safety(t).ok());
}

TEST(Simulator, EquivocatorSplitsHonestReplicas) {
    SimConfig c = sync_config();
    c.faults.assign(4, FaultSpec{});
    c.faults[0] = FaultSpec{FaultKind::equivocate, 0};
    auto t = simulate(c);
    std::map<std::pair<Round, View>, std::set<Digest>> versions;
    for (const auto* r : deliveries(t))
        if (r->kind == MessageKind::proposal && r->from == 0 && r->block)
            versions[{r->block->round, r->block->view}].insert(r->block->id);
    ASSERT_FALSE(versions.empty());
    for (const auto& [key, ids] : versions) EXPECT_EQ(ids.size(), 2u);
    EXPECT_TRUE(check_safety(t).ok());
}

TEST(Simulator, FallbackRecoversFromDelayedProposals) {
    auto t = simulate(async_config(3));
    auto m = measure(t);
    EXPECT_GT(m.fallback_instances, 0u);
    EXPECT_GT(m.commits_total, 0u);
    EXPECT_TRUE(check_safety(t).ok());
    bool mode_on = false;
    for (const auto& r : t.records) mode_on |= r.type == RecordType::mode && r.mode;
    EXPECT_TRUE(mode_on);
}

TEST(ElectionOracle, RevealsAfterFPlusOneShares) {
    ElectionOracle o(11, 4, 1);
    ThresholdScheme s(11, 4);
    auto share = [&](ReplicaId r) {
        return WireMessage{msg::CoinShare{s.make_share(coin_message(2), r, ShareKind::coin), 2}};
    };
    o.observe(1, share(1));
    o.observe(1, share(1));
    EXPECT_FALSE(o.revealed(2));
    o.observe(3, share(3));
    ASSERT_TRUE(o.revealed(2));
    EXPECT_EQ(*o.revealed(2), elect_leader(2, 11, 4));
    EXPECT_FALSE(o.revealed(3));
}
