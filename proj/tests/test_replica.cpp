// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <deque>
#include <functional>

#include "fbft/replica.hpp"

using namespace fbft;

namespace {

ReplicaConfig config(Variant v = Variant::three_chain,
                     PacemakerKind pm = PacemakerKind::async_fallback) {
    ReplicaConfig c;
    c.n = 4;
    c.f = 1;
    c.variant = v;
    c.pacemaker = pm;
    c.run_seed = 99;
    return c;
}

template <class T>
std::vector<T> all_of(const Actions& a) {
    std::vector<T> out;
    for (const auto& x : a)
        if (auto* p = std::get_if<T>(&x)) out.push_back(*p);
    return out;
}

template <class M>
std::vector<M> multicasts(const Actions& a) {
    std::vector<M> out;
    for (const auto& m : all_of<action::Multicast>(a))
        if (auto* p = std::get_if<M>(&m.msg)) out.push_back(*p);
    return out;
}

bool dropped(const Actions& a, DropReason r) {
    for (const auto& d : all_of<action::Dropped>(a))
        if (d.reason == r) return true;
    return false;
}

// Zero-delay FIFO network over real replicas. Timers fire only on request.
struct Cluster {
    std::vector<Replica> r;
    std::deque<std::tuple<ReplicaId, ReplicaId, WireMessage>> queue;
    std::vector<std::optional<Round>> timer;
    std::function<bool(ReplicaId, ReplicaId, const WireMessage&)> drop_if;
    std::vector<std::vector<Digest>> commits;
    std::size_t delivered = 0;

    explicit Cluster(const ReplicaConfig& cfg) : timer(cfg.n), commits(cfg.n) {
        for (ReplicaId i = 0; i < cfg.n; ++i) r.emplace_back(cfg, i);
    }

    void apply(ReplicaId from, const Actions& acts) {
        for (const auto& a : acts) {
            if (auto* s = std::get_if<action::Send>(&a)) queue.emplace_back(from, s->to, s->msg);
            if (auto* m = std::get_if<action::Multicast>(&a))
                for (ReplicaId to = 0; to < r.size(); ++to) queue.emplace_back(from, to, m->msg);
            if (auto* t = std::get_if<action::SetTimer>(&a)) timer[from] = t->round;
            if (std::holds_alternative<action::CancelTimers>(a)) timer[from].reset();
            if (auto* c = std::get_if<action::CommitNotice>(&a))
                commits[from].insert(commits[from].end(), c->blocks.begin(), c->blocks.end());
        }
    }
    void start() {
        for (ReplicaId i = 0; i < r.size(); ++i) apply(i, r[i].start());
    }
    void fire_timers() {
        for (ReplicaId i = 0; i < r.size(); ++i)
            if (auto t = std::exchange(timer[i], std::nullopt)) apply(i, r[i].on_timer(*t));
    }
    void pump(std::size_t limit) {
        for (std::size_t k = 0; k < limit && !queue.empty(); ++k) {
            auto [from, to, m] = std::move(queue.front());
            queue.pop_front();
            if (drop_if && drop_if(from, to, m)) continue;
            ++delivered;
            apply(to, r[to].on_message(from, m));
        }
    }
};

void expect_prefix_consistent(const Cluster& c) {
    for (std::size_t i = 0; i < c.commits.size(); ++i)
        for (std::size_t j = i + 1; j < c.commits.size(); ++j) {
            const auto& a = c.commits[i];
            const auto& b = c.commits[j];
            const std::size_t k = std::min(a.size(), b.size());
            EXPECT_TRUE(std::equal(a.begin(), a.begin() + k, b.begin())) << i << " vs " << j;
        }
}

msg::Proposal leader_proposal(Replica& leader) {
    auto props = multicasts<msg::Proposal>(leader.start());
    EXPECT_EQ(props.size(), 1u);
    return props.at(0);
}

}  // namespace

TEST(ReplicaConfig, Validation) {
    auto c = config();
    EXPECT_NO_THROW(c.validate());
    c.n = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c.n = 1;
    c.f = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config();
    c.leader_rotation_period = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config();
    c.timeout_duration = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(config().quorum(), 3u);
    EXPECT_EQ(config().coin_threshold(), 2u);
    EXPECT_TRUE(config(Variant::two_chain).adopts());
}

TEST(LeaderOf, RotatesEveryPeriodRounds) {
    auto c = config();
    const ReplicaId expect[] = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 0};
    for (Round r = 1; r <= 17; ++r) EXPECT_EQ(leader_of(r, c), expect[r - 1]) << r;
    c.leader_rotation_period = 1;
    EXPECT_EQ(leader_of(6, c), 1u);
}

TEST(Replica, StartArmsTimerAndLeaderProposes) {
    Replica leader(config(), 0), other(config(), 1);
    auto a = leader.start();
    auto timers = all_of<action::SetTimer>(a);
    ASSERT_EQ(timers.size(), 1u);
    EXPECT_EQ(timers[0].round, 1u);
    EXPECT_EQ(timers[0].duration, 10u);
    auto props = multicasts<msg::Proposal>(a);
    ASSERT_EQ(props.size(), 1u);
    EXPECT_EQ(props[0].block.round, 1u);
    EXPECT_EQ(props[0].block.parent.block, genesis_id());
    auto b = other.start();
    EXPECT_EQ(all_of<action::SetTimer>(b).size(), 1u);
    EXPECT_TRUE(multicasts<msg::Proposal>(b).empty());
}

TEST(Replica, VotesOnceForValidProposalToNextLeader) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.start();
    auto a = voter.on_message(0, p);
    auto sends = all_of<action::Send>(a);
    ASSERT_EQ(sends.size(), 1u);
    EXPECT_EQ(sends[0].to, leader_of(2, voter.config()));
    auto* v = std::get_if<msg::Vote>(&sends[0].msg);
    ASSERT_NE(v, nullptr);
    EXPECT_EQ(v->block, p.block.id);
    EXPECT_EQ(voter.state().r_vote, 1u);
    EXPECT_TRUE(all_of<action::Send>(voter.on_message(0, p)).empty());
}

TEST(Replica, RejectsProposalFromNonLeader) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.start();
    auto a = voter.on_message(2, p);
    EXPECT_TRUE(dropped(a, DropReason::invalid_message));
    EXPECT_TRUE(all_of<action::Send>(a).empty());
}

TEST(Replica, DetectsEquivocation) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.start();
    voter.on_message(0, p);
    msg::Proposal twin = p;
    twin.block = make_block(p.block.parent, p.block.round, p.block.view, TxnBatch{12345, 1});
    auto a = voter.on_message(0, twin);
    EXPECT_TRUE(dropped(a, DropReason::equivocation));
    EXPECT_TRUE(all_of<action::Send>(a).empty());
}

TEST(Replica, RejectsTamperedBlockId) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.start();
    p.block.payload.id ^= 1;
    auto a = voter.on_message(0, p);
    EXPECT_TRUE(all_of<action::Send>(a).empty());
    EXPECT_FALSE(all_of<action::Dropped>(a).empty());
}

TEST(Replica, ValidityPredicateGatesVoting) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.set_validity_predicate([](const TxnBatch&) { return false; });
    voter.start();
    EXPECT_TRUE(all_of<action::Send>(voter.on_message(0, p)).empty());
}

TEST(Replica, NoVoteAfterTimeoutInFallbackPacemaker) {
    Replica leader(config(), 0), voter(config(), 1);
    auto p = leader_proposal(leader);
    voter.start();
    auto t = voter.on_timer(1);
    auto modes = all_of<action::ModeChange>(t);
    ASSERT_EQ(modes.size(), 1u);
    EXPECT_TRUE(modes[0].mode);
    EXPECT_EQ(multicasts<msg::Timeout>(t).size(), 1u);
    EXPECT_TRUE(voter.state().mode);
    EXPECT_TRUE(all_of<action::Send>(voter.on_message(0, p)).empty());
}

TEST(Replica, StaleTimerIsIgnored) {
    Replica r(config(), 1);
    r.start();
    EXPECT_TRUE(r.on_timer(7).empty());
    EXPECT_FALSE(r.state().mode);
}

TEST(Replica, VoteToWrongRecipientIsDropped) {
    Replica leader(config(), 0), voter(config(), 1), bystander(config(), 2);
    auto p = leader_proposal(leader);
    voter.start();
    auto vote = all_of<action::Send>(voter.on_message(0, p)).at(0).msg;
    bystander.start();
    EXPECT_TRUE(dropped(bystander.on_message(1, vote), DropReason::wrong_recipient));
}

TEST(Replica, QuorumCertificateNeedsTwoFPlusOneDistinctVotes) {
    std::vector<Replica> rs;
    for (ReplicaId i = 0; i < 4; ++i) rs.emplace_back(config(), i);
    auto p = leader_proposal(rs[0]);
    std::vector<WireMessage> votes;
    auto own = all_of<action::Send>(rs[0].on_message(0, p));
    ASSERT_EQ(own.size(), 1u);
    EXPECT_EQ(own[0].to, 0u);
    for (ReplicaId i = 1; i < 4; ++i) {
        rs[i].start();
        votes.push_back(all_of<action::Send>(rs[i].on_message(0, p)).at(0).msg);
    }
    EXPECT_TRUE(all_of<action::CertificateFormed>(rs[0].on_message(1, votes[0])).empty());
    EXPECT_TRUE(all_of<action::CertificateFormed>(rs[0].on_message(1, votes[0])).empty());
    // A vote relayed by someone other than its signer is rejected.
    EXPECT_TRUE(dropped(rs[0].on_message(3, votes[1]), DropReason::invalid_message));
    EXPECT_TRUE(all_of<action::CertificateFormed>(rs[0].on_message(0, own[0].msg)).empty());
    auto a = rs[0].on_message(2, votes[1]);
    auto certs = all_of<action::CertificateFormed>(a);
    ASSERT_EQ(certs.size(), 1u);
    const auto& qc = std::get<QuorumCert>(certs[0].cert);
    EXPECT_EQ(qc.block, p.block.id);
    EXPECT_EQ(qc.signers.count(), 3u);
    EXPECT_TRUE(rs[0].scheme().verify(qc, 3));
    EXPECT_EQ(rs[0].state().r_cur, 2u);
    EXPECT_EQ(multicasts<msg::Proposal>(a).size(), 1u);  // leader of round 2 proposes
}

TEST(Replica, SteadyStateCommitsConsistently) {
    for (auto v : {Variant::three_chain, Variant::two_chain}) {
        Cluster c(config(v));
        c.start();
        c.pump(5000);
        for (const auto& log : c.commits) EXPECT_GT(log.size(), 20u);
        expect_prefix_consistent(c);
        for (ReplicaId i = 0; i < 4; ++i) {
            const auto& st = c.r[i].state();
            EXPECT_FALSE(st.mode);
            EXPECT_EQ(st.v_cur, 0u);
            // Lock trails the highest QC by one round in the 3-chain rule, not in the 2-chain rule.
            const Round lag = v == Variant::three_chain ? 1 : 0;
            EXPECT_EQ(st.rank_lock.round + lag, st.qc_high.round) << i;
        }
    }
}

TEST(Replica, FirstCommitNeedsFullChain) {
    for (auto [v, qcs] : {std::pair{Variant::three_chain, 3u}, std::pair{Variant::two_chain, 2u}}) {
        Cluster c(config(v));
        c.start();
        // Stop as soon as anyone commits; count the QCs formed by then.
        std::size_t formed = 0;
        while (!c.queue.empty() && std::all_of(c.commits.begin(), c.commits.end(),
                                               [](const auto& l) { return l.empty(); })) {
            auto [from, to, m] = c.queue.front();
            c.queue.pop_front();
            auto acts = c.r[to].on_message(from, m);
            formed += all_of<action::CertificateFormed>(acts).size();
            c.apply(to, acts);
        }
        EXPECT_EQ(formed, qcs);
        for (const auto& log : c.commits)
            if (!log.empty()) {
                ASSERT_EQ(log.size(), 1u);
                EXPECT_EQ(c.r[0].find_block(log[0])->round, 1u);
            }
    }
}

TEST(Replica, BaselineTimeoutCertificateAdvancesRound) {
    Cluster c(config(Variant::three_chain, PacemakerKind::baseline_tc));
    c.drop_if = [](ReplicaId, ReplicaId, const WireMessage& m) {
        return std::holds_alternative<msg::Proposal>(m);
    };
    c.start();
    c.pump(100);
    c.fire_timers();
    c.pump(1000);
    for (const auto& r : c.r) {
        EXPECT_EQ(r.state().r_cur, 2u);
        EXPECT_FALSE(r.state().mode);
    }
}

TEST(Replica, FallbackEntersAndExitsWithCoin) {
    for (auto v : {Variant::three_chain, Variant::two_chain}) {
        for (bool adopt : {false, true}) {
            auto cfg = config(v);
            cfg.adopt_foreign_fchains = adopt;
            Cluster c(cfg);
            c.drop_if = [](ReplicaId, ReplicaId, const WireMessage& m) {
                return std::holds_alternative<msg::Proposal>(m);
            };
            c.start();
            c.pump(100);
            c.fire_timers();
            c.pump(100000);
            for (const auto& r : c.r) {
                const auto& st = r.state();
                EXPECT_FALSE(st.mode);
                EXPECT_GE(st.v_cur, 1u);
                ASSERT_TRUE(st.coin_history.count(0));
                EXPECT_EQ(st.coin_history.at(0).elected, c.r[0].state().coin_history.at(0).elected);
                EXPECT_TRUE(r.scheme().verify(st.coin_history.at(0), cfg.coin_threshold()));
            }
            // With no faults every chain completes, so the elected chain commits.
            for (const auto& log : c.commits) EXPECT_FALSE(log.empty());
            expect_prefix_consistent(c);
            const Block* b = c.r[1].find_block(c.commits[1].front());
            ASSERT_NE(b, nullptr);
            EXPECT_TRUE(b->is_fallback());
            EXPECT_EQ(b->fallback->proposer, c.r[1].state().coin_history.at(0).elected);
        }
    }
}

TEST(Replica, SteadyStateResumesAfterFallback) {
    Cluster c(config());
    bool block = true;
    c.drop_if = [&](ReplicaId, ReplicaId, const WireMessage& m) {
        return block && std::holds_alternative<msg::Proposal>(m);
    };
    c.start();
    c.pump(100);
    c.fire_timers();
    block = false;
    c.pump(20000);
    for (const auto& r : c.r) EXPECT_EQ(r.state().v_cur, 1u);
    for (const auto& log : c.commits) EXPECT_GT(log.size(), 10u);
    expect_prefix_consistent(c);
}

TEST(Replica, ForgedFallbackCertificateIsRejected) {
    Replica r(config(), 1);
    r.start();
    FallbackTC ftc{0, SignerSet::all(4), 12345};
    auto a = r.on_message(2, msg::FTCRelay{ftc});
    EXPECT_TRUE(dropped(a, DropReason::invalid_certificate));
    EXPECT_FALSE(r.state().mode);
}

TEST(Replica, PayloadIsDeterministic) {
    EXPECT_EQ(Replica::payload_for(1, 2, 3, 0), Replica::payload_for(1, 2, 3, 0));
    EXPECT_NE(Replica::payload_for(1, 2, 3, 0).id, Replica::payload_for(1, 2, 3, 0, 1).id);
}
