// SPDX-License-Identifier: Apache-2.0

#include "fbft/replica.hpp"

#include <algorithm>
#include <utility>

namespace fbft {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string_view to_string(Variant v) {
    return v == Variant::two_chain ? "two_chain" : "three_chain";
}

std::string_view to_string(PacemakerKind p) {
    return p == PacemakerKind::baseline_tc ? "baseline_tc" : "async_fallback";
}

std::optional<Variant> variant_from_string(std::string_view s) {
    if (s == "three_chain") return Variant::three_chain;
    if (s == "two_chain") return Variant::two_chain;
    return std::nullopt;
}

std::optional<PacemakerKind> pacemaker_from_string(std::string_view s) {
    if (s == "baseline_tc") return PacemakerKind::baseline_tc;
    if (s == "async_fallback") return PacemakerKind::async_fallback;
    return std::nullopt;
}

std::string_view to_string(DropReason r) {
    switch (r) {
        case DropReason::invalid_certificate: return "InvalidCertificate";
        case DropReason::invalid_message: return "InvalidMessage";
        case DropReason::stale_round: return "StaleRound";
        case DropReason::stale_view: return "StaleView";
        case DropReason::stale_timer: return "StaleTimer";
        case DropReason::equivocation: return "Equivocation";
        case DropReason::wrong_recipient: return "WrongRecipient";
        case DropReason::wrong_height: return "WrongHeight";
        case DropReason::not_in_fallback: return "NotInFallback";
        case DropReason::lock_violation: return "LockViolation";
        case DropReason::buffer_overflow: return "BufferOverflow";
    }
    return "?";
}

void ReplicaConfig::validate() const {
    if (f < 1) throw ConfigError("f must be >= 1");
    if (n != 3 * f + 1) throw ConfigError("n must equal 3f+1");
    if (n > 1024) throw ConfigError("n must be <= 1024");
    if (leader_rotation_period < 1) throw ConfigError("leader_rotation_period must be >= 1");
    if (timeout_duration < 1) throw ConfigError("timeout_duration must be >= 1");
}

ReplicaId leader_of(Round round, const ReplicaConfig& cfg) {
    if (round == 0) return 0;
    return static_cast<ReplicaId>(((round - 1) / cfg.leader_rotation_period) % cfg.n);
}

TxnBatch Replica::payload_for(ReplicaId proposer, Round round, View view, std::uint8_t height,
                              std::uint64_t salt) {
    std::uint64_t id = mix64(mix64(round) ^ view);
    id = mix64(id ^ (static_cast<std::uint64_t>(proposer) << 8) ^ height);
    id = mix64(id ^ mix64(salt));
    return TxnBatch{id, 0};
}

Replica::Replica(ReplicaConfig cfg, ReplicaId self)
    : cfg_(cfg), self_(self), scheme_(cfg.run_seed, cfg.n) {
    cfg_.validate();
    if (self_ >= cfg_.n) throw ConfigError("replica id outside [0, n)");
    st_.qc_high = scheme_.genesis_qc();
    st_.fvoted_round.assign(cfg_.n, 0);
    st_.fvoted_height.assign(cfg_.n, 0);
    buffered_per_peer_.assign(cfg_.n, 0);
    blocks_.emplace(genesis_id(), genesis_block());
    committed_.insert(genesis_id());
}

// --- Queries ---------------------------------------------------------------

const Block* Replica::find_block(const Digest& id) const {
    auto it = blocks_.find(id);
    return it == blocks_.end() ? nullptr : &it->second;
}

std::set<Digest> Replica::endorsed_closure(View v, ReplicaId leader) const {
    auto cached = closure_cache_.find(v);
    if (cached != closure_cache_.end() && cached->second.first == epoch_) return cached->second.second;

    const std::uint8_t top = cfg_.chain_length();
    std::set<Digest> tops;
    if (auto it = fblocks_by_view_.find(v); it != fblocks_by_view_.end()) {
        for (const auto& id : it->second) {
            const Block& b = blocks_.at(id);
            if (b.fallback->proposer == leader && b.height() == top) tops.insert(id);
        }
    }
    if (auto it = fqcs_by_view_.find(v); it != fqcs_by_view_.end()) {
        for (const auto& id : it->second) {
            const QuorumCert& q = fqcs_.at(id);
            if (q.proposer() == leader && q.height() == top) tops.insert(id);
        }
    }

    std::set<Digest> out;
    for (const auto& t : tops) {
        if (fqcs_.count(t)) out.insert(t);
        const Block* b = find_block(t);
        while (b && b->parent.is_fallback() && b->parent.view == v) {
            out.insert(b->parent.block);
            b = find_block(b->parent.block);
        }
    }
    closure_cache_[v] = {epoch_, out};
    return out;
}

bool Replica::is_endorsed(const QuorumCert& qc) const {
    if (!qc.is_fallback()) return false;
    auto it = st_.coin_history.find(qc.view);
    if (it == st_.coin_history.end()) return false;
    const ReplicaId leader = it->second.elected;
    if (!cfg_.adopts()) return qc.proposer() == leader;
    if (qc.proposer() == leader && qc.height() == cfg_.chain_length()) return true;
    return endorsed_closure(qc.view, leader).count(qc.block) != 0;
}

Rank Replica::rank(const QuorumCert& qc) const { return rank_with(qc, is_endorsed(qc)); }

bool Replica::usable(const QuorumCert& qc) const { return !qc.is_fallback() || is_endorsed(qc); }

// --- Entry points ----------------------------------------------------------

Actions Replica::take() { return std::exchange(out_, {}); }

Actions Replica::start() {
    enter_round(nullptr);
    return take();
}

Actions Replica::on_message(ReplicaId from, const WireMessage& m) {
    if (from >= cfg_.n) {
        drop(DropReason::invalid_message, kind_of(m));
        return take();
    }
    if (dispatch(from, m) == Disposition::defer) buffer(from, m);
    retry_buffered();
    return take();
}

Actions Replica::on_timer(Round round) {
    if (!timer_round_ || *timer_round_ != round || round != st_.r_cur) return take();
    timer_round_.reset();
    if (cfg_.pacemaker == PacemakerKind::baseline_tc) {
        stop_voting_round_ = std::max(stop_voting_round_, round);
        Share s = scheme_.make_share(timeout_round_message(round), self_, ShareKind::timeout_round);
        multicast(msg::Timeout{s, round, st_.qc_high});
    } else {
        if (!st_.mode) {
            st_.mode = true;
            ++epoch_;
            emit(action::ModeChange{true, st_.v_cur});
        }
        if (timeout_sent_ != st_.v_cur) {
            timeout_sent_ = st_.v_cur;
            Share s = scheme_.make_share(timeout_view_message(st_.v_cur), self_,
                                         ShareKind::timeout_view);
            multicast(msg::Timeout{s, st_.v_cur, st_.qc_high});
        }
    }
    retry_buffered();
    return take();
}

Replica::Disposition Replica::dispatch(ReplicaId from, const WireMessage& m) {
    return std::visit(
        overloaded{
            [&](const msg::Proposal& p) { return on_proposal(from, p); },
            [&](const msg::Vote& v) {
                on_vote(from, v);
                return Disposition::done;
            },
            [&](const msg::Timeout& t) {
                on_timeout(from, t);
                return Disposition::done;
            },
            [&](const msg::TCRelay& r) {
                on_tc(r.tc);
                return Disposition::done;
            },
            [&](const msg::FTCRelay& r) {
                on_ftc(r.ftc);
                return Disposition::done;
            },
            [&](const msg::FBProposal& p) { return on_fblock(from, p); },
            [&](const msg::FBVote& v) {
                on_fvote(from, v);
                return Disposition::done;
            },
            [&](const msg::FQCRelay& r) {
                on_fqc_relay(from, r);
                return Disposition::done;
            },
            [&](const msg::CoinShare& c) {
                on_coin_share(from, c);
                return Disposition::done;
            },
            [&](const msg::CoinQCRelay& c) {
                on_coin_qc(c.coin);
                return Disposition::done;
            },
            [&](const msg::SyncRequest& r) {
                on_sync_request(from, r);
                return Disposition::done;
            },
            [&](const msg::SyncResponse& r) {
                on_sync_response(r);
                return Disposition::done;
            },
        },
        m);
}

// --- Steady state ----------------------------------------------------------

Replica::Disposition Replica::on_proposal(ReplicaId from, const msg::Proposal& p) {
    const Block& b = p.block;
    if (b.is_fallback() || b.round == 0 || from != leader_of(b.round, cfg_)) {
        drop(DropReason::invalid_message, MessageKind::proposal);
        return Disposition::done;
    }
    if (p.coin_evidence) on_coin_qc(*p.coin_evidence);
    if (!verify_block(b)) {
        drop(DropReason::invalid_certificate, MessageKind::proposal);
        return Disposition::done;
    }
    store_block(b);
    if (b.parent.is_fallback()) record_fqc(b.parent);

    if (!usable(b.parent)) {
        if (!cfg_.adopts() && st_.coin_history.count(b.parent.view)) {
            drop(DropReason::invalid_certificate, MessageKind::proposal);
            return Disposition::done;
        }
        return Disposition::defer;
    }
    if (!known(b.parent.block)) {
        request_block(b.parent.block, b.parent.signers);
        return Disposition::defer;
    }
    if (b.view > st_.v_cur || !pending_locks_.empty()) return Disposition::defer;

    auto [it, fresh] = seen_proposals_.emplace(std::make_pair(b.round, b.view), b.id);
    if (!fresh) {
        if (it->second != b.id) drop(DropReason::equivocation, MessageKind::proposal);
        return Disposition::done;
    }

    observe_qc(b.parent);

    bool ok = b.round == st_.r_cur && b.view == st_.v_cur && b.round > st_.r_vote &&
              b.round > stop_voting_round_ && rank(b.parent) >= st_.rank_lock &&
              valid_payload(b.payload);
    if (cfg_.pacemaker == PacemakerKind::async_fallback)
        ok = ok && !st_.mode && b.round == b.parent.round + 1;
    if (!ok) {
        drop(b.round < st_.r_cur || b.view < st_.v_cur ? DropReason::stale_round
                                                       : DropReason::lock_violation,
             MessageKind::proposal);
        return Disposition::done;
    }
    st_.r_vote = b.round;
    Share s = scheme_.make_share(vote_message(b.id, b.round, b.view), self_, ShareKind::vote);
    send(leader_of(b.round + 1, cfg_), msg::Vote{s, b.id, b.round, b.view});
    return Disposition::done;
}

bool Replica::add_share(ShareAcc& acc, const Share& s) const {
    if (acc.signers.universe() == 0) acc.signers = SignerSet(cfg_.n);
    if (!acc.signers.insert(s.signer)) return false;
    acc.shares.push_back(s);
    return true;
}

void Replica::on_vote(ReplicaId from, const msg::Vote& v) {
    if (leader_of(v.round + 1, cfg_) != self_) {
        drop(DropReason::wrong_recipient, MessageKind::vote);
        return;
    }
    if (v.share.signer != from || v.share.kind != ShareKind::vote ||
        v.share.message != vote_message(v.block, v.round, v.view) || !scheme_.verify_share(v.share)) {
        drop(DropReason::invalid_message, MessageKind::vote);
        return;
    }
    ShareAcc& acc = vote_acc_[v.share.message];
    if (acc.formed || !add_share(acc, v.share) || acc.signers.count() < cfg_.quorum()) return;
    auto res = scheme_.combine(acc.shares, cfg_.quorum());
    const auto* sig = std::get_if<ThresholdSig>(&res);
    if (!sig) return;
    acc.formed = true;
    QuorumCert qc{v.block, v.round, v.view, std::nullopt, sig->signers, sig->aggregate};
    emit(action::CertificateFormed{qc});
    observe_qc(qc);
}

void Replica::observe_qc(const QuorumCert& qc) {
    if (rank(qc) > rank(st_.qc_high)) st_.qc_high = qc;
    if (known(qc.block)) {
        apply_lock(qc);
    } else if (std::none_of(pending_locks_.begin(), pending_locks_.end(),
                            [&](const QuorumCert& p) { return p.block == qc.block; })) {
        pending_locks_.push_back(qc);
        request_block(qc.block, qc.signers);
    }
    advance_round(qc.round + 1, nullptr);
    if (known(qc.block) && !try_commit(qc)) pending_commit_qcs_.push_back(qc);
}

void Replica::apply_lock(const QuorumCert& qc) {
    Rank r;
    if (cfg_.variant == Variant::two_chain) {
        r = rank(qc);
    } else {
        const Block* b = find_block(qc.block);
        if (!b) return;
        r = rank(b->parent);
    }
    if (r > st_.rank_lock) st_.rank_lock = r;
}

void Replica::advance_round(Round target, const TimeoutCert* tc) {
    if (target <= st_.r_cur) return;
    st_.r_cur = target;
    enter_round(tc);
}

void Replica::enter_round(const TimeoutCert* tc) {
    if (timer_round_) emit(action::CancelTimers{});
    emit(action::SetTimer{st_.r_cur, cfg_.timeout_duration});
    timer_round_ = st_.r_cur;
    const ReplicaId leader = leader_of(st_.r_cur, cfg_);
    if (cfg_.pacemaker == PacemakerKind::baseline_tc && tc && leader != self_)
        send(leader, msg::TCRelay{*tc});
    if (leader == self_) propose();
}

void Replica::propose() {
    if (!proposed_.insert({st_.r_cur, st_.v_cur}).second) return;
    TxnBatch payload = payload_for(self_, st_.r_cur, st_.v_cur, 0);
    if (!valid_payload(payload)) return;
    Block b = make_block(st_.qc_high, st_.r_cur, st_.v_cur, payload);
    store_block(b);
    std::optional<CoinQC> evidence;
    if (st_.v_cur > 0 && st_.qc_high.view < st_.v_cur) {
        auto it = st_.coin_history.find(st_.v_cur - 1);
        if (it != st_.coin_history.end()) evidence = it->second;
    }
    multicast(msg::Proposal{std::move(b), std::move(evidence)});
}

bool Replica::try_commit(const QuorumCert& qc) {
    if (!usable(qc)) return true;
    const std::size_t links = cfg_.chain_length();
    std::vector<const Block*> chain;  // newest first
    const Block* b = find_block(qc.block);
    if (!b) return false;
    chain.push_back(b);
    while (chain.size() < links) {
        const QuorumCert& p = chain.back()->parent;
        if (p.block == genesis_id() || !usable(p)) return true;
        const Block* pb = find_block(p.block);
        if (!pb) {
            request_block(p.block, p.signers);
            return false;
        }
        if (pb->round + 1 != chain.back()->round || pb->view != chain.back()->view) return true;
        chain.push_back(pb);
    }
    commit_from(chain.back()->id);
    return true;
}

void Replica::commit_from(const Digest& head) {
    std::vector<Digest> chain;
    Digest cur = head;
    const SignerSet* holders = nullptr;
    while (!committed_.count(cur)) {
        const Block* b = find_block(cur);
        if (!b) {
            if (holders) request_block(cur, *holders);
            if (std::find(pending_commits_.begin(), pending_commits_.end(), head) ==
                pending_commits_.end())
                pending_commits_.push_back(head);
            return;
        }
        chain.push_back(cur);
        holders = &b->parent.signers;
        cur = b->parent.block;
    }
    if (chain.empty()) return;
    std::reverse(chain.begin(), chain.end());
    for (const auto& id : chain) {
        committed_.insert(id);
        st_.committed_log.push_back(id);
    }
    emit(action::CommitNotice{std::move(chain), head});
}

// --- Baseline pacemaker and timeouts --------------------------------------

void Replica::on_timeout(ReplicaId from, const msg::Timeout& t) {
    const bool baseline = cfg_.pacemaker == PacemakerKind::baseline_tc;
    const ShareKind want = baseline ? ShareKind::timeout_round : ShareKind::timeout_view;
    const Digest expect =
        baseline ? timeout_round_message(t.target) : timeout_view_message(t.target);
    if (t.share.signer != from || t.share.kind != want || t.share.message != expect ||
        !scheme_.verify_share(t.share)) {
        drop(DropReason::invalid_message, MessageKind::timeout);
        return;
    }
    if (!scheme_.verify(t.qc_high, cfg_.quorum())) {
        drop(DropReason::invalid_certificate, MessageKind::timeout);
        return;
    }
    if (t.qc_high.is_fallback()) record_fqc(t.qc_high);
    if (usable(t.qc_high)) observe_qc(t.qc_high);

    if (baseline) {
        if (t.target < st_.r_cur) return;
        ShareAcc& acc = round_timeouts_[t.target];
        if (acc.formed || !add_share(acc, t.share) || acc.signers.count() < cfg_.quorum()) return;
        auto res = scheme_.combine(acc.shares, cfg_.quorum());
        const auto* sig = std::get_if<ThresholdSig>(&res);
        if (!sig) return;
        acc.formed = true;
        TimeoutCert tc{t.target, sig->signers, sig->aggregate};
        emit(action::CertificateFormed{tc});
        advance_round(tc.round + 1, &tc);
        return;
    }
    if (t.target < st_.v_cur) return;
    add_share(view_timeouts_[t.target], t.share);
    try_form_ftc(t.target);
}

void Replica::on_tc(const TimeoutCert& tc) {
    if (cfg_.pacemaker != PacemakerKind::baseline_tc) {
        drop(DropReason::invalid_message, MessageKind::tc_relay);
        return;
    }
    if (!scheme_.verify(tc, cfg_.quorum())) {
        drop(DropReason::invalid_certificate, MessageKind::tc_relay);
        return;
    }
    advance_round(tc.round + 1, &tc);
}

// --- Fallback --------------------------------------------------------------

void Replica::on_ftc(const FallbackTC& ftc) {
    if (cfg_.pacemaker != PacemakerKind::async_fallback) {
        drop(DropReason::invalid_message, MessageKind::ftc_relay);
        return;
    }
    if (!scheme_.verify(ftc, cfg_.quorum())) {
        drop(DropReason::invalid_certificate, MessageKind::ftc_relay);
        return;
    }
    if (ftc.view >= st_.v_cur) enter_fallback(ftc);
}

void Replica::try_form_ftc(View v) {
    if (cfg_.pacemaker != PacemakerKind::async_fallback || v < st_.v_cur) return;
    auto it = view_timeouts_.find(v);
    if (it == view_timeouts_.end()) return;
    ShareAcc& acc = it->second;
    if (acc.formed || acc.signers.count() < cfg_.quorum()) return;
    auto res = scheme_.combine(acc.shares, cfg_.quorum());
    const auto* sig = std::get_if<ThresholdSig>(&res);
    if (!sig) return;
    acc.formed = true;
    FallbackTC ftc{v, sig->signers, sig->aggregate};
    emit(action::CertificateFormed{ftc});
    enter_fallback(ftc);
}

void Replica::enter_fallback(const FallbackTC& ftc) {
    if (ftc.view < st_.v_cur || entered_view_ == ftc.view) return;
    entered_view_ = ftc.view;
    st_.v_cur = ftc.view;
    st_.mode = true;
    std::fill(st_.fvoted_round.begin(), st_.fvoted_round.end(), 0);
    std::fill(st_.fvoted_height.begin(), st_.fvoted_height.end(), 0);
    ++epoch_;
    emit(action::ModeChange{true, st_.v_cur});
    multicast(msg::FTCRelay{ftc});
    propose_fblock(st_.qc_high, 1, ftc);

    const View v = st_.v_cur;
    if (auto it = fqcs_by_view_.find(v); it != fqcs_by_view_.end()) {
        auto ids = it->second;
        for (const auto& id : ids) on_certified_fblock(fqcs_.at(id));
    }
    check_election();
    check_coin(v);
    if (auto it = future_coins_.find(v); it != future_coins_.end() && st_.v_cur == v) {
        CoinQC coin = it->second;
        future_coins_.erase(it);
        exit_fallback(coin);
    }
}

void Replica::propose_fblock(const QuorumCert& parent, std::uint8_t height,
                             std::optional<FallbackTC> ftc) {
    auto& done = proposed_height_[st_.v_cur];
    if (done >= height) return;
    done = height;
    FallbackTag tag{height, self_};
    Block b = make_block(parent, parent.round + 1, st_.v_cur,
                         payload_for(self_, parent.round + 1, st_.v_cur, height), tag);
    store_block(b);
    multicast(msg::FBProposal{std::move(b), std::move(ftc)});
}

Replica::Disposition Replica::on_fblock(ReplicaId from, const msg::FBProposal& p) {
    const Block& b = p.block;
    if (cfg_.pacemaker != PacemakerKind::async_fallback || !b.is_fallback() ||
        b.fallback->proposer != from) {
        drop(DropReason::invalid_message, MessageKind::fb_proposal);
        return Disposition::done;
    }
    const std::uint8_t h = b.height();
    if (h < 1 || h > cfg_.chain_length()) {
        drop(DropReason::wrong_height, MessageKind::fb_proposal);
        return Disposition::done;
    }
    if (!verify_block(b)) {
        drop(DropReason::invalid_certificate, MessageKind::fb_proposal);
        return Disposition::done;
    }
    if (h == 1) {
        if (!p.ftc || p.ftc->view != b.view || !scheme_.verify(*p.ftc, cfg_.quorum())) {
            drop(DropReason::invalid_certificate, MessageKind::fb_proposal);
            return Disposition::done;
        }
        if (b.round != b.parent.round + 1) {
            drop(DropReason::invalid_message, MessageKind::fb_proposal);
            return Disposition::done;
        }
    } else {
        const QuorumCert& q = b.parent;
        if (!q.is_fallback() || q.view != b.view || q.height() + 1 != h ||
            b.round != q.round + 1 || (!cfg_.adopts() && q.proposer() != from)) {
            drop(DropReason::invalid_message, MessageKind::fb_proposal);
            return Disposition::done;
        }
    }
    if (h == 1 && p.ftc->view >= st_.v_cur) enter_fallback(*p.ftc);
    store_block(b);
    if (b.parent.is_fallback()) record_fqc(b.parent);

    if (b.view < st_.v_cur) return Disposition::done;
    if (b.view > st_.v_cur || !st_.mode) return Disposition::defer;
    const ReplicaId j = from;
    if (h <= st_.fvoted_height[j]) return Disposition::done;

    if (h == 1) {
        if (!usable(b.parent)) {
            if (!cfg_.adopts() && st_.coin_history.count(b.parent.view)) {
                drop(DropReason::invalid_certificate, MessageKind::fb_proposal);
                return Disposition::done;
            }
            return Disposition::defer;
        }
        if (!known(b.parent.block)) {
            request_block(b.parent.block, b.parent.signers);
            return Disposition::defer;
        }
        if (!pending_locks_.empty()) return Disposition::defer;
        observe_qc(b.parent);
        if (rank(b.parent) < st_.rank_lock) {
            drop(DropReason::lock_violation, MessageKind::fb_proposal);
            return Disposition::done;
        }
    } else if (b.round <= st_.fvoted_round[j]) {
        drop(DropReason::lock_violation, MessageKind::fb_proposal);
        return Disposition::done;
    }
    if (!st_.mode || b.view != st_.v_cur || !valid_payload(b.payload)) return Disposition::done;

    st_.fvoted_round[j] = b.round;
    st_.fvoted_height[j] = h;
    Share s = scheme_.make_share(fallback_vote_message(b.id, b.round, b.view, *b.fallback), self_,
                                 ShareKind::fallback_vote);
    send(j, msg::FBVote{s, b.id, b.round, b.view, *b.fallback});
    return Disposition::done;
}

void Replica::on_fvote(ReplicaId from, const msg::FBVote& v) {
    if (v.tag.proposer != self_) {
        drop(DropReason::wrong_recipient, MessageKind::fb_vote);
        return;
    }
    if (v.share.signer != from || v.share.kind != ShareKind::fallback_vote ||
        v.share.message != fallback_vote_message(v.block, v.round, v.view, v.tag) ||
        !scheme_.verify_share(v.share)) {
        drop(DropReason::invalid_message, MessageKind::fb_vote);
        return;
    }
    ShareAcc& acc = fvote_acc_[v.share.message];
    if (acc.formed || !add_share(acc, v.share) || acc.signers.count() < cfg_.quorum()) return;
    auto res = scheme_.combine(acc.shares, cfg_.quorum());
    const auto* sig = std::get_if<ThresholdSig>(&res);
    if (!sig) return;
    acc.formed = true;
    QuorumCert fqc{v.block, v.round, v.view, v.tag, sig->signers, sig->aggregate};
    emit(action::CertificateFormed{fqc});
    record_fqc(fqc);
}

void Replica::record_fqc(const QuorumCert& fqc) {
    if (fqcs_.count(fqc.block)) return;
    fqcs_.emplace(fqc.block, fqc);
    fqcs_by_view_[fqc.view].push_back(fqc.block);
    ++epoch_;
    on_certified_fblock(fqc);
    refresh_endorsed(fqc.view);
}

void Replica::on_certified_fblock(const QuorumCert& fqc) {
    if (!st_.mode || fqc.view != st_.v_cur || entered_view_ != st_.v_cur) return;
    const std::uint8_t h = fqc.height();
    const std::uint8_t top = cfg_.chain_length();
    const bool own = fqc.proposer() == self_;
    if (!cfg_.adopts() && !own) return;
    if (h < top) {
        propose_fblock(fqc, static_cast<std::uint8_t>(h + 1), std::nullopt);
        return;
    }
    if (relayed_.count(fqc.view)) return;
    if (cfg_.variant == Variant::two_chain) {
        relayed_.insert(fqc.view);
        multicast(msg::FQCRelay{fqc, self_});
    } else if (own) {
        relayed_.insert(fqc.view);
        multicast(msg::FQCRelay{fqc, std::nullopt});
    }
}

void Replica::on_fqc_relay(ReplicaId from, const msg::FQCRelay& r) {
    const QuorumCert& fqc = r.fqc;
    if (cfg_.pacemaker != PacemakerKind::async_fallback || !fqc.is_fallback()) {
        drop(DropReason::invalid_message, MessageKind::fqc_relay);
        return;
    }
    if (!scheme_.verify(fqc, cfg_.quorum())) {
        drop(DropReason::invalid_certificate, MessageKind::fqc_relay);
        return;
    }
    if (fqc.height() != cfg_.chain_length()) {
        drop(DropReason::wrong_height, MessageKind::fqc_relay);
        return;
    }
    ReplicaId identity;
    if (cfg_.variant == Variant::two_chain) {
        if (!r.counter_signer || *r.counter_signer != from) {
            drop(DropReason::invalid_message, MessageKind::fqc_relay);
            return;
        }
        identity = from;
    } else {
        if (fqc.proposer() != from) {
            drop(DropReason::invalid_message, MessageKind::fqc_relay);
            return;
        }
        identity = fqc.proposer();
    }
    record_fqc(fqc);
    if (fqc.view < st_.v_cur) return;
    completed_[fqc.view].insert(identity);
    check_election();
}

void Replica::check_election() {
    const View v = st_.v_cur;
    if (!st_.mode || entered_view_ != v || coin_sent_.count(v)) return;
    auto it = completed_.find(v);
    if (it == completed_.end() || it->second.size() < cfg_.quorum()) return;
    coin_sent_.insert(v);
    Share s = scheme_.make_share(coin_message(v), self_, ShareKind::coin);
    multicast(msg::CoinShare{s, v});
}

void Replica::on_coin_share(ReplicaId from, const msg::CoinShare& c) {
    if (c.share.signer != from || c.share.kind != ShareKind::coin ||
        c.share.message != coin_message(c.view) || !scheme_.verify_share(c.share)) {
        drop(DropReason::invalid_message, MessageKind::coin_share);
        return;
    }
    if (c.view < st_.v_cur) return;
    add_share(coin_acc_[c.view], c.share);
    check_coin(c.view);
}

void Replica::check_coin(View v) {
    if (v != st_.v_cur || st_.coin_history.count(v)) return;
    auto it = coin_acc_.find(v);
    if (it == coin_acc_.end() || it->second.formed ||
        it->second.signers.count() < cfg_.coin_threshold())
        return;
    auto res = scheme_.combine(it->second.shares, cfg_.coin_threshold());
    const auto* sig = std::get_if<ThresholdSig>(&res);
    if (!sig) return;
    it->second.formed = true;
    CoinQC coin{v, sig->signers, elect_leader(v, cfg_.run_seed, cfg_.n), sig->aggregate};
    emit(action::CertificateFormed{coin});
    exit_fallback(coin);
}

void Replica::on_coin_qc(const CoinQC& coin) {
    if (cfg_.pacemaker != PacemakerKind::async_fallback) {
        drop(DropReason::invalid_message, MessageKind::coin_qc_relay);
        return;
    }
    if (!scheme_.verify(coin, cfg_.coin_threshold())) {
        drop(DropReason::invalid_certificate, MessageKind::coin_qc_relay);
        return;
    }
    if (coin.view < st_.v_cur) {
        if (st_.coin_history.emplace(coin.view, coin).second) {
            ++epoch_;
            refresh_endorsed(coin.view);
        }
        return;
    }
    if (coin.view == st_.v_cur) {
        exit_fallback(coin);
        return;
    }
    future_coins_.emplace(coin.view, coin);
}

void Replica::exit_fallback(const CoinQC& coin) {
    if (coin.view != st_.v_cur || st_.coin_history.count(coin.view)) return;
    const View v = coin.view;
    multicast(msg::CoinQCRelay{coin});
    if (st_.mode) st_.r_vote = st_.fvoted_round[coin.elected];
    st_.mode = false;
    st_.v_cur = v + 1;
    st_.coin_history.emplace(v, coin);
    ++epoch_;
    emit(action::ModeChange{false, st_.v_cur});

    const Round before = st_.r_cur;
    refresh_endorsed(v);
    if (st_.r_cur == before && st_.v_cur == v + 1) enter_round(nullptr);

    if (auto it = future_coins_.find(st_.v_cur); it != future_coins_.end()) {
        CoinQC next = it->second;
        future_coins_.erase(it);
        exit_fallback(next);
        return;
    }
    try_form_ftc(st_.v_cur);
}

void Replica::refresh_endorsed(View v) {
    if (!st_.coin_history.count(v)) return;
    auto it = fqcs_by_view_.find(v);
    if (it == fqcs_by_view_.end()) return;
    const QuorumCert* best = nullptr;
    Rank best_rank{};
    for (const auto& id : it->second) {
        const QuorumCert& q = fqcs_.at(id);
        if (!is_endorsed(q)) continue;
        Rank r = rank(q);
        if (!best || r > best_rank) {
            best = &q;
            best_rank = r;
        }
    }
    if (!best) return;
    auto seen = endorsed_observed_.find(v);
    if (seen != endorsed_observed_.end() && seen->second >= best_rank) return;
    endorsed_observed_[v] = best_rank;
    QuorumCert copy = *best;
    observe_qc(copy);
}

// --- Block store and sync --------------------------------------------------

bool Replica::verify_block(const Block& b) const {
    if (!id_matches(b) || b.round <= b.parent.round || b.view < b.parent.view) return false;
    return scheme_.verify(b.parent, cfg_.quorum());
}

bool Replica::store_block(const Block& b) {
    if (!blocks_.emplace(b.id, b).second) return false;
    ++epoch_;
    if (b.is_fallback()) fblocks_by_view_[b.view].push_back(b.id);
    requested_.erase(b.id);
    resolve_pending();
    if (b.is_fallback()) refresh_endorsed(b.view);
    return true;
}

void Replica::resolve_pending() {
    auto locks = std::exchange(pending_locks_, {});
    for (auto& qc : locks) {
        if (!known(qc.block)) {
            pending_locks_.push_back(std::move(qc));
            continue;
        }
        apply_lock(qc);
        if (!try_commit(qc)) pending_commit_qcs_.push_back(qc);
    }
    auto qcs = std::exchange(pending_commit_qcs_, {});
    for (auto& qc : qcs)
        if (!try_commit(qc)) pending_commit_qcs_.push_back(std::move(qc));
    auto heads = std::exchange(pending_commits_, {});
    for (const auto& h : heads) commit_from(h);
}

void Replica::request_block(const Digest& id, const SignerSet& holders) {
    if (known(id) || !requested_.insert(id).second) return;
    std::size_t asked = 0;
    for (ReplicaId r : holders.members()) {
        if (r == self_ || r >= cfg_.n) continue;
        send(r, msg::SyncRequest{id});
        if (++asked == cfg_.coin_threshold()) break;
    }
}

void Replica::on_sync_request(ReplicaId from, const msg::SyncRequest& r) {
    if (r.block == genesis_id()) return;
    if (const Block* b = find_block(r.block)) send(from, msg::SyncResponse{*b});
}

void Replica::on_sync_response(const msg::SyncResponse& r) {
    if (!verify_block(r.block)) {
        drop(DropReason::invalid_certificate, MessageKind::sync_response);
        return;
    }
    store_block(r.block);
    if (r.block.parent.is_fallback()) record_fqc(r.block.parent);
}

// --- Buffering and output --------------------------------------------------

void Replica::buffer(ReplicaId from, const WireMessage& m) {
    if (buffered_per_peer_[from] >= cfg_.buffer_cap_per_peer) {
        drop(DropReason::buffer_overflow, kind_of(m));
        return;
    }
    ++buffered_per_peer_[from];
    buffer_.emplace_back(from, m);
}

void Replica::retry_buffered() {
    if (retrying_) return;
    retrying_ = true;
    while (retried_epoch_ != epoch_) {
        retried_epoch_ = epoch_;
        auto items = std::exchange(buffer_, {});
        std::fill(buffered_per_peer_.begin(), buffered_per_peer_.end(), 0);
        for (auto& [from, m] : items) {
            if (dispatch(from, m) == Disposition::defer) {
                ++buffered_per_peer_[from];
                buffer_.emplace_back(from, std::move(m));
            }
        }
    }
    retrying_ = false;
}

void Replica::drop(DropReason r, MessageKind k) { emit(action::Dropped{r, k}); }

void Replica::send(ReplicaId to, WireMessage m) { emit(action::Send{to, std::move(m)}); }

void Replica::multicast(WireMessage m) { emit(action::Multicast{std::move(m)}); }

}  // namespace fbft
