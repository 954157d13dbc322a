// SPDX-License-Identifier: Apache-2.0

#include "fbft/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

namespace fbft {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::optional<std::uint64_t> parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

}  // namespace

std::string_view to_string(NetworkModel m) {
    switch (m) {
        case NetworkModel::synchronous: return "synchronous";
        case NetworkModel::partial_synchrony: return "partial_synchrony";
        case NetworkModel::asynchronous: return "asynchronous";
    }
    return "?";
}

std::optional<NetworkModel> network_model_from_string(std::string_view s) {
    if (s == "synchronous") return NetworkModel::synchronous;
    if (s == "partial_synchrony") return NetworkModel::partial_synchrony;
    if (s == "asynchronous") return NetworkModel::asynchronous;
    return std::nullopt;
}

void AdversaryModel::validate() const {
    if (delta < 1) throw ConfigError("delta must be >= 1");
    auto check = [](const DelayRule& r, const char* what) {
        if (r.min < 1 || r.max < r.min)
            throw ConfigError(std::string(what) + ": delay range must satisfy 1 <= min <= max");
    };
    check(default_delay, "default delay");
    for (const auto& [k, r] : per_kind) check(r, std::string(to_string(k)).c_str());
    if (revealed_leader_delay) check(*revealed_leader_delay, "revealed leader delay");
}

std::string to_string(const FaultSpec& f) {
    switch (f.kind) {
        case FaultKind::honest: return "honest";
        case FaultKind::crash: return "crash@" + std::to_string(f.at);
        case FaultKind::mute_leader: return "mute";
        case FaultKind::equivocate: return "equivocate";
    }
    return "?";
}

std::optional<FaultSpec> fault_from_string(std::string_view s) {
    if (s == "honest") return FaultSpec{FaultKind::honest, 0};
    if (s == "mute") return FaultSpec{FaultKind::mute_leader, 0};
    if (s == "equivocate") return FaultSpec{FaultKind::equivocate, 0};
    if (s.starts_with("crash@")) {
        auto t = parse_u64(s.substr(6));
        if (t) return FaultSpec{FaultKind::crash, *t};
    }
    return std::nullopt;
}

void SimConfig::validate() const {
    protocol.validate();
    adversary.validate();
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (!faults.empty() && faults.size() != protocol.n)
        throw ConfigError("fault list must be empty or have one entry per replica");
    auto faulty = std::count_if(faults.begin(), faults.end(),
                                [](const FaultSpec& f) { return f.kind != FaultKind::honest; });
    if (static_cast<std::uint32_t>(faulty) > protocol.f)
        throw ConfigError("at most f replicas may be faulty");
}

FaultSpec SimConfig::fault_of(ReplicaId r) const {
    if (r < faults.size()) return faults[r];
    return FaultSpec{};
}

// --- Election oracle -------------------------------------------------------

ElectionOracle::ElectionOracle(std::uint64_t seed, std::uint32_t n, std::uint32_t f)
    : seed_(seed), n_(n), f_(f) {}

void ElectionOracle::observe(ReplicaId from, const WireMessage& m) {
    if (const auto* c = std::get_if<msg::CoinShare>(&m)) shares_[c->view].insert(from);
}

std::optional<ReplicaId> ElectionOracle::revealed(View v) const {
    auto it = shares_.find(v);
    if (it == shares_.end() || it->second.size() < f_ + 1) return std::nullopt;
    return elect_leader(v, seed_, n_);
}

// --- Delays ----------------------------------------------------------------

std::uint64_t SimRng::uniform(std::uint64_t lo, std::uint64_t hi) {
    if (hi <= lo) return lo;
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return gen_();  // full 64-bit range
    return lo + static_cast<std::uint64_t>((static_cast<unsigned __int128>(gen_()) * span) >> 64);
}

Tick adversary_delay(const AdversaryModel& model, const WireMessage& m, ReplicaId from,
                     ReplicaId /*to*/, Tick now, SimRng& rng, const ElectionOracle* oracle) {
    switch (model.model) {
        case NetworkModel::synchronous: return rng.uniform(1, model.delta);
        case NetworkModel::partial_synchrony: {
            if (now >= model.gst) return rng.uniform(1, model.delta);
            const Tick bound = model.pre_gst_delay_bound ? model.pre_gst_delay_bound : 4 * model.delta;
            Tick d = rng.uniform(1, std::max<Tick>(bound, 1));
            const Tick latest = model.gst + model.delta;
            if (now + d > latest) d = latest - now;
            return std::max<Tick>(d, 1);
        }
        case NetworkModel::asynchronous: {
            const MessageKind k = kind_of(m);
            DelayRule rule = model.default_delay;
            if (auto it = model.per_kind.find(k); it != model.per_kind.end()) rule = it->second;
            if (model.revealed_leader_delay && oracle) {
                if (auto v = fallback_view_of(m)) {
                    auto leader = oracle->revealed(*v);
                    if (leader && *leader == from) rule = *model.revealed_leader_delay;
                }
            }
            return rng.uniform(rule.min, rule.max);
        }
    }
    return 1;
}

// --- Trace helpers ---------------------------------------------------------

BlockInfo block_info(const Block& b, ReplicaId proposer) {
    BlockInfo i;
    i.id = b.id;
    i.round = b.round;
    i.view = b.view;
    i.height = b.height();
    i.proposer = b.fallback ? b.fallback->proposer : proposer;
    i.parent = b.parent.block;
    i.parent_round = b.parent.round;
    i.parent_view = b.parent.view;
    i.parent_height = b.parent.height();
    i.parent_proposer = b.parent.proposer();
    return i;
}

std::string_view to_string(CertKind k) {
    switch (k) {
        case CertKind::qc: return "qc";
        case CertKind::fqc: return "fqc";
        case CertKind::tc: return "tc";
        case CertKind::ftc: return "ftc";
        case CertKind::coin: return "coin";
    }
    return "?";
}

std::optional<CertKind> cert_kind_from_string(std::string_view s) {
    for (auto k : {CertKind::qc, CertKind::fqc, CertKind::tc, CertKind::ftc, CertKind::coin})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

CertInfo cert_info(const Certificate& c) {
    CertInfo i;
    std::visit(overloaded{
                   [&](const QuorumCert& q) {
                       i.kind = q.is_fallback() ? CertKind::fqc : CertKind::qc;
                       i.block = q.block;
                       i.round = q.round;
                       i.view = q.view;
                       i.height = q.height();
                       i.proposer = q.proposer();
                       i.signers = static_cast<std::uint32_t>(q.signers.count());
                   },
                   [&](const TimeoutCert& t) {
                       i.kind = CertKind::tc;
                       i.round = t.round;
                       i.signers = static_cast<std::uint32_t>(t.signers.count());
                   },
                   [&](const FallbackTC& t) {
                       i.kind = CertKind::ftc;
                       i.view = t.view;
                       i.signers = static_cast<std::uint32_t>(t.signers.count());
                   },
                   [&](const CoinQC& q) {
                       i.kind = CertKind::coin;
                       i.view = q.view;
                       i.elected = q.elected;
                       i.signers = static_cast<std::uint32_t>(q.signers.count());
                   },
               },
               c);
    return i;
}

std::string_view to_string(RecordType t) {
    switch (t) {
        case RecordType::deliver: return "deliver";
        case RecordType::timer: return "timer";
        case RecordType::commit: return "commit";
        case RecordType::cert: return "cert";
        case RecordType::mode: return "mode";
    }
    return "?";
}

// --- Simulator -------------------------------------------------------------

Simulator::Simulator(SimConfig cfg)
    : cfg_(std::move(cfg)),
      rng_(cfg_.seed),
      oracle_(cfg_.seed, cfg_.protocol.n, cfg_.protocol.f) {
    cfg_.protocol.run_seed = cfg_.seed;
    cfg_.validate();
    for (ReplicaId r = 0; r < cfg_.protocol.n; ++r)
        replicas_.push_back(std::make_unique<Replica>(cfg_.protocol, r));
    timer_generation_.assign(cfg_.protocol.n, 0);
    trace_.config = cfg_;
}

bool Simulator::crashed(ReplicaId r, Tick t) const {
    FaultSpec f = cfg_.fault_of(r);
    return f.kind == FaultKind::crash && t >= f.at;
}

Trace Simulator::run(const ReplayDelays* replay) {
    replay_ = replay;
    now_ = 0;
    for (ReplicaId r = 0; r < cfg_.protocol.n; ++r) {
        if (crashed(r, 0)) continue;
        apply(r, replicas_[r]->start());
    }
    while (!heap_.empty()) {
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        Event e = std::move(heap_.back());
        heap_.pop_back();
        if (e.time > cfg_.horizon) {
            if (!e.timer) ++trace_.undelivered;
            continue;
        }
        now_ = e.time;
        if (e.timer)
            fire_timer(e);
        else
            deliver(e);
    }
    if (cfg_.inject_double_commit) inject_double_commit();
    return std::move(trace_);
}

void Simulator::deliver(const Event& e) {
    TraceRecord rec;
    rec.type = RecordType::deliver;
    rec.at = now_;
    rec.replica = e.to;
    rec.from = e.from;
    rec.sent_at = e.sent_at;
    rec.send_index = e.send_index;
    rec.kind = kind_of(*e.msg);
    rec.units = authenticator_units(rec.kind);
    rec.fallback_view = fallback_view_of(*e.msg);
    if (const auto* p = std::get_if<msg::Proposal>(e.msg.get()))
        rec.block = block_info(p->block, e.from);
    else if (const auto* fb = std::get_if<msg::FBProposal>(e.msg.get()))
        rec.block = block_info(fb->block, e.from);
    rec.summary = summarize(*e.msg);
    trace_.records.push_back(std::move(rec));

    if (crashed(e.to, now_)) return;
    apply(e.to, replicas_[e.to]->on_message(e.from, *e.msg));
}

void Simulator::fire_timer(const Event& e) {
    if (e.generation != timer_generation_[e.to] || crashed(e.to, now_)) return;
    TraceRecord rec;
    rec.type = RecordType::timer;
    rec.at = now_;
    rec.replica = e.to;
    rec.round = e.round;
    trace_.records.push_back(std::move(rec));
    apply(e.to, replicas_[e.to]->on_timer(e.round));
}

void Simulator::filter_byzantine(ReplicaId r, Actions& actions) const {
    if (cfg_.fault_of(r).kind != FaultKind::mute_leader) return;
    std::erase_if(actions, [](const OutputAction& a) {
        const auto* m = std::get_if<action::Multicast>(&a);
        return m && (std::holds_alternative<msg::Proposal>(m->msg) ||
                     std::holds_alternative<msg::FBProposal>(m->msg));
    });
}

void Simulator::apply(ReplicaId r, Actions actions) {
    if (crashed(r, now_)) return;
    filter_byzantine(r, actions);
    const bool equivocator = cfg_.fault_of(r).kind == FaultKind::equivocate;
    for (auto& a : actions) {
        std::visit(
            overloaded{
                [&](action::Send& s) {
                    unicast(r, s.to, std::make_shared<const WireMessage>(std::move(s.msg)));
                },
                [&](action::Multicast& m) {
                    if (equivocator) {
                        if (const auto* p = std::get_if<msg::Proposal>(&m.msg)) {
                            multicast_equivocating(r, *p);
                            return;
                        }
                    }
                    auto shared = std::make_shared<const WireMessage>(std::move(m.msg));
                    unicast(r, r, shared);
                    for (ReplicaId to = 0; to < cfg_.protocol.n; ++to)
                        if (to != r) unicast(r, to, shared);
                },
                [&](action::SetTimer& t) {
                    Event e;
                    e.time = now_ + t.duration;
                    e.seq = seq_++;
                    e.timer = true;
                    e.to = r;
                    e.round = t.round;
                    e.generation = timer_generation_[r];
                    heap_.push_back(std::move(e));
                    std::push_heap(heap_.begin(), heap_.end(), Later{});
                },
                [&](action::CancelTimers&) { ++timer_generation_[r]; },
                [&](action::CommitNotice& c) {
                    TraceRecord rec;
                    rec.type = RecordType::commit;
                    rec.at = now_;
                    rec.replica = r;
                    rec.blocks = std::move(c.blocks);
                    rec.head = c.head;
                    trace_.records.push_back(std::move(rec));
                },
                [&](action::CertificateFormed& c) {
                    TraceRecord rec;
                    rec.type = RecordType::cert;
                    rec.at = now_;
                    rec.replica = r;
                    rec.cert = cert_info(c.cert);
                    trace_.records.push_back(std::move(rec));
                },
                [&](action::ModeChange& m) {
                    TraceRecord rec;
                    rec.type = RecordType::mode;
                    rec.at = now_;
                    rec.replica = r;
                    rec.mode = m.mode;
                    rec.view = m.view;
                    trace_.records.push_back(std::move(rec));
                },
                [&](action::Dropped& d) { ++trace_.drops[std::string(to_string(d.reason))]; },
            },
            a);
    }
}

void Simulator::multicast_equivocating(ReplicaId from, const msg::Proposal& p) {
    const Block& b = p.block;
    Block conflicting = make_block(b.parent, b.round, b.view,
                                   Replica::payload_for(from, b.round, b.view, 0, /*salt=*/1));
    auto first = std::make_shared<const WireMessage>(p);
    auto second = std::make_shared<const WireMessage>(
        std::in_place_type<msg::Proposal>, msg::Proposal{std::move(conflicting), p.coin_evidence});
    std::vector<ReplicaId> others;
    for (ReplicaId to = 0; to < cfg_.protocol.n; ++to)
        if (to != from) others.push_back(to);
    const std::size_t half = (others.size() + 1) / 2;
    unicast(from, from, first);
    for (std::size_t i = 0; i < others.size(); ++i)
        unicast(from, others[i], i < half ? first : second);
}

void Simulator::unicast(ReplicaId from, ReplicaId to, std::shared_ptr<const WireMessage> m) {
    oracle_.observe(from, *m);
    const std::uint64_t index = trace_.sends++;
    Tick delay = 0;
    if (to != from) {
        delay = adversary_delay(cfg_.adversary, *m, from, to, now_, rng_, &oracle_);
        if (replay_) {
            if (auto it = replay_->find(index); it != replay_->end()) delay = it->second;
        }
    }
    Event e;
    e.time = now_ + delay;
    e.seq = seq_++;
    e.to = to;
    e.from = from;
    e.sent_at = now_;
    e.send_index = index;
    e.msg = std::move(m);
    heap_.push_back(std::move(e));
    std::push_heap(heap_.begin(), heap_.end(), Later{});
}

void Simulator::inject_double_commit() {
    std::vector<ReplicaId> honest;
    for (ReplicaId r = 0; r < cfg_.protocol.n; ++r)
        if (cfg_.honest(r)) honest.push_back(r);
    if (honest.size() < 2) return;
    auto fake = [](std::string_view tag) {
        DigestBuilder b;
        b.add(std::string_view{"injected"}).add(tag);
        return b.finish();
    };
    std::vector<TraceRecord> planted;
    for (int i = 0; i < 2; ++i) {
        TraceRecord rec;
        rec.type = RecordType::commit;
        rec.at = 0;
        rec.replica = honest[i];
        rec.blocks = {fake(i == 0 ? "a" : "b")};
        rec.head = rec.blocks.front();
        planted.push_back(std::move(rec));
    }
    trace_.records.insert(trace_.records.begin(), planted.begin(), planted.end());
}

Trace simulate(const SimConfig& cfg, const ReplayDelays* replay) {
    Simulator sim(cfg);
    return sim.run(replay);
}

}  // namespace fbft
