// SPDX-License-Identifier: Apache-2.0

#include "fbft/analysis.hpp"

#include <algorithm>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace fbft {

namespace {

using BlockMap = std::unordered_map<Digest, BlockInfo, DigestHash>;

struct CertifiedF {
    Round round = 0;
    View view = 0;
    std::uint8_t height = 0;
    ReplicaId proposer = 0;
};

struct Index {
    BlockMap blocks;
    std::map<std::pair<View, Round>, std::set<Digest>> certified_regular;
    std::unordered_map<Digest, CertifiedF, DigestHash> certified_f;
    std::map<View, ReplicaId> elected;
};

void validate_records(const Trace& t) {
    const auto n = t.config.protocol.n;
    Tick last = 0;
    for (const auto& r : t.records) {
        if (r.at < last) throw AnalysisError(AnalysisError::Code::malformed_trace, "records out of time order");
        last = r.at;
        if (r.replica >= n || (r.type == RecordType::deliver && r.from >= n))
            throw AnalysisError(AnalysisError::Code::malformed_trace, "replica id out of range");
        if (r.type == RecordType::commit && r.blocks.empty())
            throw AnalysisError(AnalysisError::Code::malformed_trace, "empty commit record");
        if (r.type == RecordType::deliver && r.sent_at > r.at)
            throw AnalysisError(AnalysisError::Code::malformed_trace, "delivery before send");
    }
}

Index build_index(const Trace& t) {
    Index ix;
    for (const auto& r : t.records) {
        if (r.type == RecordType::deliver && r.block) {
            ix.blocks.emplace(r.block->id, *r.block);
            const BlockInfo& b = *r.block;
            if (b.parent_height > 0)
                ix.certified_f.emplace(
                    b.parent, CertifiedF{b.parent_round, b.parent_view, b.parent_height, b.parent_proposer});
        }
        if (r.type != RecordType::cert) continue;
        const CertInfo& c = r.cert;
        switch (c.kind) {
            case CertKind::qc: ix.certified_regular[{c.view, c.round}].insert(c.block); break;
            case CertKind::fqc:
                ix.certified_f.emplace(c.block, CertifiedF{c.round, c.view, c.height, c.proposer});
                break;
            case CertKind::coin: {
                auto [it, fresh] = ix.elected.emplace(c.view, c.elected);
                if (!fresh && it->second != c.elected)
                    throw AnalysisError(AnalysisError::Code::malformed_trace, "conflicting coin outcomes");
                break;
            }
            default: break;
        }
    }
    return ix;
}

/// Endorsed f-blocks of each closed view, following the replica's rule.
std::map<View, std::set<Digest>> endorsed_sets(const Trace& t, const Index& ix) {
    const auto& cfg = t.config.protocol;
    const std::uint8_t top = cfg.chain_length();
    std::map<View, std::set<Digest>> out;
    if (!cfg.adopts()) {
        for (const auto& [id, c] : ix.certified_f) {
            auto it = ix.elected.find(c.view);
            if (it != ix.elected.end() && it->second == c.proposer) out[c.view].insert(id);
        }
        return out;
    }
    std::map<View, std::set<Digest>> tops;
    for (const auto& [id, b] : ix.blocks)
        if (b.fallback() && b.height == top) {
            auto it = ix.elected.find(b.view);
            if (it != ix.elected.end() && it->second == b.proposer) tops[b.view].insert(id);
        }
    for (const auto& [id, c] : ix.certified_f)
        if (c.height == top) {
            auto it = ix.elected.find(c.view);
            if (it != ix.elected.end() && it->second == c.proposer) tops[c.view].insert(id);
        }
    for (const auto& [v, ids] : tops) {
        for (const auto& id : ids) {
            if (ix.certified_f.count(id)) out[v].insert(id);
            auto b = ix.blocks.find(id);
            while (b != ix.blocks.end() && b->second.parent_height > 0 && b->second.parent_view == v) {
                out[v].insert(b->second.parent);
                b = ix.blocks.find(b->second.parent);
            }
        }
    }
    return out;
}

bool descends(const BlockMap& blocks, Digest from, const Digest& ancestor, Round ancestor_round) {
    while (true) {
        if (from == ancestor) return true;
        auto it = blocks.find(from);
        if (it == blocks.end() || it->second.round <= ancestor_round) return false;
        from = it->second.parent;
    }
}

std::optional<Round> round_of(const Index& ix, const Digest& id) {
    if (auto it = ix.blocks.find(id); it != ix.blocks.end()) return it->second.round;
    if (auto it = ix.certified_f.find(id); it != ix.certified_f.end()) return it->second.round;
    return std::nullopt;
}

void push_unique(std::vector<Digest>& v, const Digest& d) {
    if (std::find(v.begin(), v.end(), d) == v.end()) v.push_back(d);
}

}  // namespace

SafetyReport check_safety(const Trace& t) {
    validate_records(t);
    SafetyReport rep;
    rep.notes = {"same-view commit agreement: covered by prefix-consistency",
                 "cross-view commit agreement: covered by prefix-consistency"};
    const auto& cfg = t.config;

    // (a) prefix consistency against a canonical log, commit by commit.
    std::vector<Digest> canon;
    std::vector<ReplicaId> owner;
    std::vector<std::size_t> len(cfg.protocol.n, 0);
    for (const auto& r : t.records) {
        if (r.type != RecordType::commit || !cfg.honest(r.replica)) continue;
        for (const auto& id : r.blocks) {
            std::size_t pos = len[r.replica]++;
            if (pos < canon.size()) {
                if (canon[pos] != id && rep.prefix_consistent) {
                    rep.prefix_consistent = false;
                    rep.first_divergence = SafetyReport::Divergence{owner[pos], r.replica, pos};
                }
            } else {
                canon.push_back(id);
                owner.push_back(r.replica);
            }
        }
    }

    const Index ix = build_index(t);
    const auto endorsed = endorsed_sets(t, ix);

    // (b) uniqueness per (view, round).
    for (const auto& [key, ids] : ix.certified_regular)
        if (ids.size() > 1)
            for (const auto& id : ids) push_unique(rep.lemma1_violations, id);
    for (const auto& [v, ids] : endorsed) {
        std::map<Round, std::set<Digest>> by_round;
        for (const auto& id : ids)
            if (auto r = round_of(ix, id)) by_round[*r].insert(id);
        for (const auto& [r, set] : by_round)
            if (set.size() > 1)
                for (const auto& id : set) push_unique(rep.lemma1_violations, id);
    }

    // (c) chain structure of certified blocks.
    const bool consecutive = cfg.protocol.pacemaker == PacemakerKind::async_fallback;
    auto check_link = [&](const Digest& id) {
        auto it = ix.blocks.find(id);
        if (it == ix.blocks.end()) return;
        const BlockInfo& b = it->second;
        bool bad = b.view < b.parent_view || b.round <= b.parent_round;
        if (consecutive && b.round != b.parent_round + 1) bad = true;
        if (!b.fallback() && b.parent_height > 0 && b.parent_view == b.view) {
            auto e = endorsed.find(b.view);
            if (e != endorsed.end() && e->second.count(b.parent)) bad = true;
        }
        if (bad) push_unique(rep.lemma2_violations, id);
    };
    for (const auto& [key, ids] : ix.certified_regular)
        for (const auto& id : ids) check_link(id);
    for (const auto& [id, c] : ix.certified_f) check_link(id);

    // (d) endorsed f-blocks of a view form one chain.
    for (const auto& [v, ids] : endorsed) {
        std::vector<std::pair<Round, Digest>> ordered;
        for (const auto& id : ids) {
            auto r = round_of(ix, id);
            if (!r) {
                push_unique(rep.lemma3_violations, id);
                continue;
            }
            ordered.emplace_back(*r, id);
        }
        std::sort(ordered.begin(), ordered.end());
        for (std::size_t i = 1; i < ordered.size(); ++i) {
            const auto& [lo_round, lo] = ordered[i - 1];
            const auto& hi = ordered[i].second;
            if (!descends(ix.blocks, hi, lo, lo_round)) push_unique(rep.lemma3_violations, hi);
        }
    }
    return rep;
}

double MetricsReport::mean_latency_ticks() const {
    std::uint64_t count = 0;
    double sum = 0;
    for (const auto& [t, c] : latency_ticks) {
        sum += static_cast<double>(t) * static_cast<double>(c);
        count += c;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

MetricsReport measure(const Trace& t) {
    MetricsReport m;
    const auto& cfg = t.config;
    std::unordered_map<Digest, Tick, DigestHash> proposed_at;
    std::unordered_map<Digest, BlockInfo, DigestHash> blocks;
    std::map<View, std::uint64_t> fb_messages;
    std::optional<Tick> delay;
    bool constant = true;

    for (const auto& r : t.records) {
        if (r.type != RecordType::deliver) continue;
        if (r.block) {
            auto [it, fresh] = proposed_at.emplace(r.block->id, r.sent_at);
            if (!fresh) it->second = std::min(it->second, r.sent_at);
            blocks.emplace(r.block->id, *r.block);
        }
        if (r.from == r.replica) continue;
        ++m.messages_total;
        m.authenticator_units_total += r.units;
        ++m.messages_by_kind[r.kind];
        if (r.kind == MessageKind::timeout) ++m.timeout_messages_total;
        if (r.fallback_view) ++fb_messages[*r.fallback_view];
        const Tick d = r.at - r.sent_at;
        if (!delay) delay = d;
        else if (*delay != d) constant = false;
    }
    if (constant && delay && *delay > 0) m.constant_delay = delay;

    std::unordered_map<Digest, Tick, DigestHash> first_commit;
    std::set<View> committed_fviews;
    for (const auto& r : t.records) {
        if (r.type != RecordType::commit || !cfg.honest(r.replica)) continue;
        for (const auto& id : r.blocks) {
            first_commit.emplace(id, r.at);
            auto b = blocks.find(id);
            if (b != blocks.end() && b->second.fallback()) committed_fviews.insert(b->second.view);
        }
    }
    m.commits_total = first_commit.size();
    if (m.commits_total)
        m.messages_per_commit =
            static_cast<double>(m.messages_total) / static_cast<double>(m.commits_total);
    for (const auto& [id, at] : first_commit) {
        auto p = proposed_at.find(id);
        if (p == proposed_at.end() || p->second > at) continue;
        const Tick lat = at - p->second;
        ++m.latency_ticks[lat];
        if (m.constant_delay) ++m.latency_hops[lat / *m.constant_delay];
    }

    std::set<View> completed;
    for (const auto& r : t.records)
        if (r.type == RecordType::cert && r.cert.kind == CertKind::coin && cfg.honest(r.replica))
            completed.insert(r.cert.view);
    m.fallback_instances = completed.size();
    for (View v : completed) {
        if (committed_fviews.count(v)) ++m.fallback_instances_with_commit;
        m.fallback_messages[v] = fb_messages.count(v) ? fb_messages.at(v) : 0;
    }
    return m;
}

FallbackFrequency fallback_stats(std::span<const MetricsReport> reports) {
    FallbackFrequency f;
    for (const auto& r : reports) {
        f.instances += r.fallback_instances;
        f.with_commit += r.fallback_instances_with_commit;
    }
    if (f.instances == 0) throw AnalysisError(AnalysisError::Code::no_fallbacks, "NoFallbacks");
    f.frequency = static_cast<double>(f.with_commit) / static_cast<double>(f.instances);
    return f;
}

FallbackFrequency fallback_stats(std::span<const Trace> traces) {
    std::vector<MetricsReport> reports;
    reports.reserve(traces.size());
    for (const auto& t : traces) reports.push_back(measure(t));
    return fallback_stats(std::span<const MetricsReport>(reports));
}

LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw AnalysisError(AnalysisError::Code::bad_input, "linear_fit needs >= 2 paired points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0) throw AnalysisError(AnalysisError::Code::bad_input, "linear_fit needs distinct x");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (fit.slope * xs[i] + fit.intercept);
        ss_res += e * e;
    }
    fit.r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
    return fit;
}

ChiSquare chi_square_uniform(std::span<const std::uint64_t> counts) {
    if (counts.size() < 2)
        throw AnalysisError(AnalysisError::Code::bad_input, "chi-square needs >= 2 categories");
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw AnalysisError(AnalysisError::Code::bad_input, "chi-square needs observations");
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    ChiSquare out;
    for (auto c : counts) {
        const double d = static_cast<double>(c) - expected;
        out.statistic += d * d / expected;
    }
    out.dof = counts.size() - 1;
    boost::math::chi_squared dist(static_cast<double>(out.dof));
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
    return out;
}

Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence) {
    if (trials == 0 || successes > trials || confidence <= 0 || confidence >= 1)
        throw AnalysisError(AnalysisError::Code::bad_input, "invalid binomial interval input");
    using boost::math::binomial_distribution;
    const double alpha = (1.0 - confidence) / 2.0;
    const auto n = static_cast<double>(trials);
    const auto k = static_cast<double>(successes);
    Interval iv;
    iv.lo = successes == 0 ? 0.0 : binomial_distribution<>::find_lower_bound_on_p(n, k, alpha);
    iv.hi = successes == trials ? 1.0 : binomial_distribution<>::find_upper_bound_on_p(n, k, alpha);
    return iv;
}

}  // namespace fbft
