// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc checks and metrics over simulator traces, plus the small
// statistics helpers used by sweeps.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbft/simnet.hpp"

namespace fbft {

class AnalysisError : public std::runtime_error {
public:
    enum class Code { malformed_trace, no_fallbacks, bad_input };
    AnalysisError(Code c, const std::string& what) : std::runtime_error(what), code_(c) {}
    Code code() const { return code_; }

private:
    Code code_;
};

struct SafetyReport {
    struct Divergence {
        ReplicaId first = 0;
        ReplicaId second = 0;
        std::size_t height = 0;  // 0-based log position
    };

    bool prefix_consistent = true;
    std::vector<Digest> lemma1_violations;
    std::vector<Digest> lemma2_violations;
    std::vector<Digest> lemma3_violations;
    std::optional<Divergence> first_divergence;
    std::vector<std::string> notes;

    bool ok() const {
        return prefix_consistent && lemma1_violations.empty() && lemma2_violations.empty() &&
               lemma3_violations.empty();
    }
};

/// Pure and deterministic. Throws AnalysisError(malformed_trace).
SafetyReport check_safety(const Trace& trace);

struct MetricsReport {
    std::uint64_t commits_total = 0;
    std::uint64_t messages_total = 0;
    std::uint64_t authenticator_units_total = 0;
    double messages_per_commit = 0.0;
    std::map<Tick, std::uint64_t> latency_ticks;  // histogram
    std::map<Tick, std::uint64_t> latency_hops;   // only with constant delay
    std::optional<Tick> constant_delay;
    std::uint64_t fallback_instances = 0;
    std::uint64_t fallback_instances_with_commit = 0;
    std::uint64_t timeout_messages_total = 0;
    std::map<View, std::uint64_t> fallback_messages;  // per completed instance
    std::map<MessageKind, std::uint64_t> messages_by_kind;

    double mean_latency_ticks() const;
};

/// Messages are deliveries between distinct replicas. A block decision is
/// one distinct block committed by some honest replica.
MetricsReport measure(const Trace& trace);

struct FallbackFrequency {
    std::uint64_t instances = 0;
    std::uint64_t with_commit = 0;
    double frequency = 0.0;
};

/// Fraction of completed fallback instances after which an honest replica
/// committed a block proposed within that instance. Throws
/// AnalysisError(no_fallbacks) when there are none.
FallbackFrequency fallback_stats(std::span<const Trace> traces);
FallbackFrequency fallback_stats(std::span<const MetricsReport> reports);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares of y on x. Needs at least two distinct x values.
LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys);

struct ChiSquare {
    double statistic = 0.0;
    std::size_t dof = 0;
    double p_value = 0.0;
};

/// Goodness of fit of observed counts against the uniform distribution.
ChiSquare chi_square_uniform(std::span<const std::uint64_t> counts);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

}  // namespace fbft
