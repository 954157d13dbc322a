// SPDX-License-Identifier: Apache-2.0
//
// Scenario files and run reports for the command-line harness.
//
// Scenario files are INI:
//
//   [protocol]  n f variant pacemaker timeout_duration
//               leader_rotation_period adopt_foreign_fchains
//   [network]   model delta gst pre_gst_delay_bound default_min default_max
//               delay_<message kind> = min:max   revealed_leader_delay = min:max
//   [faults]    replica_<i> = honest | crash@T | mute | equivocate
//   [run]       horizon seed seeds=a..b out
//   [test]      inject_double_commit
//
// Unknown sections or keys are rejected.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fbft/analysis.hpp"
#include "fbft/simnet.hpp"

namespace fbft {

struct Scenario {
    SimConfig sim;
    std::optional<std::vector<std::uint64_t>> seeds;  // from seeds=a..b
    std::string out;
};

/// Throws ConfigError on syntax errors, unknown keys or invalid values.
Scenario parse_scenario(std::istream& is);
Scenario parse_scenario_file(const std::string& path);

/// "a..b" inclusive, or a single seed. Empty when b < a.
std::vector<std::uint64_t> parse_seed_range(const std::string& s);

struct RunOutcome {
    Trace trace;
    SafetyReport safety;
    MetricsReport metrics;
    Digest digest;
};

RunOutcome run_scenario(const SimConfig& cfg);

/// key=value report lines followed by one summary_json line. Deterministic.
std::string format_report(const RunOutcome& run);

struct SweepPoint {
    std::uint32_t n = 0;
    std::uint64_t seed = 0;
    bool safe = true;
    std::string error;
    MetricsReport metrics;
    Digest digest;
};

/// Aggregate table and fit statistics. Deterministic.
std::string format_sweep(const std::vector<SweepPoint>& points);

}  // namespace fbft
