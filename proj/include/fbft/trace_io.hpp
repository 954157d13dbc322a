// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited JSON trace format: a header line holding the resolved
// configuration, one line per record, and a closing digest line carrying
// the SHA-256 of all preceding lines.

#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbft/simnet.hpp"

namespace fbft {

class TraceFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::ordered_json config_to_json(const SimConfig& cfg);
/// Throws ConfigError on invalid or unknown fields.
SimConfig config_from_json(const nlohmann::json& j);

/// Header and record lines, without the digest line.
std::vector<std::string> trace_lines(const Trace& t);
Digest lines_digest(const std::vector<std::string>& lines);
Digest trace_digest(const Trace& t);

void write_trace(std::ostream& os, const Trace& t);
void write_trace_file(const std::string& path, const Trace& t);

struct StoredTrace {
    Trace trace;
    std::vector<std::string> lines;  // header and records as stored
    Digest stored_digest;            // from the closing line
};

/// Throws TraceFormatError on malformed input.
StoredTrace read_trace(std::istream& is);
StoredTrace read_trace_file(const std::string& path);

struct ReplayResult {
    bool match = false;
    Digest expected;  // stored digest
    Digest actual;    // digest of the re-executed run
    std::optional<std::size_t> first_mismatch;  // 0-based line index
    std::string reason;
};

/// Re-executes the stored configuration, feeding recorded delivery delays
/// back to the network, and compares every line and the digest.
ReplayResult replay(const StoredTrace& stored);

}  // namespace fbft
