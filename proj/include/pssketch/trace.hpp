#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pssketch/common.hpp"

namespace pss {

struct PacketRecord {
    FlowKey flow = 0;
    std::uint64_t window = 0;

    bool operator==(const PacketRecord&) const = default;
};

/// Stream of records with non-decreasing window indices.
struct WindowedTrace {
    std::vector<PacketRecord> records;
    /// Packets per window when the windows were derived; 0 when they were given.
    std::uint64_t window_size = 0;

    /// Number of windows spanned (last index + 1), 0 for an empty trace.
    std::uint64_t window_count() const {
        return records.empty() ? 0 : records.back().window + 1;
    }
    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

struct FlowStats {
    std::uint64_t frequency = 0;
    std::uint64_t persistence = 0;

    double density() const {
        return persistence == 0 ? 0.0
                                : static_cast<double>(frequency) / static_cast<double>(persistence);
    }
    bool operator==(const FlowStats&) const = default;
};

/// The anomaly boundary: a flow is PS when p >= p0 and f/p <= d0.
struct Criterion {
    std::uint64_t p0 = 50;
    double d0 = 1.2;

    void validate() const;
    bool admits(const FlowStats& s) const;
};

using StatsMap = std::unordered_map<FlowKey, FlowStats>;

WindowedTrace partition_windows(std::span<const FlowKey> events, std::uint64_t window_size);

StatsMap exact_stats(const WindowedTrace& trace);

std::set<FlowKey> answer_set(const StatsMap& stats, const Criterion& criterion);

/// Parses the text trace format. Each non-comment line is `flow_id,window` or
/// `flow_id`; flow ids are decimal, 0x-hex, or any other token (hashed). A
/// file without window columns needs `window_size` > 0.
WindowedTrace read_trace(std::istream& in, std::uint64_t window_size = 0);
WindowedTrace load_trace(const std::string& path, std::uint64_t window_size = 0);

/// Writes `flow_id,window` lines with decimal ids.
void write_trace(std::ostream& out, const WindowedTrace& trace);
void save_trace(const std::string& path, const WindowedTrace& trace);

}  // namespace pss
