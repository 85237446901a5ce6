#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "pssketch/common.hpp"
#include "pssketch/trace.hpp"

namespace pss {

/// Bit widths of the Competition Layer and Protection Layer fields.
struct WidthConfig {
    static constexpr unsigned flag_bits = 2;
    static constexpr unsigned id_bits = 64;

    unsigned fingerprint_bits = 16;
    unsigned freq_bits = 8;
    unsigned pers_bits = 6;
    unsigned freq_overflow_bits = 8;
    unsigned pers_overflow_bits = 8;
    /// Value at which the CL persistence counter overflows; 0 selects 2^pers_bits.
    std::uint32_t pers_overflow_threshold = 0;

    std::uint32_t freq_limit() const { return 1u << freq_bits; }
    std::uint32_t pers_limit() const {
        return pers_overflow_threshold == 0 ? (1u << pers_bits) : pers_overflow_threshold;
    }
    std::uint32_t freq_overflow_max() const { return (1u << freq_overflow_bits) - 1; }
    std::uint32_t pers_overflow_max() const { return (1u << pers_overflow_bits) - 1; }

    void validate() const;
};

struct SketchConfig {
    std::size_t buckets = 1000;       // X
    std::size_t bucket_width = 32;    // Y
    std::size_t protection_capacity = 500;  // R
    WidthConfig widths;
    Criterion criterion;
    std::uint64_t hash_seed = 0x5eed;
    std::uint64_t rng_seed = 0x5eed5eed;
    bool burst_elimination = true;
    bool prune = true;

    void validate() const;
};

/// Total bits of both layers: XY(L_fp+L_f+L_p+2) + R(64+L_fof+L_pof).
std::uint64_t memory_bits(const SketchConfig& config);

struct StorableMax {
    std::uint64_t frequency;
    std::uint64_t persistence;
};
StorableMax max_storable(const WidthConfig& widths);

/// Full value from an overflow count and the residual CL counter.
FlowStats reconstruct(std::uint64_t f_of, std::uint64_t f_cl, std::uint64_t p_of, std::uint64_t p_cl,
                      const WidthConfig& widths);

enum class InsertOutcome { Updated, Created, Replaced, Dropped, Eliminated, Protected, Pruned };
enum class ReportOutcome { Created, Updated, EvictedOther, PrunedSelf, Saturated, BurstCapped };
enum class Overflow { Frequency, Persistence };

const char* to_string(InsertOutcome o);

/// Unpacked view of one CL entry.
struct CompetitionEntry {
    std::uint32_t fp = 0;
    std::uint32_t f = 0;
    std::uint32_t p = 0;
    bool seen = false;       // flag W
    bool protected_ = false; // flag OF

    bool empty() const { return fp == 0; }
    bool operator==(const CompetitionEntry&) const = default;
};

struct ProtectionEntry {
    FlowKey id = 0;
    std::uint32_t f_of = 0;
    std::uint32_t p_of = 1;
    /// f_of increments granted in the current window (burst elimination).
    std::uint32_t window_fof_increments = 0;
    /// Global CL slot (bucket * Y + slot) holding this flow's residual counters.
    std::size_t slot = 0;

    bool operator==(const ProtectionEntry&) const = default;
};

/// Result of scanning one bucket: slot holding the fingerprint, first empty
/// slot, and the unprotected slot with minimum p (lowest index on ties).
/// -1 means none.
struct BucketScan {
    int match = -1;
    int first_empty = -1;
    int min_slot = -1;
    int min_p = -1;

    bool operator==(const BucketScan&) const = default;
};

struct ReportedFlow {
    FlowKey key = 0;
    FlowStats stats;
    bool ps = false;
};

/// Flows a detector exposes as persistent, sorted by key; `ps` marks the
/// subset it classifies persistent-and-sparse.
struct ReportSet {
    std::vector<ReportedFlow> flows;

    std::set<FlowKey> ps_keys() const;
    const ReportedFlow* find(FlowKey key) const;
    void sort();
};

struct SketchEvent {
    enum class Kind { Eliminated, Protected, Pruned, Evicted, Saturated };
    Kind kind;
    FlowKey key;   // PL id, or 0 for Eliminated (CL holds no id)
    FlowStats stats;  // reconstructed at the moment of the event
    std::size_t slot;
};

/// Two-layer sketch for persistent-and-sparse flows. Single writer; const
/// members may be called concurrently on a quiescent instance.
class PSSketch {
public:
    explicit PSSketch(const SketchConfig& config);

    const SketchConfig& config() const { return config_; }
    std::uint64_t window() const { return window_; }

    void new_window();
    InsertOutcome insert(FlowKey e);
    ReportSet query() const;

    std::size_t bucket_of(FlowKey e) const;
    std::uint32_t fingerprint_of(FlowKey e) const;

    CompetitionEntry entry(std::size_t bucket, std::size_t slot) const;
    const ProtectionEntry* protection(FlowKey id) const;
    std::size_t protected_count() const { return protection_.size(); }
    const std::map<FlowKey, FlowStats>& retired() const { return retired_; }

    /// Single-pass scan using the Ep/Rp/MinP bookkeeping.
    BucketScan scan(std::size_t bucket, std::uint32_t fp) const;
    /// Reference three-pass scan; same result as scan().
    BucketScan scan_three_pass(std::size_t bucket, std::uint32_t fp) const;

    /// Deterministic text rendering of all non-empty CL entries and PL entries.
    std::string dump() const;

    /// Throws Error(Internal) describing the first violated structural invariant.
    void check_invariants() const;

    void set_observer(std::function<void(const SketchEvent&)> observer) {
        observer_ = std::move(observer);
    }

    bool operator==(const PSSketch& other) const;

private:
    struct Layout {
        unsigned f_shift, p_shift, w_shift, of_shift;
        std::uint64_t fp_mask, f_mask, p_mask;
    };

    std::uint64_t& word(std::size_t slot) { return cells_[slot]; }
    std::uint64_t word(std::size_t slot) const { return cells_[slot]; }
    CompetitionEntry unpack(std::uint64_t w) const;
    std::uint64_t pack(const CompetitionEntry& e) const;

    InsertOutcome update_entry(FlowKey e, std::size_t slot);
    InsertOutcome contend(std::size_t bucket, const BucketScan& scan, std::uint32_t fp);
    ReportOutcome protect(FlowKey e, std::size_t slot, Overflow which);
    void remove_protected(FlowKey id);
    FlowStats stats_of(const ProtectionEntry& pe) const;
    void emit(SketchEvent::Kind kind, FlowKey key, const FlowStats& stats, std::size_t slot);

    SketchConfig config_;
    Layout layout_;
    std::vector<std::uint64_t> cells_;
    std::unordered_map<FlowKey, ProtectionEntry> protection_;
    std::unordered_map<std::size_t, FlowKey> owner_;  // CL slot -> PL id
    std::map<FlowKey, FlowStats> retired_;            // removed on PL counter saturation
    Rng rng_;
    std::uint64_t window_ = 0;
    std::function<void(const SketchEvent&)> observer_;
};

}  // namespace pss
