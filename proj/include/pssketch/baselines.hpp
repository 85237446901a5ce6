#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "pssketch/detector.hpp"

namespace pss {

struct CmSketchConfig {
    std::size_t rows = 3;
    std::size_t cols = 1024;
    unsigned counter_width = 16;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Count-Min: one counter per row, query is the row minimum. Counters clamp at
/// 2^counter_width - 1.
class CmSketch {
public:
    explicit CmSketch(const CmSketchConfig& config);

    void insert(FlowKey e);
    std::uint64_t query(FlowKey e) const;
    std::uint64_t memory_bits() const { return config_.rows * config_.cols * config_.counter_width; }
    const CmSketchConfig& config() const { return config_; }

private:
    std::size_t index(std::size_t row, FlowKey e) const;

    CmSketchConfig config_;
    std::vector<std::uint64_t> row_seeds_;
    std::vector<std::uint32_t> counters_;
    std::uint32_t max_;
};

using OoSketchConfig = CmSketchConfig;

/// On-off sketch: each counter carries a switch so it advances at most once
/// per window.
class OnOffSketch {
public:
    explicit OnOffSketch(const OoSketchConfig& config);

    void new_window();
    void insert(FlowKey e);
    std::uint64_t query(FlowKey e) const;
    std::uint64_t memory_bits() const { return config_.rows * config_.cols * (config_.counter_width + 1); }

private:
    std::size_t index(std::size_t row, FlowKey e) const;

    OoSketchConfig config_;
    std::vector<std::uint64_t> row_seeds_;
    std::vector<std::uint32_t> counters_;
    std::vector<std::uint8_t> on_;
    std::uint32_t max_;
};

struct StrawmanConfig {
    CmSketchConfig cms;
    OoSketchConfig oos;
    std::size_t candidate_capacity = 1024;
    Criterion criterion;
};

/// CMSketch for frequency, OOSketch for persistence, plus an array of candidate
/// ids admitted when their persistence estimate first reaches p0.
class StrawmanDetector final : public Detector {
public:
    static constexpr unsigned candidate_bits = 64;

    explicit StrawmanDetector(const StrawmanConfig& config);

    std::string_view name() const override { return "strawman"; }
    void new_window() override { oos_.new_window(); }
    void insert(FlowKey e) override;
    ReportSet query() const override;
    std::uint64_t memory_bits() const override;
    std::string dump() const override;

    std::uint64_t dropped_candidates() const { return dropped_; }
    const CmSketch& cms() const { return cms_; }
    const OnOffSketch& oos() const { return oos_; }

private:
    StrawmanConfig config_;
    CmSketch cms_;
    OnOffSketch oos_;
    std::vector<FlowKey> candidates_;
    std::unordered_set<FlowKey> candidate_index_;
    std::uint64_t dropped_ = 0;
};

struct PiSketchConfig {
    std::size_t buckets = 256;
    std::size_t bucket_cells = 8;
    std::uint32_t L = 8;
    unsigned weight_width = 16;
    unsigned freq_width = 16;
    unsigned pers_width = 16;
    unsigned id_bits = 64;
    std::size_t filter_bits = 1 << 15;
    unsigned filter_hashes = 3;
    std::uint64_t seed = 7;

    void validate() const;
    std::uint64_t cell_bits() const { return id_bits + weight_width + freq_width + pers_width; }
};

/// Weight-based persistent-infrequent sketch with a per-window Bloom filter.
/// First occurrence in a window adds L to the weight, later ones subtract 1;
/// a cell whose weight reaches 0 is freed. A miss on a full bucket decrements
/// the minimum-weight cell and takes it over when that weight reaches 0.
class PiSketch {
public:
    struct Cell {
        FlowKey id = 0;
        std::uint32_t weight = 0;  // 0 means free
        std::uint32_t frequency = 0;
        std::uint32_t persistence = 0;

        bool live() const { return weight > 0; }
        bool operator==(const Cell&) const = default;
    };

    explicit PiSketch(const PiSketchConfig& config);

    void new_window();
    void insert(FlowKey e);

    const std::vector<Cell>& cells() const { return cells_; }
    const PiSketchConfig& config() const { return config_; }
    std::uint64_t memory_bits() const { return cells_.size() * config_.cell_bits() + config_.filter_bits; }

    /// Cells with weight >= threshold (all reported as PS).
    ReportSet query_weight(std::uint32_t threshold) const;
    /// Cells with tracked p >= p0; PS when tracked f/p <= d0.
    ReportSet query_density(const Criterion& criterion) const;

    std::string dump() const;
    bool operator==(const PiSketch& o) const { return cells_ == o.cells_ && filter_ == o.filter_; }

private:
    bool filter_test_and_set(FlowKey e);

    PiSketchConfig config_;
    std::vector<Cell> cells_;
    std::vector<std::uint64_t> filter_;
    std::uint32_t weight_max_, freq_max_, pers_max_;
};

class PiSketchDetector final : public Detector {
public:
    enum class Mode { Weight, Density };

    PiSketchDetector(const PiSketchConfig& config, Mode mode, const Criterion& criterion,
                     std::uint32_t weight_threshold = 0)
        : sketch_(config), mode_(mode), criterion_(criterion), weight_threshold_(weight_threshold) {}

    std::string_view name() const override { return mode_ == Mode::Weight ? "pisketch" : "pisketch-density"; }
    void new_window() override { sketch_.new_window(); }
    void insert(FlowKey e) override { sketch_.insert(e); }
    ReportSet query() const override;
    std::uint64_t memory_bits() const override { return sketch_.memory_bits(); }
    std::string dump() const override { return sketch_.dump(); }

    const PiSketch& sketch() const { return sketch_; }
    Mode mode() const { return mode_; }
    void set_weight_threshold(std::uint32_t t) { weight_threshold_ = t; }

private:
    PiSketch sketch_;
    Mode mode_;
    Criterion criterion_;
    std::uint32_t weight_threshold_;
};

/// Weight-sketch bits PISketch needs to store the same maximum f and p as a
/// PSSketch with the given widths: XY(L_id + log2(L)(L_fof+L_f) + (L_pof+L_p)).
/// log2(L) is rounded up for non-powers of two. Requires L > 1.
std::uint64_t pisketch_space(std::uint64_t cells, std::uint32_t L, const WidthConfig& widths,
                             unsigned id_bits = WidthConfig::id_bits);

/// Maximum persistence PISketch can hold when its weight sketch takes the same
/// space as the Competition Layer: 2^L_p - 1.
std::uint64_t pisketch_equal_space_max_persistence(const WidthConfig& widths);

}  // namespace pss
