#include "pssketch/baselines.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace pss {

namespace {

std::vector<std::uint64_t> row_seeds(std::uint64_t master, std::size_t rows) {
    std::vector<std::uint64_t> seeds(rows);
    for (std::size_t r = 0; r < rows; ++r) seeds[r] = derive_seed(master, r);
    return seeds;
}

std::uint32_t saturation(unsigned width) {
    return width >= 32 ? 0xffffffffu : (1u << width) - 1;
}

}  // namespace

void CmSketchConfig::validate() const {
    if (rows < 1 || cols < 1) fail(ErrorCode::Config, "sketch rows and cols must be >= 1");
    if (counter_width < 1 || counter_width > 32) fail(ErrorCode::Config, "counter width must be in [1,32]");
}

// ---------------------------------------------------------------------------

CmSketch::CmSketch(const CmSketchConfig& config)
    : config_(config), row_seeds_(row_seeds(config.seed, config.rows)) {
    config_.validate();
    counters_.assign(config_.rows * config_.cols, 0);
    max_ = saturation(config_.counter_width);
}

std::size_t CmSketch::index(std::size_t row, FlowKey e) const {
    return row * config_.cols + hash64(e, row_seeds_[row]) % config_.cols;
}

void CmSketch::insert(FlowKey e) {
    for (std::size_t r = 0; r < config_.rows; ++r) {
        auto& c = counters_[index(r, e)];
        if (c < max_) ++c;
    }
}

std::uint64_t CmSketch::query(FlowKey e) const {
    std::uint32_t m = max_;
    for (std::size_t r = 0; r < config_.rows; ++r) m = std::min(m, counters_[index(r, e)]);
    return m;
}

// ---------------------------------------------------------------------------

OnOffSketch::OnOffSketch(const OoSketchConfig& config)
    : config_(config), row_seeds_(row_seeds(config.seed, config.rows)) {
    config_.validate();
    counters_.assign(config_.rows * config_.cols, 0);
    on_.assign(config_.rows * config_.cols, 0);
    max_ = saturation(config_.counter_width);
}

std::size_t OnOffSketch::index(std::size_t row, FlowKey e) const {
    return row * config_.cols + hash64(e, row_seeds_[row]) % config_.cols;
}

void OnOffSketch::new_window() { std::fill(on_.begin(), on_.end(), 0); }

void OnOffSketch::insert(FlowKey e) {
    for (std::size_t r = 0; r < config_.rows; ++r) {
        const auto i = index(r, e);
        if (on_[i]) continue;
        on_[i] = 1;
        if (counters_[i] < max_) ++counters_[i];
    }
}

std::uint64_t OnOffSketch::query(FlowKey e) const {
    std::uint32_t m = max_;
    for (std::size_t r = 0; r < config_.rows; ++r) m = std::min(m, counters_[index(r, e)]);
    return m;
}

// ---------------------------------------------------------------------------

StrawmanDetector::StrawmanDetector(const StrawmanConfig& config)
    : config_(config), cms_(config.cms), oos_(config.oos) {
    config_.criterion.validate();
    if (config_.candidate_capacity < 1) fail(ErrorCode::Config, "candidate capacity must be >= 1");
    candidates_.reserve(config_.candidate_capacity);
}

void StrawmanDetector::insert(FlowKey e) {
    cms_.insert(e);
    oos_.insert(e);
    if (candidate_index_.count(e) || oos_.query(e) < config_.criterion.p0) return;
    if (candidates_.size() >= config_.candidate_capacity) {
        ++dropped_;
        return;
    }
    candidates_.push_back(e);
    candidate_index_.insert(e);
}

ReportSet StrawmanDetector::query() const {
    ReportSet rs;
    rs.flows.reserve(candidates_.size());
    for (FlowKey e : candidates_) {
        FlowStats s{cms_.query(e), oos_.query(e)};
        rs.flows.push_back({e, s, config_.criterion.admits(s)});
    }
    rs.sort();
    return rs;
}

std::uint64_t StrawmanDetector::memory_bits() const {
    return cms_.memory_bits() + oos_.memory_bits() + config_.candidate_capacity * candidate_bits;
}

std::string StrawmanDetector::dump() const {
    std::ostringstream os;
    os << "strawman candidates=" << candidates_.size() << " dropped=" << dropped_ << '\n';
    for (const auto& f : query().flows) {
        os << "CAND id=" << f.key << " f=" << f.stats.frequency << " p=" << f.stats.persistence << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------

void PiSketchConfig::validate() const {
    if (buckets < 1 || bucket_cells < 1) fail(ErrorCode::Config, "PISketch buckets and cells must be >= 1");
    if (L <= 1) fail(ErrorCode::Config, "PISketch weight increment L must be > 1");
    auto ok = [](unsigned w) { return w >= 1 && w <= 32; };
    if (!ok(weight_width) || !ok(freq_width) || !ok(pers_width)) {
        fail(ErrorCode::Config, "PISketch counter widths must be in [1,32]");
    }
    if (filter_bits < 64 || filter_hashes < 1) fail(ErrorCode::Config, "PISketch filter too small");
}

PiSketch::PiSketch(const PiSketchConfig& config) : config_(config) {
    config_.validate();
    cells_.assign(config_.buckets * config_.bucket_cells, Cell{});
    filter_.assign((config_.filter_bits + 63) / 64, 0);
    weight_max_ = saturation(config_.weight_width);
    freq_max_ = saturation(config_.freq_width);
    pers_max_ = saturation(config_.pers_width);
}

void PiSketch::new_window() { std::fill(filter_.begin(), filter_.end(), 0); }

bool PiSketch::filter_test_and_set(FlowKey e) {
    bool present = true;
    const auto h = hash64(e, derive_seed(config_.seed, 1000));
    const auto h1 = h & 0xffffffffULL;
    const auto h2 = (h >> 32) | 1;
    for (unsigned k = 0; k < config_.filter_hashes; ++k) {
        const auto bit = (h1 + k * h2) % config_.filter_bits;
        auto& word = filter_[bit >> 6];
        const auto mask = std::uint64_t{1} << (bit & 63);
        if (!(word & mask)) {
            present = false;
            word |= mask;
        }
    }
    return present;
}

void PiSketch::insert(FlowKey e) {
    const bool repeat = filter_test_and_set(e);
    const std::size_t bucket = hash64(e, config_.seed) % config_.buckets;
    Cell* first = &cells_[bucket * config_.bucket_cells];
    Cell* last = first + config_.bucket_cells;

    Cell* free_cell = nullptr;
    Cell* min_cell = nullptr;
    for (Cell* c = first; c != last; ++c) {
        if (c->live() && c->id == e) {
            if (c->frequency < freq_max_) ++c->frequency;
            if (!repeat) {
                c->weight = c->weight > weight_max_ - config_.L ? weight_max_ : c->weight + config_.L;
                if (c->persistence < pers_max_) ++c->persistence;
            } else if (--c->weight == 0) {
                *c = Cell{};
            }
            return;
        }
        if (!c->live()) {
            if (!free_cell) free_cell = c;
        } else if (!min_cell || c->weight < min_cell->weight) {
            min_cell = c;
        }
    }
    // repeat occurrence of a flow not held: ignored
    if (repeat) return;
    const Cell fresh{e, config_.L, 1, 1};
    if (free_cell) {
        *free_cell = fresh;
        return;
    }
    if (--min_cell->weight == 0) *min_cell = fresh;
}

ReportSet PiSketch::query_weight(std::uint32_t threshold) const {
    ReportSet rs;
    for (const auto& c : cells_) {
        if (c.live() && c.weight >= threshold) rs.flows.push_back({c.id, {c.frequency, c.persistence}, true});
    }
    rs.sort();
    return rs;
}

ReportSet PiSketch::query_density(const Criterion& criterion) const {
    ReportSet rs;
    for (const auto& c : cells_) {
        if (!c.live() || c.persistence < criterion.p0) continue;
        FlowStats s{c.frequency, c.persistence};
        rs.flows.push_back({c.id, s, criterion.admits(s)});
    }
    rs.sort();
    return rs;
}

std::string PiSketch::dump() const {
    std::ostringstream os;
    os << "pisketch buckets=" << config_.buckets << " cells=" << config_.bucket_cells << " L=" << config_.L << '\n';
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const auto& c = cells_[i];
        if (!c.live()) continue;
        os << "CELL " << i / config_.bucket_cells << ' ' << i % config_.bucket_cells << " id=" << c.id
           << " w=" << c.weight << " f=" << c.frequency << " p=" << c.persistence << '\n';
    }
    return os.str();
}

ReportSet PiSketchDetector::query() const {
    return mode_ == Mode::Weight ? sketch_.query_weight(weight_threshold_) : sketch_.query_density(criterion_);
}

// ---------------------------------------------------------------------------

std::uint64_t pisketch_space(std::uint64_t cells, std::uint32_t L, const WidthConfig& w, unsigned id_bits) {
    if (L <= 1) fail(ErrorCode::Config, "PISketch weight increment L must be > 1");
    const std::uint64_t log2_l = std::bit_width(L - 1);  // ceil(log2 L)
    return cells * (id_bits + log2_l * (w.freq_overflow_bits + w.freq_bits) +
                    (w.pers_overflow_bits + w.pers_bits));
}

std::uint64_t pisketch_equal_space_max_persistence(const WidthConfig& w) {
    return (std::uint64_t{1} << w.pers_bits) - 1;
}

}  // namespace pss
