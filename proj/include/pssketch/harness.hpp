#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pssketch/baselines.hpp"
#include "pssketch/detector.hpp"

namespace pss {

enum class DetectorKind { PSSketch, Exact, Strawman, PiSketch, PiSketchDensity };

const char* to_string(DetectorKind kind);
DetectorKind parse_detector(const std::string& name);  // throws Config
const std::vector<DetectorKind>& all_detectors();

struct MetricsRecord {
    std::string detector;
    std::string config_digest;
    std::uint64_t memory_bits = 0;
    double precision = 0, recall = 0, f1 = 0;
    double are_f = 0, are_p = 0, are_mean = 0;
    std::size_t reported = 0;     // flows the detector exposes (ARE population)
    std::size_t reported_ps = 0;  // subset classified PS
    std::size_t truth = 0;
    std::size_t true_positives = 0;
    double throughput_pps = 0;  // 0 when not measured
    std::string note;
    std::string error;  // set when the cell failed
};

/// Precision and recall over the PS-classified subset of `report`; ARE over
/// every reported flow, separately for f and p against the exact stats.
/// An empty report has precision 0; an empty truth set has recall 1 when the
/// report is also empty and 0 otherwise.
MetricsRecord score(const ReportSet& report, const std::set<FlowKey>& truth, const StatsMap& exact);

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

/// Median packets/second over `repeats` timed passes of the insert loop
/// (new_window calls included), each on a fresh detector, after one untimed
/// warm-up pass.
double measure_throughput(const DetectorFactory& make, const WindowedTrace& trace, unsigned repeats);

struct ExperimentConfig {
    DetectorKind detector = DetectorKind::PSSketch;
    double memory_kb = 100;
    Criterion criterion;
    std::size_t bucket_width = 32;
    WidthConfig widths;
    std::uint64_t seed = 1;
    unsigned repeats = 1;
    bool throughput = true;
    double protection_fraction = 0.1;     // share of the budget given to the PL
    double filter_fraction = 0.25;        // share of PISketch's budget given to its filter
    std::size_t pisketch_cells = 8;
    std::uint32_t pisketch_L = 8;
    std::optional<std::uint32_t> weight_threshold;  // unset: pick the best-F1 threshold

    void validate() const;
    std::string digest() const;
};

constexpr std::uint64_t bits_per_kb = 8 * 1024;

SketchConfig pssketch_config(const ExperimentConfig& config);
StrawmanConfig strawman_config(const ExperimentConfig& config);
PiSketchConfig pisketch_config(const ExperimentConfig& config);
std::unique_ptr<Detector> make_detector(const ExperimentConfig& config);

/// Ground truth computed once per trace.
struct Truth {
    StatsMap exact;
    std::set<FlowKey> ps;
    Criterion criterion;
};

Truth make_truth(const WindowedTrace& trace, const Criterion& criterion);

/// Runs one cell. `dump`, when given, receives the detector's serialized state.
MetricsRecord run_experiment(const ExperimentConfig& config, const WindowedTrace& trace, const Truth& truth,
                             std::string* dump = nullptr);
MetricsRecord run_experiment(const ExperimentConfig& config, const WindowedTrace& trace);

/// Weight threshold with the highest F1 over the weight-ordered cells; ties go
/// to the smallest threshold.
std::uint32_t best_weight_threshold(const PiSketch& sketch, const std::set<FlowKey>& truth);

/// Cells in config order. Accuracy cells run on up to `jobs` threads;
/// throughput is measured afterwards, one cell at a time. A failing cell
/// records its error and the sweep continues.
std::vector<MetricsRecord> sweep(const std::vector<ExperimentConfig>& configs, const WindowedTrace& trace,
                                 unsigned jobs = 1);

struct SweepGrid {
    std::vector<DetectorKind> detectors{DetectorKind::PSSketch};
    std::vector<double> memory_kb{100};
    std::vector<std::uint64_t> p0{50};
    std::vector<double> d0{1.2};
    std::vector<std::size_t> bucket_width{32};
};

/// Cartesian product, memory outermost, detector innermost.
std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& base, const SweepGrid& grid);

struct HistogramBin {
    double low, high;  // [low, high)
    std::uint64_t count;
};

struct DistributionReport {
    std::vector<HistogramBin> persistence;  // power-of-two bins
    std::vector<HistogramBin> density;      // flows with p >= 2
    std::uint64_t flows = 0;
};

DistributionReport distribution_report(const WindowedTrace& trace);

std::string metrics_csv_header();
std::string metrics_csv_row(const ExperimentConfig& config, const MetricsRecord& m);
std::string histogram_csv(const std::vector<HistogramBin>& bins);

}  // namespace pss
