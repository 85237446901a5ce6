#pragma once

#include <string>
#include <vector>

#include "pssketch/harness.hpp"
#include "pssketch/synth.hpp"

namespace pss {

// JSON parsing and rendering. Parsers reject unknown keys and mistyped values
// with Error(Config).

ExperimentConfig experiment_from_json(const std::string& text);
std::string experiment_to_json(const ExperimentConfig& config);

struct SweepSpec {
    ExperimentConfig base;
    SweepGrid grid;
};
SweepSpec sweep_from_json(const std::string& text);

struct SynthSpec {
    PopulationModel model;
    std::uint64_t windows = 100;
};
/// Accepts a bare model object or a sidecar written by synth_sidecar_json.
SynthSpec synth_from_json(const std::string& text);

struct TheoryParams {
    double lambda = 1.0;
    std::uint64_t windows = 100;
    std::uint64_t trials = 10000;
    std::uint64_t ejection_trials = 100000;
    std::uint64_t max_windows = 1000;
    double tolerance = 0.05;
    std::uint64_t seed = 1;
};
TheoryParams theory_from_json(const std::string& text);

/// {"config", "metrics", "metadata"} for one cell.
std::string metrics_json(const ExperimentConfig& config, const MetricsRecord& m);
/// {"rows": [...], "metadata"} for a sweep.
std::string sweep_json(const std::vector<ExperimentConfig>& configs, const std::vector<MetricsRecord>& rows);

/// Ground truth of a generated trace: the model and every planted flow with
/// its rate and exact stats.
std::string synth_sidecar_json(const SynthSpec& spec, std::uint64_t seed, const SyntheticTrace& trace);

struct TheoryReport {
    std::string json;
    bool pass = false;
};

/// Runs every model check (closed form vs. pmf sums, Monte Carlo agreement,
/// density convergence, ejection unbiasedness) and renders the report.
TheoryReport run_theory_checks(const TheoryParams& params);

}  // namespace pss
