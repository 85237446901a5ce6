#pragma once

#include <cstdint>
#include <vector>

#include "pssketch/common.hpp"
#include "pssketch/trace.hpp"

namespace pss {

/// Poisson draw: inversion below 10, Hormann's PTRS rejection above.
std::uint64_t sample_poisson(Rng& rng, double lambda);

struct PlantedGroup {
    double lambda = 0.2;
    std::size_t count = 0;
};

/// Background flows draw their rate from N(lambda_mean, lambda_stddev),
/// redrawn until >= lambda_floor; planted groups use a fixed rate.
struct PopulationModel {
    static constexpr double lambda_floor = 1e-3;

    std::size_t flow_count = 0;
    double lambda_mean = 0.02;
    double lambda_stddev = 0.0;
    std::vector<PlantedGroup> planted;

    void validate() const;
};

struct SyntheticFlow {
    FlowKey key;
    double lambda;
    int group;  // index into PopulationModel::planted, -1 for background
};

struct SyntheticTrace {
    WindowedTrace trace;
    std::vector<SyntheticFlow> flows;
};

/// Every flow is active in every window with i.i.d. Poisson(lambda) counts;
/// records inside a window are shuffled. Deterministic per seed.
SyntheticTrace generate_trace(const PopulationModel& model, std::uint64_t windows, std::uint64_t seed);

struct TheoryStats {
    double e_f, e_p, e_d;
    double var_f, var_p, var_d_bound;
};

/// Closed forms for a Poisson(lambda) flow after i windows.
TheoryStats theory_stats(double lambda, std::uint64_t windows);

/// The same quantities by summing the Poisson pmf until the tail is negligible.
TheoryStats pmf_expectations(double lambda, std::uint64_t windows);

struct MonteCarloStats {
    std::uint64_t trials = 0;
    double mean_f = 0, mean_p = 0, mean_d = 0;
    double se_f = 0, se_p = 0, se_d = 0;
    std::uint64_t undefined_density = 0;  // trials with p = 0
};

MonteCarloStats monte_carlo_stats(double lambda, std::uint64_t windows, std::uint64_t trials, std::uint64_t seed);

struct ConvergencePoint {
    std::uint64_t windows;
    double mse;     // mean of (d_i - E[d])^2
    double stderr_; // standard error of that mean
    std::uint64_t used_trials;
};

struct ConvergenceReport {
    double lambda;
    double target;  // lambda / (1 - e^-lambda)
    double tolerance;
    std::vector<ConvergencePoint> points;
    bool decreasing = false;
    bool final_below_tolerance = false;
    bool pass() const { return decreasing && final_below_tolerance; }
};

/// Mean-square deviation of the density from its expectation on a geometric
/// ladder of window counts (10, 100, ... up to max_windows).
ConvergenceReport validate_convergence(double lambda, std::uint64_t max_windows, std::uint64_t trials,
                                       std::uint64_t seed, double tolerance = 0.05);

struct EjectionReport {
    double lambda;
    std::uint64_t windows;
    std::uint64_t trials;
    std::uint64_t redrawn;  // trials whose post-ejection segment had p = 0
    double mean_diff;       // mean of (d_hat - d)
    double stddev;
    double ci99_low, ci99_high;
    bool pass() const { return ci99_low <= 0.0 && 0.0 <= ci99_high; }
};

/// Simulates ejection at a uniformly drawn window t in {0..i-1}; d_hat counts
/// windows t+1..i only and d counts all i windows.
EjectionReport ejection_experiment(double lambda, std::uint64_t windows, std::uint64_t trials, std::uint64_t seed);

}  // namespace pss
