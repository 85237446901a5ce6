#include "pssketch/synth.hpp"

#include <cmath>
#include <unordered_set>

namespace pss {

namespace {

std::uint64_t poisson_inversion(Rng& rng, double lambda, double exp_neg) {
    double u = rng.uniform();
    std::uint64_t k = 0;
    double p = exp_neg;
    double cdf = p;
    while (u > cdf && k < 1000) {
        ++k;
        p *= lambda / static_cast<double>(k);
        cdf += p;
    }
    return k;
}

std::uint64_t poisson_ptrs(Rng& rng, double lambda) {
    const double slam = std::sqrt(lambda);
    const double loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2);
    for (;;) {
        const double u = rng.uniform() - 0.5;
        const double v = rng.uniform();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2 * a / us + b) * u + lambda + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
            -lambda + k * loglam - std::lgamma(k + 1)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

void require_positive(double lambda, std::uint64_t windows) {
    if (!(lambda > 0) || !std::isfinite(lambda)) fail(ErrorCode::InvalidArgument, "lambda must be > 0");
    if (windows < 1) fail(ErrorCode::InvalidArgument, "window count must be >= 1");
}

/// Counts of one simulated flow over `windows` windows.
struct Path {
    std::uint64_t f = 0, p = 0;
};

}  // namespace

std::uint64_t sample_poisson(Rng& rng, double lambda) {
    if (lambda <= 0) return 0;
    if (lambda < 10) return poisson_inversion(rng, lambda, std::exp(-lambda));
    return poisson_ptrs(rng, lambda);
}

void PopulationModel::validate() const {
    if (!(lambda_mean > 0)) fail(ErrorCode::Config, "background lambda mean must be > 0");
    if (!(lambda_stddev >= 0)) fail(ErrorCode::Config, "background lambda stddev must be >= 0");
    for (const auto& g : planted) {
        if (!(g.lambda > 0)) fail(ErrorCode::Config, "planted lambda must be > 0");
    }
}

SyntheticTrace generate_trace(const PopulationModel& model, std::uint64_t windows, std::uint64_t seed) {
    model.validate();
    Rng rng(derive_seed(seed, 0));
    SyntheticTrace out;

    std::unordered_set<FlowKey> used;
    std::uint64_t key_counter = 0;
    auto fresh_key = [&] {
        FlowKey k;
        do {
            k = derive_seed(seed ^ 0xf10f10f10f10ULL, key_counter++);
        } while (!used.insert(k).second);
        return k;
    };
    for (std::size_t i = 0; i < model.flow_count; ++i) {
        double lambda;
        do {
            lambda = model.lambda_mean + model.lambda_stddev * rng.normal();
        } while (lambda < PopulationModel::lambda_floor);
        out.flows.push_back({fresh_key(), lambda, -1});
    }
    for (std::size_t g = 0; g < model.planted.size(); ++g) {
        for (std::size_t i = 0; i < model.planted[g].count; ++i) {
            out.flows.push_back({fresh_key(), model.planted[g].lambda, static_cast<int>(g)});
        }
    }

    std::vector<double> exp_neg(out.flows.size());
    for (std::size_t i = 0; i < out.flows.size(); ++i) exp_neg[i] = std::exp(-out.flows[i].lambda);

    auto& records = out.trace.records;
    for (std::uint64_t w = 0; w < windows; ++w) {
        const std::size_t start = records.size();
        for (std::size_t i = 0; i < out.flows.size(); ++i) {
            const double lambda = out.flows[i].lambda;
            const auto n = lambda < 10 ? poisson_inversion(rng, lambda, exp_neg[i]) : poisson_ptrs(rng, lambda);
            for (std::uint64_t k = 0; k < n; ++k) records.push_back({out.flows[i].key, w});
        }
        for (std::size_t i = records.size() - start; i > 1; --i) {
            const auto j = rng.below(i);
            std::swap(records[start + i - 1], records[start + j]);
        }
    }
    return out;
}

TheoryStats theory_stats(double lambda, std::uint64_t windows) {
    require_positive(lambda, windows);
    const double i = static_cast<double>(windows);
    const double q = -std::expm1(-lambda);  // 1 - e^-lambda
    const double e0 = std::exp(-lambda);
    TheoryStats t;
    t.e_f = i * lambda;
    t.e_p = i * q;
    t.e_d = lambda / q;
    t.var_f = i * lambda;
    t.var_p = i * e0 * q;
    t.var_d_bound = lambda * lambda / (q * q) + (lambda + lambda * lambda) / q;
    return t;
}

TheoryStats pmf_expectations(double lambda, std::uint64_t windows) {
    require_positive(lambda, windows);
    const double i = static_cast<double>(windows);
    double pmf = std::exp(-lambda);
    const double p0 = pmf;
    double mass_pos = 0, m1 = 0, m2 = 0;
    for (std::uint64_t k = 1; k < 10000; ++k) {
        pmf *= lambda / static_cast<double>(k);
        const double kd = static_cast<double>(k);
        mass_pos += pmf;
        m1 += kd * pmf;
        m2 += kd * kd * pmf;
        if (kd > lambda && pmf * kd * kd < 1e-300) break;
    }
    TheoryStats t;
    t.e_f = i * m1;
    t.e_p = i * mass_pos;
    t.e_d = m1 / mass_pos;
    t.var_f = i * (m2 - m1 * m1);
    t.var_p = i * p0 * mass_pos;
    t.var_d_bound = t.e_d * t.e_d + m2 / mass_pos;
    return t;
}

MonteCarloStats monte_carlo_stats(double lambda, std::uint64_t windows, std::uint64_t trials, std::uint64_t seed) {
    require_positive(lambda, windows);
    if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be >= 1");
    Rng rng(seed);
    double sf = 0, sf2 = 0, sp = 0, sp2 = 0, sd = 0, sd2 = 0;
    std::uint64_t nd = 0;
    MonteCarloStats m;
    m.trials = trials;
    for (std::uint64_t t = 0; t < trials; ++t) {
        Path path;
        for (std::uint64_t w = 0; w < windows; ++w) {
            const auto n = sample_poisson(rng, lambda);
            path.f += n;
            path.p += n > 0;
        }
        const double f = static_cast<double>(path.f), p = static_cast<double>(path.p);
        sf += f;
        sf2 += f * f;
        sp += p;
        sp2 += p * p;
        if (path.p == 0) {
            ++m.undefined_density;
            continue;
        }
        const double d = f / p;
        sd += d;
        sd2 += d * d;
        ++nd;
    }
    auto finish = [](double s, double s2, std::uint64_t n, double& mean, double& se) {
        if (n == 0) return;
        const double dn = static_cast<double>(n);
        mean = s / dn;
        const double var = n > 1 ? (s2 - dn * mean * mean) / (dn - 1) : 0.0;
        se = std::sqrt(std::max(var, 0.0) / dn);
    };
    finish(sf, sf2, trials, m.mean_f, m.se_f);
    finish(sp, sp2, trials, m.mean_p, m.se_p);
    finish(sd, sd2, nd, m.mean_d, m.se_d);
    return m;
}

ConvergenceReport validate_convergence(double lambda, std::uint64_t max_windows, std::uint64_t trials,
                                       std::uint64_t seed, double tolerance) {
    if (!(lambda >= 0.01)) fail(ErrorCode::InvalidArgument, "convergence check needs lambda >= 0.01");
    if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (max_windows < 10) fail(ErrorCode::InvalidArgument, "convergence ladder needs max_windows >= 10");
    ConvergenceReport r;
    r.lambda = lambda;
    r.target = lambda / -std::expm1(-lambda);
    r.tolerance = tolerance;
    Rng rng(seed);
    for (std::uint64_t i = 10; i <= max_windows; i *= 10) {
        double s = 0, s2 = 0;
        std::uint64_t used = 0;
        for (std::uint64_t t = 0; t < trials; ++t) {
            Path path;
            for (std::uint64_t w = 0; w < i; ++w) {
                const auto n = sample_poisson(rng, lambda);
                path.f += n;
                path.p += n > 0;
            }
            if (path.p == 0) continue;
            const double dev = static_cast<double>(path.f) / static_cast<double>(path.p) - r.target;
            s += dev * dev;
            s2 += dev * dev * dev * dev;
            ++used;
        }
        ConvergencePoint pt{i, 0, 0, used};
        if (used > 0) {
            const double n = static_cast<double>(used);
            pt.mse = s / n;
            const double var = used > 1 ? (s2 - n * pt.mse * pt.mse) / (n - 1) : 0.0;
            pt.stderr_ = std::sqrt(std::max(var, 0.0) / n);
        }
        r.points.push_back(pt);
    }
    r.decreasing = true;
    for (std::size_t k = 1; k < r.points.size(); ++k) {
        // one standard error of Monte-Carlo slack
        if (r.points[k].mse > r.points[k - 1].mse + r.points[k].stderr_) r.decreasing = false;
    }
    r.final_below_tolerance = !r.points.empty() && r.points.back().used_trials > 0 &&
                              r.points.back().mse < tolerance;
    return r;
}

EjectionReport ejection_experiment(double lambda, std::uint64_t windows, std::uint64_t trials, std::uint64_t seed) {
    require_positive(lambda, windows);
    if (windows < 2) fail(ErrorCode::InvalidArgument, "ejection experiment needs at least 2 windows");
    if (trials == 0) fail(ErrorCode::InvalidArgument, "trials must be >= 1");
    EjectionReport r{lambda, windows, trials, 0, 0, 0, 0, 0};
    Rng rng(seed);
    std::vector<std::uint64_t> counts(windows);
    double s = 0, s2 = 0;
    for (std::uint64_t t = 0; t < trials;) {
        for (auto& c : counts) c = sample_poisson(rng, lambda);
        const auto eject = rng.below(windows);
        Path all, tail;
        for (std::uint64_t w = 0; w < windows; ++w) {
            all.f += counts[w];
            all.p += counts[w] > 0;
            if (w >= eject) {
                tail.f += counts[w];
                tail.p += counts[w] > 0;
            }
        }
        // empty tail: redraw the trial
        if (tail.p == 0) {
            ++r.redrawn;
            continue;
        }
        const double diff = static_cast<double>(tail.f) / static_cast<double>(tail.p) -
                            static_cast<double>(all.f) / static_cast<double>(all.p);
        s += diff;
        s2 += diff * diff;
        ++t;
    }
    const double n = static_cast<double>(trials);
    r.mean_diff = s / n;
    r.stddev = trials > 1 ? std::sqrt(std::max((s2 - n * r.mean_diff * r.mean_diff) / (n - 1), 0.0)) : 0.0;
    const double half = 2.5758293035489004 * r.stddev / std::sqrt(n);
    r.ci99_low = r.mean_diff - half;
    r.ci99_high = r.mean_diff + half;
    return r;
}

}  // namespace pss
