#pragma once

// Brute-force reference computations, written independently of the library
// code paths they check.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "pssketch/trace.hpp"

namespace oracle {

struct Counts {
    std::uint64_t packets = 0;
    std::set<std::uint64_t> windows;
};

inline std::map<std::uint64_t, Counts> brute_counts(const std::vector<pss::PacketRecord>& records) {
    std::map<std::uint64_t, Counts> out;
    for (const auto& r : records) {
        auto& c = out[r.flow];
        ++c.packets;
        c.windows.insert(r.window);
    }
    return out;
}

/// PS flows: p >= p0 and f / p <= d0.
inline std::set<std::uint64_t> brute_ps(const std::map<std::uint64_t, Counts>& counts, std::uint64_t p0,
                                        double d0) {
    std::set<std::uint64_t> out;
    for (const auto& [k, c] : counts) {
        const auto p = c.windows.size();
        if (p >= p0 && static_cast<double>(c.packets) / static_cast<double>(p) <= d0) out.insert(k);
    }
    return out;
}

/// Poisson pmf through lgamma, independent of any recurrence.
inline long double poisson_pmf(std::uint64_t k, long double lambda) {
    return std::exp(static_cast<long double>(k) * std::log(lambda) - lambda -
                    std::lgamma(static_cast<long double>(k) + 1));
}

struct Moments {
    long double e_f, e_p, e_d, var_f, var_p, d_second_moment_bound;
};

/// Per-window moments summed over the pmf, scaled to i windows.
inline Moments poisson_moments(long double lambda, std::uint64_t i) {
    long double m1 = 0, m2 = 0, pos = 0;
    for (std::uint64_t k = 1; k < 2000; ++k) {
        const long double q = poisson_pmf(k, lambda);
        m1 += k * q;
        m2 += static_cast<long double>(k) * k * q;
        pos += q;
        if (k > 4 * lambda + 50 && q < 1e-30L) break;
    }
    const long double zero = poisson_pmf(0, lambda);
    Moments m;
    m.e_f = i * m1;
    m.e_p = i * pos;
    m.e_d = m1 / pos;
    m.var_f = i * (m2 - m1 * m1);
    m.var_p = i * zero * (1 - zero);
    m.d_second_moment_bound = (m1 / pos) * (m1 / pos) + m2 / pos;
    return m;
}

}  // namespace oracle
