#include "pssketch/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace pss {

std::uint64_t hash_token(std::string_view token) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // rejection sampling on the top of the range
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pss
