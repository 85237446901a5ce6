#pragma once

#include <cstdint>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pss {

/// Flow identity. Wider identities (textual 5-tuples) are hashed down to 64
/// bits before they reach any detector.
using FlowKey = std::uint64_t;

enum class ErrorCode {
    InvalidArgument = 1,
    Io = 2,
    Config = 3,
    Internal = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// splitmix64 finalizer; also used to derive independent seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash64(std::uint64_t key, std::uint64_t seed) noexcept {
    return mix64(key ^ mix64(seed));
}

/// Seed number `index` in the stream derived from `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(master + mix64(index + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over bytes, for hashing non-numeric flow tokens.
std::uint64_t hash_token(std::string_view token) noexcept;

/// Reproducible random source. The engine sequence is fixed by the standard;
/// the conversions below are written out so results do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (no cached second value).
    double normal();

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace pss
