#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace lipar {

/// splitmix64 step. Fast, well-mixed, identical on every platform.
constexpr uint64_t splitmix64(uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stateless mix of a seed and a set of counters. Used wherever a value must be
/// reproducible from coordinates alone (dropout masks, per-tensor init seeds).
constexpr uint64_t mix64(uint64_t a, uint64_t b = 0, uint64_t c = 0, uint64_t d = 0) {
    uint64_t s = a;
    uint64_t r = splitmix64(s);
    s ^= b + 0x9E3779B97F4A7C15ULL;
    r ^= splitmix64(s);
    s ^= c + 0xC2B2AE3D27D4EB4FULL;
    r ^= splitmix64(s);
    s ^= d + 0x165667B19E3779F9ULL;
    r ^= splitmix64(s);
    return r;
}

/// FNV-1a 64-bit hash, used for name-keyed seeds and file digests.
constexpr uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path);

/// Deterministic sequential generator built on splitmix64.
class Prng {
public:
    explicit Prng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform double in [0, 1).
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double next_real(double lo, double hi) {
        return lo + (hi - lo) * next_unit();
    }

    /// Unbiased uniform integer in [0, bound). bound must be nonzero.
    uint64_t next_below(uint64_t bound) {
        // Lemire's multiply-shift rejection method.
        uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * bound;
        auto lo = static_cast<uint64_t>(m);
        if (lo < bound) {
            uint64_t threshold = (0 - bound) % bound;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * bound;
                lo = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

private:
    uint64_t state_;
};

/// Fisher-Yates shuffle that does not depend on standard-library internals,
/// so shuffled orders are stable across toolchains.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, Prng& rng) {
    if (items.size() < 2) return;
    for (size_t i = items.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i + 1));
        using std::swap;
        swap(items[i], items[j]);
    }
}

/// Counter-based uniform in [0, 1): same coordinates, same value.
inline double unit_at(uint64_t seed, uint64_t salt, uint64_t index) {
    return static_cast<double>(mix64(seed, salt, index) >> 11) * 0x1.0p-53;
}

} // namespace lipar
