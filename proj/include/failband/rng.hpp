#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace failband {

/// Deterministic RNG with explicit integer state. We roll our own uniform and
/// gaussian draws because std:: distributions are implementation-defined and
/// golden files must reproduce across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // splitmix64 warmup so that small seeds decorrelate
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// i in [0, n), n > 0.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller; one draw per call, cache discarded to
    /// keep the stream position independent of call parity.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// +1 or -1 with equal probability.
    double rademacher() { return (next_u64() & 1) ? 1.0 : -1.0; }

    /// Child stream for episode/model i, independent of draws on this stream.
    Rng fork(uint64_t i) const { return Rng(state_ ^ (0xd1342543de82ef95ULL * (i + 1))); }

private:
    uint64_t state_;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace failband
