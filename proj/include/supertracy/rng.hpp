#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace supertracy {

// SplitMix64 generator. Used everywhere instead of <random> engines and
// distributions because the standard distributions are implementation
// defined; this keeps every artifact byte-identical across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // Fisher-Yates shuffle, deterministic per seed.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream for a named sub-component.
    Rng fork(const std::string& label) const {
        uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : label) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return Rng(state_ ^ h);
    }

private:
    uint64_t state_;
};

}  // namespace supertracy
