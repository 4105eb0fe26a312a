#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace stereosparse {

// Seeded draws built directly on mt19937 output so streams do not depend on
// standard-library distribution internals.
class Rng {
public:
    explicit Rng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        std::uint64_t hi = gen_() >> 6;  // 26 bits
        std::uint64_t lo = gen_() >> 5;  // 27 bits
        return static_cast<double>((hi << 27) | lo) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0. Modulo bias is irrelevant at our scales.
    int uniform_int(int n) { return static_cast<int>(next_u32() % static_cast<std::uint32_t>(n)); }

    // Standard normal via Box-Muller; one cached value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Derive an independent stream; distinct tags give distinct streams.
    Rng fork(std::uint32_t tag) {
        return Rng(static_cast<std::uint32_t>(gen_() ^ (0x9e3779b9u * (tag + 1))));
    }

private:
    std::mt19937 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace stereosparse
