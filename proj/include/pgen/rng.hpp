#pragma once

#include <cmath>
#include <cstdint>

namespace pgen {

// Deterministic PRNG with a fixed algorithm so that streams are bit-identical
// across platforms and standard libraries. xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit mantissa.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant at
    // our n (<< 2^32) but we use Lemire reduction anyway for a fixed mapping.
    uint64_t uniform_int(uint64_t n) {
        const uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * static_cast<__uint128_t>(n);
        return static_cast<uint64_t>(m >> 64);
    }

    int64_t uniform_int(int64_t lo, int64_t hi_inclusive) {
        return lo + int64_t(uniform_int(uint64_t(hi_inclusive - lo + 1)));
    }

    // Box-Muller without a cached spare: two draws per call, so the stream
    // position is a pure function of the call count (needed for resume).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream; used to give each pipeline stage its own
    // seed sequence from one master seed.
    Rng split(uint64_t tag) const {
        uint64_t x = s_[0] ^ (s_[3] + 0x9E3779B97F4A7C15ull * (tag + 1));
        return Rng(x);
    }

    // State access for checkpointing.
    void state(uint64_t out[4]) const { for (int i = 0; i < 4; ++i) out[i] = s_[i]; }
    void set_state(const uint64_t in[4]) { for (int i = 0; i < 4; ++i) s_[i] = in[i]; }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9E3779B97F4A7C15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t s_[4];
};

}  // namespace pgen
