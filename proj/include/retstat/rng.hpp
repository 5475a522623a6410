#pragma once

#include <cstdint>

namespace retstat {

// splitmix64 mixer (Vigna). Used both as a seed scrambler and, via
// Xoshiro256pp below, to seed the main generator. All randomness in the
// project flows through these two so results do not depend on the
// standard library's distribution implementations.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-unit seed derivation: fold stream labels into a master
// seed. Monte Carlo loops derive one seed per (task, index) so the result
// is independent of scheduling and worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = master;
    s ^= splitmix64_next(a) + 0x165667b19e3779f9ULL;
    splitmix64_next(s);
    s ^= splitmix64_next(b) + 0x27d4eb2f165667c5ULL;
    splitmix64_next(s);
    s ^= splitmix64_next(c) + 0x85ebca77c2b2ae63ULL;
    return splitmix64_next(s);
}

// xoshiro256++
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        for (auto& w : s_) w = splitmix64_next(seed);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on [0,1) with 53 random bits
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform on [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        // multiply-shift rejection-free mapping; bias < 2^-64, irrelevant here
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

} // namespace retstat
