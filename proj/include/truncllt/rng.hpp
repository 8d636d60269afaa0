#pragma once

#include <cstdint>
#include <cmath>

namespace truncllt {

// Deterministic substream RNG. Every path owns an independent xoshiro256**
// stream whose state is derived from (master_seed, stream_index) through
// splitmix64, so results depend only on the seed and the path index, never
// on scheduling.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    Rng(std::uint64_t master_seed, std::uint64_t stream_index) {
        std::uint64_t sm = master_seed;
        (void)splitmix64(sm);
        sm ^= 0x9e3779b97f4a7c15ULL * (stream_index + 1);
        for (auto& w : s_) w = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on [0,1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0,1], safe as a log argument
    double uniform_pos() { return 1.0 - uniform(); }

    // standard normal, Box-Muller (consumes two uniforms)
    double gauss() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

}  // namespace truncllt
