#pragma once

#include <cmath>
#include <cstdint>

namespace blockqueue {

// Seedable random stream (xoshiro256++ over a splitmix64-expanded seed).
// Streams are cheap value types; substream(i) derives an independent stream
// for replication i so that results are reproducible for a fixed seed.
class RngStream {
public:
    explicit RngStream(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : s_) word = splitmix64(x);
    }

    RngStream substream(uint64_t index) const {
        uint64_t x = s_[0] ^ (0x9e3779b97f4a7c15ULL * (index + 1));
        RngStream child(0);
        child.s_[0] = splitmix64(x);
        child.s_[1] = splitmix64(x);
        child.s_[2] = splitmix64(x);
        child.s_[3] = splitmix64(x);
        return child;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    // Uniform integer in [0, n).
    uint64_t uniform_int(uint64_t n) {
        const uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

private:
    uint64_t s_[4];

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
};

} // namespace blockqueue
