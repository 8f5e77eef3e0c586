#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace dfr {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
inline std::array<uint32_t, 4> philox4x32_10(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
    constexpr uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const uint64_t p0 = uint64_t(M0) * ctr[0];
        const uint64_t p1 = uint64_t(M1) * ctr[2];
        ctr = {uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], uint32_t(p1), uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], uint32_t(p0)};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// One independent stream: the key carries (seed, experiment point), the
// counter carries (stream id, block id) and a running draw index.
class RandomStream {
public:
    RandomStream(uint64_t key, uint32_t stream_id, uint64_t block_id)
        : key_{uint32_t(key), uint32_t(key >> 32)}, stream_(stream_id), block_(block_id) {}

    std::array<uint32_t, 4> next_block() {
        return philox4x32_10({draw_++, stream_, uint32_t(block_), uint32_t(block_ >> 32)}, key_);
    }

    // uniform on (0, 1]
    double uniform() {
        auto w = next_block();
        return to_unit(w[0], w[1]);
    }

    uint32_t below(uint32_t n) {
        auto w = next_block();
        return uint32_t((uint64_t(w[0]) * n) >> 32);
    }

    // circular complex Gaussian with E|z|^2 = var, one Box-Muller pair
    std::complex<double> cnormal(double var) {
        auto w = next_block();
        const double u1 = to_unit(w[0], w[1]);
        const double u2 = to_unit(w[2], w[3]);
        const double r = std::sqrt(-var * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(th), r * std::sin(th)};
    }

    double normal() { return std::sqrt(2.0) * cnormal(1.0).real(); }

private:
    static double to_unit(uint32_t a, uint32_t b) {
        const uint64_t bits = ((uint64_t(a) << 21) ^ uint64_t(b)) & ((uint64_t(1) << 53) - 1);
        return (double(bits) + 1.0) * 0x1.0p-53;
    }

    std::array<uint32_t, 2> key_;
    uint32_t stream_;
    uint64_t block_;
    uint32_t draw_ = 0;
};

inline uint64_t derive_key(uint64_t seed, uint64_t salt) { return splitmix64(seed ^ splitmix64(salt + 0x5851F42D4C957F2Dull)); }

}  // namespace dfr
