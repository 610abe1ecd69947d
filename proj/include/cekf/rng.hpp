// Deterministic random numbers. Every stochastic code path derives its
// stream from a single scenario seed via splitmix64 mixing, so runs are
// bit-reproducible for a fixed seed regardless of chunking or threading.
//
// Normal variates use the ziggurat rejection scheme (Doornik's ZIGNOR
// layout, 128 strips) on top of xoshiro256++, which is fast enough to feed
// the truncated-moment sampler millions of draws per second.
#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace cekf {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derive an independent stream seed from (seed, stream) deterministically.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    std::uint64_t a = splitmix64_next(s);
    std::uint64_t b = splitmix64_next(s);
    return a ^ (b << 1);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t sm = mix_seed(seed, stream);
        for (auto& si : state_) si = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via the ziggurat method.
    double normal() {
        const ZigTables& zt = tables();
        for (;;) {
            const std::uint64_t bits = next_u64();
            const int strip = static_cast<int>(bits & 0x7F);
            const double u = 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
            if (std::abs(u) < zt.ratio[strip]) return u * zt.x[strip];
            if (strip == 0) return tail(u < 0);
            const double x = u * zt.x[strip];
            const double f0 = std::exp(-0.5 * (zt.x[strip] * zt.x[strip] - x * x));
            const double f1 = std::exp(-0.5 * (zt.x[strip + 1] * zt.x[strip + 1] - x * x));
            if (f1 + uniform() * (f0 - f1) < 1.0) return x;
        }
    }

    void fill_normal(double* dst, std::ptrdiff_t n) {
        for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = normal();
    }

private:
    static constexpr int kStrips = 128;
    static constexpr double kR = 3.442619855899;
    static constexpr double kV = 9.91256303526217e-3;

    struct ZigTables {
        double x[kStrips + 1];
        double ratio[kStrips];
        ZigTables() {
            double f = std::exp(-0.5 * kR * kR);
            x[0] = kV / f;
            x[1] = kR;
            x[kStrips] = 0.0;
            for (int i = 2; i < kStrips; ++i) {
                x[i] = std::sqrt(-2.0 * std::log(kV / x[i - 1] + f));
                f = std::exp(-0.5 * x[i] * x[i]);
            }
            for (int i = 0; i < kStrips; ++i) ratio[i] = x[i + 1] / x[i];
        }
    };

    static const ZigTables& tables() {
        static const ZigTables zt;
        return zt;
    }

    double tail(bool negative) {
        double x, y;
        do {
            x = std::log(uniform_pos()) / kR;
            y = std::log(uniform_pos());
        } while (-2.0 * y < x * x);
        return negative ? x - kR : kR - x;
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace cekf
