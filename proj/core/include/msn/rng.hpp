#pragma once

#include <cmath>
#include <cstdint>

namespace msn {

/// Deterministic pseudorandom generator: SplitMix64.
///
/// The algorithm is fixed so a seed means the same value stream everywhere:
///   state += 0x9E3779B97F4A7C15
///   z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
///   z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31
/// Streams are split as a pure function of (root seed, tag), independent of
/// how many values were drawn: child seed = finalize(seed + (tag+1)*GOLDEN).
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        state_ += kGolden;
        return finalize(state_);
    }

    /// Uniform double in [0, 1), 53 mantissa bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Unbiased via rejection.
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Standard normal via Box-Muller; the paired value is cached.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        double u2 = next_double();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Independent child stream as a pure function of (seed, tag).
    Rng split(uint64_t tag) const { return Rng(finalize(seed_ + (tag + 1) * kGolden)); }

    static uint64_t finalize(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
    static constexpr double kPi = 3.14159265358979323846;

    uint64_t seed_;
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stream tags used by the pipeline so one user seed drives independent
// deterministic streams. Documented, stable across versions.
namespace rng_stream {
constexpr uint64_t kWeightInit = 0;
constexpr uint64_t kShuffle = 1;
constexpr uint64_t kDropout = 2;
constexpr uint64_t kSplit = 3;
constexpr uint64_t kSceneSpectra = 4;
constexpr uint64_t kSceneBlobs = 5;
constexpr uint64_t kSceneNoise = 6;
}  // namespace rng_stream

}  // namespace msn
