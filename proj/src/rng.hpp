#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tp {

// Deterministic PRNG (splitmix64). Used everywhere randomness is needed so
// that runs are bit-reproducible across platforms — the standard library's
// distributions are implementation-defined and must not leak in.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        if (hi <= lo) return lo;
        return lo + int64_t(next_below(uint64_t(hi - lo + 1)));
    }

    // Unbiased integer in [0, n)
    uint64_t next_below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Box-Muller; deterministic given the stream position.
    double normal() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1 = next_double(), u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        gauss_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(next_below(uint64_t(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream for (seed, k) pairs, e.g. per fold or per user.
    static uint64_t derive(uint64_t seed, uint64_t stream) {
        Rng r(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
        return r.next_u64();
    }

private:
    uint64_t state_;
    bool have_gauss_ = false;
    double gauss_ = 0.0;
};

}  // namespace tp
