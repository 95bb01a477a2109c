#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace f3kit {

// mt19937_64 with hand-rolled distributions. The standard pins the engine's
// output bit-for-bit but not the distributions, so rolling them here keeps
// generated datasets byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), unbiased
    int uniform_int(int n) {
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t bound = (~uint64_t{0}) - (~uint64_t{0}) % un;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= bound);
        return static_cast<int>(v % un);
    }

    bool coin() { return (next_u64() >> 63) != 0; }

    // standard normal, Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // independent derived stream; forking is stable under draws from *this
    Rng fork(uint64_t stream) const { return Rng(mix(seed_, stream)); }

private:
    static uint64_t mix(uint64_t a, uint64_t b) {
        // splitmix64 step over the pair
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace f3kit
