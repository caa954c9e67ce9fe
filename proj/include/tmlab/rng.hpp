#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace tmlab {

// SplitMix64 counter generator. Chosen over std::mt19937 + std distributions
// because the output stream is bit-identical across platforms and standard
// library versions; every result file records the 64-bit seed that produced it.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // standard normal via Box-Muller (cached second value)
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * M_PI * u2;
        cached_ = r * std::sin(phi);
        have_cached_ = true;
        return r * std::cos(phi);
    }

    std::complex<double> normal_complex() { return {normal(), normal()}; }

    // Derive an independent child seed for a (seed, stream) pair. Used to give
    // each grid point / realization its own generator so results do not depend
    // on scheduling order.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        Rng r(seed ^ (0x632BE59BD9B4E019ULL * (stream + 1)));
        r.next_u64();
        return r.next_u64();
    }

  private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace tmlab
