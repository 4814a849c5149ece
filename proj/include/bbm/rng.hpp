#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bbm {

// splitmix64 step; used to mix seeds for derived streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic random stream. All distributions are generated from the raw
// mt19937_64 output with fixed algorithms, so sequences do not depend on the
// standard library's (implementation-defined) distribution objects.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Stream keyed by (seed, tags...): identical keys give identical streams,
    // which keeps parallel and serial generation orders interchangeable.
    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t s = seed;
        std::uint64_t h = splitmix64(s);
        s ^= a + 0x9e3779b97f4a7c15ULL;
        h ^= splitmix64(s);
        s ^= b + 0xc2b2ae3d27d4eb4fULL;
        h ^= splitmix64(s);
        s ^= c + 0x165667b19e3779f9ULL;
        h ^= splitmix64(s);
        return Rng(h);
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53; }

    // Standard normal via Box-Muller. The spare value is cached, so draws come
    // in deterministic pairs.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Gamma(shape, 1) by Marsaglia-Tsang squeeze; shape > 0.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

    // Unbiased index in [0, n) (Lemire's multiply-shift with rejection).
    std::size_t uniform_index(std::size_t n) {
        using u128 = unsigned __int128;
        std::uint64_t x = gen_();
        u128 m = static_cast<u128>(x) * static_cast<u128>(n);
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0ULL - n) % n;
            while (lo < threshold) {
                x = gen_();
                m = static_cast<u128>(x) * static_cast<u128>(n);
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::size_t>(m >> 64);
    }

    template <class RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace bbm
