#ifndef SSM_RNG_HPP
#define SSM_RNG_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ssm {

// Seeded random source. Every randomized operation takes an Rng explicitly;
// a run derives per-module streams from one root seed via split(), so results
// are reproducible from a single recorded seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), engine_);
    }

    // Derive an independent child stream. Children with distinct tags (or
    // distinct indices) are decorrelated; the parent state is untouched.
    Rng split(std::string_view tag, std::uint64_t index = 0) const {
        std::uint64_t h = fnv1a(tag);
        h ^= splitmix64(index + 0x9e3779b97f4a7c15ULL);
        return Rng(splitmix64(seed_ ^ h));
    }

    std::mt19937_64& engine() { return engine_; }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace ssm

#endif
