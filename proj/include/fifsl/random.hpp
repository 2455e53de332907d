#pragma once

// Platform-stable randomness. The std distributions are implementation
// defined, so everything that must reproduce bit-for-bit goes through these.

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace fifsl {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform integer in [0, n) from a 64-bit engine (multiply-shift, no modulo bias to speak of).
template <typename Engine>
std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

/// Uniform double in [0, 1) with 53 random bits.
template <typename Engine>
double uniform_unit(Engine& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Counter-based stream: the i-th draw is a pure function of (key, i).
class CounterRng {
public:
    using result_type = std::uint64_t;
    explicit CounterRng(std::uint64_t key) : key_(splitmix64(key)) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(seed) ^ splitmix64(stream + 0x51ed27)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of 0..n-1.
template <typename Engine>
std::vector<std::size_t> permutation(std::size_t n, Engine& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    return idx;
}

/// Per-epoch shuffle schedule keyed by (seed, epoch).
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    CounterRng rng(seed, epoch);
    return permutation(n, rng);
}

}  // namespace fifsl
