#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace haystack {

// 64-bit FNV-1a. Stable across platforms; used for seed derivation and
// for the mock LM's per-prompt randomness.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Child seed = hash(master, tag, indices). Distinct tags give uncorrelated
// streams for sampling, permutations, shuffling, etc.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t h = fnv1a64(tag);
    h = splitmix64(h ^ master);
    for (std::uint64_t idx : indices) {
        h = splitmix64(h ^ idx);
    }
    return h;
}

// Thin deterministic wrapper over mt19937_64. std::uniform_int_distribution
// is implementation-defined, so bounded draws are done by rejection here to
// keep byte-identical plans across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// Hash of arbitrary text folded to a unit-interval value; deterministic
// across processes. Used by the scripted mock.
inline double hash_unit(std::uint64_t seed, std::string_view text) {
    std::uint64_t h = splitmix64(fnv1a64(text) ^ seed);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace haystack
