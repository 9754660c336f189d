#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace geoloop {

// Deterministic RNG wrapper. std::mt19937_64 is the engine, but the
// uniform/normal transforms are written out explicitly because the stdlib
// distributions are implementation-defined and frozen golden values must
// survive a compiler upgrade.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // uniform on [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    std::size_t index(std::size_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    // standard normal via Box-Muller, second value cached
    double normal();

    double normal(double mean, double std) { return mean + std * normal(); }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Derives a component seed from the global seed and a component name, so
// that components are independently reproducible. FNV-1a over the name,
// mixed with the global seed through splitmix64.
std::uint64_t split_seed(std::uint64_t global_seed, std::string_view component);

// FNV-1a 64-bit over raw bytes; used for artifact hashes in manifests.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(std::string_view s);

} // namespace geoloop
