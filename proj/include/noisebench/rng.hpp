#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace noisebench {

// Mixes a seed with stream coordinates (splitmix64 finaliser). Used to give every
// epoch, sample, or draw its own independent stream so results do not depend on
// iteration order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Uniform double in [0, 1) from a single 64-bit hash.
double unit_from_bits(std::uint64_t bits) noexcept;

// Deterministic generator. The engine is std::mt19937_64; the conversions to
// uniform/normal/int are done here because the std distributions are
// implementation-defined and would make results differ across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // N(0, 1), Box-Muller
    std::size_t below(std::size_t n);      // [0, n), n >= 1

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// 0..n-1 shuffled by a generator seeded with `seed`.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace noisebench
