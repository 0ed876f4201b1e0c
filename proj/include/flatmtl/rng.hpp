#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace flatmtl {

/// Deterministic random source. xoshiro256** seeded through splitmix64,
/// so an identical seed yields the identical stream on every platform.
/// All randomness in the library flows through instances of this class.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double();

    /// Uniform double in (0, 1]; never returns 0 (safe under log()).
    double next_open_double();

    /// Standard normal via Box-Muller. Uses two uniform draws per sample and
    /// keeps no cached spare, so the state is exactly the four words below.
    double normal();

    /// Uniform index in [0, n). Rejection sampled (no modulo bias).
    std::size_t uniform_index(std::size_t n);

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Derive an independent substream. Deterministic in (current seed, id);
    /// does not advance this generator.
    SeededRng substream(std::uint64_t id) const;

    std::array<std::uint64_t, 4> state() const { return state_; }
    static SeededRng from_state(const std::array<std::uint64_t, 4>& s);

    std::uint64_t seed() const { return seed_; }

private:
    SeededRng() = default;
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
};

/// i.i.d. standard normal vector of the given dimension. dim must be > 0.
std::vector<double> gaussian_direction(SeededRng& rng, std::size_t dim);

/// Uniform direction on the sphere of the given radius (radius 0 gives zeros).
std::vector<double> sphere_direction(SeededRng& rng, std::size_t dim, double radius);

/// Fisher-Yates shuffle driven by the rng.
template <typename T>
void shuffle(SeededRng& rng, std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = rng.uniform_index(i);
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace flatmtl
