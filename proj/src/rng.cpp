#include "flatmtl/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flatmtl {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) {
        word = splitmix64(sm);
    }
}

SeededRng SeededRng::from_state(const std::array<std::uint64_t, 4>& s) {
    SeededRng rng;
    rng.state_ = s;
    return rng;
}

std::uint64_t SeededRng::next_u64() {
    std::uint64_t* s = state_.data();
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_open_double() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double SeededRng::normal() {
    const double u1 = next_open_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SeededRng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be > 0");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
        draw = next_u64();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
}

SeededRng SeededRng::substream(std::uint64_t id) const {
    std::uint64_t sm = seed_ ^ (0xA0761D6478BD642FULL * (id + 1));
    return SeededRng(splitmix64(sm));
}

std::vector<double> gaussian_direction(SeededRng& rng, std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("gaussian_direction: dim must be > 0");
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return v;
}

std::vector<double> sphere_direction(SeededRng& rng, std::size_t dim, double radius) {
    std::vector<double> v = gaussian_direction(rng, dim);
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    double norm = std::sqrt(norm2);
    while (norm < 1e-300) { // astronomically unlikely; redraw rather than divide by ~0
        v = gaussian_direction(rng, dim);
        norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        norm = std::sqrt(norm2);
    }
    const double scale = radius / norm;
    for (auto& x : v) x *= scale;
    return v;
}

} // namespace flatmtl
