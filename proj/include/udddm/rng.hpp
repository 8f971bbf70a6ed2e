#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

namespace udddm {

// All randomness flows through mt19937_64 engines plus the explicit
// transforms below. std::normal_distribution and friends are
// implementation-defined, so they are never used: every draw must be
// reproducible bit-for-bit from (seed, call sequence) alone.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic sub-stream seeds: hash the base seed with a stream index
// and a short purpose tag so unrelated consumers never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::string_view tag = {}) {
    std::uint64_t h = splitmix64(base ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ stream);
    for (char c : tag) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return h;
}

inline std::mt19937_64 make_engine(std::uint64_t seed) { return std::mt19937_64(seed); }

// Uniform on [0,1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform integer in {lo, ..., hi} inclusive. The floor construction has
// bias O((hi-lo)/2^53), irrelevant at the ranges used here.
inline std::int64_t uniform_int(std::mt19937_64& eng, std::int64_t lo, std::int64_t hi) {
    const double u = uniform01(eng);
    auto v = lo + static_cast<std::int64_t>(u * static_cast<double>(hi - lo + 1));
    return v > hi ? hi : v;
}

// One standard-normal draw via Box-Muller. Consumes two engine outputs and
// discards the sine branch, so the per-call engine consumption is fixed and
// no spare-value state needs checkpointing.
inline double normal(std::mt19937_64& eng) {
    const double u1 = (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    const double u2 = uniform01(eng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Fills a span with standard normals, using both Box-Muller branches per
// pair of uniforms. Odd lengths discard the final sine value.
inline void fill_normal(std::mt19937_64& eng, std::span<double> out) {
    std::size_t i = 0;
    while (i + 1 < out.size()) {
        const double u1 = (static_cast<double>(eng() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01(eng);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        out[i++] = r * std::cos(a);
        out[i++] = r * std::sin(a);
    }
    if (i < out.size()) out[i] = normal(eng);
}

// Fisher-Yates with the biased-but-deterministic uniform_int above.
template <typename T>
void shuffle(std::mt19937_64& eng, std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_int(eng, 0, static_cast<std::int64_t>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::string engine_state_string(const std::mt19937_64& eng) {
    std::ostringstream os;
    os << eng;
    return os.str();
}

inline std::mt19937_64 engine_from_state_string(const std::string& s) {
    std::mt19937_64 eng;
    std::istringstream is(s);
    is >> eng;
    if (!is) throw std::invalid_argument("rng: malformed engine state string");
    return eng;
}

}  // namespace udddm
