#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace tracevae {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// A single named random stream. Normals come from Box-Muller with no cached
// second draw, so the engine state is the whole state.
class RngStream {
  public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t next_u64() { return engine_(); }

    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string &s) {
        std::istringstream is(s);
        is >> engine_;
        if (!is) throw std::runtime_error("rng: malformed engine state");
    }

    bool operator==(const RngStream &o) const { return engine_ == o.engine_; }

  private:
    std::mt19937_64 engine_;
};

// One stream per noise role so that frozen-noise comparisons stay aligned.
struct RngStreams {
    RngStream eps;  // reparameterization noise
    RngStream xi;   // parallel-sampler multiplicative noise
    RngStream data; // minibatch selection
    RngStream gen;  // decoding-time token sampling

    static RngStreams from_seed(std::uint64_t seed) {
        const std::uint64_t base = splitmix64(seed);
        return {RngStream(base ^ 0x1), RngStream(base ^ 0x2), RngStream(base ^ 0x3), RngStream(base ^ 0x4)};
    }

    bool operator==(const RngStreams &) const = default;
};

} // namespace tracevae
