#pragma once

#include <cmath>
#include <cstdint>

namespace cascade {

// splitmix64 finalizer: full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

// Sequential generator (splitmix64). Cheap to construct; state is one word.
class Rng {
  public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1]; safe as a log argument
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    // Box-Muller, no cached spare: exactly two draws per call.
    double gaussian() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Knuth below 50, rounded normal approximation above; the crossover keeps
    // the product loop short and the approximation error far below the Poisson
    // noise this is used to emulate.
    std::int64_t poisson(double lambda);

  private:
    std::uint64_t state_;
};

// Immutable key into a tree of independent random streams. Children derived
// from the same key and label always coincide, so per-pulse work can run in
// any order or partition and still reproduce bit-identical results.
class RngKey {
  public:
    explicit RngKey(std::uint64_t seed) : key_(mix64(seed + 0x9e3779b97f4a7c15ull)) {}

    RngKey child(std::uint64_t label) const {
        return RngKey(raw_tag{}, mix64(key_ + (label + 1) * 0x9e3779b97f4a7c15ull));
    }

    Rng stream() const { return Rng(key_); }
    std::uint64_t value() const { return key_; }

  private:
    struct raw_tag {};
    RngKey(raw_tag, std::uint64_t key) : key_(key) {}
    std::uint64_t key_;
};

}  // namespace cascade
