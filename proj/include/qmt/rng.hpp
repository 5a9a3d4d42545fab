#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qmt::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream seed for (base, stream, index). Distinct triples give unrelated
// generator states, so paths, initial draws and control sampling can be varied
// in isolation.
inline constexpr std::uint64_t derive(std::uint64_t base, std::uint64_t stream,
                                      std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

// mt19937_64 is bit-exact across standard library implementations. The
// Gaussian transform is spelled out below for the same reason:
// std::normal_distribution is implementation-defined.
class Stream {
public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)

  double uniform_open() {  // (0, 1)
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t raw() { return gen_(); }

private:
  std::mt19937_64 gen_;
};

}  // namespace qmt::rng
