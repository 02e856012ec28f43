#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace defersim {

// All randomness in the project flows through this generator. The standard
// <random> distributions are implementation-defined, so byte-identical
// output across toolchains requires owning both the generator and the
// variate transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, two fresh draws per variate. No cached spare: callers that
  // interleave distributions stay reproducible.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n). Multiply-shift map; bias of n / 2^64 is
  // far below anything observable here.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Key-derivation scheme: every stream seed is a hash of the parent seed, a
// component tag, and up to two indices. Documented so that two
// implementations of the pipeline agree on which stream feeds which stage.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t h = 1469598103934665603ULL ^ base;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  auto mix = [](std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
  };
  h = mix(h ^ mix(a + 0x9e3779b97f4a7c15ULL));
  h = mix(h ^ mix(b + 0x2545f4914f6cdd1dULL));
  return h;
}

}  // namespace defersim
