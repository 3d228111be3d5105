#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace wcluster {

// Counter-based generator: a substream is addressed by a short tuple of words
// (seed, replication, scenario, purpose, entity...) and draws are pure
// functions of (address, counter). Any two distinct addresses give
// statistically independent streams, and draw order never depends on thread
// scheduling. The mixing function is the splitmix64 finalizer.
class SubstreamRng {
 public:
  SubstreamRng() = default;

  explicit SubstreamRng(std::initializer_list<std::uint64_t> words) {
    for (auto w : words) absorb(w);
  }

  void absorb(std::uint64_t w) {
    state_ += 0x9e3779b97f4a7c15ULL;
    state_ = avalanche(state_ ^ avalanche(w + 0x9e3779b97f4a7c15ULL));
  }

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return avalanche(state_ + counter_);
  }

  // Uniform on the open interval (0, 1); never returns an exact endpoint so
  // log() and inverse transforms are always finite.
  double next_unit() {
    std::uint64_t bits = next_u64() >> 11;  // 53 bits
    double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    return u;
  }

  double next_exponential(double mean) { return -mean * std::log(next_unit()); }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  static std::uint64_t avalanche(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_ = 0x6a09e667f3bcc909ULL;
  std::uint64_t counter_ = 0;
};

// One value addressed directly by words, no stream state involved.
inline std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  SubstreamRng r(words);
  return r.next_u64();
}

}  // namespace wcluster
