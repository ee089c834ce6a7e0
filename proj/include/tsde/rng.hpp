#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tsde {

// splitmix64 step; used only to derive well-separated engine seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum class Stream : std::uint64_t {
  Noise = 0x6e6f697365ull,
  Jumps = 0x6a756d7073ull,
  Sampler = 0x73616d706cull,
};

// One named, independently seeded random stream of a single run.
//
// All distributions are generated in-house (Box-Muller gaussian, rejection
// for bounded integers) rather than with std::*_distribution, whose output
// is implementation-defined; trajectories must be bit-reproducible from
// (master_seed, run_index, stream tag) alone.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t run_index, Stream tag) {
    std::uint64_t s = master_seed;
    std::uint64_t h = splitmix64_next(s);
    s = h ^ (run_index * 0x632be59bd9b4e019ull + 0x9e3779b97f4a7c15ull);
    h = splitmix64_next(s);
    s = h ^ static_cast<std::uint64_t>(tag);
    engine_.seed(splitmix64_next(s));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller, one spare cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsde
