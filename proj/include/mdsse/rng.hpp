#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mdsse {

// Counter-based deterministic generator. The i-th value on a given
// (seed, stream) pair is splitmix64(key + i * GAMMA), so any draw is
// reproducible in isolation without replaying earlier draws. Component
// streams are fixed offsets from the user seed: data, init, shuffle, noise.
class CounterRng {
 public:
  enum Stream : uint64_t {
    kData = 1,
    kInit = 2,
    kShuffle = 3,
    kNoise = 4,
  };

  CounterRng(uint64_t seed, uint64_t stream) : key_(mix_key(seed, stream)) {}

  // Derives an independent stream, e.g. one per bus or per experiment cell.
  CounterRng fork(uint64_t substream) const {
    CounterRng r(0, 0);
    r.key_ = mix_key(key_, substream ^ 0xA0761D6478BD642FULL);
    return r;
  }

  uint64_t next_u64() { return splitmix64(key_ + (counter_++) * kGamma); }

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only; two draws per sample.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard the log against u1 == 0.
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n), n > 0. Modulo bias is < 2^-50 for desk-scale n.
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  uint64_t counter() const { return counter_; }

 private:
  static constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr double kPi = 3.14159265358979323846;

  static uint64_t splitmix64(uint64_t x) {
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  static uint64_t mix_key(uint64_t seed, uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0xD1B54A32D192ED03ULL));
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

// Fisher-Yates with the shuffle stream.
template <typename T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
    int64_t j = rng.uniform_int(i + 1);
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
  }
}

}  // namespace mdsse
