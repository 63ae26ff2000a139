#pragma once

#include <cstdint>
#include <vector>

namespace dcnn {

// splitmix64: tiny, fully specified PRNG. The standard library engines are
// portable but its distributions are not, so all randomness flows through
// this one generator to keep runs reproducible across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double next_double(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // uniform in [0, n); modulo bias is irrelevant at our scales
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Derives an independent stream from (seed, stream index), e.g. one per epoch.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  Rng mixer(seed);
  std::uint64_t a = mixer.next_u64();
  Rng mixer2(stream);
  return Rng(a ^ mixer2.next_u64());
}

// In-place Fisher-Yates; std::shuffle is implementation-defined, this is not.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace dcnn
