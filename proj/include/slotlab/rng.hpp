#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slotlab {

// splitmix64; used to derive independent stream seeds from one root seed.
inline uint64_t hash_u64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t split_seed(uint64_t root, std::string_view stream, uint64_t index = 0) {
  uint64_t h = root;
  for (char c : stream) h = hash_u64(h ^ static_cast<uint64_t>(static_cast<unsigned char>(c)));
  return hash_u64(h ^ index);
}

// Deterministic RNG. Mapping from raw bits to doubles is done by hand so
// sequences do not depend on libstdc++ distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    // modulo bias is negligible for n << 2^64 and irrelevant here
    return n == 0 ? 0 : next_u64() % n;
  }

  double normal() {
    // Box-Muller, one value per call
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Rng split(std::string_view stream, uint64_t index = 0) {
    return Rng(split_seed(next_u64(), stream, index));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace slotlab
