#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wfopt {

// SplitMix64 finalizer. Used wherever a value has to be scrambled into a
// well-distributed 64-bit seed deterministically across platforms.
uint64_t splitmix64(uint64_t x);

// FNV-1a over the bytes of s. Stable across platforms and runs, unlike
// std::hash, so it is safe to derive seeds and hash buckets from it.
uint64_t fnv1a64(std::string_view s);

// Derive a child seed from (seed, tag[, n]). Children with distinct tags are
// statistically independent streams of the same master seed.
uint64_t mix_seed(uint64_t seed, std::string_view tag);
uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t n);

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the distribution helpers below are hand-rolled because the
// standard <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [lo, hi] inclusive, via rejection sampling.
  uint64_t uniform_index(uint64_t n);  // [0, n)
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fisher-Yates shuffle driven by Rng; deterministic for a fixed seed.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_index(i));
    std::swap(v[i - 1], v[j]);
  }
}

// k distinct indices drawn uniformly from [0, n); order is the draw order.
std::vector<size_t> sample_without_replacement(size_t n, size_t k, Rng& rng);

}  // namespace wfopt
