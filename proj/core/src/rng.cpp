#include "wfopt/rng.hpp"

#include <cmath>
#include <numbers>

#include "wfopt/errors.hpp"

namespace wfopt {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  return splitmix64(splitmix64(seed) ^ fnv1a64(tag));
}

uint64_t mix_seed(uint64_t seed, std::string_view tag, uint64_t n) {
  return splitmix64(mix_seed(seed, tag) ^ splitmix64(n + 0x51ed2701ULL));
}

uint64_t Rng::uniform_index(uint64_t n) {
  if (n == 0) fail(ErrorCode::MalformedArgs, "uniform_index over empty range");
  // Rejection sampling to avoid modulo bias.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (lo > hi) fail(ErrorCode::MalformedArgs, "uniform_int with lo > hi");
  uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
  return lo + static_cast<int64_t>(uniform_index(span));
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u is kept away from 0 so log(u) is finite.
  double u = 0.0;
  do {
    u = uniform();
  } while (u <= 0.0);
  double v = uniform();
  double r = std::sqrt(-2.0 * std::log(u));
  double theta = 2.0 * std::numbers::pi * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<size_t> sample_without_replacement(size_t n, size_t k, Rng& rng) {
  if (k > n) fail(ErrorCode::MalformedArgs, "sample larger than population");
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    size_t j = i + static_cast<size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace wfopt
