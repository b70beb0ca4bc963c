#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace emocpd {

// Deterministic RNG wrapper. All bounded draws and shuffles are spelled out
// here instead of going through std::uniform_int_distribution / std::shuffle,
// whose output is implementation-defined. mt19937_64 itself is pinned by the
// standard, so streams reproduce across compilers.
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Box-Muller; one value per call, no cached spare (keeps the stream simple).
  double normal() {
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Normal(0, sigma) with |z| <= 2*sigma enforced by resampling.
  double truncated_normal(double sigma) {
    for (;;) {
      double z = normal() * sigma;
      if (std::fabs(z) <= 2.0 * sigma) return z;
    }
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n), returned in ascending order.
  std::vector<size_t> sample_indices(size_t n, size_t k);

private:
  std::mt19937_64 gen_;
};

inline std::vector<size_t> Rng::sample_indices(size_t n, size_t k) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  // Partial Fisher-Yates: first k entries become the sample.
  for (size_t i = 0; i < k && i < n; ++i) {
    size_t j = i + static_cast<size_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k < n ? k : n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace emocpd
