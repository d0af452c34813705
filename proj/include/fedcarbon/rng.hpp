#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedcarbon {

/// splitmix64 finalizer; used to derive independent seeds from (seed, tag) pairs
/// so that unrelated random streams never alias.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(mix64(seed) ^ mix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
  return mix64(derive_seed(seed, tag_a) ^ mix64(tag_b));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t tag) { return Rng(derive_seed(seed, tag)); }

/// Bounded Zipf distribution on {1, ..., k_max} with pmf proportional to k^-exponent.
/// Sampling is by inverse CDF over a precomputed table.
class BoundedZipf {
public:
  BoundedZipf(double exponent, std::uint32_t k_max) : exponent_(exponent), k_max_(k_max) {
    cdf_.resize(k_max);
    double acc = 0.0;
    double weighted = 0.0;
    for (std::uint32_t k = 1; k <= k_max; ++k) {
      const double p = std::pow(static_cast<double>(k), -exponent);
      acc += p;
      weighted += k * p;
      cdf_[k - 1] = acc;
    }
    norm_ = acc;
    mean_ = weighted / acc;
    for (auto& c : cdf_) c /= norm_;
  }

  double mean() const { return mean_; }
  std::uint32_t k_max() const { return k_max_; }
  double exponent() const { return exponent_; }

  std::uint32_t sample(Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    // first index with cdf >= u
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf_[mid] < u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return static_cast<std::uint32_t>(lo + 1);
  }

private:
  double exponent_;
  std::uint32_t k_max_;
  double norm_ = 1.0;
  double mean_ = 1.0;
  std::vector<double> cdf_;
};

}  // namespace fedcarbon
