#include "sflow/keyed.hpp"

#include <cmath>

#include <boost/math/special_functions/erf.hpp>

namespace sflow {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t w : words) {
    h = splitmix64(h ^ splitmix64(w + 0x13198a2e03707344ULL));
  }
  return h;
}

double key_uniform(std::uint64_t key) {
  const std::uint64_t bits = splitmix64(key) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double normal_quantile(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double key_normal(std::uint64_t key) { return normal_quantile(key_uniform(key)); }

}  // namespace sflow
