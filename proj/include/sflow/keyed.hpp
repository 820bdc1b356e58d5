#pragma once

#include <cstdint>
#include <initializer_list>

namespace sflow {

/// Counter-based randomness: every random number is a pure function of an
/// integer key, so streams can be replayed or addressed out of order.

std::uint64_t splitmix64(std::uint64_t x);

/// Hashes a sequence of words into one 64-bit key.
std::uint64_t mix_key(std::initializer_list<std::uint64_t> words);

/// Uniform in the open interval (0, 1) with 53 random bits.
double key_uniform(std::uint64_t key);

/// Standard normal by inverse-CDF of key_uniform(key).
double key_normal(std::uint64_t key);

/// Standard normal quantile and distribution function.
double normal_quantile(double p);
double normal_cdf(double x);

}  // namespace sflow
