#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sflow/dyadic.hpp"

namespace sflow {

/// Handle for one draw of the driving noise: every Brownian component is a
/// deterministic function of (master_seed, realization_index, component).
struct NoiseRealization {
  std::uint64_t master_seed = 0;
  std::uint64_t realization_index = 0;
  int num_components = 1;
};

struct WienerConfig {
  int max_level = 20;
  std::int64_t horizon = std::int64_t{1} << 16;
};

/// Replaces the keys of unit intervals [first_interval, last_interval) by
/// keys salted with `salt`; used to check that a computation ignores noise
/// outside a time window.
struct KeySurgery {
  std::int64_t first_interval = 0;
  std::int64_t last_interval = 0;
  std::uint64_t salt = 1;
};

/// Stationary Ornstein-Uhlenbeck parameters for the truncated convolution
/// z(t) = sum_k exp(-rate k h) dW(t - (k+1)h, t - k h).
struct OUConfig {
  double rate = 1.0;
  double cutoff_horizon = 0.0;
  int level = 6;

  /// Smallest grid-aligned cutoff with exp(-rate * cutoff) <= tolerance.
  static OUConfig make(double rate, int level, double tolerance = 1e-8);

  std::int64_t cutoff_steps() const;
  double step() const;
  /// exp(-rate * k * h) for k = 0 .. cutoff_steps()-1.
  std::vector<double> weights() const;
  void validate(double tolerance = 1e-8) const;
};

/// Two-sided Brownian paths built by Levy midpoint displacement inside unit
/// intervals. Values are held in fixed point with resolution 2^-38, so the
/// increment of every dyadic interval is exactly the sum of its children and
/// the doubles returned are exact.
class WienerStore {
 public:
  static constexpr int kFixedBits = 38;

  explicit WienerStore(WienerConfig cfg = {});

  const WienerConfig& config() const { return cfg_; }

  WienerStore with_surgery(const KeySurgery& surgery) const;

  double wiener_at(const NoiseRealization& w, int component, DyadicTime t) const;

  /// W on the level grid from s to t, differenced. Empty when s == t.
  std::vector<double> increments(const NoiseRealization& w, int component, DyadicTime s,
                                 DyadicTime t, int level) const;

  /// z(t) for the stationary O-U process driven by this component.
  double ou_at(const NoiseRealization& w, int component, const OUConfig& cfg, DyadicTime t) const;

  /// The uniform variate behind the unit increment of `interval`. Finite-state
  /// models read their symbols from it so they share the noise keys.
  double unit_uniform(const NoiseRealization& w, int component, std::int64_t interval) const;

 private:
  std::uint64_t key(const NoiseRealization& w, int component, std::int64_t interval, int level,
                    std::int64_t offset) const;
  std::int64_t unit_increment_fixed(const NoiseRealization& w, int component,
                                    std::int64_t interval) const;
  std::int64_t bridge_noise_fixed(const NoiseRealization& w, int component, std::int64_t interval,
                                  int level, std::int64_t offset) const;
  // Fixed-point W relative to W(interval) on the level grid inside the unit
  // interval; out has 2^level + 1 entries.
  void fill_interval(const NoiseRealization& w, int component, std::int64_t interval, int level,
                     std::vector<std::int64_t>& out) const;
  std::int64_t fixed_at(const NoiseRealization& w, int component, DyadicTime t) const;
  void check_query(const NoiseRealization& w, int component, DyadicTime t) const;

  WienerConfig cfg_;
  std::vector<KeySurgery> surgeries_;
};

/// Fixed-order convolution used by every O-U evaluation; `incs` are the grid
/// increments ending at the evaluation time, oldest first, and must hold at
/// least weights.size() values.
double ou_convolve(std::span<const double> incs, std::span<const double> weights);

}  // namespace sflow
