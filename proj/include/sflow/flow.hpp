#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sflow/dyadic.hpp"
#include "sflow/wiener.hpp"

namespace sflow {

using State = std::vector<double>;

/// One noise realization bound to the store that materializes it.
class NoisePath {
 public:
  NoisePath(const WienerStore& store, NoiseRealization realization)
      : store_(&store), realization_(realization) {}

  const WienerStore& store() const { return *store_; }
  const NoiseRealization& realization() const { return realization_; }

 private:
  const WienerStore* store_;
  NoiseRealization realization_;
};

/// Addresses realizations (master_seed, index) of one store.
class NoiseSource {
 public:
  NoiseSource(const WienerStore& store, std::uint64_t master_seed, int num_components)
      : store_(&store), master_seed_(master_seed), num_components_(num_components) {}

  NoisePath path(std::uint64_t index) const {
    return NoisePath(*store_, NoiseRealization{master_seed_, index, num_components_});
  }
  const WienerStore& store() const { return *store_; }
  std::uint64_t master_seed() const { return master_seed_; }
  int num_components() const { return num_components_; }

 private:
  const WienerStore* store_;
  std::uint64_t master_seed_;
  int num_components_;
};

/// Hands out fresh realization indices so repeated Monte Carlo estimates are
/// independent yet reproducible.
class RealizationCounter {
 public:
  explicit RealizationCounter(std::uint64_t first = 0) : next_(first) {}
  std::uint64_t take(std::uint64_t n = 1) {
    const std::uint64_t first = next_;
    next_ += n;
    return first;
  }
  std::uint64_t peek() const { return next_; }

 private:
  std::uint64_t next_;
};

/// Bounded observable on the state space.
class TestFunction {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  TestFunction(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

  double operator()(std::span<const double> x) const { return fn_(x); }
  const std::string& name() const { return name_; }

  static TestFunction coordinate(std::size_t i);
  static TestFunction tanh_of(std::size_t i, double scale = 1.0);
  /// 1 on the closed box [lo, hi], 0 elsewhere.
  static TestFunction indicator_box(State lo, State hi);
  static TestFunction constant(double c);

 private:
  std::string name_;
  Fn fn_;
};

/// The two-parameter family of maps x -> S(t, s; w) x. Times live on a dyadic
/// grid; composition over grid-aligned triples is exact.
class FlowModel {
 public:
  virtual ~FlowModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  /// Level on which composition is exact; evolve accepts only these times.
  virtual int grid_level() const = 0;
  virtual int noise_components() const = 0;

  /// Validates the request and applies the flow map.
  State evolve(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const;

  /// Applies the flow to every particle of a particle-major coordinate block.
  /// Equal bit-for-bit to calling evolve on each particle.
  std::vector<double> evolve_many(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> coords,
                                  int jobs = 1) const;

  /// Exact value of |P_su f(x) - P_tu P_st f(x)| when the model carries an
  /// exact transition kernel.
  virtual std::optional<double> exact_chapman_residual(DyadicTime s, DyadicTime t, DyadicTime u,
                                                       const TestFunction& f,
                                                       std::span<const double> x) const {
    (void)s, (void)t, (void)u, (void)f, (void)x;
    return std::nullopt;
  }

 protected:
  virtual State advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const = 0;
  virtual std::vector<double> advance_many(const NoisePath& w, DyadicTime s, DyadicTime t,
                                           std::span<const double> coords, int jobs) const;
};

NoiseSource noise_for(const FlowModel& model, const WienerStore& store, std::uint64_t master_seed);

void check_aligned(const FlowModel& model, DyadicTime t);

/// max over points of |S(t,r) S(r,s) x - S(t,s) x|.
double flow_residual(const FlowModel& model, const NoisePath& w, DyadicTime s, DyadicTime r, DyadicTime t,
                     std::span<const State> points);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Monte Carlo estimate of P_st f(x) = E f(S(t,s;w)x) over fresh realizations.
McEstimate markov_apply(const FlowModel& model, const NoiseSource& noise, DyadicTime s, DyadicTime t,
                        const TestFunction& f, std::span<const double> x, std::size_t n_realizations,
                        RealizationCounter& counter, int jobs = 1);

struct ChapmanResult {
  double residual = 0.0;
  double combined_stderr = 0.0;
  bool exact = false;
};

/// Compares P_su f(x) with P_tu applied pointwise to samples of P_st.
ChapmanResult chapman_residual(const FlowModel& model, const NoiseSource& noise, DyadicTime s, DyadicTime t,
                               DyadicTime u, const TestFunction& f, std::span<const double> x,
                               std::size_t n_realizations, RealizationCounter& counter, int jobs = 1);

}  // namespace sflow
