#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sflow/flow.hpp"

namespace sflow {

/// c0 + sum_k (cos_k cos(k t) + sin_k sin(k t)), k = 1, 2, ...; 2*pi periodic.
struct PeriodicProfile {
  double constant = 0.0;
  std::vector<double> cos_coeffs;
  std::vector<double> sin_coeffs;

  double operator()(double t) const;
  /// The unique bounded solution of m' = -rate m + profile(t).
  double periodic_response(double rate, double t) const;
};

/// S(t,s) x = x.
class IdentityModel final : public FlowModel {
 public:
  explicit IdentityModel(std::size_t dim = 1, int level = 0) : dim_(dim), level_(level) {}
  std::string name() const override { return "identity"; }
  std::size_t state_dim() const override { return dim_; }
  int grid_level() const override { return level_; }
  int noise_components() const override { return 0; }

 protected:
  State advance(const NoisePath&, DyadicTime, DyadicTime, std::span<const double> x) const override {
    return State(x.begin(), x.end());
  }

 private:
  std::size_t dim_;
  int level_;
};

/// x' = -rate x, solved exactly. A negative rate gives the expanding flow.
class ExponentialModel final : public FlowModel {
 public:
  ExponentialModel(double rate, std::size_t dim = 1, int level = 0) : rate_(rate), dim_(dim), level_(level) {}
  std::string name() const override { return "exponential"; }
  std::size_t state_dim() const override { return dim_; }
  int grid_level() const override { return level_; }
  int noise_components() const override { return 0; }
  double rate() const { return rate_; }

 protected:
  State advance(const NoisePath&, DyadicTime s, DyadicTime t, std::span<const double> x) const override;

 private:
  double rate_;
  std::size_t dim_;
  int level_;
};

/// S(t,s) x = x + t - s on [0, inf): a flow without an evolution system of
/// measures.
class ShiftModel final : public FlowModel {
 public:
  explicit ShiftModel(int level = 0) : level_(level) {}
  std::string name() const override { return "shift"; }
  std::size_t state_dim() const override { return 1; }
  int grid_level() const override { return level_; }
  int noise_components() const override { return 0; }

 protected:
  State advance(const NoisePath&, DyadicTime s, DyadicTime t, std::span<const double> x) const override;

 private:
  int level_;
};

/// dX = (-a X + f(t)) dt + sigma dW, evaluated in closed form on the level grid:
/// exp(-a(t-s)) x + trapezoid of exp(-a(t-u)) f(u) + sigma * sum of
/// cell-averaged kernels times Wiener increments.
class LinearOUModel final : public FlowModel {
 public:
  LinearOUModel(double rate, double sigma, PeriodicProfile forcing, int level);

  std::string name() const override { return "linear-ou"; }
  std::size_t state_dim() const override { return 1; }
  int grid_level() const override { return level_; }
  int noise_components() const override { return 1; }

  double rate() const { return rate_; }
  double sigma() const { return sigma_; }
  const PeriodicProfile& forcing() const { return forcing_; }
  /// Mean of the pullback-stationary solution.
  double stationary_mean(double t) const { return forcing_.periodic_response(rate_, t); }
  double stationary_variance() const { return sigma_ * sigma_ / (2.0 * rate_); }

  double linear_flow(const NoisePath& w, DyadicTime s, DyadicTime t, double x) const;

  /// S(t,s) x = decay * x + drift + noise.
  struct AffineParts {
    double decay = 1.0;
    double drift = 0.0;
    double noise = 0.0;
    double apply(double x) const { return decay * x + drift + noise; }
  };
  AffineParts affine_parts(const NoisePath& w, DyadicTime s, DyadicTime t) const;

 protected:
  State advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const override;
  std::vector<double> advance_many(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> coords,
                                   int jobs) const override;

 private:
  double rate_;
  double sigma_;
  PeriodicProfile forcing_;
  int level_;
};

using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

/// Euler-Maruyama with constant diffusion matrix (row-major, dim x m) driven
/// by the store's increments. Throws DivergenceError when |x| exceeds guard.
State em_evolve(const DriftFn& drift, std::span<const double> diffusion, std::size_t dim, int m,
                const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x, int level,
                double guard = 1e8);

class EulerMaruyamaModel final : public FlowModel {
 public:
  EulerMaruyamaModel(std::string name, std::size_t dim, int noise_components, DriftFn drift,
                     std::vector<double> diffusion, int level, double guard = 1e8);

  std::string name() const override { return name_; }
  std::size_t state_dim() const override { return dim_; }
  int grid_level() const override { return level_; }
  int noise_components() const override { return m_; }

  /// dX = (-a X + f(t)) dt + sigma dW, the stepper analogue of LinearOUModel.
  static EulerMaruyamaModel linear(double rate, double sigma, PeriodicProfile forcing, int level);

 protected:
  State advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const override;

 private:
  std::string name_;
  std::size_t dim_;
  int m_;
  DriftFn drift_;
  std::vector<double> diffusion_;
  int level_;
  double guard_;
};

}  // namespace sflow
