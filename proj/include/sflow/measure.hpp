#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "sflow/flow.hpp"

namespace sflow {

/// Weighted particle approximation of a probability measure on R^d.
/// Weights are nonnegative and sum to one.
class EmpiricalMeasure {
 public:
  /// coords holds size*dim values, particle-major. Weights are renormalized
  /// unless they already sum to one within 1e-13.
  EmpiricalMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);

  static EmpiricalMeasure uniform(std::size_t dim, std::vector<double> coords);
  static EmpiricalMeasure dirac(std::span<const double> x);
  static EmpiricalMeasure from_states(std::span<const State> states);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> particle(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& coords() const { return coords_; }

  State mean() const;
  /// Root mean square distance to the weighted mean.
  double spread() const;
  double diameter() const;

  friend bool operator==(const EmpiricalMeasure&, const EmpiricalMeasure&) = default;

 private:
  std::size_t dim_;
  std::vector<double> coords_;
  std::vector<double> weights_;
};

using StateMap = std::function<State(std::span<const double>)>;

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const StateMap& g, int jobs = 1);

/// Image of mu under x -> S(t, s; w) x.
EmpiricalMeasure pushforward_flow(const EmpiricalMeasure& mu, const FlowModel& model, const NoisePath& w,
                                  DyadicTime s, DyadicTime t, int jobs = 1);

double expect(const EmpiricalMeasure& mu, const TestFunction& f);

/// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| between the two weighted
/// particle sets, computed exactly. Symmetric bit-for-bit; zero on identical
/// inputs.
double distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int jobs = 1);

EmpiricalMeasure mixture(std::span<const EmpiricalMeasure> measures, std::span<const double> mix_weights);

/// One measure per realization index 0..size()-1.
struct RandomMeasure {
  std::vector<EmpiricalMeasure> assignment;
  std::size_t ensemble_size() const { return assignment.size(); }
};

double hausdorff_semidistance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
double hausdorff_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

/// Text table, one particle per row: weight then coordinates, 17 significant
/// digits. Reading reproduces the measure bit-for-bit.
void write_measure(std::ostream& os, const EmpiricalMeasure& mu);
EmpiricalMeasure read_measure(std::istream& is);

}  // namespace sflow
