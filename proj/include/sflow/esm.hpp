#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sflow/finite_oracle.hpp"
#include "sflow/flow.hpp"
#include "sflow/measure.hpp"
#include "sflow/models.hpp"

namespace sflow {

/// A time-indexed family of measures rho_t that can be sampled.
class MeasureFamily {
 public:
  virtual ~MeasureFamily() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  /// n particles of rho_t; `stream` selects independent random draws where
  /// the family is random.
  virtual EmpiricalMeasure sample(DyadicTime t, std::size_t n, std::uint64_t stream = 0) const = 0;
};

/// rho_t = mu for every t; the particle count is that of mu.
class ConstantFamily final : public MeasureFamily {
 public:
  explicit ConstantFamily(EmpiricalMeasure mu) : mu_(std::move(mu)) {}
  std::string name() const override { return "constant"; }
  std::size_t dim() const override { return mu_.dim(); }
  EmpiricalMeasure sample(DyadicTime, std::size_t, std::uint64_t) const override { return mu_; }

 private:
  EmpiricalMeasure mu_;
};

/// rho_t = Normal(mean(t), variance) on the line.
class GaussianFamily final : public MeasureFamily {
 public:
  /// Stratified: particle i at the (i + 1/2)/n quantile. Random: keyed
  /// standard normals, independent across streams.
  enum class Mode { Stratified, Random };

  GaussianFamily(std::function<double(double)> mean, double variance, Mode mode, std::uint64_t seed = 0);

  /// The evolution system of the linear model, optionally with its variance
  /// scaled.
  static GaussianFamily of_linear(const LinearOUModel& model, Mode mode, std::uint64_t seed = 0,
                                  double variance_scale = 1.0);

  std::string name() const override { return "gaussian"; }
  std::size_t dim() const override { return 1; }
  EmpiricalMeasure sample(DyadicTime t, std::size_t n, std::uint64_t stream = 0) const override;

  double mean(double t) const { return mean_(t); }
  double variance() const { return variance_; }

 private:
  std::function<double(double)> mean_;
  double variance_;
  Mode mode_;
  std::uint64_t seed_;
};

/// The exact periodic evolution system of a finite flow with a unique one;
/// samples are the weighted atoms and ignore n.
class FiniteEsmFamily final : public MeasureFamily {
 public:
  explicit FiniteEsmFamily(finite::FiniteFlow flow);
  std::string name() const override { return "finite-esm"; }
  std::size_t dim() const override { return 1; }
  EmpiricalMeasure sample(DyadicTime t, std::size_t n, std::uint64_t stream = 0) const override;

  const finite::FiniteFlow& flow() const { return flow_; }
  const finite::ExactMeasure& exact(std::int64_t t) const;

 private:
  finite::FiniteFlow flow_;
  std::vector<finite::ExactMeasure> family_;
};

EmpiricalMeasure to_empirical(const finite::ExactMeasure& mu);

/// Start times s_0 > s_1 > ... below the anchor t.
struct PullbackSchedule {
  DyadicTime anchor;
  std::vector<DyadicTime> starts;
  double epsilon = 0.02;

  /// s_k = t - c 2^k for k = 0 .. count-1.
  static PullbackSchedule geometric(DyadicTime anchor, DyadicTime c, int count, double epsilon = 0.02);
  void validate() const;
};

struct PullbackOptions {
  std::size_t n_particles = 1024;
  /// Consecutive distances below epsilon needed to declare convergence.
  int required_hits = 2;
  /// Keep pulling back after convergence and return the deepest iterate.
  bool run_full_schedule = false;
  std::uint64_t stream = 0;
  int jobs = 1;
};

struct PullbackResult {
  EmpiricalMeasure measure{1, {0.0}, {1.0}};
  /// distances[k-1] = distance(iterate k, iterate k-1).
  std::vector<double> distances;
  std::vector<double> spreads;
  std::vector<double> start_spreads;
  std::vector<State> means;
  bool converged = false;
  /// Index of the iterate at which convergence was declared, or -1.
  int converged_index = -1;
  /// Index of the returned iterate.
  int used_index = -1;
  std::string failure;
};

/// Pushes rho_{s_k} forward to the anchor along the schedule; never throws on
/// divergence, which is reported through converged = false.
PullbackResult pullback_measure(const FlowModel& model, const NoisePath& w, const PullbackSchedule& schedule,
                                const MeasureFamily& family, const PullbackOptions& options = {});

struct MartingaleTrace {
  std::vector<DyadicTime> lookbacks;
  std::vector<double> values;
  std::string test_function;
};

/// M_s = int f d(S(t, t - s; w) rho_{t-s}) for every lookback s (increasing).
MartingaleTrace martingale_trace(const FlowModel& model, const NoisePath& w, DyadicTime t, const TestFunction& f,
                                 const MeasureFamily& family, const std::vector<DyadicTime>& lookbacks,
                                 std::size_t n_particles = 1024, int jobs = 1);

struct MartingaleEnsemble {
  std::vector<double> means;
  std::vector<double> stderrs;
  /// Largest |mean_i - mean_j| and the combined standard error of that pair.
  double max_gap = 0.0;
  double gap_stderr = 0.0;
};

MartingaleEnsemble martingale_ensemble(const FlowModel& model, const NoiseSource& noise, DyadicTime t,
                                       const TestFunction& f, const MeasureFamily& family,
                                       const std::vector<DyadicTime>& lookbacks, std::size_t n_realizations,
                                       RealizationCounter& counter, std::size_t n_particles = 256, int jobs = 1);

struct AttractorCloud {
  DyadicTime time;
  EmpiricalMeasure particles{1, {0.0}, {1.0}};
  /// Hausdorff distance between consecutive clouds.
  std::vector<double> distances;
  bool converged = false;
  std::string failure;
};

/// Uniform grid with per_dim points per axis on the box [lo, hi].
EmpiricalMeasure seed_box(const State& lo, const State& hi, int per_dim);

/// Union over seed clouds of S(t, s_k; w) B for each scheduled start;
/// converged once the cloud moves by less than epsilon.
AttractorCloud pullback_attractor(const FlowModel& model, const NoisePath& w, const PullbackSchedule& schedule,
                                  const std::vector<EmpiricalMeasure>& seeds, int jobs = 1);

/// Hausdorff distance between S(t, s; w) cloud_s and cloud_t.
double attractor_invariance_residual(const FlowModel& model, const NoisePath& w, DyadicTime s, DyadicTime t,
                                     const AttractorCloud& cloud_s, const AttractorCloud& cloud_t);

struct SelectedTrajectory {
  std::vector<DyadicTime> times;
  std::vector<State> states;
};

struct SelectionOptions {
  std::vector<EmpiricalMeasure> seeds;
  /// Pullback lookbacks relative to the first time, for contracting models.
  DyadicTime base_lookback = DyadicTime::integer(1);
  int schedule_length = 6;
  double epsilon = 1e-9;
  /// Largest cloud diameter accepted as a single point.
  double singleton_tolerance = 1e-6;
  /// History length used for finite flows.
  int finite_depth = 12;
};

/// x_t with x_t = S(t, s; w) x_s for all listed s <= t. Finite flows go through
/// the exact nested-set selection; other models must pull back to a single
/// point, otherwise UnsupportedCase is thrown.
SelectedTrajectory select_trajectory(const FlowModel& model, const NoisePath& w, const std::vector<DyadicTime>& times,
                                     const SelectionOptions& options);

/// Equal-weight mixture over the ensemble.
EmpiricalMeasure esm_mean(const RandomMeasure& family);

struct EsmResidual {
  std::vector<double> distances;
  double max_distance = 0.0;
};

/// For each (s, t): n particles of rho_s, each moved by its own fresh
/// realization to t, compared with an independent n-particle draw of rho_t.
EsmResidual esm_residual(const FlowModel& model, const NoiseSource& noise, const MeasureFamily& family,
                         const std::vector<std::pair<DyadicTime, DyadicTime>>& pairs, std::size_t n,
                         RealizationCounter& counter, int jobs = 1);

/// Mean distance between independent n-particle draws of rho_t over `draws`
/// pairs of streams.
double self_distance_baseline(const MeasureFamily& family, DyadicTime t, std::size_t n, int draws,
                              std::uint64_t first_stream = 1000, int jobs = 1);

}  // namespace sflow
