#include "sflow/esm.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"
#include "sflow/parallel.hpp"

namespace sflow {

namespace {

void check_family(const FlowModel& model, const MeasureFamily& family) {
  if (family.dim() != model.state_dim()) {
    throw PreconditionError("measure family '" + family.name() + "' has dimension " + std::to_string(family.dim()) +
                            ", model '" + model.name() + "' has " + std::to_string(model.state_dim()));
  }
}

EmpiricalMeasure union_of(std::size_t dim, const std::vector<std::vector<double>>& parts) {
  std::vector<double> coords;
  for (const auto& p : parts) coords.insert(coords.end(), p.begin(), p.end());
  return EmpiricalMeasure::uniform(dim, std::move(coords));
}

std::int64_t floor_mod(std::int64_t a, std::int64_t p) {
  const std::int64_t r = a % p;
  return r < 0 ? r + p : r;
}

}  // namespace

GaussianFamily::GaussianFamily(std::function<double(double)> mean, double variance, Mode mode, std::uint64_t seed)
    : mean_(std::move(mean)), variance_(variance), mode_(mode), seed_(seed) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) throw PreconditionError("variance must be finite and >= 0");
}

GaussianFamily GaussianFamily::of_linear(const LinearOUModel& model, Mode mode, std::uint64_t seed,
                                         double variance_scale) {
  const PeriodicProfile forcing = model.forcing();
  const double rate = model.rate();
  return GaussianFamily([forcing, rate](double t) { return forcing.periodic_response(rate, t); },
                        model.stationary_variance() * variance_scale, mode, seed);
}

EmpiricalMeasure GaussianFamily::sample(DyadicTime t, std::size_t n, std::uint64_t stream) const {
  if (n == 0) throw PreconditionError("cannot sample zero particles");
  const double m = mean_(t.to_double());
  const double sd = std::sqrt(variance_);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = mode_ == Mode::Stratified
                         ? normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(n))
                         : key_normal(mix_key({seed_, stream, static_cast<std::uint64_t>(t.numerator()),
                                               static_cast<std::uint64_t>(t.level()), i}));
    x[i] = m + sd * z;
  }
  return EmpiricalMeasure::uniform(1, std::move(x));
}

FiniteEsmFamily::FiniteEsmFamily(finite::FiniteFlow flow) : flow_(std::move(flow)) {
  const finite::EsmSolution sol = finite::ff_esm_solve(flow_);
  if (!sol.unique) throw PreconditionError("finite flow '" + flow_.name + "' has no unique evolution system");
  family_ = sol.family;
}

const finite::ExactMeasure& FiniteEsmFamily::exact(std::int64_t t) const {
  return family_[static_cast<std::size_t>(floor_mod(t, static_cast<std::int64_t>(family_.size())))];
}

EmpiricalMeasure to_empirical(const finite::ExactMeasure& mu) {
  std::vector<double> coords, weights;
  for (std::size_t x = 0; x < mu.size(); ++x) {
    if (mu[x] == 0) continue;
    coords.push_back(static_cast<double>(x));
    weights.push_back(mu[x].convert_to<double>());
  }
  if (coords.empty()) throw PreconditionError("exact measure has no mass");
  return EmpiricalMeasure(1, std::move(coords), std::move(weights));
}

EmpiricalMeasure FiniteEsmFamily::sample(DyadicTime t, std::size_t, std::uint64_t) const {
  if (!t.aligned_to(0)) throw AlignmentError("finite families live on integer times");
  return to_empirical(exact(t.ticks(0)));
}

PullbackSchedule PullbackSchedule::geometric(DyadicTime anchor, DyadicTime c, int count, double epsilon) {
  if (count < 1) throw PreconditionError("schedule needs at least one start time");
  if (c <= DyadicTime()) throw PreconditionError("schedule scale must be positive");
  PullbackSchedule sch;
  sch.anchor = anchor;
  sch.epsilon = epsilon;
  DyadicTime lookback = c;
  for (int k = 0; k < count; ++k) {
    sch.starts.push_back(anchor - lookback);
    lookback = lookback + lookback;
  }
  return sch;
}

void PullbackSchedule::validate() const {
  if (starts.empty()) throw PreconditionError("schedule has no start times");
  if (!(epsilon > 0.0)) throw PreconditionError("schedule tolerance must be positive");
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (starts[k] > anchor) throw OrderingError("start time " + starts[k].str() + " lies after the anchor");
    if (k > 0 && !(starts[k] < starts[k - 1])) throw PreconditionError("start times must strictly decrease");
  }
}

PullbackResult pullback_measure(const FlowModel& model, const NoisePath& w, const PullbackSchedule& schedule,
                                const MeasureFamily& family, const PullbackOptions& options) {
  schedule.validate();
  check_family(model, family);
  if (options.required_hits < 1) throw PreconditionError("required_hits must be positive");
  if (options.n_particles == 0) throw PreconditionError("need at least one particle");
  for (const auto& s : schedule.starts) check_aligned(model, s);
  check_aligned(model, schedule.anchor);

  PullbackResult res;
  std::optional<EmpiricalMeasure> prev;
  int hits = 0;
  for (std::size_t k = 0; k < schedule.starts.size(); ++k) {
    const DyadicTime s = schedule.starts[k];
    std::optional<EmpiricalMeasure> iterate;
    try {
      const EmpiricalMeasure rho = family.sample(s, options.n_particles, options.stream);
      res.start_spreads.push_back(rho.spread());
      iterate = pushforward_flow(rho, model, w, s, schedule.anchor, options.jobs);
    } catch (const DivergenceError& e) {
      res.failure = "start " + s.str() + ": " + e.what();
    } catch (const StateError& e) {
      res.failure = "start " + s.str() + ": " + e.what();
    }
    if (!iterate) {
      if (res.start_spreads.size() > res.spreads.size()) res.start_spreads.pop_back();
      break;
    }
    res.spreads.push_back(iterate->spread());
    res.means.push_back(iterate->mean());
    if (prev) {
      const double d = distance(*iterate, *prev, options.jobs);
      res.distances.push_back(d);
      hits = d < schedule.epsilon ? hits + 1 : 0;
    }
    res.measure = *iterate;
    res.used_index = static_cast<int>(k);
    if (!res.converged && hits >= options.required_hits) {
      res.converged = true;
      res.converged_index = static_cast<int>(k);
      if (!options.run_full_schedule) break;
    }
    prev = std::move(iterate);
  }
  return res;
}

MartingaleTrace martingale_trace(const FlowModel& model, const NoisePath& w, DyadicTime t, const TestFunction& f,
                                 const MeasureFamily& family, const std::vector<DyadicTime>& lookbacks,
                                 std::size_t n_particles, int jobs) {
  check_family(model, family);
  if (lookbacks.empty()) throw PreconditionError("martingale trace needs lookbacks");
  for (std::size_t k = 0; k < lookbacks.size(); ++k) {
    if (lookbacks[k] < DyadicTime()) throw PreconditionError("lookbacks must be nonnegative");
    if (k > 0 && !(lookbacks[k - 1] < lookbacks[k])) throw PreconditionError("lookbacks must increase");
  }
  MartingaleTrace tr;
  tr.test_function = f.name();
  for (const auto& L : lookbacks) {
    const DyadicTime s = t - L;
    const EmpiricalMeasure rho = family.sample(s, n_particles, 0);
    const double m = expect(pushforward_flow(rho, model, w, s, t, jobs), f);
    if (!std::isfinite(m)) throw EvaluationError("martingale value is not finite");
    tr.lookbacks.push_back(L);
    tr.values.push_back(m);
  }
  return tr;
}

MartingaleEnsemble martingale_ensemble(const FlowModel& model, const NoiseSource& noise, DyadicTime t,
                                       const TestFunction& f, const MeasureFamily& family,
                                       const std::vector<DyadicTime>& lookbacks, std::size_t n_realizations,
                                       RealizationCounter& counter, std::size_t n_particles, int jobs) {
  if (n_realizations < 2) throw PreconditionError("martingale ensemble needs at least two realizations");
  const std::uint64_t first = counter.take(n_realizations);
  std::vector<std::vector<double>> values(n_realizations);
  parallel_for(n_realizations, jobs, [&](std::size_t r) {
    values[r] = martingale_trace(model, noise.path(first + r), t, f, family, lookbacks, n_particles, 1).values;
  });

  const std::size_t K = lookbacks.size();
  const double n = static_cast<double>(n_realizations);
  auto mean_se = [&](auto&& value) {
    std::vector<double> v(n_realizations);
    for (std::size_t r = 0; r < n_realizations; ++r) v[r] = value(r);
    const double m = pairwise_sum(v) / n;
    for (double& x : v) x = (x - m) * (x - m);
    return std::pair{m, std::sqrt(pairwise_sum(v) / (n - 1.0) / n)};
  };

  MartingaleEnsemble out;
  for (std::size_t k = 0; k < K; ++k) {
    const auto [m, se] = mean_se([&](std::size_t r) { return values[r][k]; });
    out.means.push_back(m);
    out.stderrs.push_back(se);
  }
  // The paired difference uses the realization-wise correlation between lookbacks.
  double worst = -1.0;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) {
      const auto [gap, se] = mean_se([&](std::size_t r) { return values[r][j] - values[r][i]; });
      const double g = std::abs(gap);
      const double ratio = g == 0.0 ? 0.0 : (se == 0.0 ? INFINITY : g / se);
      if (ratio > worst || (ratio == worst && g > out.max_gap)) {
        worst = ratio;
        out.max_gap = g;
        out.gap_stderr = se;
      }
    }
  }
  return out;
}

EmpiricalMeasure seed_box(const State& lo, const State& hi, int per_dim) {
  if (lo.size() != hi.size() || lo.empty()) throw PreconditionError("box corners must share a positive dimension");
  if (per_dim < 1) throw PreconditionError("need at least one point per axis");
  const std::size_t d = lo.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (!(lo[i] <= hi[i])) throw PreconditionError("box corners out of order");
    total *= static_cast<std::size_t>(per_dim);
    if (total > (std::size_t{1} << 22)) throw PreconditionError("seed box too large");
  }
  std::vector<double> coords;
  coords.reserve(total * d);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (std::size_t i = 0; i < d; ++i) {
      const auto j = static_cast<double>(rest % static_cast<std::size_t>(per_dim));
      rest /= static_cast<std::size_t>(per_dim);
      coords.push_back(per_dim == 1 ? 0.5 * (lo[i] + hi[i]) : lo[i] + (hi[i] - lo[i]) * j / (per_dim - 1));
    }
  }
  return EmpiricalMeasure::uniform(d, std::move(coords));
}

AttractorCloud pullback_attractor(const FlowModel& model, const NoisePath& w, const PullbackSchedule& schedule,
                                  const std::vector<EmpiricalMeasure>& seeds, int jobs) {
  schedule.validate();
  if (seeds.empty()) throw PreconditionError("pullback_attractor needs seed clouds");
  for (const auto& b : seeds) {
    if (b.dim() != model.state_dim()) throw PreconditionError("seed cloud dimension differs from the model's");
  }
  AttractorCloud cloud;
  cloud.time = schedule.anchor;
  std::optional<EmpiricalMeasure> prev;
  for (const DyadicTime& s : schedule.starts) {
    std::vector<std::vector<double>> parts;
    try {
      for (const auto& b : seeds) parts.push_back(model.evolve_many(w, s, schedule.anchor, b.coords(), jobs));
    } catch (const DivergenceError& e) {
      cloud.failure = "start " + s.str() + ": " + e.what();
      break;
    } catch (const StateError& e) {
      cloud.failure = "start " + s.str() + ": " + e.what();
      break;
    }
    EmpiricalMeasure next = union_of(model.state_dim(), parts);
    if (prev) {
      const double d = hausdorff_distance(next, *prev);
      cloud.distances.push_back(d);
      if (d < schedule.epsilon) {
        cloud.particles = std::move(next);
        cloud.converged = true;
        return cloud;
      }
    }
    cloud.particles = next;
    prev = std::move(next);
  }
  return cloud;
}

double attractor_invariance_residual(const FlowModel& model, const NoisePath& w, DyadicTime s, DyadicTime t,
                                     const AttractorCloud& cloud_s, const AttractorCloud& cloud_t) {
  if (!cloud_s.converged || !cloud_t.converged) throw PreconditionError("attractor clouds must be converged");
  if (cloud_s.time != s || cloud_t.time != t) throw PreconditionError("cloud times do not match (s, t)");
  const EmpiricalMeasure pushed = pushforward_flow(cloud_s.particles, model, w, s, t);
  return hausdorff_distance(pushed, cloud_t.particles);
}

SelectedTrajectory select_trajectory(const FlowModel& model, const NoisePath& w, const std::vector<DyadicTime>& times,
                                     const SelectionOptions& options) {
  if (times.empty()) throw PreconditionError("no times to select");
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (times[k] < times[k - 1]) throw OrderingError("selection times must not decrease");
  }
  SelectedTrajectory tr;
  tr.times = times;

  if (const auto* ff = dynamic_cast<const finite::FiniteFlowModel*>(&model)) {
    if (options.finite_depth < 0) throw PreconditionError("finite depth must be nonnegative");
    std::vector<std::int64_t> ticks;
    for (const auto& t : times) {
      if (!t.aligned_to(0)) throw AlignmentError("finite flows select on integer times");
      ticks.push_back(t.ticks(0));
    }
    const finite::Word word = ff->word_of(w, ticks.front() - options.finite_depth, ticks.back());
    const finite::FiniteTrajectory ft = finite::ff_select_trajectory(ff->flow(), word, ticks);
    if (!ft.consistent) throw StateError("finite selection is not a trajectory");
    for (int x : ft.states) tr.states.push_back({static_cast<double>(x)});
    return tr;
  }

  if (options.seeds.empty()) throw PreconditionError("contracting selection needs seed clouds");
  const PullbackSchedule sch =
      PullbackSchedule::geometric(times.front(), options.base_lookback, options.schedule_length, options.epsilon);
  const AttractorCloud cloud = pullback_attractor(model, w, sch, options.seeds);
  if (!cloud.failure.empty()) throw UnsupportedCase("pullback diverged: " + cloud.failure);
  const double diam = cloud.particles.diameter();
  if (!(diam <= options.singleton_tolerance)) {
    throw UnsupportedCase("pullback cloud of diameter " + std::to_string(diam) +
                          " is not a single point; only contracting or finite models are supported");
  }
  tr.states.push_back(cloud.particles.mean());
  for (std::size_t k = 1; k < times.size(); ++k) {
    tr.states.push_back(model.evolve(w, times[k - 1], times[k], tr.states.back()));
  }
  return tr;
}

EmpiricalMeasure esm_mean(const RandomMeasure& family) {
  if (family.assignment.empty()) throw PreconditionError("esm_mean of an empty ensemble");
  const std::vector<double> weights(family.assignment.size(), 1.0 / static_cast<double>(family.assignment.size()));
  return mixture(family.assignment, weights);
}

EsmResidual esm_residual(const FlowModel& model, const NoiseSource& noise, const MeasureFamily& family,
                         const std::vector<std::pair<DyadicTime, DyadicTime>>& pairs, std::size_t n,
                         RealizationCounter& counter, int jobs) {
  check_family(model, family);
  if (pairs.empty()) throw PreconditionError("esm_residual needs time pairs");
  if (n == 0) throw PreconditionError("esm_residual needs particles");
  EsmResidual res;
  const auto* ff = dynamic_cast<const finite::FiniteFlowModel*>(&model);
  const auto* exact = dynamic_cast<const FiniteEsmFamily*>(&family);
  for (const auto& [s, t] : pairs) {
    if (s > t) throw OrderingError("esm_residual pair with s > t");
    double d = 0.0;
    if (ff && exact) {
      const finite::ExactMeasure pushed =
          finite::apply_kernel(exact->exact(s.ticks(0)), finite::kernel(ff->flow(), s.ticks(0), t.ticks(0)));
      const finite::ExactMeasure& target = exact->exact(t.ticks(0));
      d = pushed == target ? 0.0 : distance(to_empirical(pushed), to_empirical(target));
    } else {
      const std::uint64_t first = counter.take(n + 1);
      const EmpiricalMeasure start = family.sample(s, n, first);
      const std::size_t dim = start.dim();
      std::vector<double> coords(start.coords().size());
      parallel_for(start.size(), jobs, [&](std::size_t i) {
        const State y = model.evolve(noise.path(first + i), s, t, start.particle(i));
        std::copy(y.begin(), y.end(), coords.begin() + static_cast<std::ptrdiff_t>(i * dim));
      });
      const EmpiricalMeasure pushed(dim, std::move(coords), start.weights());
      d = distance(pushed, family.sample(t, n, first + n), jobs);
    }
    res.distances.push_back(d);
    res.max_distance = std::max(res.max_distance, d);
  }
  return res;
}

double self_distance_baseline(const MeasureFamily& family, DyadicTime t, std::size_t n, int draws,
                              std::uint64_t first_stream, int jobs) {
  if (draws < 1) throw PreconditionError("baseline needs at least one draw");
  std::vector<double> d(static_cast<std::size_t>(draws));
  for (int k = 0; k < draws; ++k) {
    const std::uint64_t a = first_stream + 2 * static_cast<std::uint64_t>(k);
    d[static_cast<std::size_t>(k)] = distance(family.sample(t, n, a), family.sample(t, n, a + 1), jobs);
  }
  return pairwise_sum(d) / draws;
}

}  // namespace sflow
