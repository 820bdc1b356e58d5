#include "sflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sflow/errors.hpp"
#include "sflow/parallel.hpp"

namespace sflow {

namespace {

bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double checked(double v, const TestFunction& f) {
  if (!std::isfinite(v)) throw EvaluationError("test function '" + f.name() + "' returned a non-finite value");
  return v;
}

McEstimate mean_and_stderr(std::span<const double> values) {
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    if (!std::isfinite(values.front())) throw EvaluationError("Monte Carlo average overflowed");
    return {values.front(), 0.0};
  }
  const double n = static_cast<double>(values.size());
  const double mean = pairwise_sum(values) / n;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
  const double var = values.size() > 1 ? pairwise_sum(sq) / (n - 1.0) : 0.0;
  if (!std::isfinite(mean) || !std::isfinite(var)) throw EvaluationError("Monte Carlo average overflowed");
  return {mean, std::sqrt(var / n)};
}

}  // namespace

TestFunction TestFunction::coordinate(std::size_t i) {
  return TestFunction("x" + std::to_string(i), [i](std::span<const double> x) { return x[i]; });
}

TestFunction TestFunction::tanh_of(std::size_t i, double scale) {
  std::ostringstream name;
  name << "tanh(" << scale << "*x" << i << ")";
  return TestFunction(name.str(), [i, scale](std::span<const double> x) { return std::tanh(scale * x[i]); });
}

TestFunction TestFunction::indicator_box(State lo, State hi) {
  if (lo.size() != hi.size()) throw PreconditionError("indicator box bounds differ in dimension");
  return TestFunction("1_box", [lo = std::move(lo), hi = std::move(hi)](std::span<const double> x) {
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (x[k] < lo[k] || x[k] > hi[k]) return 0.0;
    }
    return 1.0;
  });
}

TestFunction TestFunction::constant(double c) {
  std::ostringstream name;
  name << "const(" << c << ")";
  return TestFunction(name.str(), [c](std::span<const double>) { return c; });
}

void check_aligned(const FlowModel& model, DyadicTime t) {
  if (!t.aligned_to(model.grid_level())) {
    throw AlignmentError("time " + t.str() + " is not on the level-" + std::to_string(model.grid_level()) +
                         " grid of model " + model.name());
  }
}

State FlowModel::evolve(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  if (s > t) throw OrderingError("evolve: s = " + s.str() + " > t = " + t.str());
  if (x.size() != state_dim()) {
    throw StateError("state has dimension " + std::to_string(x.size()) + ", model " + name() + " expects " +
                     std::to_string(state_dim()));
  }
  if (!all_finite(x)) throw StateError("non-finite initial state");
  check_aligned(*this, s);
  check_aligned(*this, t);
  if (s == t) return State(x.begin(), x.end());
  State out = advance(w, s, t, x);
  if (!all_finite(out)) throw StateError("model " + name() + " produced a non-finite state");
  return out;
}

std::vector<double> FlowModel::evolve_many(const NoisePath& w, DyadicTime s, DyadicTime t,
                                           std::span<const double> coords, int jobs) const {
  if (s > t) throw OrderingError("evolve: s = " + s.str() + " > t = " + t.str());
  if (coords.size() % state_dim() != 0) throw StateError("coordinate block does not split into states");
  if (!all_finite(coords)) throw StateError("non-finite initial state");
  check_aligned(*this, s);
  check_aligned(*this, t);
  if (s == t) return std::vector<double>(coords.begin(), coords.end());
  std::vector<double> out = advance_many(w, s, t, coords, jobs);
  if (!all_finite(out)) throw StateError("model " + name() + " produced a non-finite state");
  return out;
}

std::vector<double> FlowModel::advance_many(const NoisePath& w, DyadicTime s, DyadicTime t,
                                            std::span<const double> coords, int jobs) const {
  const std::size_t d = state_dim();
  const std::size_t n = coords.size() / d;
  std::vector<double> out(coords.size());
  parallel_for(n, jobs, [&](std::size_t i) {
    const State y = advance(w, s, t, coords.subspan(i * d, d));
    if (y.size() != d) throw StateError("model changed the state dimension");
    std::copy(y.begin(), y.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
  });
  return out;
}

NoiseSource noise_for(const FlowModel& model, const WienerStore& store, std::uint64_t master_seed) {
  return NoiseSource(store, master_seed, std::max(1, model.noise_components()));
}

double flow_residual(const FlowModel& model, const NoisePath& w, DyadicTime s, DyadicTime r, DyadicTime t,
                     std::span<const State> points) {
  if (!(s <= r && r <= t)) throw OrderingError("flow_residual needs s <= r <= t");
  check_aligned(model, s);
  check_aligned(model, r);
  check_aligned(model, t);
  double worst = 0.0;
  for (const State& x : points) {
    const State direct = model.evolve(w, s, t, x);
    const State composed = model.evolve(w, r, t, model.evolve(w, s, r, x));
    double sq = 0.0;
    for (std::size_t k = 0; k < direct.size(); ++k) sq += (direct[k] - composed[k]) * (direct[k] - composed[k]);
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

McEstimate markov_apply(const FlowModel& model, const NoiseSource& noise, DyadicTime s, DyadicTime t,
                        const TestFunction& f, std::span<const double> x, std::size_t n_realizations,
                        RealizationCounter& counter, int jobs) {
  if (n_realizations < 2) throw PreconditionError("markov_apply needs at least two realizations");
  const std::uint64_t first = counter.take(n_realizations);
  std::vector<double> values(n_realizations);
  parallel_for(n_realizations, jobs, [&](std::size_t i) {
    values[i] = checked(f(model.evolve(noise.path(first + i), s, t, x)), f);
  });
  return mean_and_stderr(values);
}

ChapmanResult chapman_residual(const FlowModel& model, const NoiseSource& noise, DyadicTime s, DyadicTime t,
                               DyadicTime u, const TestFunction& f, std::span<const double> x,
                               std::size_t n_realizations, RealizationCounter& counter, int jobs) {
  if (!(s <= t && t <= u)) throw OrderingError("chapman_residual needs s <= t <= u");
  if (auto exact = model.exact_chapman_residual(s, t, u, f, x)) return {*exact, 0.0, true};

  const McEstimate direct = markov_apply(model, noise, s, u, f, x, n_realizations, counter, jobs);

  const std::uint64_t outer = counter.take(n_realizations);
  const std::uint64_t inner = counter.take(n_realizations * n_realizations);
  std::vector<double> inner_means(n_realizations);
  parallel_for(n_realizations, jobs, [&](std::size_t i) {
    const State y = model.evolve(noise.path(outer + i), s, t, x);
    std::vector<double> vals(n_realizations);
    for (std::size_t j = 0; j < n_realizations; ++j) {
      vals[j] = checked(f(model.evolve(noise.path(inner + i * n_realizations + j), t, u, y)), f);
    }
    inner_means[i] = mean_and_stderr(vals).estimate;
  });
  const McEstimate composed = mean_and_stderr(inner_means);
  return {std::abs(direct.estimate - composed.estimate),
          std::hypot(direct.standard_error, composed.standard_error), false};
}

}  // namespace sflow
