#include "sflow/models.hpp"

#include <cmath>

#include "sflow/errors.hpp"
#include "sflow/parallel.hpp"

namespace sflow {

double PeriodicProfile::operator()(double t) const {
  double v = constant;
  for (std::size_t k = 0; k < cos_coeffs.size(); ++k) v += cos_coeffs[k] * std::cos(static_cast<double>(k + 1) * t);
  for (std::size_t k = 0; k < sin_coeffs.size(); ++k) v += sin_coeffs[k] * std::sin(static_cast<double>(k + 1) * t);
  return v;
}

double PeriodicProfile::periodic_response(double rate, double t) const {
  double m = constant / rate;
  for (std::size_t k = 0; k < cos_coeffs.size(); ++k) {
    const double w = static_cast<double>(k + 1);
    m += cos_coeffs[k] * (rate * std::cos(w * t) + w * std::sin(w * t)) / (rate * rate + w * w);
  }
  for (std::size_t k = 0; k < sin_coeffs.size(); ++k) {
    const double w = static_cast<double>(k + 1);
    m += sin_coeffs[k] * (rate * std::sin(w * t) - w * std::cos(w * t)) / (rate * rate + w * w);
  }
  return m;
}

State ExponentialModel::advance(const NoisePath&, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  const double factor = std::exp(-rate_ * (t - s).to_double());
  State out(x.begin(), x.end());
  for (double& v : out) v *= factor;
  return out;
}

State ShiftModel::advance(const NoisePath&, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  if (x[0] < 0.0) throw StateError("shift flow lives on [0, inf)");
  return {x[0] + (t - s).to_double()};
}

LinearOUModel::LinearOUModel(double rate, double sigma, PeriodicProfile forcing, int level)
    : rate_(rate), sigma_(sigma), forcing_(std::move(forcing)), level_(level) {
  if (!(rate_ > 0.0)) throw PreconditionError("linear model needs a positive rate");
  if (!(sigma_ >= 0.0)) throw PreconditionError("linear model needs sigma >= 0");
}

double LinearOUModel::linear_flow(const NoisePath& w, DyadicTime s, DyadicTime t, double x) const {
  if (s == t) return x;
  return affine_parts(w, s, t).apply(x);
}

LinearOUModel::AffineParts LinearOUModel::affine_parts(const NoisePath& w, DyadicTime s, DyadicTime t) const {
  if (s > t) throw OrderingError("linear_flow: s > t");
  const std::int64_t a = s.ticks(level_);
  const std::int64_t b = t.ticks(level_);
  const std::int64_t n = b - a;
  const double h = std::ldexp(1.0, -level_);
  const double decay = std::exp(-rate_ * static_cast<double>(n) * h);
  if (n == 0) return {};

  // Deterministic forcing: trapezoid of exp(-a(t-u)) f(u).
  std::vector<double> terms(static_cast<std::size_t>(n + 1));
  for (std::int64_t i = 0; i <= n; ++i) {
    const double u = std::ldexp(static_cast<double>(a + i), -level_);
    const double kernel = std::exp(-rate_ * static_cast<double>(n - i) * h);
    terms[i] = kernel * forcing_(u) * ((i == 0 || i == n) ? 0.5 * h : h);
  }
  const double drift = pairwise_sum(terms);

  double noise = 0.0;
  if (sigma_ > 0.0) {
    const auto dw = w.store().increments(w.realization(), 0, s, t, level_);
    const double cell = -std::expm1(-rate_ * h) / (rate_ * h);
    std::vector<double> nterms(dw.size());
    for (std::int64_t i = 0; i < n; ++i) {
      nterms[i] = std::exp(-rate_ * static_cast<double>(n - i - 1) * h) * dw[i];
    }
    noise = sigma_ * cell * pairwise_sum(nterms);
  }
  return {decay, drift, noise};
}

State LinearOUModel::advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  return {linear_flow(w, s, t, x[0])};
}

std::vector<double> LinearOUModel::advance_many(const NoisePath& w, DyadicTime s, DyadicTime t,
                                                std::span<const double> coords, int) const {
  const AffineParts parts = affine_parts(w, s, t);
  std::vector<double> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) out[i] = parts.apply(coords[i]);
  return out;
}

State em_evolve(const DriftFn& drift, std::span<const double> diffusion, std::size_t dim, int m,
                const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x, int level,
                double guard) {
  if (s > t) throw OrderingError("em_evolve: s > t");
  if (diffusion.size() != dim * static_cast<std::size_t>(m)) throw PreconditionError("diffusion matrix shape");
  const std::int64_t n = t.ticks(level) - s.ticks(level);
  State state(x.begin(), x.end());
  if (n == 0) return state;
  const double h = std::ldexp(1.0, -level);

  std::vector<std::vector<double>> dw;
  bool any_noise = false;
  for (double d : diffusion) any_noise |= (d != 0.0);
  if (any_noise) {
    for (int j = 0; j < m; ++j) dw.push_back(w.store().increments(w.realization(), j, s, t, level));
  }

  State b(dim);
  const std::int64_t base = s.ticks(level);
  for (std::int64_t step = 0; step < n; ++step) {
    const double time = std::ldexp(static_cast<double>(base + step), -level);
    drift(time, state, b);
    for (std::size_t i = 0; i < dim; ++i) {
      double incr = b[i] * h;
      if (any_noise) {
        for (int j = 0; j < m; ++j) incr += diffusion[i * m + j] * dw[j][step];
      }
      state[i] += incr;
    }
    double sq = 0.0;
    for (double v : state) sq += v * v;
    if (!(std::sqrt(sq) <= guard)) {
      throw DivergenceError("Euler-Maruyama state exceeded guard at step " + std::to_string(step));
    }
  }
  return state;
}

EulerMaruyamaModel::EulerMaruyamaModel(std::string name, std::size_t dim, int noise_components, DriftFn drift,
                                       std::vector<double> diffusion, int level, double guard)
    : name_(std::move(name)),
      dim_(dim),
      m_(noise_components),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      level_(level),
      guard_(guard) {
  if (diffusion_.size() != dim_ * static_cast<std::size_t>(m_)) throw PreconditionError("diffusion matrix shape");
}

EulerMaruyamaModel EulerMaruyamaModel::linear(double rate, double sigma, PeriodicProfile forcing, int level) {
  DriftFn drift = [rate, forcing = std::move(forcing)](double t, std::span<const double> x, std::span<double> out) {
    out[0] = -rate * x[0] + forcing(t);
  };
  return EulerMaruyamaModel("em-linear", 1, 1, std::move(drift), {sigma}, level);
}

State EulerMaruyamaModel::advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  return em_evolve(drift_, diffusion_, dim_, m_, w, s, t, x, level_, guard_);
}

}  // namespace sflow
