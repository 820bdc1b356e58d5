#pragma once

// Reference computations that share no code path with the library.

#include <cmath>
#include <numbers>
#include <vector>

#include "sflow/measure.hpp"
#include "sflow/wiener.hpp"

namespace oracle {

/// E|Z| for Z ~ Normal(mu, s^2).
inline double abs_normal_mean(double mu, double s) {
  if (s == 0.0) return std::abs(mu);
  const double z = mu / s;
  return s * std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * z * z) + mu * std::erf(z / std::sqrt(2.0));
}

/// Energy distance between Normal(m1, v1) and Normal(m2, v2) on the line.
inline double gaussian_energy_distance(double m1, double v1, double m2, double v2) {
  return 2.0 * abs_normal_mean(m1 - m2, std::sqrt(v1 + v2)) - abs_normal_mean(0.0, std::sqrt(2.0 * v1)) -
         abs_normal_mean(0.0, std::sqrt(2.0 * v2));
}

/// Direct O(n m) energy distance in long double.
inline double naive_energy_distance(const sflow::EmpiricalMeasure& a, const sflow::EmpiricalMeasure& b) {
  auto cross = [](const sflow::EmpiricalMeasure& p, const sflow::EmpiricalMeasure& q) {
    long double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < q.size(); ++j) {
        long double d2 = 0;
        for (std::size_t k = 0; k < p.dim(); ++k) {
          const long double d = static_cast<long double>(p.particle(i)[k]) - q.particle(j)[k];
          d2 += d * d;
        }
        acc += static_cast<long double>(p.weight(i)) * q.weight(j) * std::sqrt(d2);
      }
    }
    return acc;
  };
  return static_cast<double>(2 * cross(a, b) - cross(a, a) - cross(b, b));
}

/// Brute-force symmetric Hausdorff distance.
inline double naive_hausdorff(const sflow::EmpiricalMeasure& a, const sflow::EmpiricalMeasure& b) {
  auto semi = [](const sflow::EmpiricalMeasure& p, const sflow::EmpiricalMeasure& q) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double best = INFINITY;
      for (std::size_t j = 0; j < q.size(); ++j) {
        double d2 = 0;
        for (std::size_t k = 0; k < p.dim(); ++k) d2 += std::pow(p.particle(i)[k] - q.particle(j)[k], 2);
        best = std::min(best, std::sqrt(d2));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(semi(a, b), semi(b, a));
}

/// int_s^t exp(-a (t - u)) cos(u) du in closed form.
inline double forced_cos_integral(double a, double s, double t) {
  auto prim = [a](double u) { return (a * std::cos(u) + std::sin(u)) / (1.0 + a * a); };
  return prim(t) - std::exp(-a * (t - s)) * prim(s);
}

/// sigma * int_s^t exp(-a (t - u)) dW(u) by the midpoint rule on the level
/// grid, reading W pointwise from the store.
inline double stochastic_convolution(const sflow::WienerStore& store, const sflow::NoiseRealization& w, double a,
                                     double sigma, sflow::DyadicTime s, sflow::DyadicTime t, int level) {
  const std::int64_t a0 = s.ticks(level), b0 = t.ticks(level);
  const double h = std::ldexp(1.0, -level);
  const double tt = t.to_double();
  long double acc = 0;
  double prev = store.wiener_at(w, 0, sflow::DyadicTime(a0, level));
  for (std::int64_t i = a0; i < b0; ++i) {
    const double next = store.wiener_at(w, 0, sflow::DyadicTime(i + 1, level));
    const double mid = (static_cast<double>(i) + 0.5) * h;
    acc += std::exp(-a * (tt - mid)) * (next - prev);
    prev = next;
  }
  return sigma * static_cast<double>(acc);
}

/// Pullback-stationary solution of dX = (-a X + cos t) dt + sigma dW started
/// from x at s: exp(-a(t-s)) x + forcing integral + stochastic convolution.
inline double linear_solution(const sflow::WienerStore& store, const sflow::NoiseRealization& w, double a,
                              double sigma, sflow::DyadicTime s, sflow::DyadicTime t, int level, double x) {
  const double ss = s.to_double(), tt = t.to_double();
  return std::exp(-a * (tt - ss)) * x + forced_cos_integral(a, ss, tt) +
         stochastic_convolution(store, w, a, sigma, s, t, level);
}

}  // namespace oracle
