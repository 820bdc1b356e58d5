#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"
#include "sflow/models.hpp"

using namespace sflow;

namespace {
const PeriodicProfile kCos{0.0, {1.0}, {}};
}

TEST_CASE("deterministic models") {
  WienerStore store;
  const NoisePath w(store, NoiseRealization{0, 0, 1});
  const IdentityModel id(2);
  CHECK(id.evolve(w, DyadicTime(), DyadicTime::integer(3), State{1.0, -1.0}) == State{1.0, -1.0});
  const ExponentialModel ex(0.5);
  CHECK(ex.evolve(w, DyadicTime(), DyadicTime::integer(2), State{3.0})[0] == doctest::Approx(3.0 * std::exp(-1.0)));
  const ShiftModel sh;
  CHECK(sh.evolve(w, DyadicTime::integer(-2), DyadicTime::integer(3), State{1.0})[0] == 6.0);
  CHECK_THROWS_AS(sh.evolve(w, DyadicTime(), DyadicTime::integer(1), State{-1.0}), StateError);
}

TEST_CASE("periodic response solves the forced linear equation") {
  const PeriodicProfile p{0.3, {1.0, -0.5}, {0.2}};
  const double a = 0.8;
  for (double t : {-1.0, 0.0, 2.5}) {
    const double h = 1e-5;
    const double deriv = (p.periodic_response(a, t + h) - p.periodic_response(a, t - h)) / (2 * h);
    CHECK(deriv == doctest::Approx(-a * p.periodic_response(a, t) + p(t)).epsilon(1e-8));
    CHECK(p.periodic_response(a, t + 2 * M_PI) == doctest::Approx(p.periodic_response(a, t)));
  }
  CHECK(kCos.periodic_response(1.0, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("Euler-Maruyama composes bit-exactly") {
  WienerStore store;
  const auto em = EulerMaruyamaModel::linear(1.0, 0.7, kCos, 6);
  const NoiseSource src = noise_for(em, store, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t a = static_cast<std::int64_t>(splitmix64(trial) % 128) - 64;
    const std::int64_t b = a + static_cast<std::int64_t>(splitmix64(trial + 1) % 64);
    const std::int64_t c = b + static_cast<std::int64_t>(splitmix64(trial + 2) % 64);
    const std::vector<State> pts{{0.1}, {-2.0}};
    CHECK(flow_residual(em, src.path(trial), DyadicTime(a, 6), DyadicTime(b, 6), DyadicTime(c, 6), pts) == 0.0);
  }
}

TEST_CASE("Euler-Maruyama converges to the closed form") {
  WienerStore store;
  const NoisePath w(store, NoiseRealization{4, 0, 1});
  const DyadicTime s = DyadicTime::integer(-2), t = DyadicTime::integer(1);
  double prev = INFINITY;
  for (int level : {6, 8, 10}) {
    const auto em = EulerMaruyamaModel::linear(1.0, 0.5, kCos, level);
    const double ref = oracle::linear_solution(store, w.realization(), 1.0, 0.5, s, t, 12, 0.4);
    const double err = std::abs(em.evolve(w, s, t, State{0.4})[0] - ref);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 2e-3);
}

TEST_CASE("Euler-Maruyama guards against blow-up") {
  WienerStore store;
  const EulerMaruyamaModel grow("grow", 1, 1, [](double, std::span<const double> x, std::span<double> out) {
    out[0] = x[0] * x[0];
  }, {0.0}, 4, 1e6);
  CHECK_THROWS_AS(grow.evolve(NoisePath(store, {0, 0, 1}), DyadicTime(), DyadicTime::integer(5), State{2.0}),
                  DivergenceError);
}

TEST_CASE("linear model parameters") {
  CHECK_THROWS_AS(LinearOUModel(-1.0, 1.0, kCos, 3), PreconditionError);
  const LinearOUModel m(2.0, 1.0, kCos, 3);
  CHECK(m.stationary_variance() == 0.25);
  WienerStore store;
  const NoisePath w(store, {1, 0, 1});
  const auto parts = m.affine_parts(w, DyadicTime(), DyadicTime::integer(1));
  CHECK(parts.decay == doctest::Approx(std::exp(-2.0)));
  CHECK(m.linear_flow(w, DyadicTime(), DyadicTime::integer(1), 1.0) == parts.apply(1.0));
}
