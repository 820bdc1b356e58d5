#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sflow/errors.hpp"
#include "sflow/flow.hpp"
#include "sflow/keyed.hpp"
#include "sflow/models.hpp"

using namespace sflow;

namespace {
const PeriodicProfile kCos{0.0, {1.0}, {}};
}

TEST_CASE("evolve validates its request") {
  WienerStore store;
  const LinearOUModel m(1.0, 0.3, kCos, 4);
  const NoisePath w = noise_for(m, store, 1).path(0);
  const State x{0.5};
  CHECK_THROWS_AS(m.evolve(w, DyadicTime::integer(2), DyadicTime::integer(1), x), OrderingError);
  CHECK_THROWS_AS(m.evolve(w, DyadicTime(1, 5), DyadicTime::integer(1), x), AlignmentError);
  CHECK_THROWS_AS(m.evolve(w, DyadicTime(), DyadicTime::integer(1), State{1.0, 2.0}), StateError);
  CHECK_THROWS_AS(m.evolve(w, DyadicTime(), DyadicTime::integer(1), State{NAN}), StateError);
  CHECK(m.evolve(w, DyadicTime::integer(1), DyadicTime::integer(1), x) == x);
}

TEST_CASE("closed-form composition matches to 1e-12 relative") {
  WienerStore store;
  const LinearOUModel m(0.7, 0.4, kCos, 6);
  const NoiseSource src = noise_for(m, store, 5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::int64_t a = static_cast<std::int64_t>(splitmix64(trial) % 256) - 128;
    const std::int64_t b = a + static_cast<std::int64_t>(splitmix64(trial + 100) % 128);
    const std::int64_t c = b + static_cast<std::int64_t>(splitmix64(trial + 200) % 128);
    const DyadicTime s(a, 6), r(b, 6), t(c, 6);
    const std::vector<State> pts{{0.0}, {1.5}, {-3.0}};
    const double res = flow_residual(m, src.path(trial), s, r, t, pts);
    CHECK(res <= 1e-12 * 4.0);
  }
}

TEST_CASE("batched evolution equals per-particle evolution bit for bit") {
  WienerStore store;
  const LinearOUModel lin(1.0, 0.5, kCos, 5);
  const auto em = EulerMaruyamaModel::linear(1.0, 0.5, kCos, 5);
  const std::vector<double> coords{0.0, 1.0, -2.0, 0.25};
  for (const FlowModel* m : std::vector<const FlowModel*>{&lin, &em}) {
    const NoisePath w = noise_for(*m, store, 3).path(2);
    const DyadicTime s(-3, 1), t(7, 2);
    const auto batch = m->evolve_many(w, s, t, coords, 3);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      CHECK(batch[i] == m->evolve(w, s, t, std::span<const double>(&coords[i], 1))[0]);
    }
  }
}

TEST_CASE("closed form agrees with the independent quadrature") {
  WienerStore store;
  const int level = 10;
  const LinearOUModel m(1.0, 0.3, kCos, level);
  const NoisePath w = noise_for(m, store, 8).path(1);
  const DyadicTime s = DyadicTime::integer(-4), t = DyadicTime(3, 1);
  const double x = m.evolve(w, s, t, State{0.7})[0];
  const double ref = oracle::linear_solution(store, w.realization(), 1.0, 0.3, s, t, level, 0.7);
  CHECK(std::abs(x - ref) < 2e-6);
}

TEST_CASE("markov_apply estimates the Gaussian transition") {
  WienerStore store;
  const LinearOUModel m(1.0, 0.5, kCos, 6);
  const NoiseSource src = noise_for(m, store, 12);
  RealizationCounter counter;
  const DyadicTime s(0, 0), t(1, 0);
  const McEstimate est = markov_apply(m, src, s, t, TestFunction::coordinate(0), State{2.0}, 2000, counter, 2);
  const double mean = std::exp(-1.0) * 2.0 + oracle::forced_cos_integral(1.0, 0.0, 1.0);
  CHECK(std::abs(est.estimate - mean) <= 4.0 * est.standard_error);
  CHECK(counter.peek() == 2000);
}

TEST_CASE("Chapman-Kolmogorov within Monte Carlo error") {
  WienerStore store;
  const LinearOUModel m(1.0, 0.5, kCos, 4);
  const NoiseSource src = noise_for(m, store, 4);
  RealizationCounter counter;
  const ChapmanResult r = chapman_residual(m, src, DyadicTime(), DyadicTime::integer(1), DyadicTime::integer(2),
                                           TestFunction::tanh_of(0), State{0.3}, 300, counter);
  CHECK_FALSE(r.exact);
  CHECK(r.residual <= 4.0 * r.combined_stderr);
}

TEST_CASE("test functions") {
  const State x{0.5, -2.0};
  CHECK(TestFunction::coordinate(1)(x) == -2.0);
  CHECK(TestFunction::indicator_box({0.0, -3.0}, {1.0, -1.0})(x) == 1.0);
  CHECK(TestFunction::indicator_box({0.0, -1.0}, {1.0, 0.0})(x) == 0.0);
  CHECK(TestFunction::constant(3.0)(x) == 3.0);
  CHECK(TestFunction::tanh_of(0, 2.0)(x) == doctest::Approx(std::tanh(1.0)));
}
