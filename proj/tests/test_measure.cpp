#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"
#include "sflow/measure.hpp"
#include "sflow/models.hpp"

using namespace sflow;

namespace {

EmpiricalMeasure random_cloud(std::size_t n, std::size_t dim, std::uint64_t seed, double shift = 0.0) {
  std::vector<double> c(n * dim), w(n);
  for (std::size_t i = 0; i < n * dim; ++i) c[i] = key_normal(mix_key({seed, i})) + shift;
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 + key_uniform(mix_key({seed, 999, i}));
  return EmpiricalMeasure(dim, c, w);
}

}  // namespace

TEST_CASE("construction contracts") {
  CHECK_THROWS_AS(EmpiricalMeasure(1, {}, {}), PreconditionError);
  CHECK_THROWS_AS(EmpiricalMeasure(2, {1.0}, {1.0}), PreconditionError);
  CHECK_THROWS_AS(EmpiricalMeasure(1, {1.0}, {-1.0}), PreconditionError);
  CHECK_THROWS_AS(EmpiricalMeasure(1, {NAN}, {1.0}), StateError);
  const EmpiricalMeasure m(1, {0.0, 1.0}, {1.0, 3.0});
  CHECK(m.weight(1) == 0.75);
  CHECK(m.mean()[0] == 0.75);
  CHECK(m.diameter() == 1.0);
}

TEST_CASE("energy distance matches the direct double sum") {
  for (std::size_t dim : {1u, 3u}) {
    const auto a = random_cloud(60, dim, 1);
    const auto b = random_cloud(45, dim, 2, 0.3);
    CHECK(distance(a, b) == doctest::Approx(oracle::naive_energy_distance(a, b)).epsilon(1e-10));
    CHECK(distance(a, b) == distance(b, a));
    CHECK(distance(a, a) == 0.0);
    CHECK(distance(a, b, 3) == distance(a, b, 1));
  }
  CHECK_THROWS_AS(distance(random_cloud(3, 1, 1), random_cloud(3, 2, 1)), PreconditionError);
}

TEST_CASE("energy distance of Gaussian samples approaches the closed form") {
  const std::size_t n = 3000;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = normal_quantile((i + 0.5) / n);
    y[i] = 0.5 + std::sqrt(2.0) * normal_quantile((i + 0.5) / n);
  }
  const double d = distance(EmpiricalMeasure::uniform(1, x), EmpiricalMeasure::uniform(1, y));
  CHECK(d == doctest::Approx(oracle::gaussian_energy_distance(0.0, 1.0, 0.5, 2.0)).epsilon(5e-3));
}

TEST_CASE("dirac distance is twice the gap") {
  const auto a = EmpiricalMeasure::dirac(State{1.0, 2.0});
  const auto b = EmpiricalMeasure::dirac(State{4.0, 6.0});
  CHECK(distance(a, b) == doctest::Approx(10.0));
}

TEST_CASE("mixtures and pushforwards") {
  const auto a = EmpiricalMeasure::dirac(State{0.0});
  const auto b = EmpiricalMeasure::dirac(State{2.0});
  const std::vector<EmpiricalMeasure> parts{a, b};
  const auto mix = mixture(parts, std::vector<double>{0.25, 0.75});
  CHECK(mix.mean()[0] == 1.5);
  CHECK_THROWS_AS(mixture(parts, std::vector<double>{0.5, 0.6}), PreconditionError);
  const auto img = pushforward(mix, [](std::span<const double> x) { return State{x[0] * x[0]}; });
  CHECK(expect(img, TestFunction::coordinate(0)) == 3.0);

  WienerStore store;
  const ExponentialModel m(1.0);
  const auto pushed = pushforward_flow(mix, m, noise_for(m, store, 0).path(0), DyadicTime(), DyadicTime::integer(1));
  CHECK(pushed.mean()[0] == doctest::Approx(1.5 * std::exp(-1.0)));
  CHECK_THROWS_AS(pushforward_flow(EmpiricalMeasure::dirac(State{0.0, 1.0}), m, noise_for(m, store, 0).path(0),
                                   DyadicTime(), DyadicTime::integer(1)),
                  StateError);
}

TEST_CASE("Hausdorff distances") {
  const auto a = random_cloud(30, 2, 3);
  const auto b = random_cloud(20, 2, 4, 1.0);
  CHECK(hausdorff_distance(a, b) == doctest::Approx(oracle::naive_hausdorff(a, b)));
  CHECK(hausdorff_semidistance(a, a) == 0.0);
  const auto sub = EmpiricalMeasure::dirac(a.particle(0));
  CHECK(hausdorff_semidistance(sub, a) == 0.0);
  CHECK(hausdorff_semidistance(a, sub) > 0.0);
}

TEST_CASE("measure tables round trip bit for bit") {
  const auto a = random_cloud(25, 3, 5);
  std::stringstream ss;
  write_measure(ss, a);
  CHECK(read_measure(ss) == a);
  std::stringstream bad("garbage\n");
  CHECK_THROWS(read_measure(bad));
}

TEST_CASE("expect rejects non-finite observables") {
  const auto a = EmpiricalMeasure::dirac(State{0.0});
  CHECK_THROWS_AS(expect(a, TestFunction("inv", [](std::span<const double> x) { return 1.0 / x[0]; })),
                  EvaluationError);
}
