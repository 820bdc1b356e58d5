#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sflow/errors.hpp"
#include "sflow/esm.hpp"

using namespace sflow;

namespace {

const PeriodicProfile kCos{0.0, {1.0}, {}};

PullbackSchedule unit_schedule(int count, double eps = 0.02) {
  return PullbackSchedule::geometric(DyadicTime(), DyadicTime::integer(1), count, eps);
}

EmpiricalMeasure two_atoms() { return EmpiricalMeasure(1, {0.0, 1.0}, {0.25, 0.75}); }

}  // namespace

TEST_CASE("schedules") {
  const PullbackSchedule s = unit_schedule(4);
  REQUIRE(s.starts.size() == 4);
  CHECK(s.starts[3] == DyadicTime::integer(-8));
  PullbackSchedule bad = s;
  std::swap(bad.starts[0], bad.starts[1]);
  CHECK_THROWS_AS(bad.validate(), PreconditionError);
  bad = s;
  bad.starts[0] = DyadicTime::integer(1);
  CHECK_THROWS_AS(bad.validate(), OrderingError);
  CHECK_THROWS_AS(PullbackSchedule::geometric(DyadicTime(), DyadicTime(), 3), PreconditionError);
}

TEST_CASE("gaussian families") {
  const LinearOUModel m(1.0, 0.5, kCos, 8);
  const GaussianFamily strat = GaussianFamily::of_linear(m, GaussianFamily::Mode::Stratified);
  const EmpiricalMeasure a = strat.sample(DyadicTime::integer(1), 501);
  CHECK(a.mean()[0] == doctest::Approx(m.stationary_mean(1.0)).epsilon(1e-12));
  CHECK(strat.sample(DyadicTime::integer(1), 501, 9) == a);
  const GaussianFamily rnd = GaussianFamily::of_linear(m, GaussianFamily::Mode::Random, 4, 2.0);
  CHECK(rnd.variance() == 2.0 * m.stationary_variance());
  CHECK_FALSE(rnd.sample(DyadicTime(), 50, 1) == rnd.sample(DyadicTime(), 50, 2));
  CHECK(rnd.sample(DyadicTime(), 50, 1) == rnd.sample(DyadicTime(), 50, 1));
  CHECK_THROWS_AS(GaussianFamily([](double) { return 0.0; }, -1.0, GaussianFamily::Mode::Random), PreconditionError);
}

TEST_CASE("identity flow pulls a constant family back to itself") {
  const IdentityModel id;
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const ConstantFamily fam(two_atoms());
  const PullbackResult r = pullback_measure(id, w, unit_schedule(4), fam);
  CHECK(r.converged);
  CHECK(r.converged_index == 2);
  CHECK(r.measure == two_atoms());
  for (double d : r.distances) CHECK(d == 0.0);
}

TEST_CASE("contracting flow shrinks the spread") {
  const ExponentialModel ex(1.0);
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const ConstantFamily fam(seed_box(State{-1.0}, State{1.0}, 41));
  PullbackOptions opt;
  opt.run_full_schedule = true;
  const PullbackResult r = pullback_measure(ex, w, unit_schedule(5, 1e-12), fam, opt);
  REQUIRE(r.spreads.size() == 5);
  for (std::size_t k = 0; k < r.spreads.size(); ++k) {
    CHECK(r.spreads[k] < r.start_spreads[k]);
    if (k > 0) CHECK(r.spreads[k] < r.spreads[k - 1]);
  }
  CHECK(r.spreads.back() == doctest::Approx(std::exp(-16.0) * r.start_spreads.back()));
}

TEST_CASE("shift flow has no pullback limit") {
  const ShiftModel sh;
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const ConstantFamily fam(seed_box(State{0.0}, State{1.0}, 11));
  const PullbackResult r = pullback_measure(sh, w, unit_schedule(6), fam);
  CHECK_FALSE(r.converged);
  CHECK(r.failure.empty());
  REQUIRE(r.means.size() == 6);
  for (std::size_t k = 1; k < r.means.size(); ++k) CHECK(r.means[k][0] > r.means[k - 1][0] + 0.9);
  for (std::size_t k = 1; k < r.distances.size(); ++k) CHECK(r.distances[k] > r.distances[k - 1]);
}

TEST_CASE("divergence is reported, not thrown") {
  const ShiftModel sh;
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const ConstantFamily fam(EmpiricalMeasure::dirac(State{-1.0}));
  PullbackResult r;
  CHECK_NOTHROW(r = pullback_measure(sh, w, unit_schedule(3), fam));
  CHECK_FALSE(r.converged);
  CHECK_FALSE(r.failure.empty());
  CHECK_THROWS_AS(pullback_measure(IdentityModel(2), w, unit_schedule(3), fam), PreconditionError);
}

TEST_CASE("martingale trace of an invariant family is constant") {
  const IdentityModel id;
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const ConstantFamily fam(two_atoms());
  const std::vector<DyadicTime> lb{DyadicTime(), DyadicTime::integer(1), DyadicTime::integer(4)};
  const MartingaleTrace tr = martingale_trace(id, w, DyadicTime(), TestFunction::coordinate(0), fam, lb);
  REQUIRE(tr.values.size() == 3);
  for (double v : tr.values) CHECK(v == 0.75);
  const std::vector<DyadicTime> bad{DyadicTime::integer(2), DyadicTime::integer(1)};
  CHECK_THROWS_AS(martingale_trace(id, w, DyadicTime(), TestFunction::coordinate(0), fam, bad), PreconditionError);
}

TEST_CASE("martingale ensemble of the linear model") {
  const LinearOUModel m(1.0, 0.5, kCos, 7);
  WienerStore store;
  const NoiseSource src = noise_for(m, store, 8);
  const GaussianFamily fam = GaussianFamily::of_linear(m, GaussianFamily::Mode::Stratified);
  RealizationCounter counter;
  const std::vector<DyadicTime> lb{DyadicTime::integer(1), DyadicTime::integer(2), DyadicTime::integer(4)};
  const MartingaleEnsemble e =
      martingale_ensemble(m, src, DyadicTime(), TestFunction::tanh_of(0), fam, lb, 200, counter, 64);
  CHECK(e.means.size() == 3);
  CHECK(e.max_gap <= 4.0 * e.gap_stderr);
  CHECK(counter.peek() == 200);
}

TEST_CASE("attractor of a contraction is a point") {
  const ExponentialModel ex(1.0);
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const AttractorCloud c = pullback_attractor(ex, w, unit_schedule(8), {seed_box(State{-1.0}, State{1.0}, 5)});
  CHECK(c.converged);
  CHECK(c.particles.diameter() < 1e-3);
  CHECK(std::abs(c.particles.mean()[0]) < 1e-3);
}

TEST_CASE("expanding flow has no bounded attractor") {
  const ExponentialModel ex(-1.0);
  WienerStore store;
  const NoisePath w(store, {0, 0, 0});
  const AttractorCloud c = pullback_attractor(ex, w, unit_schedule(5), {seed_box(State{-1.0}, State{1.0}, 5)});
  CHECK_FALSE(c.converged);
  for (std::size_t k = 1; k < c.distances.size(); ++k) CHECK(c.distances[k] > c.distances[k - 1]);
}

TEST_CASE("attractor invariance") {
  WienerStore store;
  const NoisePath w0(store, {0, 0, 0});
  const IdentityModel id;
  const std::vector<EmpiricalMeasure> seeds{EmpiricalMeasure::uniform(1, {0.0, 1.0})};
  const DyadicTime s = DyadicTime::integer(-1), t = DyadicTime::integer(2);
  const auto cs = pullback_attractor(id, w0, PullbackSchedule::geometric(s, DyadicTime::integer(1), 3), seeds);
  const auto ct = pullback_attractor(id, w0, PullbackSchedule::geometric(t, DyadicTime::integer(1), 3), seeds);
  CHECK(attractor_invariance_residual(id, w0, s, t, cs, ct) == 0.0);
  CHECK_THROWS_AS(attractor_invariance_residual(id, w0, s, t, ct, cs), PreconditionError);

  const LinearOUModel lin(1.0, 0.3, kCos, 8);
  const NoisePath w = noise_for(lin, store, 2).path(0);
  const double eps = 1e-3;
  const std::vector<EmpiricalMeasure> box{seed_box(State{-3.0}, State{3.0}, 7)};
  const auto ls = pullback_attractor(lin, w, PullbackSchedule::geometric(s, DyadicTime::integer(1), 6, eps), box);
  const auto lt = pullback_attractor(lin, w, PullbackSchedule::geometric(t, DyadicTime::integer(1), 6, eps), box);
  REQUIRE(ls.converged);
  REQUIRE(lt.converged);
  CHECK(attractor_invariance_residual(lin, w, s, t, ls, lt) <= 2 * eps);

  const ExponentialModel grow(-1.0);
  const auto bad = pullback_attractor(grow, w0, PullbackSchedule::geometric(s, DyadicTime::integer(1), 3), box);
  CHECK_THROWS_AS(attractor_invariance_residual(grow, w0, s, s, bad, bad), PreconditionError);
}

TEST_CASE("trajectory selection") {
  WienerStore store;
  const std::vector<DyadicTime> times{DyadicTime(), DyadicTime::integer(1), DyadicTime(5, 1)};
  SelectionOptions opt;
  opt.seeds = {seed_box(State{-2.0}, State{2.0}, 5)};

  SUBCASE("zero for the decaying exponential") {
    opt.schedule_length = 7;
    const SelectedTrajectory tr = select_trajectory(ExponentialModel(1.0, 1, 4), NoisePath(store, {0, 0, 0}), times, opt);
    for (const auto& x : tr.states) CHECK(std::abs(x[0]) < 1e-9);
  }
  SUBCASE("closed form for the linear model") {
    const LinearOUModel lin(1.0, 0.4, kCos, 10);
    const NoisePath w = noise_for(lin, store, 6).path(0);
    opt.schedule_length = 7;
    const SelectedTrajectory tr = select_trajectory(lin, w, times, opt);
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double ref = oracle::linear_solution(store, w.realization(), 1.0, 0.4, times[k] - DyadicTime::integer(40),
                                                 times[k], 12, 0.0);
      CHECK(tr.states[k][0] == doctest::Approx(ref).epsilon(1e-3));
    }
    CHECK(lin.evolve(w, times[0], times[2], tr.states[0])[0] == doctest::Approx(tr.states[2][0]).epsilon(1e-12));
  }
  SUBCASE("finite flows") {
    const finite::FiniteFlowModel m(finite::noisy_two_state());
    const NoisePath w = noise_for(m, store, 1).path(0);
    const std::vector<DyadicTime> ints{DyadicTime(), DyadicTime::integer(1), DyadicTime::integer(4)};
    const SelectedTrajectory tr = select_trajectory(m, w, ints, opt);
    CHECK(m.evolve(w, ints[0], ints[2], tr.states[0]) == tr.states[2]);
    CHECK(m.evolve(w, ints[0], ints[1], tr.states[0]) == tr.states[1]);
  }
  SUBCASE("identity is unsupported") {
    opt.seeds = {EmpiricalMeasure::uniform(1, {0.0, 1.0})};
    CHECK_THROWS_AS(select_trajectory(IdentityModel(1, 4), NoisePath(store, {0, 0, 0}), times, opt), UnsupportedCase);
  }
}

TEST_CASE("ensemble mean") {
  const EmpiricalMeasure a = two_atoms();
  CHECK(esm_mean(RandomMeasure{{a, a, a}}).mean() == a.mean());
  CHECK(expect(esm_mean(RandomMeasure{{a, a, a}}), TestFunction::coordinate(0)) == 0.75);
  // Every alpha delta_0 + (1 - alpha) delta_1 is invariant for the identity;
  // a random choice of alpha averages to another one.
  const RandomMeasure pick{{EmpiricalMeasure::dirac(State{0.0}), EmpiricalMeasure::dirac(State{1.0})}};
  CHECK(expect(esm_mean(pick), TestFunction::coordinate(0)) == 0.5);
  CHECK_THROWS_AS(esm_mean(RandomMeasure{}), PreconditionError);
}

TEST_CASE("finite evolution system residual is exactly zero") {
  const finite::FiniteFlowModel m(finite::noisy_two_state());
  WienerStore store;
  const NoiseSource src = noise_for(m, store, 1);
  const FiniteEsmFamily fam(m.flow());
  RealizationCounter counter;
  const EsmResidual r = esm_residual(m, src, fam, {{DyadicTime(), DyadicTime::integer(3)}}, 10, counter);
  CHECK(r.max_distance == 0.0);
  CHECK_THROWS_AS(FiniteEsmFamily(finite::identity_flow(2)), PreconditionError);
}

TEST_CASE("linear evolution system residual sits at the sampling floor") {
  const LinearOUModel m(1.0, 0.5, kCos, 8);
  WienerStore store;
  const NoiseSource src = noise_for(m, store, 12);
  const GaussianFamily fam = GaussianFamily::of_linear(m, GaussianFamily::Mode::Random, 3);
  const std::size_t n = 10000;
  const double tol = 4.0 * self_distance_baseline(fam, DyadicTime::integer(1), n, 10);
  RealizationCounter counter;
  const EsmResidual good = esm_residual(
      m, src, fam, {{DyadicTime(), DyadicTime::integer(1)}, {DyadicTime(-1, 1), DyadicTime(1, 2)}}, n, counter);
  CHECK(good.max_distance <= tol);
  CHECK(counter.peek() == 2 * (n + 1));

  const GaussianFamily wide = GaussianFamily::of_linear(m, GaussianFamily::Mode::Random, 3, 2.0);
  const EsmResidual bad = esm_residual(m, src, wide, {{DyadicTime(), DyadicTime::integer(1)}}, n, counter);
  // Pushed variance v (1 + e^-2) against 2 v.
  const double v = m.stationary_variance();
  const double expected = oracle::gaussian_energy_distance(0.0, v * (1.0 + std::exp(-2.0)), 0.0, 2.0 * v);
  CHECK(bad.max_distance > 10.0 * tol);
  CHECK(bad.max_distance == doctest::Approx(expected).epsilon(0.3));
}
