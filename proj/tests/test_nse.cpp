#include <doctest.h>

#include <cmath>

#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"
#include "sflow/nse.hpp"

using namespace sflow;

namespace {

SpectralField initial(int n, double amplitude) {
  const SpectralField shape = SpectralField::mode(n, 1, 1, Complex(1.0, 0.0)) +
                              SpectralField::mode(n, 2, -1, Complex(0.0, 0.5)) +
                              SpectralField::mode(n, 0, 3, Complex(0.2, 0.2));
  return (amplitude / std::sqrt(h_norm2(shape))) * shape;
}

NSEConfig unforced() {
  NSEConfig c = NSEConfig::desk_default();
  c.forcing_profile = PeriodicProfile{};
  c.noise_modes.clear();
  return c;
}

}  // namespace

TEST_CASE("config validation") {
  NSEConfig c = NSEConfig::desk_default();
  CHECK_NOTHROW(c.validate());
  c.level = 3;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c = NSEConfig::desk_default();
  c.viscosity = 0.0;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c = NSEConfig::desk_default();
  c.noise_modes.push_back(SpectralField(8));
  CHECK_THROWS_AS(c.validate(), PreconditionError);
}

TEST_CASE("composition is bit exact") {
  const NSEModel model(NSEConfig::desk_default());
  WienerStore store;
  const NoisePath w = noise_for(model, store, 2).path(0);
  const std::vector<State> pts{model.state(initial(16, 1.0))};
  for (int trial = 0; trial < 3; ++trial) {
    const std::int64_t a = static_cast<std::int64_t>(splitmix64(trial) % 32);
    const std::int64_t b = a + 1 + static_cast<std::int64_t>(splitmix64(trial + 5) % 16);
    const std::int64_t c = b + 1 + static_cast<std::int64_t>(splitmix64(trial + 9) % 16);
    CHECK(flow_residual(model, w, DyadicTime(a, 6), DyadicTime(b, 6), DyadicTime(c, 6), pts) == 0.0);
  }
}

TEST_CASE("structure is exact after every step") {
  const NSEConfig cfg = NSEConfig::desk_default();
  WienerStore store;
  const NoisePath w(store, NoiseRealization{3, 0, 2});
  const NSETrajectory tr = nse_trajectory(cfg, w, DyadicTime(), DyadicTime::integer(1), initial(16, 2.0));
  CHECK(tr.u.size() == 65);
  for (const auto& u : tr.u) {
    CHECK(u.max_divergence() == 0.0);
    CHECK(u.reality_defect() == 0.0);
    CHECK(leray_project(u) == u);
  }
  const NSETrajectory sparse = nse_trajectory(cfg, w, DyadicTime(), DyadicTime::integer(1), initial(16, 2.0), 16);
  CHECK(sparse.u.size() == 5);
  CHECK(sparse.u.back() == tr.u.back());
}

TEST_CASE("zero input energy decays monotonically") {
  const NSEConfig cfg = unforced();
  WienerStore store;
  const NoisePath w(store, NoiseRealization{0, 0, 0});
  const NSETrajectory tr = nse_trajectory(cfg, w, DyadicTime(), DyadicTime::integer(2), initial(16, 3.0));
  for (std::size_t i = 1; i < tr.u.size(); ++i) CHECK(h_norm2(tr.u[i]) < h_norm2(tr.u[i - 1]));
}

TEST_CASE("adaptedness to the noise window") {
  const NSEConfig cfg = NSEConfig::desk_default();
  WienerStore store;
  const NoiseRealization r{5, 0, 2};
  const DyadicTime s = DyadicTime::integer(0), t = DyadicTime::integer(1);
  const SpectralField u0 = initial(16, 1.0);
  const SpectralField base = nse_evolve(cfg, NoisePath(store, r), s, t, u0);

  const WienerStore after = store.with_surgery({1, 50, 3});
  CHECK(nse_evolve(cfg, NoisePath(after, r), s, t, u0) == base);

  const std::int64_t cut = static_cast<std::int64_t>(std::ceil(cfg.ou().cutoff_horizon));
  const WienerStore long_ago = store.with_surgery({-cut - 60, -cut - 1, 3});
  CHECK(nse_evolve(cfg, NoisePath(long_ago, r), s, t, u0) == base);

  const WienerStore recent = store.with_surgery({-3, 0, 3});
  const SpectralField moved = nse_evolve(cfg, NoisePath(recent, r), s, t, u0);
  CHECK(std::sqrt(h_norm2(moved - base)) <= 1e-8 * std::sqrt(h_norm2(base)));

  const WienerStore inside = store.with_surgery({0, 1, 3});
  CHECK(std::sqrt(h_norm2(nse_evolve(cfg, NoisePath(inside, r), s, t, u0) - base)) > 1e-6);
}

TEST_CASE("runtime guards report the step") {
  NSEConfig cfg = NSEConfig::desk_default();
  WienerStore store;
  const NoisePath w(store, NoiseRealization{1, 0, 2});
  try {
    nse_evolve(cfg, w, DyadicTime(), DyadicTime::integer(1), initial(16, 2000.0));
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  CHECK_THROWS_AS(nse_evolve(cfg, w, DyadicTime(1, 7), DyadicTime::integer(1), initial(16, 1.0)), AlignmentError);
  CHECK_THROWS_AS(nse_evolve(cfg, w, DyadicTime(), DyadicTime::integer(1), initial(8, 1.0)), StateError);
}

TEST_CASE("energy diagnostics") {
  const NSEConfig cfg = NSEConfig::desk_default();
  WienerStore store;
  const NoisePath w(store, NoiseRealization{2, 0, 2});
  const NSETrajectory tr = nse_trajectory(cfg, w, DyadicTime(), DyadicTime::integer(1), initial(16, 1.0), 4);
  const double beta = noise_beta(cfg);
  CHECK(beta > 0.0);
  const EnergyDiagnostics d = energy_diagnostics(cfg, beta, tr);
  CHECK(d.time.size() == tr.u.size() - 1);
  for (std::size_t i = 0; i < d.time.size(); ++i) {
    CHECK(d.slack[i] == doctest::Approx(d.two_g[i] - d.energy_rate[i] - d.dissipation[i] - d.damping[i]));
    CHECK(d.radius[i] > 0.0);
  }
  CHECK(d.late_radius(0.5) > 0.0);
  NSETrajectory broken = tr;
  broken.z.pop_back();
  CHECK_THROWS_AS(energy_diagnostics(cfg, beta, broken), PreconditionError);
}

TEST_CASE("model wrapper flattens fields") {
  const NSEModel model(NSEConfig::desk_default());
  const SpectralField u = initial(16, 1.0);
  CHECK(model.field(model.state(leray_project(u))) == leray_project(u));
  CHECK(model.state_dim() == 4 * SpectralField::half_count(16));
}

TEST_CASE("absorbing experiment contracts") {
  const NSEConfig cfg = NSEConfig::desk_default();
  WienerStore store;
  const NoisePath w(store, NoiseRealization{2, 0, 2});
  const SpectralField shape = initial(16, 1.0);
  CHECK_THROWS_AS(absorbing_experiment(cfg, w, DyadicTime(), {2.0, 1.0}, 0.5, shape), PreconditionError);
  CHECK_THROWS_AS(absorbing_experiment(cfg, w, DyadicTime(), {1.0}, 0.5, SpectralField(16)), PreconditionError);
}
