#include "sflow/nse.hpp"

#include <algorithm>
#include <cmath>

#include "sflow/errors.hpp"

namespace sflow {

namespace {

void check_field(const SpectralField& f, int n, const char* what) {
  if (f.resolution() != n) throw PreconditionError(std::string(what) + " has the wrong resolution");
  if (f.reality_defect() != 0.0 || f.max_divergence() != 0.0) {
    throw PreconditionError(std::string(what) + " is not a real divergence-free field");
  }
}

SpectralField combine(const std::vector<SpectralField>& modes, std::span<const double> coeffs, int n) {
  SpectralField z(n);
  for (std::size_t j = 0; j < modes.size(); ++j) z += coeffs[j] * modes[j];
  return z;
}

// One pass over [s, t]; `record` sees (step index, u, z, z_j) at every grid
// point including both ends.
template <class Record>
SpectralField run(const NSEConfig& cfg, const NoisePath& w, DyadicTime s, DyadicTime t, const SpectralField& u_s,
                  Record&& record) {
  cfg.validate();
  if (s > t) throw OrderingError("nse_evolve: s = " + s.str() + " > t = " + t.str());
  const int lvl = cfg.level;
  if (!s.aligned_to(lvl) || !t.aligned_to(lvl)) {
    throw AlignmentError("nse_evolve times must lie on the level-" + std::to_string(lvl) + " grid");
  }
  const int n = cfg.resolution;
  if (u_s.resolution() != n) throw StateError("initial field has the wrong resolution");

  const std::int64_t n0 = s.ticks(lvl);
  const std::int64_t steps = t.ticks(lvl) - n0;
  const double h = cfg.step();
  const std::size_t m = cfg.noise_modes.size();

  const OUConfig ou = cfg.ou();
  const std::int64_t cut = ou.cutoff_steps();
  const auto weights = ou.weights();
  std::vector<std::vector<double>> incs(m);
  for (std::size_t j = 0; j < m; ++j) {
    incs[j] = w.store().increments(w.realization(), static_cast<int>(j), DyadicTime(n0 - cut, lvl), t, lvl);
  }
  auto z_at = [&](std::int64_t i) {
    std::vector<double> zj(m);
    for (std::size_t j = 0; j < m; ++j) {
      zj[j] = ou_convolve(std::span<const double>(incs[j]).subspan(static_cast<std::size_t>(i), cut), weights);
    }
    return zj;
  };

  const double decay = std::exp(-cfg.ou_rate * h);
  const double nu_h = cfg.viscosity * h;

  SpectralField u = leray_project(u_s);
  std::vector<double> zj = z_at(0);
  SpectralField z = combine(cfg.noise_modes, zj, n);
  record(std::int64_t{0}, u, z, zj);

  for (std::int64_t i = 0; i < steps; ++i) {
    const double time = std::ldexp(static_cast<double>(n0 + i), -lvl);
    const SpectralField nonlinear = bilinear_B(u, u);
    const SpectralField force = cfg.forcing_at(time);
    std::vector<double> zj_next = z_at(i + 1);
    SpectralField z_next = combine(cfg.noise_modes, zj_next, n);

    SpectralField next(n);
    for (int k1 = -n; k1 <= n; ++k1) {
      for (int k2 = -n; k2 <= n; ++k2) {
        const double kk = double(k1 * k1 + k2 * k2);
        for (int c = 0; c < 2; ++c) {
          const Complex zn = z.at(c, k1, k2);
          const Complex vn = u.at(c, k1, k2) - zn;
          const Complex rhs = vn + h * (force.at(c, k1, k2) - nonlinear.at(c, k1, k2)) + (1.0 - decay) * zn -
                              nu_h * kk * decay * zn;
          next.at(c, k1, k2) = rhs / (1.0 + nu_h * kk) + z_next.at(c, k1, k2);
        }
      }
    }
    u = leray_project(next);
    z = std::move(z_next);
    zj = std::move(zj_next);

    const double energy = h_norm2(u);
    if (!std::isfinite(energy) || energy > cfg.energy_guard) {
      throw DivergenceError("NSE energy " + std::to_string(energy) + " exceeded the guard at step " +
                            std::to_string(i));
    }
    const double courant = h * n * max_speed(to_physical(u));
    if (courant > cfg.cfl_limit) {
      throw DivergenceError("NSE CFL number " + std::to_string(courant) + " exceeded the limit at step " +
                            std::to_string(i));
    }
    record(i + 1, u, z, zj);
  }
  return u;
}

}  // namespace

NSEConfig NSEConfig::desk_default() {
  NSEConfig c;
  c.viscosity = 0.2;
  c.resolution = 16;
  c.level = 6;
  c.forcing_shape = SpectralField::mode(16, 1, 2, Complex{0.25, 0.0});
  c.forcing_profile = PeriodicProfile{0.5, {1.0}, {}};
  c.noise_modes = {SpectralField::mode(16, 1, 0, Complex{0.0, 0.25}),
                   SpectralField::mode(16, 0, 1, Complex{0.25, 0.0})};
  c.ou_rate = 1.0;
  return c;
}

void NSEConfig::validate() const {
  if (!(viscosity > 0.0)) throw PreconditionError("viscosity must be positive");
  if (resolution < 1) throw PreconditionError("resolution must be positive");
  if (level < 0 || level > 20) throw PreconditionError("NSE level must lie in [0, 20]");
  if (!(ou_rate > 0.0)) throw PreconditionError("O-U rate must be positive");
  if (step() * resolution > cfl_limit) {
    throw PreconditionError("step 2^-" + std::to_string(level) + " violates the unit-speed CFL bound for N = " +
                            std::to_string(resolution));
  }
  check_field(forcing_shape, resolution, "forcing shape");
  for (const auto& phi : noise_modes) check_field(phi, resolution, "noise mode");
}

SpectralField NSEConfig::forcing_at(double t) const { return forcing_profile(t) * forcing_shape; }

SpectralField nse_evolve(const NSEConfig& cfg, const NoisePath& w, DyadicTime s, DyadicTime t,
                         const SpectralField& u_s) {
  return run(cfg, w, s, t, u_s, [](std::int64_t, const SpectralField&, const SpectralField&,
                                   const std::vector<double>&) {});
}

NSETrajectory nse_trajectory(const NSEConfig& cfg, const NoisePath& w, DyadicTime s, DyadicTime t,
                             const SpectralField& u_s, int stride) {
  if (stride < 1) throw PreconditionError("trajectory stride must be positive");
  NSETrajectory traj;
  const std::int64_t n0 = s.ticks(cfg.level);
  const std::int64_t total = t.ticks(cfg.level) - n0;
  run(cfg, w, s, t, u_s,
      [&](std::int64_t i, const SpectralField& u, const SpectralField& z, const std::vector<double>& zj) {
        if (i % stride != 0 && i != total) return;
        traj.times.push_back(s + DyadicTime(i, cfg.level));
        traj.u.push_back(u);
        traj.z.push_back(z);
        traj.zj.push_back(zj);
      });
  return traj;
}

double noise_beta(const NSEConfig& cfg) {
  double b = 0.0;
  for (const auto& phi : cfg.noise_modes) b += estimate_beta(phi);
  return b;
}

double EnergyDiagnostics::late_radius(double window) const {
  if (radius.empty()) throw PreconditionError("no recorded steps");
  const double from = time.back() - window;
  double r = 0.0;
  for (std::size_t i = 0; i < radius.size(); ++i) {
    if (time[i] >= from) r = std::max(r, radius[i]);
  }
  return r;
}

EnergyDiagnostics energy_diagnostics(const NSEConfig& cfg, double beta_hat, const NSETrajectory& traj) {
  const std::size_t n = traj.u.size();
  if (traj.z.size() != n || traj.zj.size() != n || traj.times.size() != n) {
    throw PreconditionError("trajectory and O-U records differ in length");
  }
  if (n < 2) throw PreconditionError("energy diagnostics need at least two recorded states");
  const double nu = cfg.viscosity;
  const double lambda1 = 1.0;

  EnergyDiagnostics d;
  d.beta_hat = beta_hat;
  SpectralField v_prev = traj.u[0] - traj.z[0];
  double h_prev = h_norm2(v_prev);
  double e_prev = v_norm2(v_prev);
  for (std::size_t i = 1; i < n; ++i) {
    const double dt = (traj.times[i] - traj.times[i - 1]).to_double();
    const SpectralField v = traj.u[i] - traj.z[i];
    const double hv = h_norm2(v);
    const double ev = v_norm2(v);
    double sz = 0.0;
    for (double x : traj.zj[i]) sz += std::abs(x);
    const double time = traj.times[i].to_double();
    const SpectralField drive = cfg.forcing_at(time) + cfg.ou_rate * traj.z[i];

    const double rate = (hv - h_prev) / dt;
    const double diss = 0.25 * nu * ev;
    const double damp = (0.25 * nu * lambda1 - 4.0 * beta_hat * sz) * hv;
    const double two_g = 4.0 / (nu * lambda1) * h_norm2(drive) + 4.0 * nu * v_norm2(traj.z[i]) +
                         4.0 * beta_hat * sz * h_norm2(traj.z[i]);

    d.time.push_back(time);
    d.h_v2.push_back(hv);
    d.v_v2.push_back(ev);
    d.sum_abs_z.push_back(sz);
    d.energy_rate.push_back(rate);
    d.enstrophy_rate.push_back((ev - e_prev) / dt);
    d.dissipation.push_back(diss);
    d.damping.push_back(damp);
    d.two_g.push_back(two_g);
    d.slack.push_back(two_g - (rate + diss + damp));
    d.radius.push_back(std::sqrt(ev) + std::sqrt(v_norm2(traj.z[i])));
    h_prev = hv;
    e_prev = ev;
  }
  return d;
}

NSEModel::NSEModel(NSEConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

SpectralField NSEModel::field(std::span<const double> x) const {
  return leray_project(SpectralField::unflatten(cfg_.resolution, x));
}

State NSEModel::advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  return nse_evolve(cfg_, w, s, t, field(x)).flatten();
}

AbsorbingResult absorbing_experiment(const NSEConfig& cfg, const NoisePath& w, DyadicTime t,
                                     const std::vector<double>& lookbacks, double window,
                                     const SpectralField& shape, double small, double large, double tolerance) {
  if (lookbacks.empty()) throw PreconditionError("absorbing experiment needs lookbacks");
  if (!std::is_sorted(lookbacks.begin(), lookbacks.end())) throw PreconditionError("lookbacks must increase");
  const double shape_norm = std::sqrt(h_norm2(shape));
  if (!(shape_norm > 0.0)) throw PreconditionError("initial shape must be nonzero");
  const DyadicTime end = t + DyadicTime::nearest(window, cfg.level);

  auto late_radius = [&](DyadicTime s, double amplitude) {
    const NSETrajectory traj = nse_trajectory(cfg, w, s, end, (amplitude / shape_norm) * shape);
    double r = 0.0;
    for (std::size_t i = 0; i < traj.u.size(); ++i) {
      if (traj.times[i] < t) continue;
      const SpectralField v = traj.u[i] - traj.z[i];
      r = std::max(r, std::sqrt(v_norm2(v)) + std::sqrt(v_norm2(traj.z[i])));
    }
    return r;
  };

  AbsorbingResult res;
  res.tolerance = tolerance;
  for (double T : lookbacks) {
    const DyadicTime s = t - DyadicTime::nearest(T, cfg.level);
    const double a = late_radius(s, small);
    const double b = late_radius(s, large);
    res.lookbacks.push_back(T);
    res.radius_small.push_back(a);
    res.radius_large.push_back(b);
    res.relative_gap.push_back(std::abs(a - b) / std::max(a, b));
  }
  for (std::size_t i = res.lookbacks.size(); i-- > 0;) {
    if (res.relative_gap[i] > tolerance) break;
    res.t_star = res.lookbacks[i];
  }
  return res;
}

}  // namespace sflow
