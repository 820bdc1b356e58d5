#pragma once

#include <optional>
#include <vector>

#include "sflow/flow.hpp"
#include "sflow/models.hpp"
#include "sflow/spectral.hpp"
#include "sflow/wiener.hpp"

namespace sflow {

/// du + (nu A u + B(u, u)) dt = f(t) dt + sum_j phi_j dw_j on the torus,
/// integrated through v = u - z with z = sum_j phi_j z_j the stationary O-U
/// transform.
struct NSEConfig {
  double viscosity = 0.2;
  int resolution = 16;
  int level = 6;
  /// f(t, x) = profile(t) * shape(x).
  SpectralField forcing_shape{16};
  PeriodicProfile forcing_profile;
  std::vector<SpectralField> noise_modes;
  double ou_rate = 1.0;
  double ou_tolerance = 1e-8;
  /// Largest allowed h * N * max|u|.
  double cfl_limit = 1.0;
  /// Largest allowed |u|^2.
  double energy_guard = 1e8;

  /// N = 16, two noise modes, h = 2^-6, nu = 0.2, forcing cos(t) on k = (1, 2).
  static NSEConfig desk_default();

  void validate() const;
  double step() const { return std::ldexp(1.0, -level); }
  OUConfig ou() const { return OUConfig::make(ou_rate, level, ou_tolerance); }
  SpectralField forcing_at(double t) const;
};

/// States of one run on the level grid, every `stride` steps.
struct NSETrajectory {
  std::vector<DyadicTime> times;
  std::vector<SpectralField> u;
  std::vector<SpectralField> z;
  std::vector<std::vector<double>> zj;
};

SpectralField nse_evolve(const NSEConfig& cfg, const NoisePath& w, DyadicTime s, DyadicTime t,
                         const SpectralField& u_s);

NSETrajectory nse_trajectory(const NSEConfig& cfg, const NoisePath& w, DyadicTime s, DyadicTime t,
                             const SpectralField& u_s, int stride = 1);

/// beta_hat = sum_j estimate_beta(phi_j).
double noise_beta(const NSEConfig& cfg);

/// Per recorded step n -> n+1, terms evaluated at n+1:
///   energy_rate  = (|v_{n+1}|^2 - |v_n|^2) / dt
///   dissipation  = nu/4 ||v||^2
///   damping      = (nu lambda1 / 4 - 4 beta_hat sum|z_j|) |v|^2
///   two_g        = 4/(nu lambda1) |f + alpha z|^2 + 4 nu ||z||^2 + 4 beta_hat sum|z_j| |z|^2
///   slack        = two_g - (energy_rate + dissipation + damping)
struct EnergyDiagnostics {
  double beta_hat = 0.0;
  std::vector<double> time;
  std::vector<double> h_v2;
  std::vector<double> v_v2;
  std::vector<double> sum_abs_z;
  std::vector<double> energy_rate;
  std::vector<double> enstrophy_rate;
  std::vector<double> dissipation;
  std::vector<double> damping;
  std::vector<double> two_g;
  std::vector<double> slack;
  /// max over the last `window` entries of sqrt(||v||^2) + ||z||.
  double late_radius(double window) const;
  std::vector<double> radius;
};

EnergyDiagnostics energy_diagnostics(const NSEConfig& cfg, double beta_hat, const NSETrajectory& traj);

/// The NSE as a FlowModel on flattened fields (SpectralField::flatten).
class NSEModel final : public FlowModel {
 public:
  explicit NSEModel(NSEConfig cfg);

  std::string name() const override { return "nse"; }
  std::size_t state_dim() const override { return 4 * SpectralField::half_count(cfg_.resolution); }
  int grid_level() const override { return cfg_.level; }
  int noise_components() const override { return static_cast<int>(cfg_.noise_modes.size()); }

  const NSEConfig& config() const { return cfg_; }
  SpectralField field(std::span<const double> x) const;
  State state(const SpectralField& u) const { return u.flatten(); }

 protected:
  State advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const override;

 private:
  NSEConfig cfg_;
};

struct AbsorbingResult {
  std::vector<double> lookbacks;
  std::vector<double> radius_small;
  std::vector<double> radius_large;
  std::vector<double> relative_gap;
  std::optional<double> t_star;
  double tolerance = 0.05;
};

/// Starts `shape` rescaled to |u0| = small and |u0| = large at t - T for each
/// lookback T, runs both to t + window on the same noise and compares the
/// late-window radii. T* is the least lookback from which every gap is within
/// tolerance.
AbsorbingResult absorbing_experiment(const NSEConfig& cfg, const NoisePath& w, DyadicTime t,
                                     const std::vector<double>& lookbacks, double window,
                                     const SpectralField& shape, double small = 1.0, double large = 10.0,
                                     double tolerance = 0.05);

}  // namespace sflow
