#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace sflow {

using Complex = std::complex<double>;

/// Velocity field on the torus [0, 2pi]^2 as Fourier coefficients u_k for
/// |k1|, |k2| <= N, two components: u(x) = sum_k u_k exp(i k.x).
/// Operations that return fields keep them real, mean-free and divergence-free.
class SpectralField {
 public:
  explicit SpectralField(int n = 16);

  int resolution() const { return n_; }
  int width() const { return 2 * n_ + 1; }

  Complex& at(int comp, int k1, int k2) { return coef_[index(comp, k1, k2)]; }
  const Complex& at(int comp, int k1, int k2) const { return coef_[index(comp, k1, k2)]; }
  /// Sets u_k and the mirrored coefficient u_{-k} = conj(u_k).
  void set_pair(int comp, int k1, int k2, Complex value);

  /// k with k1 > 0, or k1 == 0 and k2 > 0.
  static bool canonical(int k1, int k2) { return k1 > 0 || (k1 == 0 && k2 > 0); }
  static std::size_t half_count(int n) { return static_cast<std::size_t>(((2 * n + 1) * (2 * n + 1) - 1) / 2); }

  /// Re/Im of both components for every canonical k, k1 outer, k2 inner.
  std::vector<double> flatten() const;
  /// Inverse of flatten; mirrors the half and zeroes the mean. Does not project.
  static SpectralField unflatten(int n, std::span<const double> values);

  /// The divergence-free mode c (-k2, k1) exp(i k.x) + c.c.
  static SpectralField mode(int n, int k1, int k2, Complex c);

  /// Copies the canonical half onto its mirror and zeroes the mean.
  void enforce_reality();

  double max_divergence() const;
  double reality_defect() const;

  SpectralField& operator+=(const SpectralField& o);
  SpectralField& operator-=(const SpectralField& o);
  SpectralField& operator*=(double c);
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double c, SpectralField a) { return a *= c; }

  friend bool operator==(const SpectralField&, const SpectralField&) = default;

  std::span<const Complex> raw() const { return coef_; }

 private:
  std::size_t index(int comp, int k1, int k2) const;

  int n_;
  std::vector<Complex> coef_;
};

/// |u|^2 = (2 pi)^2 sum |u_k|^2.
double h_norm2(const SpectralField& u);
/// ||u||^2 = (2 pi)^2 sum |k|^2 |u_k|^2.
double v_norm2(const SpectralField& u);
/// (u, v) in L^2 of the torus.
double inner(const SpectralField& u, const SpectralField& v);

/// Removes the component of u_k along k. The stream coefficient is rounded so
/// that k.u_k vanishes exactly and the projection is bitwise idempotent.
SpectralField leray_project(const SpectralField& u);

/// Grid values on an M x M physical mesh, x_j = 2 pi j / M.
struct PhysicalField {
  int m = 0;
  std::vector<double> u1;
  std::vector<double> u2;
};

/// Smallest power of two M > 3N, the mesh on which quadratic products are
/// free of aliasing.
int physical_size(int n);
PhysicalField to_physical(const SpectralField& u, int m = 0);
/// Truncates, restores reality and projects.
SpectralField from_physical(const PhysicalField& p, int n);
/// (2 pi)^2 times the mesh average of |u|^2.
double physical_energy(const PhysicalField& p);
double max_speed(const PhysicalField& p);

/// P[(u . grad) v], truncated to |k_i| <= N and computed without aliasing.
SpectralField bilinear_B(const SpectralField& u, const SpectralField& v);

/// L u = P[sym(grad phi) u], the symmetric operator behind (B(u, phi), u).
SpectralField beta_operator(const SpectralField& phi, const SpectralField& u);

/// sup over the truncation of |(B(u, phi), u)| / |u|^2 by power iteration.
/// Throws IterationError when the iteration does not settle.
double estimate_beta(const SpectralField& phi, int max_iter = 20000, double tol = 1e-13);

/// Header "# N <n> time <t> seed <s>", then k1 k2 Re u1 Im u1 Re u2 Im u2 per
/// wavevector at 17 significant digits.
void write_snapshot(std::ostream& os, const SpectralField& u, double time, std::uint64_t seed);
SpectralField read_snapshot(std::istream& is, double* time = nullptr, std::uint64_t* seed = nullptr);

}  // namespace sflow
