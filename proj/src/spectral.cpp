#include "sflow/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"

namespace sflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTorusArea = kTwoPi * kTwoPi;

struct Plans {
  fftw_plan forward;
  fftw_plan backward;
};

// Planning is not thread-safe in FFTW; executing a finished plan is.
const Plans& plans_for(int m) {
  static std::mutex mutex;
  static std::map<int, Plans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(m) * m);
  Plans p{fftw_plan_dft_2d(m, m, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE),
          fftw_plan_dft_2d(m, m, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE)};
  fftw_free(buf);
  return cache.emplace(m, p).first->second;
}

class Grid {
 public:
  explicit Grid(int m) : m_(m), data_(fftw_alloc_complex(static_cast<std::size_t>(m) * m)) {
    std::fill_n(raw(), static_cast<std::size_t>(m) * m, Complex{});
  }
  ~Grid() { fftw_free(data_); }
  Grid(const Grid&) = delete;
  Grid& operator=(const Grid&) = delete;

  int m() const { return m_; }
  Complex* raw() { return reinterpret_cast<Complex*>(data_); }
  Complex& at_mode(int k1, int k2) { return raw()[wrap(k1) * m_ + wrap(k2)]; }
  Complex& at_point(int j1, int j2) { return raw()[static_cast<std::size_t>(j1) * m_ + j2]; }
  void clear() { std::fill_n(raw(), static_cast<std::size_t>(m_) * m_, Complex{}); }

  void backward() { fftw_execute_dft(plans_for(m_).backward, data_, data_); }
  void forward() { fftw_execute_dft(plans_for(m_).forward, data_, data_); }

 private:
  std::size_t wrap(int k) const { return static_cast<std::size_t>(((k % m_) + m_) % m_); }

  int m_;
  fftw_complex* data_;
};

const Complex kI{0.0, 1.0};

// Grid holds A + iB where A, B are spectra of two real fields; after the
// backward transform the real part is a(x) and the imaginary part b(x).
template <class Fn>
void load_pair(Grid& g, int n, Fn&& spectra) {
  g.clear();
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      const auto [a, b] = spectra(k1, k2);
      g.at_mode(k1, k2) = a + kI * b;
    }
  }
  g.backward();
}

// Splits the forward transform of a(x) + i b(x) into the two spectra.
void unpack_pair(Grid& g, int n, SpectralField& a, int comp_a, SpectralField& b, int comp_b) {
  const double scale = 1.0 / (static_cast<double>(g.m()) * g.m());
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      const Complex fk = g.at_mode(k1, k2);
      const Complex fm = std::conj(g.at_mode(-k1, -k2));
      a.at(comp_a, k1, k2) = 0.5 * (fk + fm) * scale;
      b.at(comp_b, k1, k2) = -0.5 * kI * (fk - fm) * scale;
    }
  }
}

void check_same_resolution(const SpectralField& a, const SpectralField& b) {
  if (a.resolution() != b.resolution()) throw PreconditionError("spectral fields differ in resolution");
}

int leray_bits(int n) { return 52 - 2 * std::bit_width(static_cast<unsigned>(n)); }

double round_bits(double x, int p) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const int e = std::ilogb(x);
  return std::ldexp(std::nearbyint(std::ldexp(x, p - 1 - e)), e - p + 1);
}

// Physical values of sym(grad phi), reused by every power-iteration step.
struct StrainField {
  int m;
  std::vector<double> s11, s12, s22;
};

StrainField strain_of(const SpectralField& phi) {
  const int n = phi.resolution();
  const int m = physical_size(n);
  Grid g1(m), g2(m);
  load_pair(g1, n, [&](int k1, int k2) {
    const Complex c = phi.at(0, k1, k2);
    return std::pair{kI * double(k1) * c, kI * double(k2) * c};
  });
  load_pair(g2, n, [&](int k1, int k2) {
    const Complex c = phi.at(1, k1, k2);
    return std::pair{kI * double(k1) * c, kI * double(k2) * c};
  });
  StrainField s{m, {}, {}, {}};
  const std::size_t mm = static_cast<std::size_t>(m) * m;
  s.s11.resize(mm);
  s.s12.resize(mm);
  s.s22.resize(mm);
  for (std::size_t i = 0; i < mm; ++i) {
    const Complex a = g1.raw()[i];  // d1 phi1 + i d2 phi1
    const Complex b = g2.raw()[i];  // d1 phi2 + i d2 phi2
    s.s11[i] = a.real();
    s.s22[i] = b.imag();
    s.s12[i] = 0.5 * (a.imag() + b.real());
  }
  return s;
}

SpectralField apply_strain(const StrainField& s, const SpectralField& u) {
  const int n = u.resolution();
  Grid g(s.m);
  load_pair(g, n, [&](int k1, int k2) { return std::pair{u.at(0, k1, k2), u.at(1, k1, k2)}; });
  const std::size_t mm = static_cast<std::size_t>(s.m) * s.m;
  for (std::size_t i = 0; i < mm; ++i) {
    const double u1 = g.raw()[i].real();
    const double u2 = g.raw()[i].imag();
    g.raw()[i] = Complex{s.s11[i] * u1 + s.s12[i] * u2, s.s12[i] * u1 + s.s22[i] * u2};
  }
  g.forward();
  SpectralField out(n);
  unpack_pair(g, n, out, 0, out, 1);
  return leray_project(out);
}

}  // namespace

SpectralField::SpectralField(int n) : n_(n) {
  if (n < 1) throw PreconditionError("spectral resolution must be positive");
  coef_.assign(static_cast<std::size_t>(2) * width() * width(), Complex{});
}

std::size_t SpectralField::index(int comp, int k1, int k2) const {
  if (comp < 0 || comp > 1 || std::abs(k1) > n_ || std::abs(k2) > n_) {
    throw IndexError("wavevector (" + std::to_string(k1) + ", " + std::to_string(k2) + ") outside |k_i| <= " +
                     std::to_string(n_));
  }
  return (static_cast<std::size_t>(comp) * width() + (k1 + n_)) * width() + (k2 + n_);
}

void SpectralField::set_pair(int comp, int k1, int k2, Complex value) {
  if (k1 == 0 && k2 == 0) {
    at(comp, 0, 0) = Complex{};
    return;
  }
  at(comp, k1, k2) = value;
  at(comp, -k1, -k2) = std::conj(value);
}

std::vector<double> SpectralField::flatten() const {
  std::vector<double> out;
  out.reserve(4 * half_count(n_));
  for (int k1 = 0; k1 <= n_; ++k1) {
    for (int k2 = -n_; k2 <= n_; ++k2) {
      if (!canonical(k1, k2)) continue;
      for (int c = 0; c < 2; ++c) {
        out.push_back(at(c, k1, k2).real());
        out.push_back(at(c, k1, k2).imag());
      }
    }
  }
  return out;
}

SpectralField SpectralField::unflatten(int n, std::span<const double> values) {
  SpectralField f(n);
  if (values.size() != 4 * half_count(n)) throw StateError("flattened field has the wrong length");
  std::size_t i = 0;
  for (int k1 = 0; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      if (!canonical(k1, k2)) continue;
      for (int c = 0; c < 2; ++c) {
        f.at(c, k1, k2) = Complex{values[i], values[i + 1]};
        i += 2;
      }
    }
  }
  f.enforce_reality();
  return f;
}

SpectralField SpectralField::mode(int n, int k1, int k2, Complex c) {
  if (k1 == 0 && k2 == 0) throw PreconditionError("the mean mode carries no divergence-free field");
  SpectralField f(n);
  f.set_pair(0, k1, k2, -double(k2) * c);
  f.set_pair(1, k1, k2, double(k1) * c);
  return f;
}

void SpectralField::enforce_reality() {
  for (int k1 = 0; k1 <= n_; ++k1) {
    for (int k2 = -n_; k2 <= n_; ++k2) {
      if (!canonical(k1, k2)) continue;
      for (int c = 0; c < 2; ++c) at(c, -k1, -k2) = std::conj(at(c, k1, k2));
    }
  }
  at(0, 0, 0) = at(1, 0, 0) = Complex{};
}

double SpectralField::max_divergence() const {
  double worst = 0.0;
  for (int k1 = -n_; k1 <= n_; ++k1) {
    for (int k2 = -n_; k2 <= n_; ++k2) {
      worst = std::max(worst, std::abs(double(k1) * at(0, k1, k2) + double(k2) * at(1, k1, k2)));
    }
  }
  return worst;
}

double SpectralField::reality_defect() const {
  double worst = std::max(std::abs(at(0, 0, 0)), std::abs(at(1, 0, 0)));
  for (int k1 = -n_; k1 <= n_; ++k1) {
    for (int k2 = -n_; k2 <= n_; ++k2) {
      for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(at(c, -k1, -k2) - std::conj(at(c, k1, k2))));
    }
  }
  return worst;
}

SpectralField& SpectralField::operator+=(const SpectralField& o) {
  check_same_resolution(*this, o);
  for (std::size_t i = 0; i < coef_.size(); ++i) coef_[i] += o.coef_[i];
  return *this;
}

SpectralField& SpectralField::operator-=(const SpectralField& o) {
  check_same_resolution(*this, o);
  for (std::size_t i = 0; i < coef_.size(); ++i) coef_[i] -= o.coef_[i];
  return *this;
}

SpectralField& SpectralField::operator*=(double c) {
  for (auto& v : coef_) v *= c;
  return *this;
}

double h_norm2(const SpectralField& u) {
  double acc = 0.0;
  for (const Complex& c : u.raw()) acc += std::norm(c);
  return kTorusArea * acc;
}

double v_norm2(const SpectralField& u) {
  const int n = u.resolution();
  double acc = 0.0;
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      acc += double(k1 * k1 + k2 * k2) * (std::norm(u.at(0, k1, k2)) + std::norm(u.at(1, k1, k2)));
    }
  }
  return kTorusArea * acc;
}

double inner(const SpectralField& u, const SpectralField& v) {
  check_same_resolution(u, v);
  double acc = 0.0;
  const auto a = u.raw();
  const auto b = v.raw();
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] * std::conj(b[i])).real();
  return kTorusArea * acc;
}

SpectralField leray_project(const SpectralField& u) {
  const int n = u.resolution();
  const int p = leray_bits(n);
  SpectralField out(n);
  for (int k1 = 0; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      if (!SpectralField::canonical(k1, k2)) continue;
      const double kk = double(k1 * k1 + k2 * k2);
      const Complex raw = (-double(k2) * u.at(0, k1, k2) + double(k1) * u.at(1, k1, k2)) / kk;
      const Complex c{round_bits(raw.real(), p), round_bits(raw.imag(), p)};
      out.at(0, k1, k2) = -double(k2) * c;
      out.at(1, k1, k2) = double(k1) * c;
    }
  }
  out.enforce_reality();
  return out;
}

int physical_size(int n) { return static_cast<int>(std::bit_ceil(static_cast<unsigned>(3 * n + 1))); }

PhysicalField to_physical(const SpectralField& u, int m) {
  const int n = u.resolution();
  if (m == 0) m = physical_size(n);
  if (m < 2 * n + 1) throw PreconditionError("physical mesh too coarse for the truncation");
  Grid g(m);
  load_pair(g, n, [&](int k1, int k2) { return std::pair{u.at(0, k1, k2), u.at(1, k1, k2)}; });
  PhysicalField p{m, {}, {}};
  const std::size_t mm = static_cast<std::size_t>(m) * m;
  p.u1.resize(mm);
  p.u2.resize(mm);
  for (std::size_t i = 0; i < mm; ++i) {
    p.u1[i] = g.raw()[i].real();
    p.u2[i] = g.raw()[i].imag();
  }
  return p;
}

SpectralField from_physical(const PhysicalField& p, int n) {
  if (p.m < 2 * n + 1) throw PreconditionError("physical mesh too coarse for the truncation");
  const std::size_t mm = static_cast<std::size_t>(p.m) * p.m;
  if (p.u1.size() != mm || p.u2.size() != mm) throw PreconditionError("physical field has the wrong size");
  Grid g(p.m);
  for (std::size_t i = 0; i < mm; ++i) g.raw()[i] = Complex{p.u1[i], p.u2[i]};
  g.forward();
  SpectralField out(n);
  unpack_pair(g, n, out, 0, out, 1);
  return leray_project(out);
}

double physical_energy(const PhysicalField& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.u1.size(); ++i) acc += p.u1[i] * p.u1[i] + p.u2[i] * p.u2[i];
  return kTorusArea * acc / static_cast<double>(p.u1.size());
}

double max_speed(const PhysicalField& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.u1.size(); ++i) worst = std::max(worst, std::hypot(p.u1[i], p.u2[i]));
  return worst;
}

SpectralField bilinear_B(const SpectralField& u, const SpectralField& v) {
  check_same_resolution(u, v);
  const int n = u.resolution();
  const int m = physical_size(n);
  Grid gu(m), g1(m), g2(m);
  load_pair(gu, n, [&](int k1, int k2) { return std::pair{u.at(0, k1, k2), u.at(1, k1, k2)}; });
  load_pair(g1, n, [&](int k1, int k2) {
    const Complex c = v.at(0, k1, k2);
    return std::pair{kI * double(k1) * c, kI * double(k2) * c};
  });
  load_pair(g2, n, [&](int k1, int k2) {
    const Complex c = v.at(1, k1, k2);
    return std::pair{kI * double(k1) * c, kI * double(k2) * c};
  });
  const std::size_t mm = static_cast<std::size_t>(m) * m;
  for (std::size_t i = 0; i < mm; ++i) {
    const double u1 = gu.raw()[i].real();
    const double u2 = gu.raw()[i].imag();
    const Complex d1 = g1.raw()[i];
    const Complex d2 = g2.raw()[i];
    gu.raw()[i] = Complex{u1 * d1.real() + u2 * d1.imag(), u1 * d2.real() + u2 * d2.imag()};
  }
  gu.forward();
  SpectralField out(n);
  unpack_pair(gu, n, out, 0, out, 1);
  return leray_project(out);
}

SpectralField beta_operator(const SpectralField& phi, const SpectralField& u) {
  check_same_resolution(phi, u);
  return apply_strain(strain_of(phi), u);
}

double estimate_beta(const SpectralField& phi, int max_iter, double tol) {
  if (h_norm2(phi) == 0.0) return 0.0;
  const int n = phi.resolution();
  const StrainField strain = strain_of(phi);

  // Fixed pseudo-random start with a decaying spectrum.
  SpectralField u(n);
  for (int k1 = 0; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      if (!SpectralField::canonical(k1, k2)) continue;
      const std::uint64_t key = mix_key({0x6265746175ULL, std::uint64_t(k1 + n), std::uint64_t(k2 + n)});
      const double r = 1.0 / (1.0 + double(k1 * k1 + k2 * k2));
      const SpectralField m = SpectralField::mode(n, k1, k2, r * Complex{key_normal(key), key_normal(key + 1)});
      u += m;
    }
  }
  u = leray_project(u);
  u *= 1.0 / std::sqrt(h_norm2(u));

  double prev = -1.0;
  for (int it = 0; it < max_iter; ++it) {
    const SpectralField y = apply_strain(strain, u);
    const double lam2 = h_norm2(y) / h_norm2(u);
    if (lam2 == 0.0) return 0.0;
    if (prev >= 0.0 && std::abs(lam2 - prev) <= tol * lam2) return std::sqrt(lam2);
    prev = lam2;
    SpectralField w = apply_strain(strain, y);
    const double norm = std::sqrt(h_norm2(w));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw IterationError("power iteration collapsed");
    w *= 1.0 / norm;
    u = std::move(w);
  }
  throw IterationError("estimate_beta: power iteration did not settle in " + std::to_string(max_iter) +
                       " iterations");
}

void write_snapshot(std::ostream& os, const SpectralField& u, double time, std::uint64_t seed) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "# N %d time %.17g seed %llu\n", u.resolution(), time,
                static_cast<unsigned long long>(seed));
  os << buf;
  const int n = u.resolution();
  for (int k1 = -n; k1 <= n; ++k1) {
    for (int k2 = -n; k2 <= n; ++k2) {
      const Complex a = u.at(0, k1, k2);
      const Complex b = u.at(1, k1, k2);
      std::snprintf(buf, sizeof buf, "%d %d %.17g %.17g %.17g %.17g\n", k1, k2, a.real(), a.imag(), b.real(),
                    b.imag());
      os << buf;
    }
  }
}

SpectralField read_snapshot(std::istream& is, double* time, std::uint64_t* seed) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty snapshot");
  std::istringstream hs(line);
  std::string hash, tag_n, tag_t, tag_s;
  int n = 0;
  double t = 0.0;
  unsigned long long sd = 0;
  std::string t_text;
  if (!(hs >> hash >> tag_n >> n >> tag_t >> t_text >> tag_s >> sd) || hash != "#" || tag_n != "N" ||
      tag_t != "time" || tag_s != "seed") {
    throw ConfigError("malformed snapshot header");
  }
  t = std::strtod(t_text.c_str(), nullptr);
  SpectralField u(n);
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int k1, k2;
    std::string v[4];
    if (!(ls >> k1 >> k2 >> v[0] >> v[1] >> v[2] >> v[3])) throw ConfigError("malformed snapshot row");
    double x[4];
    for (int i = 0; i < 4; ++i) x[i] = std::strtod(v[i].c_str(), nullptr);
    u.at(0, k1, k2) = Complex{x[0], x[1]};
    u.at(1, k1, k2) = Complex{x[2], x[3]};
    ++rows;
  }
  if (rows != u.width() * u.width()) throw ConfigError("snapshot has " + std::to_string(rows) + " rows");
  if (time) *time = t;
  if (seed) *seed = sd;
  return u;
}

}  // namespace sflow
