#include "sflow/wiener.hpp"

#include <cmath>
#include <string>

#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"

namespace sflow {

namespace {

constexpr double kFixedScale = 0x1.0p38;  // 2^kFixedBits

double to_real(std::int64_t fixed) { return std::ldexp(static_cast<double>(fixed), -WienerStore::kFixedBits); }

std::int64_t quantize(double z, double sd) { return std::llround(z * sd * kFixedScale); }

}  // namespace

OUConfig OUConfig::make(double rate, int level, double tolerance) {
  if (!(rate > 0.0)) throw PreconditionError("O-U rate must be positive");
  if (!(tolerance > 0.0 && tolerance < 1.0)) throw PreconditionError("O-U tolerance must lie in (0,1)");
  OUConfig cfg;
  cfg.rate = rate;
  cfg.level = level;
  const double exact = std::log(1.0 / tolerance) / rate;
  cfg.cutoff_horizon = std::ldexp(std::ceil(std::ldexp(exact, level)), -level);
  return cfg;
}

std::int64_t OUConfig::cutoff_steps() const {
  return static_cast<std::int64_t>(std::ceil(std::ldexp(cutoff_horizon, level)));
}

double OUConfig::step() const { return std::ldexp(1.0, -level); }

std::vector<double> OUConfig::weights() const {
  const std::int64_t n = cutoff_steps();
  std::vector<double> w(static_cast<std::size_t>(n));
  const double h = step();
  for (std::int64_t k = 0; k < n; ++k) w[k] = std::exp(-rate * static_cast<double>(k) * h);
  return w;
}

void OUConfig::validate(double tolerance) const {
  if (!(rate > 0.0)) throw PreconditionError("O-U rate must be positive");
  if (!(cutoff_horizon > 0.0)) throw PreconditionError("O-U cutoff horizon must be positive");
  if (std::exp(-rate * cutoff_horizon) > tolerance) {
    throw PreconditionError("O-U cutoff horizon too short for tolerance");
  }
}

double ou_convolve(std::span<const double> incs, std::span<const double> weights) {
  if (incs.size() < weights.size()) throw ResolutionError("not enough increments for O-U convolution");
  const std::size_t n = weights.size();
  const std::size_t end = incs.size();
  double acc = 0.0;
  // Oldest term first.
  for (std::size_t k = n; k-- > 0;) acc += weights[k] * incs[end - 1 - k];
  return acc;
}

WienerStore::WienerStore(WienerConfig cfg) : cfg_(cfg) {
  if (cfg_.max_level < 0 || cfg_.max_level > 40) throw ResolutionError("max_level out of range");
  if (cfg_.horizon <= 0) throw ResolutionError("horizon must be positive");
}

WienerStore WienerStore::with_surgery(const KeySurgery& surgery) const {
  WienerStore copy = *this;
  copy.surgeries_.push_back(surgery);
  return copy;
}

std::uint64_t WienerStore::key(const NoiseRealization& w, int component, std::int64_t interval,
                               int level, std::int64_t offset) const {
  std::uint64_t k = mix_key({w.master_seed, w.realization_index, static_cast<std::uint64_t>(component),
                             static_cast<std::uint64_t>(interval), static_cast<std::uint64_t>(level),
                             static_cast<std::uint64_t>(offset)});
  for (const auto& s : surgeries_) {
    if (interval >= s.first_interval && interval < s.last_interval) k = mix_key({k, s.salt});
  }
  return k;
}

std::int64_t WienerStore::unit_increment_fixed(const NoiseRealization& w, int component,
                                               std::int64_t interval) const {
  return quantize(key_normal(key(w, component, interval, 0, 0)), 1.0);
}

double WienerStore::unit_uniform(const NoiseRealization& w, int component, std::int64_t interval) const {
  if (component < 0 || component >= w.num_components) {
    throw IndexError("component " + std::to_string(component) + " out of range");
  }
  return key_uniform(key(w, component, interval, 0, 0));
}

std::int64_t WienerStore::bridge_noise_fixed(const NoiseRealization& w, int component,
                                             std::int64_t interval, int level,
                                             std::int64_t offset) const {
  // Midpoint of a bridge over length 2^-(level-1) has variance 2^-(level+1).
  const double sd = std::ldexp(1.0, -(level + 1) / 2) * ((level + 1) % 2 ? std::sqrt(0.5) : 1.0);
  return quantize(key_normal(key(w, component, interval, level, offset)), sd);
}

void WienerStore::fill_interval(const NoiseRealization& w, int component, std::int64_t interval,
                                int level, std::vector<std::int64_t>& out) const {
  const std::int64_t n = std::int64_t{1} << level;
  out.assign(static_cast<std::size_t>(n + 1), 0);
  out[n] = unit_increment_fixed(w, component, interval);
  for (int l = 1; l <= level; ++l) {
    const std::int64_t step = std::int64_t{1} << (level - l);
    for (std::int64_t o = 1; o < (std::int64_t{1} << l); o += 2) {
      const std::int64_t pos = o * step;
      out[pos] = ((out[pos - step] + out[pos + step]) >> 1) + bridge_noise_fixed(w, component, interval, l, o);
    }
  }
}

void WienerStore::check_query(const NoiseRealization& w, int component, DyadicTime t) const {
  if (component < 0 || component >= w.num_components) {
    throw IndexError("component " + std::to_string(component) + " out of range [0, " +
                     std::to_string(w.num_components) + ")");
  }
  if (t.level() > cfg_.max_level) {
    throw ResolutionError("level " + std::to_string(t.level()) + " exceeds max level " +
                          std::to_string(cfg_.max_level));
  }
  if (t.floor_integer() < -cfg_.horizon || t.ceil_integer() > cfg_.horizon) {
    throw ResolutionError("time " + t.str() + " outside horizon");
  }
}

std::int64_t WienerStore::fixed_at(const NoiseRealization& w, int component, DyadicTime t) const {
  const std::int64_t i = t.floor_integer();
  std::int64_t base = 0;
  if (i > 0) {
    for (std::int64_t j = 0; j < i; ++j) base += unit_increment_fixed(w, component, j);
  } else {
    for (std::int64_t j = i; j < 0; ++j) base -= unit_increment_fixed(w, component, j);
  }
  if (t.level() == 0) return base;

  // Descend the midpoint tree toward t without filling the whole interval.
  const int level = t.level();
  const std::int64_t target = t.ticks(level) - i * (std::int64_t{1} << level);
  std::int64_t lo = 0, hi = std::int64_t{1} << level;
  std::int64_t wlo = 0, whi = unit_increment_fixed(w, component, i);
  for (int l = 1; l <= level; ++l) {
    const std::int64_t mid = (lo + hi) / 2;
    const std::int64_t offset = mid >> (level - l);
    const std::int64_t wmid = ((wlo + whi) >> 1) + bridge_noise_fixed(w, component, i, l, offset);
    if (target == mid) return base + wmid;
    if (target < mid) {
      hi = mid;
      whi = wmid;
    } else {
      lo = mid;
      wlo = wmid;
    }
  }
  return base + (target == lo ? wlo : whi);
}

double WienerStore::wiener_at(const NoiseRealization& w, int component, DyadicTime t) const {
  check_query(w, component, t);
  return to_real(fixed_at(w, component, t));
}

std::vector<double> WienerStore::increments(const NoiseRealization& w, int component, DyadicTime s,
                                            DyadicTime t, int level) const {
  if (s > t) throw OrderingError("increments: s = " + s.str() + " > t = " + t.str());
  if (level < 0 || level > cfg_.max_level) {
    throw ResolutionError("level " + std::to_string(level) + " exceeds max level " +
                          std::to_string(cfg_.max_level));
  }
  check_query(w, component, s);
  check_query(w, component, t);
  const std::int64_t a = s.ticks(level);
  const std::int64_t b = t.ticks(level);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(b - a));
  const std::int64_t per = std::int64_t{1} << level;
  std::vector<std::int64_t> buf;
  std::int64_t pos = a;
  while (pos < b) {
    // floor division of pos by per
    std::int64_t interval = pos >= 0 ? pos / per : -((-pos + per - 1) / per);
    fill_interval(w, component, interval, level, buf);
    const std::int64_t start = interval * per;
    const std::int64_t stop = std::min(b, start + per);
    for (; pos < stop; ++pos) out.push_back(to_real(buf[pos - start + 1] - buf[pos - start]));
  }
  return out;
}

double WienerStore::ou_at(const NoiseRealization& w, int component, const OUConfig& cfg, DyadicTime t) const {
  cfg.validate(1.0);
  if (!t.aligned_to(cfg.level)) throw AlignmentError("O-U time " + t.str() + " not on its grid");
  const std::int64_t steps = cfg.cutoff_steps();
  const DyadicTime from(t.ticks(cfg.level) - steps, cfg.level);
  if (from.floor_integer() < -cfg_.horizon) {
    throw ResolutionError("O-U window before " + t.str() + " exceeds the horizon");
  }
  const auto incs = increments(w, component, from, t, cfg.level);
  const auto weights = cfg.weights();
  return ou_convolve(incs, weights);
}

}  // namespace sflow
