#include "sflow/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "sflow/errors.hpp"
#include "sflow/esm.hpp"
#include "sflow/finite_oracle.hpp"
#include "sflow/keyed.hpp"
#include "sflow/measure.hpp"
#include "sflow/models.hpp"
#include "sflow/nse.hpp"
#include "sflow/parallel.hpp"

namespace sflow {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string to_string(const finite::Rational& r) { return r.str(); }

}  // namespace

// ---------------------------------------------------------------- Config

Config Config::parse(std::istream& is, const std::string& source) {
  Config cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (cfg.values_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
  read_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require(const std::string& key) const {
  read_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return read_.insert(key), fallback;
  const std::string v = get(key, "");
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return read_.insert(key), fallback;
  const std::string v = get(key, "");
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return read_.insert(key), fallback;
  const std::string v = get(key, "");
  try {
    std::size_t used = 0;
    if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
    const unsigned long long i = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return read_.insert(key), fallback;
  const std::string v = get(key, "");
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& fallback) const {
  if (!has(key)) return read_.insert(key), fallback;
  const std::string v = get(key, "");
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const double d = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(d)) throw std::invalid_argument(item);
      out.push_back(d);
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': bad list entry '" + item + "'");
    }
  }
  return out;
}

void Config::check_consumed() const {
  for (const auto& [k, v] : values_) {
    if (!read_.count(k)) throw ConfigError("unknown key '" + k + "'");
  }
}

// ---------------------------------------------------------------- report

bool RunReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.passed; });
}

nlohmann::ordered_json RunReport::summary() const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) j["config"][k] = v;
  j["passed"] = passed();
  j["verdicts"] = nlohmann::ordered_json::array();
  for (const auto& v : verdicts) {
    j["verdicts"].push_back({{"name", v.name},
                             {"passed", v.passed},
                             {"value", v.value},
                             {"bound", v.bound},
                             {"detail", v.detail}});
  }
  j["diagnostics"] = diagnostics;
  j["files"] = nlohmann::ordered_json::array();
  for (const auto& [name, body] : files) j["files"].push_back(name);
  return j;
}

void write_report(const RunReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "summary.json", std::ios::binary);
    out << report.summary().dump(2) << "\n";
    if (!out) throw Error("cannot write summary.json in '" + dir + "'");
  }
  for (const auto& [name, body] : report.files) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    out << body;
    if (!out) throw Error("cannot write '" + name + "' in '" + dir + "'");
  }
}

// ---------------------------------------------------------------- experiments

namespace {

struct Csv {
  std::ostringstream os;
  explicit Csv(const std::string& header) { os << header << "\n"; }
  template <class... T>
  void row(const T&... cols) {
    bool first = true;
    ((os << (first ? "" : ",") << cell(cols), first = false), ...);
    os << "\n";
  }
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }
  std::string str() const { return os.str(); }
};

void add(RunReport& r, std::string name, bool passed, double value, double bound, std::string detail) {
  r.verdicts.push_back({std::move(name), passed, value, bound, std::move(detail)});
}

DyadicTime exact_time(const Config& cfg, const std::string& key, double fallback, int level) {
  const double v = cfg.get_double(key, fallback);
  const DyadicTime t = DyadicTime::nearest(v, level);
  if (t.to_double() != v) {
    throw ConfigError("key '" + key + "': " + fmt(v) + " is not on the level-" + std::to_string(level) + " grid");
  }
  return t;
}

struct ModelSpec {
  std::string kind;
  std::unique_ptr<FlowModel> model;
  const LinearOUModel* linear = nullptr;
  const finite::FiniteFlowModel* finite = nullptr;
  std::optional<NSEConfig> nse;
};

finite::FiniteFlow finite_by_name(const std::string& name) {
  if (name == "synchronizing-pair") return finite::synchronizing_pair();
  if (name == "noisy-two-state") return finite::noisy_two_state();
  if (name == "alternating-period-two") return finite::alternating_period_two();
  if (name.rfind("identity:", 0) == 0) {
    try {
      return finite::identity_flow(std::stoi(name.substr(9)));
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("key 'model.flow': unknown finite flow '" + name + "'");
}

PeriodicProfile read_profile(const Config& cfg, const std::string& prefix, PeriodicProfile fallback) {
  PeriodicProfile p;
  p.constant = cfg.get_double(prefix + ".constant", fallback.constant);
  p.cos_coeffs = cfg.get_list(prefix + ".cos", fallback.cos_coeffs);
  p.sin_coeffs = cfg.get_list(prefix + ".sin", fallback.sin_coeffs);
  return p;
}

NSEConfig read_nse(const Config& cfg) {
  NSEConfig c = NSEConfig::desk_default();
  c.viscosity = cfg.get_double("nse.viscosity", c.viscosity);
  c.level = static_cast<int>(cfg.get_int("nse.level", c.level));
  c.ou_rate = cfg.get_double("nse.ou_rate", c.ou_rate);
  c.forcing_profile = read_profile(cfg, "nse.forcing", c.forcing_profile);
  try {
    c.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("nse: ") + e.what());
  }
  return c;
}

ModelSpec read_model(const Config& cfg, const std::string& fallback_kind) {
  ModelSpec m;
  m.kind = cfg.get("model.kind", fallback_kind);
  try {
    if (m.kind == "linear-ou" || m.kind == "em-linear") {
      const double rate = cfg.get_double("model.rate", 1.0);
      const double sigma = cfg.get_double("model.sigma", 0.2);
      const int level = static_cast<int>(cfg.get_int("model.level", 8));
      const PeriodicProfile f = read_profile(cfg, "model.forcing", PeriodicProfile{0.0, {1.0}, {}});
      if (m.kind == "linear-ou") {
        auto p = std::make_unique<LinearOUModel>(rate, sigma, f, level);
        m.linear = p.get();
        m.model = std::move(p);
      } else {
        m.model = std::make_unique<EulerMaruyamaModel>(EulerMaruyamaModel::linear(rate, sigma, f, level));
      }
    } else if (m.kind == "identity") {
      m.model = std::make_unique<IdentityModel>(static_cast<std::size_t>(cfg.get_int("model.dim", 1)),
                                                static_cast<int>(cfg.get_int("model.level", 0)));
    } else if (m.kind == "exponential") {
      m.model = std::make_unique<ExponentialModel>(cfg.get_double("model.rate", 1.0),
                                                   static_cast<std::size_t>(cfg.get_int("model.dim", 1)),
                                                   static_cast<int>(cfg.get_int("model.level", 0)));
    } else if (m.kind == "shift") {
      m.model = std::make_unique<ShiftModel>(static_cast<int>(cfg.get_int("model.level", 0)));
    } else if (m.kind == "finite") {
      auto p = std::make_unique<finite::FiniteFlowModel>(finite_by_name(cfg.get("model.flow", "noisy-two-state")));
      m.finite = p.get();
      m.model = std::move(p);
    } else if (m.kind == "nse") {
      m.nse = read_nse(cfg);
      m.model = std::make_unique<NSEModel>(*m.nse);
    } else {
      throw ConfigError("key 'model.kind': unknown model '" + m.kind + "'");
    }
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

struct ScheduleSpec {
  DyadicTime anchor;
  DyadicTime scale;
  int count = 5;
  double epsilon = 0.02;
  PullbackSchedule at(DyadicTime anchor_time) const {
    return PullbackSchedule::geometric(anchor_time, scale, count, epsilon);
  }
};

ScheduleSpec read_schedule(const Config& cfg, const FlowModel& model) {
  ScheduleSpec s;
  const int level = model.grid_level();
  s.anchor = exact_time(cfg, "schedule.anchor", 0.0, level);
  s.scale = exact_time(cfg, "schedule.scale", 1.0, level);
  s.count = static_cast<int>(cfg.get_int("schedule.count", 5));
  s.epsilon = cfg.get_double("schedule.epsilon", 0.02);
  if (s.count < 2) throw ConfigError("key 'schedule.count': need at least two start times");
  if (!(s.scale > DyadicTime())) throw ConfigError("key 'schedule.scale': must be positive");
  if (!(s.epsilon > 0.0)) throw ConfigError("key 'schedule.epsilon': must be positive");
  return s;
}

std::unique_ptr<MeasureFamily> read_family(const Config& cfg, const ModelSpec& m, std::uint64_t seed) {
  const std::string fallback = m.linear ? "stationary" : (m.finite ? "finite-esm" : "dirac");
  const std::string kind = cfg.get("family.kind", fallback);
  const std::size_t dim = m.model->state_dim();
  if (kind == "stationary") {
    if (!m.linear) throw ConfigError("key 'family.kind': 'stationary' needs model.kind = linear-ou");
    const bool random = cfg.get_bool("family.random", false);
    return std::make_unique<GaussianFamily>(GaussianFamily::of_linear(
        *m.linear, random ? GaussianFamily::Mode::Random : GaussianFamily::Mode::Stratified, seed,
        cfg.get_double("family.variance_scale", 1.0)));
  }
  if (kind == "finite-esm") {
    if (!m.finite) throw ConfigError("key 'family.kind': 'finite-esm' needs model.kind = finite");
    try {
      return std::make_unique<FiniteEsmFamily>(m.finite->flow());
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("family: ") + e.what());
    }
  }
  if (kind == "dirac") {
    State x(dim, cfg.get_double("family.point", 0.0));
    return std::make_unique<ConstantFamily>(EmpiricalMeasure::dirac(x));
  }
  if (kind == "box") {
    const State lo(dim, cfg.get_double("family.lo", -1.0));
    const State hi(dim, cfg.get_double("family.hi", 1.0));
    return std::make_unique<ConstantFamily>(seed_box(lo, hi, static_cast<int>(cfg.get_int("family.points", 9))));
  }
  throw ConfigError("key 'family.kind': unknown family '" + kind + "'");
}

struct Common {
  std::uint64_t seed = 0;
  std::size_t ensemble = 10;
};

// noise --------------------------------------------------------------------

RunReport run_noise(const Config& cfg, const Common& common, int jobs) {
  const int intervals = static_cast<int>(cfg.get_int("noise.intervals", 1000));
  const std::size_t samples = static_cast<std::size_t>(cfg.get_int("noise.samples", 10000));
  const int level = static_cast<int>(cfg.get_int("noise.level", 12));
  cfg.check_consumed();
  if (intervals < 1 || samples < 2 || level < 0 || level > 20) throw ConfigError("noise: parameters out of range");

  RunReport r;
  WienerStore store;
  const NoiseRealization w0{common.seed, 0, 1};

  // Refinement: summed fine increments equal the coarse difference exactly.
  std::size_t mismatches = 0;
  for (int i = 0; i < intervals; ++i) {
    const std::uint64_t k = mix_key({common.seed, 0x5eedULL, static_cast<std::uint64_t>(i)});
    const int lv = static_cast<int>(splitmix64(k) % static_cast<std::uint64_t>(level + 1));
    const std::int64_t span = std::int64_t{1} << lv;
    const std::int64_t a = static_cast<std::int64_t>(splitmix64(k + 1) % static_cast<std::uint64_t>(8 * span)) - 4 * span;
    const std::int64_t len = 1 + static_cast<std::int64_t>(splitmix64(k + 2) % static_cast<std::uint64_t>(2 * span));
    const DyadicTime s(a, lv), t(a + len, lv);
    const NoiseRealization wr{common.seed, static_cast<std::uint64_t>(i % 7), 1};
    double acc = 0.0;
    for (double d : store.increments(wr, 0, s, t, level)) acc += d;
    if (acc != store.wiener_at(wr, 0, t) - store.wiener_at(wr, 0, s)) ++mismatches;
  }
  add(r, "wiener.refinement_exact", mismatches == 0, static_cast<double>(mismatches), 0.0,
      std::to_string(intervals) + " random dyadic intervals");

  std::vector<double> x(samples), y(samples);
  parallel_for(samples, jobs, [&](std::size_t i) {
    const NoiseRealization wr{common.seed, 1000 + i, 1};
    const double w1 = store.wiener_at(wr, 0, DyadicTime::integer(1));
    x[i] = w1 - store.wiener_at(wr, 0, DyadicTime::integer(0));
    y[i] = store.wiener_at(wr, 0, DyadicTime::integer(2)) - w1;
  });
  const double n = static_cast<double>(samples);
  const double mx = pairwise_sum(x) / n, my = pairwise_sum(y) / n;
  std::vector<double> vx(samples), vy(samples), cxy(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    vx[i] = (x[i] - mx) * (x[i] - mx);
    vy[i] = (y[i] - my) * (y[i] - my);
    cxy[i] = (x[i] - mx) * (y[i] - my);
  }
  const double var = pairwise_sum(vx) / (n - 1.0);
  const double corr = pairwise_sum(cxy) / std::sqrt(pairwise_sum(vx) * pairwise_sum(vy));
  add(r, "wiener.unit_variance", var >= 0.94 && var <= 1.06, var, 0.06, "sample variance of W(1) - W(0)");
  add(r, "wiener.disjoint_correlation", std::abs(corr) <= 0.05, corr, 0.05, "corr(W(1)-W(0), W(2)-W(1))");

  Csv path("time,w");
  const int plot_level = std::min(level, 6);
  const auto incs = store.increments(w0, 0, DyadicTime::integer(0), DyadicTime::integer(4), plot_level);
  double wv = store.wiener_at(w0, 0, DyadicTime::integer(0));
  path.row(0.0, wv);
  for (std::size_t i = 0; i < incs.size(); ++i) {
    wv += incs[i];
    path.row(std::ldexp(static_cast<double>(i + 1), -plot_level), wv);
  }
  r.files["noise_path.csv"] = path.str();
  r.diagnostics["w1_variance"] = var;
  r.diagnostics["disjoint_correlation"] = corr;
  return r;
}

// pullback -----------------------------------------------------------------

RunReport run_pullback(const Config& cfg, const Common& common, int jobs) {
  const ModelSpec m = read_model(cfg, "linear-ou");
  const ScheduleSpec sch = read_schedule(cfg, *m.model);
  const auto family = read_family(cfg, m, common.seed);
  PullbackOptions opt;
  opt.n_particles = static_cast<std::size_t>(cfg.get_int("ensemble.particles", 1024));
  opt.required_hits = static_cast<int>(cfg.get_int("schedule.required_hits", 2));
  opt.run_full_schedule = cfg.get_bool("schedule.full", false);
  const bool expect_converged = cfg.get_bool("expect.converged", true);
  cfg.check_consumed();

  RunReport r;
  WienerStore store;
  const NoiseSource noise = noise_for(*m.model, store, common.seed);
  const PullbackSchedule schedule = sch.at(sch.anchor);
  std::vector<PullbackResult> results(common.ensemble);
  parallel_for(common.ensemble, jobs, [&](std::size_t i) {
    results[i] = pullback_measure(*m.model, noise.path(i), schedule, *family, opt);
  });

  Csv table("realization,k,start,spread,start_spread,mean0,distance_to_previous");
  std::size_t converged = 0;
  double worst_contraction = 0.0;
  double mean_growth = INFINITY;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& res = results[i];
    if (res.converged) ++converged;
    for (std::size_t k = 0; k < res.spreads.size(); ++k) {
      const double d = k == 0 ? NAN : res.distances[k - 1];
      table.row(i, k, schedule.starts[k].to_double(), res.spreads[k], res.start_spreads[k], res.means[k][0], d);
      if (m.linear && res.start_spreads[k] > 0.0) {
        const double lookback = (schedule.anchor - schedule.starts[k]).to_double();
        const double predicted = std::exp(-m.linear->rate() * lookback) * res.start_spreads[k];
        worst_contraction = std::max(worst_contraction, std::abs(res.spreads[k] / predicted - 1.0));
      }
      if (k > 0) mean_growth = std::min(mean_growth, res.means[k][0] - res.means[k - 1][0]);
    }
  }
  r.files["pullback.csv"] = table.str();
  if (!results.empty() && results[0].used_index >= 0) {
    std::ostringstream os;
    write_measure(os, results[0].measure);
    r.files["pullback_measure_0.txt"] = os.str();
  }
  const double frac = static_cast<double>(converged) / static_cast<double>(results.size());
  add(r, "esm.pullback_convergence", expect_converged ? converged == results.size() : converged == 0, frac,
      expect_converged ? 1.0 : 0.0, "fraction of realizations whose pullback settled");
  if (m.linear) {
    add(r, "esm.spread_contraction", worst_contraction <= 0.1, worst_contraction, 0.1,
        "max relative deviation of spread from exp(-a lookback) times start spread");
  }
  if (!expect_converged && m.kind == "shift") {
    add(r, "esm.shift_means_diverge", mean_growth > 0.0, mean_growth, 0.0,
        "least increase of the iterate mean between consecutive starts");
  }
  r.diagnostics["converged_fraction"] = frac;
  r.diagnostics["first_failure"] = results.empty() ? "" : results[0].failure;
  return r;
}

// attractor ----------------------------------------------------------------

RunReport run_attractor(const Config& cfg, const Common& common, int jobs) {
  const ModelSpec m = read_model(cfg, "exponential");
  const ScheduleSpec sch = read_schedule(cfg, *m.model);
  const std::size_t dim = m.model->state_dim();
  const State lo(dim, cfg.get_double("seed.lo", -1.0));
  const State hi(dim, cfg.get_double("seed.hi", 1.0));
  const int points = static_cast<int>(cfg.get_int("seed.points", 9));
  const bool expect_converged = cfg.get_bool("expect.converged", true);
  cfg.check_consumed();

  RunReport r;
  WienerStore store;
  const NoiseSource noise = noise_for(*m.model, store, common.seed);
  const std::vector<EmpiricalMeasure> seeds{seed_box(lo, hi, points)};
  const DyadicTime earlier = sch.anchor - sch.scale;

  Csv table("realization,k,hausdorff");
  std::size_t converged = 0;
  double worst_residual = 0.0, worst_diameter = 0.0;
  for (std::size_t i = 0; i < common.ensemble; ++i) {
    const NoisePath w = noise.path(i);
    const AttractorCloud at_t = pullback_attractor(*m.model, w, sch.at(sch.anchor), seeds, jobs);
    for (std::size_t k = 0; k < at_t.distances.size(); ++k) table.row(i, k + 1, at_t.distances[k]);
    if (!at_t.converged) continue;
    ++converged;
    worst_diameter = std::max(worst_diameter, at_t.particles.diameter());
    const AttractorCloud at_s = pullback_attractor(*m.model, w, sch.at(earlier), seeds, jobs);
    if (at_s.converged) {
      worst_residual =
          std::max(worst_residual, attractor_invariance_residual(*m.model, w, earlier, sch.anchor, at_s, at_t));
    } else {
      worst_residual = INFINITY;
    }
  }
  r.files["attractor.csv"] = table.str();
  const double frac = static_cast<double>(converged) / static_cast<double>(common.ensemble);
  add(r, "esm.attractor_convergence", expect_converged ? converged == common.ensemble : converged == 0, frac,
      expect_converged ? 1.0 : 0.0, "fraction of realizations whose cloud settled");
  if (expect_converged) {
    add(r, "esm.attractor_invariance", worst_residual <= 2.0 * sch.epsilon, worst_residual, 2.0 * sch.epsilon,
        "Hausdorff distance between S(t,s) A(s) and A(t)");
  }
  r.diagnostics["max_cloud_diameter"] = worst_diameter;
  return r;
}

// esm-verify ---------------------------------------------------------------

RunReport run_esm_verify(const Config& cfg, const Common& common, int jobs) {
  const ModelSpec m = read_model(cfg, "linear-ou");
  const ScheduleSpec sch = read_schedule(cfg, *m.model);
  const std::size_t mart_real = static_cast<std::size_t>(cfg.get_int("martingale.realizations", 200));
  const std::size_t mart_particles = static_cast<std::size_t>(cfg.get_int("martingale.particles", 64));
  const std::vector<double> mart_lookbacks = cfg.get_list("martingale.lookbacks", {1, 2, 4, 8});
  const int baseline_draws = static_cast<int>(cfg.get_int("baseline.draws", 10));
  const bool periodicity = cfg.get_bool("check.periodicity", true);
  if (!m.linear && !m.finite) throw ConfigError("key 'model.kind': esm-verify supports linear-ou and finite");
  cfg.check_consumed();

  RunReport r;
  WienerStore store;
  const NoiseSource noise = noise_for(*m.model, store, common.seed);
  const int level = m.model->grid_level();
  std::vector<DyadicTime> lookbacks;
  for (double L : mart_lookbacks) {
    const DyadicTime d = DyadicTime::nearest(L, level);
    if (d.to_double() != L) throw ConfigError("key 'martingale.lookbacks': " + fmt(L) + " is off the grid");
    lookbacks.push_back(d);
  }
  const TestFunction f = m.finite ? TestFunction::coordinate(0) : TestFunction::tanh_of(0);
  RealizationCounter counter(1u << 20);

  if (m.finite) {
    FiniteEsmFamily family(m.finite->flow());
    const DyadicTime t = sch.anchor;
    const EsmResidual res = esm_residual(*m.model, noise, family, {{t - DyadicTime::integer(3), t}}, 1, counter);
    add(r, "esm.semigroup_residual", res.max_distance == 0.0, res.max_distance, 0.0, "exact kernel algebra");
    const MartingaleEnsemble me =
        martingale_ensemble(*m.model, noise, t, f, family, lookbacks, mart_real, counter, 1, jobs);
    const double exact = expect(family.sample(t, 1), f);
    double worst = 0.0, worst_se = 0.0;
    for (std::size_t k = 0; k < me.means.size(); ++k) {
      if (std::abs(me.means[k] - exact) - 4.0 * me.stderrs[k] > worst - 4.0 * worst_se) {
        worst = std::abs(me.means[k] - exact);
        worst_se = me.stderrs[k];
      }
    }
    add(r, "esm.oracle_agreement", worst <= 4.0 * worst_se, worst, 4.0 * worst_se,
        "Monte Carlo mean of M_s against the exact integral");
    add(r, "esm.martingale_constancy", me.max_gap <= 4.0 * me.gap_stderr, me.max_gap, 4.0 * me.gap_stderr,
        "largest gap between lookbacks");
    return r;
  }

  const LinearOUModel& lin = *m.linear;
  const GaussianFamily point_family = GaussianFamily::of_linear(lin, GaussianFamily::Mode::Stratified);
  const GaussianFamily random_family = GaussianFamily::of_linear(lin, GaussianFamily::Mode::Random, common.seed);
  const std::size_t n = common.ensemble;

  auto ensemble_at = [&](DyadicTime t) {
    const std::uint64_t first = counter.take(n);
    PullbackOptions opt;
    opt.n_particles = 1;
    opt.run_full_schedule = true;
    RandomMeasure rm;
    rm.assignment.resize(n, EmpiricalMeasure::dirac(State{0.0}));
    std::vector<char> ok(n, 0);
    parallel_for(n, jobs, [&](std::size_t i) {
      const PullbackResult pr = pullback_measure(lin, noise.path(first + i), sch.at(t), point_family, opt);
      rm.assignment[i] = pr.measure;
      ok[i] = pr.converged;
    });
    const auto good = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    return std::pair{esm_mean(rm), good};
  };

  const DyadicTime t = sch.anchor;
  const double baseline = self_distance_baseline(random_family, t, n, baseline_draws, 1000, jobs);
  const double bound = 4.0 * baseline;
  const auto [mean_t, good_t] = ensemble_at(t);
  const EmpiricalMeasure reference = point_family.sample(t, n);
  const double d_mean = distance(mean_t, reference, jobs);
  add(r, "esm.expectation_consistency", d_mean <= bound, d_mean, bound,
      "esm_mean of pullback point masses against Normal(m(t), sigma^2/(2a))");
  add(r, "esm.pullback_convergence", good_t == n, static_cast<double>(good_t) / static_cast<double>(n), 1.0,
      "fraction of point-mass pullbacks that settled");

  const EsmResidual res = esm_residual(lin, noise, random_family,
                                       {{t - DyadicTime::integer(1), t}, {t - DyadicTime::integer(2), t}}, n, counter,
                                       jobs);
  add(r, "esm.semigroup_residual", res.max_distance <= bound, res.max_distance, bound,
      "P_st rho_s against rho_t for the analytic family");

  if (periodicity) {
    const DyadicTime later = t + DyadicTime::nearest(2.0 * std::numbers::pi, level);
    const auto [mean_p, good_p] = ensemble_at(later);
    const double d_per = distance(mean_t, mean_p, jobs);
    add(r, "esm.periodicity", d_per <= bound && good_p == n, d_per, bound,
        "estimated rho_t against rho_{t + 2 pi} (nearest grid time)");
    r.diagnostics["periodic_time"] = later.to_double();
  }

  const MartingaleEnsemble me =
      martingale_ensemble(lin, noise, t, f, point_family, lookbacks, mart_real, counter, mart_particles, jobs);
  add(r, "esm.martingale_constancy", me.max_gap <= 4.0 * me.gap_stderr, me.max_gap, 4.0 * me.gap_stderr,
      "largest gap of the ensemble mean of M_s across lookbacks");

  Csv mt("lookback,mean,stderr");
  for (std::size_t k = 0; k < lookbacks.size(); ++k) mt.row(lookbacks[k].to_double(), me.means[k], me.stderrs[k]);
  r.files["martingale.csv"] = mt.str();
  std::ostringstream os;
  write_measure(os, mean_t);
  r.files["esm_mean.txt"] = os.str();
  r.diagnostics["baseline"] = baseline;
  r.diagnostics["stationary_mean"] = lin.stationary_mean(t.to_double());
  r.diagnostics["stationary_variance"] = lin.stationary_variance();
  return r;
}

// oracle -------------------------------------------------------------------

RunReport run_oracle(const Config& cfg, const Common& common, int) {
  const int depth = static_cast<int>(cfg.get_int("oracle.depth", finite::kDefaultDepth));
  const int d1 = static_cast<int>(cfg.get_int("oracle.past", 3));
  const int d2 = static_cast<int>(cfg.get_int("oracle.future", 3));
  cfg.check_consumed();
  if (depth < 1 || depth > 20 || d1 < 1 || d2 < 1 || d1 + d2 > 20) throw ConfigError("oracle: depth out of range");

  using namespace finite;
  RunReport r;
  const FiniteFlow flow = noisy_two_state();
  const EsmSolution sol = ff_esm_solve(flow);
  add(r, "finite.esm_unique", sol.unique && sol.verified, sol.unique ? 1.0 : 0.0, 1.0, sol.report);

  const CondExpectReport lemma = lemma_cond_expect_check(flow_cond_expect_problem(flow, d1, d2, sol.family[0], common.seed));
  add(r, "finite.cond_expect_identity", lemma.independent && lemma.max_residual == 0,
      lemma.max_residual.convert_to<double>(), 0.0, "max residual " + to_string(lemma.max_residual));
  const CondExpectReport broken =
      lemma_cond_expect_check(flow_cond_expect_problem(flow, d1, d2, sol.family[0], common.seed, true));
  add(r, "finite.cond_expect_dependence_detected", !broken.independent, broken.independent ? 1.0 : 0.0, 0.0,
      broken.failing_block ? "first failing block " + std::to_string(*broken.failing_block) : "none");

  std::vector<Rational> f;
  for (int x = 0; x < flow.n_states; ++x) f.emplace_back(2 * x + 1, 3);
  const MartingaleReport mart = ff_martingale_check(flow, 0, f, depth);
  add(r, "finite.martingale", mart.passed, static_cast<double>(mart.cylinders_checked), 0.0,
      "cylinders checked to depth " + std::to_string(depth) + ", max gap " + to_string(mart.max_gap));

  for (const FiniteFlow& ff : {synchronizing_pair(), noisy_two_state(), alternating_period_two()}) {
    const int dd = std::min(depth, ff.alphabet() == 2 ? depth : 8);
    const PullbackEsmReport pb = ff_pullback_esm(ff, 0, dd);
    add(r, "finite.pullback_round_trip." + ff.name, pb.average_is_rho && pb.semigroup_law && pb.flow_law,
        pb.synchronized_mass.convert_to<double>(), 1.0,
        "synchronized mass " + to_string(pb.synchronized_mass) + ", tv gap " + to_string(pb.max_tv_gap));
  }

  const FiniteFlowModel lift(alternating_period_two());
  double worst = 0.0;
  for (int x = 0; x < lift.flow().n_states; ++x) {
    for (int s = -2; s <= 0; ++s) {
      const auto res = lift.exact_chapman_residual(DyadicTime::integer(s), DyadicTime::integer(s + 2),
                                                   DyadicTime::integer(s + 5), TestFunction::coordinate(0),
                                                   State{static_cast<double>(x)});
      worst = std::max(worst, res.value_or(INFINITY));
    }
  }
  add(r, "finite.chapman_exact", worst == 0.0, worst, 0.0, "exact kernel composition");

  for (const Scenario& sc : counterexamples()) {
    for (const ScenarioCheck& c : sc.checks) add(r, "finite." + sc.name + ": " + c.name, c.passed, c.passed, 1.0, sc.claim);
  }
  r.diagnostics["esm_rho0"] = nlohmann::ordered_json::array();
  for (const auto& q : sol.family[0]) r.diagnostics["esm_rho0"].push_back(to_string(q));
  r.diagnostics["martingale_level_means"] = nlohmann::ordered_json::array();
  for (const auto& q : mart.level_means) r.diagnostics["martingale_level_means"].push_back(to_string(q));
  return r;
}

// nse ----------------------------------------------------------------------

RunReport run_nse(const Config& cfg, const Common& common, int) {
  const NSEConfig nc = read_nse(cfg);
  const double duration = cfg.get_double("nse.duration", 4.0);
  const double amplitude = cfg.get_double("nse.amplitude", 1.0);
  const int stride = static_cast<int>(cfg.get_int("nse.stride", 4));
  const bool absorbing = cfg.get_bool("nse.absorbing", false);
  const std::vector<double> lookbacks = cfg.get_list("nse.lookbacks", {2, 4, 8});
  const double window = cfg.get_double("nse.window", 1.0);
  cfg.check_consumed();
  if (!(duration > 0.0) || stride < 1) throw ConfigError("nse: duration and stride must be positive");

  RunReport r;
  WienerStore store;
  const NoisePath w(store, NoiseRealization{common.seed, 0, static_cast<int>(nc.noise_modes.size())});
  const DyadicTime s = DyadicTime::integer(0);
  const DyadicTime t = DyadicTime::nearest(duration, nc.level);
  const SpectralField shape = SpectralField::mode(nc.resolution, 1, 1, Complex{1.0, 0.0}) +
                              SpectralField::mode(nc.resolution, 2, -1, Complex{0.0, 0.5});
  const SpectralField u0 = (amplitude / std::sqrt(h_norm2(shape))) * shape;
  const NSETrajectory traj = nse_trajectory(nc, w, s, t, u0, 1);

  double worst_div = 0.0, worst_real = 0.0;
  for (const auto& u : traj.u) {
    worst_div = std::max(worst_div, u.max_divergence());
    worst_real = std::max(worst_real, u.reality_defect());
  }
  add(r, "nse.incompressible_every_step", worst_div == 0.0, worst_div, 0.0, "max |k . u_k| over all steps");
  add(r, "nse.real_every_step", worst_real == 0.0, worst_real, 0.0, "max reality defect over all steps");

  const double beta = noise_beta(nc);
  const EnergyDiagnostics d = energy_diagnostics(nc, beta, traj);
  Csv energy("time,h_v2,v_v2,sum_abs_z,energy_rate,two_g,slack,radius");
  for (std::size_t i = 0; i < d.time.size(); ++i) {
    if (i % static_cast<std::size_t>(stride) != 0 && i + 1 != d.time.size()) continue;
    energy.row(d.time[i], d.h_v2[i], d.v_v2[i], d.sum_abs_z[i], d.energy_rate[i], d.two_g[i], d.slack[i], d.radius[i]);
  }
  r.files["energy.csv"] = energy.str();
  r.diagnostics["beta_hat"] = beta;
  r.diagnostics["min_slack"] = *std::min_element(d.slack.begin(), d.slack.end());
  r.diagnostics["final_energy"] = h_norm2(traj.u.back());

  if (absorbing) {
    const AbsorbingResult ar = absorbing_experiment(nc, w, t, lookbacks, window, shape);
    Csv tab("lookback,radius_small,radius_large,relative_gap");
    for (std::size_t i = 0; i < ar.lookbacks.size(); ++i) {
      tab.row(ar.lookbacks[i], ar.radius_small[i], ar.radius_large[i], ar.relative_gap[i]);
    }
    r.files["absorbing.csv"] = tab.str();
    add(r, "nse.absorbing_radius", ar.t_star.has_value(), ar.t_star.value_or(NAN), ar.tolerance,
        "least lookback from which amplitudes 1 and 10 agree within the tolerance");
  }
  return r;
}

// counterexamples ----------------------------------------------------------

RunReport run_counterexamples(const Config& cfg, const Common&, int) {
  const std::string only = cfg.get("scenario", "");
  cfg.check_consumed();
  std::vector<finite::Scenario> list;
  if (only.empty()) {
    list = finite::counterexamples();
  } else {
    list.push_back(finite::counterexample(only));
  }
  RunReport r;
  for (const auto& sc : list) {
    for (const auto& c : sc.checks) add(r, sc.name + ": " + c.name, c.passed, c.passed, 1.0, sc.claim);
    r.diagnostics[sc.name] = {{"claim", sc.claim}, {"verdict", sc.verdict()}, {"states", sc.flow.n_states}};
  }
  return r;
}

}  // namespace

const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> list{
      {"noise", "Wiener store refinement exactness and increment statistics"},
      {"pullback", "pullback limits of a measure family along a start-time schedule"},
      {"attractor", "pullback attractor clouds and their invariance residual"},
      {"esm-verify", "evolution system checks: ensemble mean, semigroup residual, periodicity, martingale"},
      {"oracle", "exact rational checks on finite random maps"},
      {"nse", "stochastic Navier-Stokes structural checks, energy diagnostics, absorbing radius"},
      {"counterexamples", "the three finite counterexample scenarios with their verdicts"},
  };
  return list;
}

RunReport run_experiment(const Config& cfg, int jobs) {
  const std::string kind = cfg.require("kind");
  const auto& cat = experiment_catalog();
  if (std::none_of(cat.begin(), cat.end(), [&](const ExperimentInfo& e) { return e.kind == kind; })) {
    throw ConfigError("key 'kind': unknown experiment '" + kind + "'");
  }
  Common common;
  common.seed = cfg.get_u64("seed", 0);
  if (!cfg.has("seed")) throw ConfigError("missing required key 'seed'");
  const std::int64_t ens = cfg.get_int("ensemble.size", 10);
  if (ens < 1) throw ConfigError("key 'ensemble.size': must be positive");
  common.ensemble = static_cast<std::size_t>(ens);
  cfg.get("output", "");

  RunReport r;
  try {
    if (kind == "noise") r = run_noise(cfg, common, jobs);
    if (kind == "pullback") r = run_pullback(cfg, common, jobs);
    if (kind == "attractor") r = run_attractor(cfg, common, jobs);
    if (kind == "esm-verify") r = run_esm_verify(cfg, common, jobs);
    if (kind == "oracle") r = run_oracle(cfg, common, jobs);
    if (kind == "nse") r = run_nse(cfg, common, jobs);
    if (kind == "counterexamples") r = run_counterexamples(cfg, common, jobs);
  } catch (const AlignmentError& e) {
    throw ConfigError(e.what());
  }
  r.kind = kind;
  r.seed = common.seed;
  r.config = cfg.values();
  return r;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Runs stochastic flow and evolution-system experiments"};
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool list = false;
  app.add_option("--config", config_path, "experiment config (key = value)");
  app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--list-experiments", list, "print the experiment kinds");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (list) {
    for (const auto& e : experiment_catalog()) std::cout << e.kind << "\t" << e.description << "\n";
    return 0;
  }
  if (config_path.empty()) {
    std::cerr << "error: --config is required\n";
    return 2;
  }
  RunReport report;
  const auto start = std::chrono::steady_clock::now();
  try {
    Config cfg = Config::load(config_path);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (out_dir.empty()) out_dir = cfg.get("output", "");
    if (out_dir.empty()) out_dir = "sflow_out";
    report = run_experiment(cfg, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    write_report(report, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  for (const auto& v : report.verdicts) {
    std::cout << (v.passed ? "PASS " : "FAIL ") << v.name << " value=" << fmt(v.value) << " bound=" << fmt(v.bound)
              << "\n";
  }
  if (report.passed() && report.kind == "oracle") std::cout << "all exact checks pass\n";
  std::cout << "wall-clock " << std::fixed << std::setprecision(3) << secs << " s\n";
  if (!report.passed()) {
    for (const auto& v : report.verdicts) {
      if (!v.passed) std::cerr << "failed check: " << v.name << " (" << v.detail << ")\n";
    }
    return 1;
  }
  return 0;
}

}  // namespace sflow
