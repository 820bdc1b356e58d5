#include "sflow/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "sflow/errors.hpp"
#include "sflow/parallel.hpp"

namespace sflow {

namespace {

double euclid(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(sq);
}

// sum_i sum_j w_i v_j |x_i - y_j| with rows in parallel and a fixed reduction.
double cross_term(const EmpiricalMeasure& a, const EmpiricalMeasure& b, int jobs) {
  std::vector<double> rows(a.size());
  parallel_for(a.size(), jobs, [&](std::size_t i) {
    std::vector<double> terms(b.size());
    const auto xi = a.particle(i);
    for (std::size_t j = 0; j < b.size(); ++j) terms[j] = b.weight(j) * euclid(xi, b.particle(j));
    rows[i] = a.weight(i) * pairwise_sum(terms);
  });
  return pairwise_sum(rows);
}

bool canonical_less(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  if (a.coords() != b.coords()) return a.coords() < b.coords();
  return a.weights() < b.weights();
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
  if (dim_ == 0) throw PreconditionError("measure dimension must be positive");
  if (weights_.empty()) throw PreconditionError("measure needs at least one particle");
  if (coords_.size() != weights_.size() * dim_) {
    throw PreconditionError("particle and weight counts differ");
  }
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw PreconditionError("weights must be finite and nonnegative");
  }
  for (double c : coords_) {
    if (!std::isfinite(c)) throw StateError("non-finite particle coordinate");
  }
  const double total = pairwise_sum(weights_);
  if (!(total > 0.0)) throw PreconditionError("weights sum to zero");
  if (std::abs(total - 1.0) > 1e-13) {
    for (double& w : weights_) w /= total;
  }
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::size_t dim, std::vector<double> coords) {
  if (dim == 0 || coords.size() % dim != 0) throw PreconditionError("coordinates do not split into particles");
  const std::size_t n = coords.size() / dim;
  return EmpiricalMeasure(dim, std::move(coords), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::span<const double> x) {
  return EmpiricalMeasure(x.size(), std::vector<double>(x.begin(), x.end()), {1.0});
}

EmpiricalMeasure EmpiricalMeasure::from_states(std::span<const State> states) {
  if (states.empty()) throw PreconditionError("measure needs at least one particle");
  const std::size_t dim = states.front().size();
  std::vector<double> coords;
  coords.reserve(states.size() * dim);
  for (const auto& s : states) {
    if (s.size() != dim) throw PreconditionError("states differ in dimension");
    coords.insert(coords.end(), s.begin(), s.end());
  }
  return uniform(dim, std::move(coords));
}

State EmpiricalMeasure::mean() const {
  State m(dim_, 0.0);
  std::vector<double> terms(size());
  for (std::size_t k = 0; k < dim_; ++k) {
    for (std::size_t i = 0; i < size(); ++i) terms[i] = weights_[i] * coords_[i * dim_ + k];
    m[k] = pairwise_sum(terms);
  }
  return m;
}

double EmpiricalMeasure::spread() const {
  const State m = mean();
  std::vector<double> terms(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const double d = euclid(particle(i), m);
    terms[i] = weights_[i] * d * d;
  }
  return std::sqrt(pairwise_sum(terms));
}

double EmpiricalMeasure::diameter() const {
  double d = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = i + 1; j < size(); ++j) d = std::max(d, euclid(particle(i), particle(j)));
  }
  return d;
}

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const StateMap& g, int jobs) {
  std::vector<double> coords(mu.coords().size());
  std::size_t out_dim = mu.dim();
  std::vector<State> images(mu.size());
  parallel_for(mu.size(), jobs, [&](std::size_t i) { images[i] = g(mu.particle(i)); });
  out_dim = images.front().size();
  coords.assign(mu.size() * out_dim, 0.0);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (images[i].size() != out_dim) throw StateError("pushforward map changed dimension between particles");
    for (std::size_t k = 0; k < out_dim; ++k) {
      if (!std::isfinite(images[i][k])) throw StateError("pushforward produced a non-finite state");
      coords[i * out_dim + k] = images[i][k];
    }
  }
  return EmpiricalMeasure(out_dim, std::move(coords), mu.weights());
}

EmpiricalMeasure pushforward_flow(const EmpiricalMeasure& mu, const FlowModel& model, const NoisePath& w,
                                  DyadicTime s, DyadicTime t, int jobs) {
  if (mu.dim() != model.state_dim()) throw StateError("measure dimension does not match the model");
  return EmpiricalMeasure(mu.dim(), model.evolve_many(w, s, t, mu.coords(), jobs), mu.weights());
}

double expect(const EmpiricalMeasure& mu, const TestFunction& f) {
  std::vector<double> terms(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double v = f(mu.particle(i));
    if (!std::isfinite(v)) throw EvaluationError("test function '" + f.name() + "' is not finite on the support");
    terms[i] = mu.weight(i) * v;
  }
  return pairwise_sum(terms);
}

double distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int jobs) {
  if (mu.dim() != nu.dim()) {
    throw PreconditionError("distance between measures of dimension " + std::to_string(mu.dim()) + " and " +
                            std::to_string(nu.dim()));
  }
  const bool swap = canonical_less(nu, mu);
  const EmpiricalMeasure& a = swap ? nu : mu;
  const EmpiricalMeasure& b = swap ? mu : nu;
  const double ab = cross_term(a, b, jobs);
  const double aa = cross_term(a, a, jobs);
  const double bb = cross_term(b, b, jobs);
  return std::max(0.0, 2.0 * ab - (aa + bb));
}

EmpiricalMeasure mixture(std::span<const EmpiricalMeasure> measures, std::span<const double> mix_weights) {
  if (measures.empty()) throw PreconditionError("mixture of no measures");
  if (measures.size() != mix_weights.size()) throw PreconditionError("mixture weight count mismatch");
  const double total = pairwise_sum(mix_weights);
  for (double w : mix_weights) {
    if (!(w >= 0.0)) throw PreconditionError("mixture weights must be nonnegative");
  }
  if (std::abs(total - 1.0) > 1e-12) throw PreconditionError("mixture weights must sum to one");
  const std::size_t dim = measures.front().dim();
  std::vector<double> coords, weights;
  for (std::size_t m = 0; m < measures.size(); ++m) {
    if (measures[m].dim() != dim) throw PreconditionError("mixture components differ in dimension");
    coords.insert(coords.end(), measures[m].coords().begin(), measures[m].coords().end());
    for (double w : measures[m].weights()) weights.push_back(w * mix_weights[m]);
  }
  if (measures.size() == 1) return measures.front();
  return EmpiricalMeasure(dim, std::move(coords), std::move(weights));
}

double hausdorff_semidistance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dim() != b.dim()) throw PreconditionError("clouds differ in dimension");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) best = std::min(best, euclid(a.particle(i), b.particle(j)));
    worst = std::max(worst, best);
  }
  return worst;
}

double hausdorff_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return std::max(hausdorff_semidistance(a, b), hausdorff_semidistance(b, a));
}

void write_measure(std::ostream& os, const EmpiricalMeasure& mu) {
  os << "# weight";
  for (std::size_t k = 0; k < mu.dim(); ++k) os << " x" << k;
  os << '\n';
  char buf[40];
  for (std::size_t i = 0; i < mu.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", mu.weight(i));
    os << buf;
    for (double c : mu.particle(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", c);
      os << ' ' << buf;
    }
    os << '\n';
  }
}

EmpiricalMeasure read_measure(std::istream& is) {
  std::string line;
  std::size_t dim = 0;
  std::vector<double> coords, weights;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      std::size_t cols = 0;
      while (hs >> tok) ++cols;
      if (cols < 2) throw ConfigError("measure table header needs weight and coordinate columns");
      dim = cols - 1;
      continue;
    }
    if (dim == 0) throw ConfigError("measure table row before header");
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(std::strtod(tok.c_str(), nullptr));
    if (row.size() != dim + 1) throw ConfigError("measure table row has " + std::to_string(row.size()) + " columns");
    weights.push_back(row[0]);
    coords.insert(coords.end(), row.begin() + 1, row.end());
  }
  return EmpiricalMeasure(dim, std::move(coords), std::move(weights));
}

}  // namespace sflow
