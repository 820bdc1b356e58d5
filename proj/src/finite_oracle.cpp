#include "sflow/finite_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <set>

#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"

namespace sflow::finite {

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return ((a % b) + b) % b; }

Rational abs_r(const Rational& r) { return r < 0 ? Rational(-r) : r; }

std::size_t checked_power(int base, int exp, std::size_t cap) {
  std::size_t v = 1;
  for (int i = 0; i < exp; ++i) {
    v *= static_cast<std::size_t>(base);
    if (v > cap) throw DepthLimitError("enumeration of " + std::to_string(base) + "^" + std::to_string(exp) +
                                       " words exceeds the limit");
  }
  return v;
}

constexpr std::size_t kWordCap = std::size_t{1} << 22;

// Words of length len in base `alphabet`, most significant symbol first.
std::vector<int> decode(std::size_t code, int alphabet, int len) {
  std::vector<int> w(static_cast<std::size_t>(len));
  for (int i = len - 1; i >= 0; --i) {
    w[i] = static_cast<int>(code % alphabet);
    code /= alphabet;
  }
  return w;
}

Rational word_probability(const FiniteFlow& flow, const std::vector<int>& symbols) {
  Rational p = 1;
  for (int a : symbols) p *= flow.symbol_probs[a];
  return p;
}

Map identity_map(int n) {
  Map m(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) m[i] = i;
  return m;
}

bool is_constant(const Map& m) {
  return std::all_of(m.begin(), m.end(), [&](int v) { return v == m.front(); });
}

// x -> outer(inner(x))
Map after(const Map& outer, const Map& inner) {
  Map m(inner.size());
  for (std::size_t i = 0; i < inner.size(); ++i) m[i] = outer[inner[i]];
  return m;
}

// Solves a x = b over the rationals; a is square and nonsingular.
std::vector<Rational> solve(std::vector<std::vector<Rational>> a, std::vector<Rational> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    while (piv < n && a[piv][col] == 0) ++piv;
    if (piv == n) throw PreconditionError("singular stationary system");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const Rational factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<Rational> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

}  // namespace

const Map& FiniteFlow::step(std::int64_t time, int symbol) const {
  if (symbol < 0 || symbol >= alphabet()) throw IndexError("symbol " + std::to_string(symbol) + " out of range");
  return maps[static_cast<std::size_t>(floor_mod(time, period()))][symbol];
}

void FiniteFlow::validate() const {
  if (n_states < 1) throw PreconditionError("finite flow needs at least one state");
  if (symbol_probs.empty()) throw PreconditionError("finite flow needs a nonempty alphabet");
  Rational total = 0;
  for (const auto& p : symbol_probs) {
    if (p < 0) throw PreconditionError("negative symbol probability");
    total += p;
  }
  if (total != 1) throw PreconditionError("symbol probabilities sum to " + total.str() + ", not 1");
  if (maps.empty()) throw PreconditionError("finite flow needs a positive period");
  for (const auto& phase : maps) {
    if (static_cast<int>(phase.size()) != alphabet()) throw PreconditionError("one map per symbol per phase");
    for (const auto& m : phase) {
      if (static_cast<int>(m.size()) != n_states) throw PreconditionError("step map is not total");
      for (int y : m) {
        if (y < 0 || y >= n_states) throw PreconditionError("step map leaves the state set");
      }
    }
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != n_states) {
    throw PreconditionError("one label per state");
  }
}

int ff_evolve(const FiniteFlow& flow, const Word& word, std::int64_t s, std::int64_t t, int state) {
  if (s > t) throw OrderingError("ff_evolve: s > t");
  if (state < 0 || state >= flow.n_states) throw StateError("state " + std::to_string(state) + " out of range");
  if (s == t) return state;
  if (word.start > s || word.end() < t) throw PreconditionError("word does not cover [s, t)");
  for (std::int64_t k = s; k < t; ++k) state = flow.step(k, word.symbols[static_cast<std::size_t>(k - word.start)])[state];
  return state;
}

Map ff_compose(const FiniteFlow& flow, const Word& word, std::int64_t s, std::int64_t t) {
  if (s > t) throw OrderingError("ff_compose: s > t");
  Map m = identity_map(flow.n_states);
  if (s == t) return m;
  if (word.start > s || word.end() < t) throw PreconditionError("word does not cover [s, t)");
  for (std::int64_t k = s; k < t; ++k) {
    m = after(flow.step(k, word.symbols[static_cast<std::size_t>(k - word.start)]), m);
  }
  return m;
}

Kernel step_kernel(const FiniteFlow& flow, std::int64_t time) {
  const auto n = static_cast<std::size_t>(flow.n_states);
  Kernel k(n, std::vector<Rational>(n, Rational(0)));
  for (int a = 0; a < flow.alphabet(); ++a) {
    const Map& m = flow.step(time, a);
    for (std::size_t x = 0; x < n; ++x) k[x][m[x]] += flow.symbol_probs[a];
  }
  return k;
}

Kernel kernel_product(const Kernel& a, const Kernel& b) {
  const std::size_t n = a.size();
  Kernel c(n, std::vector<Rational>(n, Rational(0)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a[i][j] == 0) continue;
      for (std::size_t l = 0; l < n; ++l) c[i][l] += a[i][j] * b[j][l];
    }
  }
  return c;
}

Kernel kernel(const FiniteFlow& flow, std::int64_t s, std::int64_t t) {
  if (s > t) throw OrderingError("kernel: s > t");
  const auto n = static_cast<std::size_t>(flow.n_states);
  Kernel k(n, std::vector<Rational>(n, Rational(0)));
  for (std::size_t i = 0; i < n; ++i) k[i][i] = 1;
  for (std::int64_t time = s; time < t; ++time) k = kernel_product(k, step_kernel(flow, time));
  return k;
}

ExactMeasure apply_kernel(const ExactMeasure& mu, const Kernel& k) {
  ExactMeasure out(k.size(), Rational(0));
  for (std::size_t x = 0; x < k.size(); ++x) {
    if (mu[x] == 0) continue;
    for (std::size_t y = 0; y < k.size(); ++y) out[y] += mu[x] * k[x][y];
  }
  return out;
}

ExactMeasure image(const ExactMeasure& mu, const Map& map) {
  ExactMeasure out(mu.size(), Rational(0));
  for (std::size_t x = 0; x < mu.size(); ++x) out[map[x]] += mu[x];
  return out;
}

ExactMeasure dirac(int n_states, int state) {
  ExactMeasure mu(static_cast<std::size_t>(n_states), Rational(0));
  mu.at(static_cast<std::size_t>(state)) = 1;
  return mu;
}

void validate_measure(const ExactMeasure& mu, int n_states) {
  if (static_cast<int>(mu.size()) != n_states) throw PreconditionError("measure has the wrong number of states");
  Rational total = 0;
  for (const auto& m : mu) {
    if (m < 0) throw PreconditionError("negative mass");
    total += m;
  }
  if (total != 1) throw PreconditionError("masses sum to " + total.str());
}

Rational tv_distance(const ExactMeasure& a, const ExactMeasure& b) {
  Rational acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += abs_r(a[i] - b[i]);
  return acc / 2;
}

PushforwardResult ff_pushforward(const FiniteFlow& flow, const ExactMeasure& mu, std::int64_t s, std::int64_t t,
                                 int depth_limit) {
  flow.validate();
  validate_measure(mu, flow.n_states);
  if (s > t) throw OrderingError("ff_pushforward: s > t");
  if (t - s > depth_limit) {
    throw DepthLimitError("window of " + std::to_string(t - s) + " steps exceeds depth limit " +
                          std::to_string(depth_limit));
  }
  const int len = static_cast<int>(t - s);
  const std::size_t count = checked_power(flow.alphabet(), len, kWordCap);
  PushforwardResult r;
  r.average.assign(static_cast<std::size_t>(flow.n_states), Rational(0));
  for (std::size_t code = 0; code < count; ++code) {
    Word w{s, decode(code, flow.alphabet(), len)};
    const Rational p = word_probability(flow, w.symbols);
    ExactMeasure img = image(mu, ff_compose(flow, w, s, t));
    for (int x = 0; x < flow.n_states; ++x) r.average[x] += p * img[x];
    r.words.push_back(std::move(w.symbols));
    r.word_probs.push_back(p);
    r.images.push_back(std::move(img));
  }
  r.kernel = kernel(flow, s, t);
  return r;
}

EsmSolution ff_esm_solve(const FiniteFlow& flow) {
  flow.validate();
  const int n = flow.n_states;
  const Kernel period_map = kernel(flow, 0, flow.period());

  // Reflexive transitive closure of the support graph.
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i) {
    reach[i][i] = 1;
    for (int j = 0; j < n; ++j) {
      if (period_map[i][j] > 0) reach[i][j] = 1;
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (int j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = 1;
      }
    }
  }

  EsmSolution sol;
  std::vector<char> seen(n, 0);
  for (int i = 0; i < n; ++i) {
    if (seen[i]) continue;
    std::vector<int> cls;
    for (int j = 0; j < n; ++j) {
      if (reach[i][j] && reach[j][i]) cls.push_back(j);
    }
    for (int j : cls) seen[j] = 1;
    bool closed = true;
    for (int x : cls) {
      for (int y = 0; y < n; ++y) {
        if (reach[x][y] && !std::binary_search(cls.begin(), cls.end(), y)) closed = false;
      }
    }
    if (!closed) continue;

    // pi (K - I) = 0 on the class, last equation replaced by sum pi = 1.
    const std::size_t c = cls.size();
    std::vector<std::vector<Rational>> a(c, std::vector<Rational>(c, Rational(0)));
    std::vector<Rational> b(c, Rational(0));
    for (std::size_t eq = 0; eq < c; ++eq) {
      for (std::size_t var = 0; var < c; ++var) {
        a[eq][var] = period_map[cls[var]][cls[eq]] - (eq == var ? 1 : 0);
      }
    }
    for (std::size_t var = 0; var < c; ++var) a[c - 1][var] = 1;
    b[c - 1] = 1;
    const auto pi = solve(std::move(a), std::move(b));
    ExactMeasure rho(static_cast<std::size_t>(n), Rational(0));
    for (std::size_t v = 0; v < c; ++v) rho[cls[v]] = pi[v];
    sol.extreme_points.push_back(std::move(rho));
  }

  sol.verified = std::all_of(sol.extreme_points.begin(), sol.extreme_points.end(),
                             [&](const ExactMeasure& r) { return apply_kernel(r, period_map) == r; });
  sol.unique = sol.extreme_points.size() == 1;
  if (sol.unique) {
    sol.family.push_back(sol.extreme_points.front());
    for (int k = 0; k + 1 < flow.period(); ++k) {
      sol.family.push_back(apply_kernel(sol.family.back(), step_kernel(flow, k)));
    }
    const ExactMeasure wrapped = apply_kernel(sol.family.back(), step_kernel(flow, flow.period() - 1));
    sol.verified = sol.verified && wrapped == sol.family.front();
    sol.report = "unique evolution system of measures with period " + std::to_string(flow.period());
  } else {
    sol.report = std::to_string(sol.extreme_points.size()) +
                 " closed classes: every convex combination of the listed extreme points is an evolution system";
  }
  return sol;
}

CondExpectReport lemma_cond_expect_check(const CondExpectProblem& pb) {
  const std::size_t n_omega = pb.omega_prob.size();
  if (pb.block.size() != n_omega || pb.mu.size() != n_omega) {
    throw PreconditionError("probability, partition and measure tables differ in length");
  }
  if (n_omega == 0) throw PreconditionError("empty probability space");
  Rational total = 0;
  for (const auto& p : pb.omega_prob) {
    if (p < 0) throw PreconditionError("negative probability");
    total += p;
  }
  if (total != 1) throw PreconditionError("probabilities sum to " + total.str());
  const int n_blocks = *std::max_element(pb.block.begin(), pb.block.end()) + 1;
  if (static_cast<int>(pb.f.size()) != n_blocks) throw PreconditionError("f needs one row per block");
  const std::size_t n_states = pb.mu.front().size();
  for (const auto& m : pb.mu) validate_measure(m, static_cast<int>(n_states));

  std::vector<Rational> block_prob(static_cast<std::size_t>(n_blocks), Rational(0));
  for (std::size_t w = 0; w < n_omega; ++w) block_prob[pb.block[w]] += pb.omega_prob[w];

  CondExpectReport rep;
  rep.independent = true;
  // P(mu = nu, G = b) = P(mu = nu) P(G = b) for every value nu and block b.
  std::map<ExactMeasure, std::vector<Rational>> joint;
  std::map<ExactMeasure, Rational> marginal;
  for (std::size_t w = 0; w < n_omega; ++w) {
    auto& row = joint[pb.mu[w]];
    row.resize(static_cast<std::size_t>(n_blocks), Rational(0));
    row[pb.block[w]] += pb.omega_prob[w];
    marginal[pb.mu[w]] += pb.omega_prob[w];
  }
  for (int b = 0; b < n_blocks && rep.independent; ++b) {
    for (const auto& [nu, row] : joint) {
      if (row[b] != marginal[nu] * block_prob[b]) {
        rep.independent = false;
        rep.failing_block = b;
        break;
      }
    }
  }

  ExactMeasure rho(n_states, Rational(0));
  for (std::size_t w = 0; w < n_omega; ++w) {
    for (std::size_t x = 0; x < n_states; ++x) rho[x] += pb.omega_prob[w] * pb.mu[w][x];
  }
  rep.residuals.assign(static_cast<std::size_t>(n_blocks), Rational(0));
  std::vector<Rational> lhs(static_cast<std::size_t>(n_blocks), Rational(0));
  for (std::size_t w = 0; w < n_omega; ++w) {
    const int b = pb.block[w];
    if (pb.f[b].size() != n_states) throw PreconditionError("f row has the wrong number of states");
    for (std::size_t x = 0; x < n_states; ++x) lhs[b] += pb.omega_prob[w] * pb.f[b][x] * pb.mu[w][x];
  }
  rep.max_residual = 0;
  for (int b = 0; b < n_blocks; ++b) {
    if (block_prob[b] == 0) continue;
    Rational rhs = 0;
    for (std::size_t x = 0; x < n_states; ++x) rhs += pb.f[b][x] * rho[x];
    rep.residuals[b] = lhs[b] / block_prob[b] - rhs;
    rep.max_residual = std::max(rep.max_residual, abs_r(rep.residuals[b]));
  }
  return rep;
}

std::size_t CylinderAlgebra::block_count() const {
  if (last < first) throw OrderingError("cylinder window reversed");
  return checked_power(alphabet, static_cast<int>(last - first), kWordCap);
}

std::size_t CylinderAlgebra::block_of(const Word& w) const {
  if (w.start > first || w.end() < last) throw PreconditionError("word does not cover the cylinder window");
  std::size_t code = 0;
  for (std::int64_t k = first; k < last; ++k) {
    code = code * static_cast<std::size_t>(alphabet) + static_cast<std::size_t>(w.symbols[k - w.start]);
  }
  return code;
}

CondExpectProblem flow_cond_expect_problem(const FiniteFlow& flow, int d1, int d2, const ExactMeasure& rho,
                                           std::uint64_t seed, bool mu_on_past) {
  flow.validate();
  validate_measure(rho, flow.n_states);
  if (d1 < 0 || d2 < 0) throw PreconditionError("window lengths must be nonnegative");
  const int len = d1 + d2;
  const std::size_t count = checked_power(flow.alphabet(), len, kWordCap);
  const CylinderAlgebra g{0, d1, flow.alphabet()};
  CondExpectProblem pb;
  for (std::size_t code = 0; code < count; ++code) {
    const Word w{0, decode(code, flow.alphabet(), len)};
    pb.omega_prob.push_back(word_probability(flow, w.symbols));
    pb.block.push_back(static_cast<int>(g.block_of(w)));
    const Map m = mu_on_past ? ff_compose(flow, w, 0, d1) : ff_compose(flow, w, d1, len);
    pb.mu.push_back(image(rho, m));
  }
  const std::size_t blocks = g.block_count();
  pb.f.assign(blocks, std::vector<Rational>(static_cast<std::size_t>(flow.n_states)));
  for (std::size_t b = 0; b < blocks; ++b) {
    for (int x = 0; x < flow.n_states; ++x) {
      const std::uint64_t k = mix_key({seed, b, static_cast<std::uint64_t>(x)});
      pb.f[b][x] = Rational(static_cast<long long>(k % 19) - 9, static_cast<long long>(1 + (k >> 8) % 7));
    }
  }
  return pb;
}

MartingaleReport ff_martingale_check(const FiniteFlow& flow, std::int64_t t, const std::vector<Rational>& f,
                                     int depth) {
  if (depth < 0) throw PreconditionError("depth must be nonnegative");
  if (static_cast<int>(f.size()) != flow.n_states) throw PreconditionError("f needs one value per state");
  checked_power(flow.alphabet(), depth, kWordCap);
  const EsmSolution sol = ff_esm_solve(flow);
  if (!sol.unique) throw PreconditionError("martingale check needs a unique evolution system");
  auto rho_at = [&](std::int64_t time) -> const ExactMeasure& {
    return sol.family[static_cast<std::size_t>(floor_mod(time, flow.period()))];
  };
  auto m_value = [&](const Map& c, std::int64_t from) {
    const ExactMeasure& r = rho_at(from);
    Rational v = 0;
    for (int x = 0; x < flow.n_states; ++x) v += f[c[x]] * r[x];
    return v;
  };

  MartingaleReport rep;
  rep.max_gap = 0;
  std::vector<Map> maps{identity_map(flow.n_states)};
  std::vector<Rational> probs{Rational(1)};
  std::vector<Rational> values{m_value(maps.front(), t)};
  rep.level_means.push_back(values.front());

  const int a_size = flow.alphabet();
  for (int s = 0; s < depth; ++s) {
    const std::int64_t time = t - s - 1;
    std::vector<Map> next_maps;
    std::vector<Rational> next_probs, next_values;
    next_maps.reserve(maps.size() * a_size);
    Rational mean = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      Rational cond = 0;
      for (int a = 0; a < a_size; ++a) {
        Map c = after(maps[i], flow.step(time, a));
        const Rational v = m_value(c, time);
        cond += flow.symbol_probs[a] * v;
        const Rational p = probs[i] * flow.symbol_probs[a];
        mean += p * v;
        next_maps.push_back(std::move(c));
        next_probs.push_back(p);
        next_values.push_back(v);
      }
      rep.max_gap = std::max(rep.max_gap, abs_r(cond - values[i]));
      ++rep.cylinders_checked;
    }
    rep.level_means.push_back(mean);
    maps = std::move(next_maps);
    probs = std::move(next_probs);
    values = std::move(next_values);
  }
  rep.passed = rep.max_gap == 0;
  return rep;
}

PullbackEsmReport ff_pullback_esm(const FiniteFlow& flow, std::int64_t t, int depth) {
  if (depth < 1) throw PreconditionError("pullback depth must be positive");
  const std::size_t count = checked_power(flow.alphabet(), depth, kWordCap);
  const EsmSolution sol = ff_esm_solve(flow);
  if (!sol.unique) throw PreconditionError("pullback needs a unique evolution system");
  auto rho_at = [&](std::int64_t time) -> const ExactMeasure& {
    return sol.family[static_cast<std::size_t>(floor_mod(time, flow.period()))];
  };
  const int n = flow.n_states;

  auto average_at = [&](std::int64_t when, PullbackEsmReport* rep) {
    ExactMeasure avg(static_cast<std::size_t>(n), Rational(0));
    for (std::size_t code = 0; code < count; ++code) {
      const Word w{when - depth, decode(code, flow.alphabet(), depth)};
      const Rational p = word_probability(flow, w.symbols);
      const Map c = ff_compose(flow, w, w.start, when);
      const ExactMeasure mu = image(rho_at(w.start), c);
      for (int x = 0; x < n; ++x) avg[x] += p * mu[x];
      if (!rep) continue;
      if (is_constant(c)) {
        rep->synchronized_mass += p;
        for (int a = 0; a < flow.alphabet(); ++a) {
          const ExactMeasure lhs = image(mu, flow.step(when, a));
          Word longer = w;
          longer.symbols.push_back(a);
          const ExactMeasure rhs = image(rho_at(w.start), ff_compose(flow, longer, w.start, when + 1));
          if (lhs != rhs) rep->flow_law = false;
        }
      } else {
        const ExactMeasure shallow = image(rho_at(w.start + 1), ff_compose(flow, w, w.start + 1, when));
        rep->max_tv_gap = std::max(rep->max_tv_gap, tv_distance(mu, shallow));
      }
    }
    return avg;
  };

  PullbackEsmReport rep;
  rep.depth = depth;
  rep.synchronized_mass = 0;
  rep.max_tv_gap = 0;
  rep.flow_law = true;
  rep.average = average_at(t, &rep);
  rep.all_synchronized = rep.synchronized_mass == 1;
  rep.average_is_rho = rep.average == rho_at(t);
  const ExactMeasure later = average_at(t + 1, nullptr);
  rep.semigroup_law = apply_kernel(rep.average, step_kernel(flow, t)) == later;
  return rep;
}

std::vector<int> ff_attractor(const FiniteFlow& flow, const Word& word, std::int64_t tau) {
  if (tau < word.start || tau > word.end()) throw PreconditionError("time outside the word");
  const Map c = ff_compose(flow, word, word.start, tau);
  std::set<int> img(c.begin(), c.end());
  return {img.begin(), img.end()};
}

FiniteTrajectory ff_select_trajectory(const FiniteFlow& flow, const Word& word,
                                      const std::vector<std::int64_t>& times) {
  if (times.empty()) throw PreconditionError("no times to select");
  if (!std::is_sorted(times.begin(), times.end())) throw OrderingError("selection times must increase");
  if (times.front() < word.start || times.back() > word.end()) throw PreconditionError("times outside the word");

  // C(tau) = intersection over n in [start, tau] of S(tau, n) A(n).
  std::vector<std::vector<int>> sets;
  for (std::int64_t tau : times) {
    std::set<int> acc;
    bool first = true;
    for (std::int64_t n = word.start; n <= tau; ++n) {
      std::set<int> c;
      const Map m = ff_compose(flow, word, n, tau);
      for (int x : ff_attractor(flow, word, n)) c.insert(m[x]);
      if (first) {
        acc = std::move(c);
        first = false;
      } else {
        std::set<int> keep;
        std::set_intersection(acc.begin(), acc.end(), c.begin(), c.end(), std::inserter(keep, keep.begin()));
        acc = std::move(keep);
      }
    }
    if (acc.empty()) throw StateError("empty nested intersection");
    sets.emplace_back(acc.begin(), acc.end());
  }

  FiniteTrajectory tr;
  tr.times = times;
  tr.states.assign(times.size(), 0);
  tr.states.back() = sets.back().front();
  for (std::size_t k = times.size() - 1; k-- > 0;) {
    const Map m = ff_compose(flow, word, times[k], times[k + 1]);
    auto it = std::find_if(sets[k].begin(), sets[k].end(), [&](int y) { return m[y] == tr.states[k + 1]; });
    if (it == sets[k].end()) throw StateError("no preimage inside the attractor");
    tr.states[k] = *it;
  }
  tr.consistent = true;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    if (ff_evolve(flow, word, times[k], times[k + 1], tr.states[k]) != tr.states[k + 1]) tr.consistent = false;
  }
  return tr;
}

bool Scenario::verdict() const {
  return std::all_of(checks.begin(), checks.end(), [](const ScenarioCheck& c) { return c.passed; });
}

namespace {

Scenario remark_attractor() {
  constexpr int J = 8;
  FiniteFlow f;
  f.name = "halving";
  f.n_states = J + 1;
  f.symbol_probs = {Rational(1)};
  Map halve(J + 1);
  for (int j = 0; j <= J; ++j) halve[j] = j == 0 ? 0 : j - 1;
  f.maps = {{halve}};
  f.labels.push_back(0);
  for (int j = 1; j <= J; ++j) f.labels.push_back(Rational(1) / (boost::multiprecision::cpp_int(1) << (J - j)));
  f.validate();

  Scenario sc{"remark-attractor",
              "x -> x/2 on {0} and dyadic points: the attractor is {0} while delta at 2^-t is an evolution "
              "system supported off it",
              f,
              {}};
  // States at time t with a word reaching back J + 2 steps.
  const Word word{-(J + 2), std::vector<int>(static_cast<std::size_t>(2 * J + 4), 0)};
  bool attractor_zero = true;
  for (std::int64_t t = 0; t < J; ++t) attractor_zero &= ff_attractor(f, word, t) == std::vector<int>{0};
  sc.checks.push_back({"pullback attractor is {0}", attractor_zero});

  bool esm = true, labels_ok = true, off = true;
  for (int t = 0; t < J; ++t) {
    const ExactMeasure mu = dirac(f.n_states, J - t);
    if (t + 1 < J) esm &= image(mu, f.step(t, 0)) == dirac(f.n_states, J - t - 1);
    labels_ok &= f.labels[J - t] == Rational(1) / (boost::multiprecision::cpp_int(1) << t);
    for (int x : ff_attractor(f, word, t)) off &= mu[x] == 0;
  }
  sc.checks.push_back({"delta at 2^-t is an evolution system on the window", esm && labels_ok});
  sc.checks.push_back({"the evolution system gives the attractor no mass", off});
  return sc;
}

Scenario remark_shift() {
  constexpr int K = 8;
  FiniteFlow f;
  f.name = "drift";
  f.n_states = K + 1;
  f.symbol_probs = {Rational(1)};
  Map shift(K + 1);
  for (int x = 0; x <= K; ++x) shift[x] = std::min(x + 1, K);
  f.maps = {{shift}};
  for (int x = 0; x <= K; ++x) f.labels.push_back(x);
  f.validate();

  Scenario sc{"remark-shift",
              "x -> x + 1 escapes every bounded window: pushforward means increase and no evolution system "
              "lives in the window",
              f,
              {}};
  auto mean = [&](const ExactMeasure& mu) {
    Rational m = 0;
    for (int x = 0; x <= K; ++x) m += mu[x] * f.labels[x];
    return m;
  };
  ExactMeasure mu = dirac(f.n_states, 0);
  bool increasing = true;
  for (int k = 0; k < K; ++k) {
    const ExactMeasure next = apply_kernel(mu, step_kernel(f, k));
    increasing &= mean(next) > mean(mu);
    mu = next;
  }
  sc.checks.push_back({"pushforward mean strictly increases each step", increasing});
  Rational window_mass = 0;
  for (int x = 0; x < K; ++x) window_mass += mu[x];
  sc.checks.push_back({"window mass reaches zero", window_mass == 0});
  const EsmSolution sol = ff_esm_solve(f);
  Rational esm_window = 0;
  for (int x = 0; x < K; ++x) esm_window += sol.extreme_points.front()[x];
  sc.checks.push_back({"the only stationary family sits in the escape sink", sol.unique && esm_window == 0});
  return sc;
}

Scenario remark_identity() {
  FiniteFlow f = identity_flow(2);
  f.name = "identity-coin";
  f.symbol_probs = {Rational(1, 2), Rational(1, 2)};
  f.maps = {{Map{0, 1}, Map{0, 1}}};
  f.labels = {Rational(1), Rational(2)};
  f.validate();

  Scenario sc{"remark-identity",
              "identity flow: different mixing weights give distinct flow evolution systems with the same "
              "average 1/2 (delta_x1 + delta_x2)",
              f,
              {}};
  // mu_w = alpha d1 + (1 - alpha) d2 when the time-0 symbol is 0, mirrored otherwise.
  auto family = [&](const Rational& alpha, int symbol) {
    return symbol == 0 ? ExactMeasure{alpha, 1 - alpha} : ExactMeasure{1 - alpha, alpha};
  };
  const std::vector<Rational> alphas{Rational(1, 3), Rational(1)};
  constexpr int len = 4;
  const std::size_t count = checked_power(2, len, kWordCap);
  std::vector<ExactMeasure> averages;
  bool distinct = false;
  for (const Rational& alpha : alphas) {
    bool law = true;
    ExactMeasure avg{0, 0};
    for (std::size_t code = 0; code < count; ++code) {
      const Word w{0, decode(code, 2, len)};
      const ExactMeasure mu = family(alpha, w.symbols[0]);
      for (std::int64_t t = 0; t + 1 <= len; ++t) law &= image(mu, ff_compose(f, w, t, t + 1)) == mu;
      const Rational p = word_probability(f, w.symbols);
      avg[0] += p * mu[0];
      avg[1] += p * mu[1];
      distinct |= family(alphas[0], w.symbols[0]) != family(alphas[1], w.symbols[0]);
    }
    sc.checks.push_back({"flow evolution system law for alpha = " + alpha.str(), law});
    averages.push_back(avg);
  }
  sc.checks.push_back({"the two flow evolution systems differ", distinct});
  const ExactMeasure half{Rational(1, 2), Rational(1, 2)};
  sc.checks.push_back({"both average to 1/2 (delta_x1 + delta_x2)", averages[0] == half && averages[1] == half});
  const EsmSolution sol = ff_esm_solve(f);
  sc.checks.push_back({"semigroup evolution system is not unique",
                       !sol.unique && sol.extreme_points.size() == 2 && sol.verified});
  return sc;
}

}  // namespace

std::vector<Scenario> counterexamples() { return {remark_attractor(), remark_shift(), remark_identity()}; }

Scenario counterexample(const std::string& name) {
  for (auto& sc : counterexamples()) {
    if (sc.name == name) return sc;
  }
  throw ConfigError("unknown counterexample '" + name + "'");
}

FiniteFlow synchronizing_pair() {
  FiniteFlow f;
  f.name = "synchronizing-pair";
  f.n_states = 2;
  f.symbol_probs = {Rational(1, 2), Rational(1, 2)};
  f.maps = {{Map{0, 0}, Map{1, 1}}};
  f.labels = {Rational(0), Rational(1)};
  return f;
}

FiniteFlow noisy_two_state() {
  FiniteFlow f;
  f.name = "noisy-two-state";
  f.n_states = 2;
  f.symbol_probs = {Rational(1, 2), Rational(1, 3), Rational(1, 6)};
  f.maps = {{Map{0, 1}, Map{1, 0}, Map{0, 0}}};
  f.labels = {Rational(0), Rational(1)};
  return f;
}

FiniteFlow alternating_period_two() {
  FiniteFlow f;
  f.name = "alternating";
  f.n_states = 3;
  f.symbol_probs = {Rational(1, 2), Rational(1, 4), Rational(1, 4)};
  f.maps = {{Map{1, 2, 0}, Map{0, 0, 1}, Map{2, 2, 2}}, {Map{0, 1, 2}, Map{1, 1, 0}, Map{0, 2, 1}}};
  f.labels = {Rational(-1), Rational(0), Rational(1)};
  return f;
}

FiniteFlow identity_flow(int n_states) {
  FiniteFlow f;
  f.name = "identity";
  f.n_states = n_states;
  f.symbol_probs = {Rational(1)};
  f.maps = {{identity_map(n_states)}};
  for (int x = 0; x < n_states; ++x) f.labels.push_back(x);
  return f;
}

FiniteFlowModel::FiniteFlowModel(FiniteFlow flow) : flow_(std::move(flow)) {
  flow_.validate();
  Rational acc = 0;
  for (const auto& p : flow_.symbol_probs) {
    acc += p;
    cumulative_.push_back(acc.convert_to<double>());
  }
}

int FiniteFlowModel::symbol_at(const NoisePath& w, std::int64_t time) const {
  const double u = w.store().unit_uniform(w.realization(), 0, time);
  for (int a = 0; a + 1 < flow_.alphabet(); ++a) {
    if (u < cumulative_[a]) return a;
  }
  return flow_.alphabet() - 1;
}

Word FiniteFlowModel::word_of(const NoisePath& w, std::int64_t s, std::int64_t t) const {
  if (s > t) throw OrderingError("word_of: s > t");
  Word word{s, {}};
  for (std::int64_t k = s; k < t; ++k) word.symbols.push_back(symbol_at(w, k));
  return word;
}

namespace {

int state_index(const FiniteFlow& flow, double x) {
  const double r = std::nearbyint(x);
  if (r != x || r < 0 || r >= flow.n_states) throw StateError("not a state index of the finite flow");
  return static_cast<int>(r);
}

}  // namespace

State FiniteFlowModel::advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const {
  const std::int64_t a = s.ticks(0);
  const std::int64_t b = t.ticks(0);
  const int y = ff_evolve(flow_, word_of(w, a, b), a, b, state_index(flow_, x[0]));
  return {static_cast<double>(y)};
}

std::optional<double> FiniteFlowModel::exact_chapman_residual(DyadicTime s, DyadicTime t, DyadicTime u,
                                                              const TestFunction& f,
                                                              std::span<const double> x) const {
  const int i = state_index(flow_, x[0]);
  std::vector<Rational> fv;
  for (int y = 0; y < flow_.n_states; ++y) {
    const double v = f(std::vector<double>{static_cast<double>(y)});
    if (!std::isfinite(v)) throw EvaluationError("test function is not finite on the state set");
    fv.emplace_back(v);
  }
  const Kernel su = kernel(flow_, s.ticks(0), u.ticks(0));
  const Kernel st = kernel(flow_, s.ticks(0), t.ticks(0));
  const Kernel tu = kernel(flow_, t.ticks(0), u.ticks(0));
  Rational direct = 0, composed = 0;
  for (int y = 0; y < flow_.n_states; ++y) direct += su[i][y] * fv[y];
  for (int y = 0; y < flow_.n_states; ++y) {
    Rational inner_value = 0;
    for (int z = 0; z < flow_.n_states; ++z) inner_value += tu[y][z] * fv[z];
    composed += st[i][y] * inner_value;
  }
  return abs_r(direct - composed).convert_to<double>();
}

}  // namespace sflow::finite
