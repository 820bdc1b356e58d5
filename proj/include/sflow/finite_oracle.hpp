#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sflow/flow.hpp"

namespace sflow::finite {

using Rational = boost::multiprecision::cpp_rational;
/// state -> state
using Map = std::vector<int>;
/// Row-stochastic: kernel[x][y] = P(x -> y).
using Kernel = std::vector<std::vector<Rational>>;
/// Exact masses per state.
using ExactMeasure = std::vector<Rational>;

/// Discrete-time random dynamical system on {0, .., n_states-1}: at time k
/// an i.i.d. symbol a is drawn with probability symbol_probs[a] and the state
/// moves by maps[k mod period][a].
struct FiniteFlow {
  std::string name;
  int n_states = 0;
  std::vector<Rational> symbol_probs;
  std::vector<std::vector<Map>> maps;
  /// Optional numeric value of each state.
  std::vector<Rational> labels;

  int period() const { return static_cast<int>(maps.size()); }
  int alphabet() const { return static_cast<int>(symbol_probs.size()); }
  const Map& step(std::int64_t time, int symbol) const;
  /// Throws PreconditionError unless probabilities are nonnegative and sum to
  /// one exactly and every map is total on the state set.
  void validate() const;
};

/// Symbols for the times start, start+1, ...
struct Word {
  std::int64_t start = 0;
  std::vector<int> symbols;
  std::int64_t end() const { return start + static_cast<std::int64_t>(symbols.size()); }
};

constexpr int kDefaultDepth = 12;

int ff_evolve(const FiniteFlow& flow, const Word& word, std::int64_t s, std::int64_t t, int state);
/// S(t, s; word) as a map.
Map ff_compose(const FiniteFlow& flow, const Word& word, std::int64_t s, std::int64_t t);

Kernel step_kernel(const FiniteFlow& flow, std::int64_t time);
Kernel kernel(const FiniteFlow& flow, std::int64_t s, std::int64_t t);
Kernel kernel_product(const Kernel& a, const Kernel& b);
ExactMeasure apply_kernel(const ExactMeasure& mu, const Kernel& k);
ExactMeasure image(const ExactMeasure& mu, const Map& map);
ExactMeasure dirac(int n_states, int state);
void validate_measure(const ExactMeasure& mu, int n_states);
/// Total variation: half the l1 distance.
Rational tv_distance(const ExactMeasure& a, const ExactMeasure& b);

struct PushforwardResult {
  std::vector<std::vector<int>> words;
  std::vector<Rational> word_probs;
  /// S(t, s; word) mu per word.
  std::vector<ExactMeasure> images;
  /// sum over words of prob * image = mu kernel(s, t).
  ExactMeasure average;
  Kernel kernel;
};

/// Enumerates every symbol word on [s, t). Throws DepthLimitError when
/// t - s exceeds depth_limit.
PushforwardResult ff_pushforward(const FiniteFlow& flow, const ExactMeasure& mu, std::int64_t s, std::int64_t t,
                                 int depth_limit = kDefaultDepth);

struct EsmSolution {
  bool unique = false;
  /// rho_k for k = 0 .. period-1 when unique.
  std::vector<ExactMeasure> family;
  /// Stationary vectors of the period map, one per closed class. Every
  /// stationary vector is a convex combination of these.
  std::vector<ExactMeasure> extreme_points;
  bool verified = false;
  std::string report;
};

EsmSolution ff_esm_solve(const FiniteFlow& flow);

/// Finite probability space with a partition G, a random measure mu_w and a
/// G-measurable table f(block, state).
struct CondExpectProblem {
  std::vector<Rational> omega_prob;
  std::vector<int> block;
  std::vector<ExactMeasure> mu;
  std::vector<std::vector<Rational>> f;
};

struct CondExpectReport {
  bool independent = false;
  std::optional<int> failing_block;
  /// E(int f mu_w | G) - int f rho on each block.
  std::vector<Rational> residuals;
  Rational max_residual;
};

/// Evaluates both sides of E(int f(w, x) mu_w(dx) | G) = int f(w, x) rho(dx)
/// with rho = E mu_w, after checking that mu_w is independent of G. On an
/// independence failure the first offending block is reported.
CondExpectReport lemma_cond_expect_check(const CondExpectProblem& problem);

/// Sigma algebra generated by the symbols at times [first, last).
struct CylinderAlgebra {
  std::int64_t first = 0;
  std::int64_t last = 0;
  int alphabet = 2;

  std::size_t block_count() const;
  std::size_t block_of(const Word& w) const;
};

/// Omega = words on [0, d1 + d2), G = cylinders on [0, d1), mu_w = image of
/// rho under the symbols on [d1, d1 + d2), f(block, x) from a keyed table.
/// With mu_on_past the measure is built from the G symbols instead, which
/// breaks independence.
CondExpectProblem flow_cond_expect_problem(const FiniteFlow& flow, int d1, int d2, const ExactMeasure& rho,
                                           std::uint64_t seed, bool mu_on_past = false);

struct MartingaleReport {
  bool passed = false;
  std::size_t cylinders_checked = 0;
  Rational max_gap;
  /// E M_s for s = 0 .. depth.
  std::vector<Rational> level_means;
};

/// M_s(w) = int f d(S(t, t - s; w) rho_{t-s}) for the exact family; checks
/// E[M_{s+1} | symbols on [t - s, t)] = M_s on every cylinder, s < depth.
MartingaleReport ff_martingale_check(const FiniteFlow& flow, std::int64_t t, const std::vector<Rational>& f,
                                     int depth = kDefaultDepth);

struct PullbackEsmReport {
  int depth = 0;
  Rational synchronized_mass;
  bool all_synchronized = false;
  /// Largest TV gap between depths depth and depth-1 over unsynchronized words.
  Rational max_tv_gap;
  ExactMeasure average;
  bool average_is_rho = false;
  /// rho_t averaged at t and t+1 satisfy the one-step semigroup law.
  bool semigroup_law = false;
  /// S(t+1, t; a) mu_{t, w} = mu_{t+1, w a} on synchronized words.
  bool flow_law = false;
};

PullbackEsmReport ff_pullback_esm(const FiniteFlow& flow, std::int64_t t, int depth = kDefaultDepth);

/// A(tau) = S(tau, word.start; word) X, the attractor seen by the word.
std::vector<int> ff_attractor(const FiniteFlow& flow, const Word& word, std::int64_t tau);

struct FiniteTrajectory {
  std::vector<std::int64_t> times;
  std::vector<int> states;
  bool consistent = false;
};

/// Intersects C_{n,m} = S(-m, -n) A(-n) over the word and picks, from the last
/// time backwards, the least-index preimage inside each A(tau).
FiniteTrajectory ff_select_trajectory(const FiniteFlow& flow, const Word& word, const std::vector<std::int64_t>& times);

struct ScenarioCheck {
  std::string name;
  bool passed = false;
};

struct Scenario {
  std::string name;
  std::string claim;
  FiniteFlow flow;
  std::vector<ScenarioCheck> checks;
  bool verdict() const;
};

/// "remark-attractor", "remark-shift", "remark-identity".
std::vector<Scenario> counterexamples();
Scenario counterexample(const std::string& name);

/// Prebuilt flows used by tests and experiments.
FiniteFlow synchronizing_pair();
FiniteFlow noisy_two_state();
FiniteFlow alternating_period_two();
FiniteFlow identity_flow(int n_states);

/// The finite flow as a FlowModel on integer times; the state is the index
/// and symbols come from bucketing the noise store's unit uniforms.
class FiniteFlowModel final : public FlowModel {
 public:
  explicit FiniteFlowModel(FiniteFlow flow);

  std::string name() const override { return "finite:" + flow_.name; }
  std::size_t state_dim() const override { return 1; }
  int grid_level() const override { return 0; }
  int noise_components() const override { return 1; }

  const FiniteFlow& flow() const { return flow_; }
  int symbol_at(const NoisePath& w, std::int64_t time) const;
  Word word_of(const NoisePath& w, std::int64_t s, std::int64_t t) const;

  std::optional<double> exact_chapman_residual(DyadicTime s, DyadicTime t, DyadicTime u, const TestFunction& f,
                                               std::span<const double> x) const override;

 protected:
  State advance(const NoisePath& w, DyadicTime s, DyadicTime t, std::span<const double> x) const override;

 private:
  FiniteFlow flow_;
  std::vector<double> cumulative_;
};

}  // namespace sflow::finite
