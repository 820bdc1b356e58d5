#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sflow/dyadic.hpp"
#include "sflow/errors.hpp"
#include "sflow/keyed.hpp"
#include "sflow/wiener.hpp"

using namespace sflow;

TEST_CASE("dyadic times are canonical and ordered") {
  CHECK(DyadicTime(4, 3) == DyadicTime(1, 1));
  CHECK(DyadicTime(3, 2) < DyadicTime(1, 0));
  CHECK(DyadicTime(-1, 1).to_double() == -0.5);
  CHECK(DyadicTime(3, 2).ticks(4) == 12);
  CHECK_THROWS_AS(DyadicTime(1, 3).ticks(2), AlignmentError);
  CHECK((DyadicTime(1, 2) + DyadicTime(1, 3)) == DyadicTime(3, 3));
  CHECK(DyadicTime::nearest(0.3, 4) == DyadicTime(5, 4));
  CHECK(DyadicTime(-3, 1).floor_integer() == -2);
  CHECK(DyadicTime(-3, 1).ceil_integer() == -1);
}

TEST_CASE("keyed variates are pure functions of the key") {
  CHECK(key_uniform(42) == key_uniform(42));
  CHECK(key_uniform(42) != key_uniform(43));
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double u = key_uniform(k);
    CHECK((u > 0.0 && u < 1.0));
  }
  CHECK(normal_cdf(normal_quantile(0.975)) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(mix_key({1, 2}) != mix_key({2, 1}));
}

TEST_CASE("refinement consistency is bit exact") {
  WienerStore store;
  const NoiseRealization w{9, 3, 2};
  for (int c = 0; c < 2; ++c) {
    for (int trial = 0; trial < 200; ++trial) {
      const int lv = trial % 9;
      const std::int64_t a = static_cast<std::int64_t>(splitmix64(trial) % 400) - 200;
      const std::int64_t len = 1 + static_cast<std::int64_t>(splitmix64(trial + 7) % 50);
      const DyadicTime s(a, lv), t(a + len, lv);
      const auto fine = store.increments(w, c, s, t, 12);
      double acc = 0.0;
      for (double d : fine) acc += d;
      CHECK(acc == store.wiener_at(w, c, t) - store.wiener_at(w, c, s));
    }
  }
}

TEST_CASE("increments do not depend on the query window") {
  WienerStore store;
  const NoiseRealization w{1, 0, 1};
  const auto wide = store.increments(w, 0, DyadicTime::integer(-3), DyadicTime::integer(5), 6);
  const auto narrow = store.increments(w, 0, DyadicTime(5, 2), DyadicTime(9, 1), 6);
  const std::size_t offset = static_cast<std::size_t>((DyadicTime(5, 2) - DyadicTime::integer(-3)).ticks(6));
  REQUIRE(narrow.size() == 208);
  for (std::size_t i = 0; i < narrow.size(); ++i) CHECK(narrow[i] == wide[offset + i]);
  CHECK(store.increments(w, 0, DyadicTime::integer(1), DyadicTime::integer(1), 4).empty());
}

TEST_CASE("two-sided path pinned at zero") {
  WienerStore store;
  CHECK(store.wiener_at({5, 1, 1}, 0, DyadicTime()) == 0.0);
}

TEST_CASE("surgery changes only the salted unit intervals") {
  WienerStore store;
  const WienerStore cut = store.with_surgery({2, 4, 99});
  const NoiseRealization w{4, 0, 1};
  const auto before = store.increments(w, 0, DyadicTime::integer(0), DyadicTime::integer(6), 3);
  const auto after = cut.increments(w, 0, DyadicTime::integer(0), DyadicTime::integer(6), 3);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const bool inside = i >= 16 && i < 32;
    if (inside) {
      CHECK(before[i] != after[i]);
    } else {
      CHECK(before[i] == after[i]);
    }
  }
}

TEST_CASE("store contracts") {
  WienerStore store(WienerConfig{10, 100});
  const NoiseRealization w{1, 0, 1};
  CHECK_THROWS_AS(store.wiener_at(w, 0, DyadicTime(1, 11)), ResolutionError);
  CHECK_THROWS_AS(store.wiener_at(w, 0, DyadicTime::integer(101)), ResolutionError);
  CHECK_THROWS_AS(store.wiener_at(w, 1, DyadicTime::integer(1)), IndexError);
  CHECK_THROWS_AS(store.increments(w, 0, DyadicTime::integer(2), DyadicTime::integer(1), 3), OrderingError);
}

TEST_CASE("increment statistics") {
  WienerStore store;
  const int n = 4000;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    const NoiseRealization w{77, static_cast<std::uint64_t>(i), 1};
    const auto inc = store.increments(w, 0, DyadicTime::integer(0), DyadicTime::integer(2), 2);
    a[i] = inc[0] + inc[1] + inc[2] + inc[3];
    b[i] = inc[1];
  }
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double var = 0.0, var_b = 0.0;
  for (int i = 0; i < n; ++i) {
    var += (a[i] - mean) * (a[i] - mean);
    var_b += b[i] * b[i];
  }
  var /= n - 1;
  var_b /= n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(var == doctest::Approx(1.0).epsilon(0.08));
  CHECK(var_b == doctest::Approx(0.25).epsilon(0.08));
}

TEST_CASE("O-U evaluation is the documented convolution") {
  WienerStore store;
  const OUConfig ou = OUConfig::make(1.5, 5, 1e-8);
  CHECK(std::exp(-1.5 * ou.cutoff_horizon) <= 1e-8);
  CHECK(ou.cutoff_steps() == static_cast<std::int64_t>(ou.weights().size()));
  const NoiseRealization w{2, 1, 1};
  const DyadicTime t(37, 5);
  const auto incs = store.increments(w, 0, t - DyadicTime(ou.cutoff_steps(), 5), t, 5);
  CHECK(store.ou_at(w, 0, ou, t) == ou_convolve(incs, ou.weights()));
  CHECK_THROWS_AS(ou_convolve(std::vector<double>(3), ou.weights()), ResolutionError);
}
