#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "mfg/path_engine.hpp"
#include "mfg/registry.hpp"
#include "support.hpp"

using namespace mfg;

namespace {

GameSpec unit_game() { return make_game("gaussian-repulsion"); }

std::vector<double> constant_beta(const PathEnsemble& e, int horizon, double b) {
  return std::vector<double>(e.paths * horizon * e.dim, b);
}

std::vector<double> random_beta(const PathEnsemble& e, int horizon, double bound, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(-bound, bound), freq(0.2, 3.0);
  const double a = amp(rng), b = amp(rng), w = freq(rng);
  std::vector<double> beta(e.paths * horizon * e.dim);
  for (std::size_t i = 0; i < e.paths; ++i) {
    for (int k = 0; k < horizon; ++k) {
      const double x = e.state(i, k)[0];
      const double v = 0.5 * a * std::sin(w * x) + 0.5 * b * std::cos(w * e.grid.time(k));
      beta[i * horizon + k] = std::clamp(v, -bound, bound);
    }
  }
  return beta;
}

/// E[g(Z)] for Z ~ N(0, 1) by composite Simpson on [-12, 12].
template <typename G>
double gauss_expectation(G g) {
  const int n = 24000;
  const double lo = -12.0, h = 24.0 / n;
  double s = 0.0;
  for (int j = 0; j <= n; ++j) {
    const double z = lo + j * h;
    const double w = (j == 0 || j == n) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    s += w * g(z) * std::exp(-z * z / 2) / std::sqrt(2 * M_PI);
  }
  return s * h / 3;
}

}  // namespace

TEST(Ensemble, DeterministicGivenSeed) {
  const GameSpec spec = unit_game();
  const PathEnsemble a = simulate_ensemble(spec, 3, 2, 1.0, 7);
  const PathEnsemble b = simulate_ensemble(spec, 3, 2, 1.0, 7);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.increments, b.increments);
  const PathEnsemble c = simulate_ensemble(spec, 3, 2, 1.0, 8);
  EXPECT_NE(a.increments, c.increments);
}

TEST(Ensemble, IndependentOfWorkerCount) {
  const GameSpec spec = unit_game();
  const int saved = worker_count();
  set_worker_count(1);
  const PathEnsemble a = simulate_ensemble(spec, 3000, 20, 1.0, 9);
  set_worker_count(4);
  const PathEnsemble b = simulate_ensemble(spec, 3000, 20, 1.0, 9);
  set_worker_count(saved);
  EXPECT_EQ(a.states, b.states);
}

TEST(Ensemble, PrefixIsStableUnderMorePaths) {
  const GameSpec spec = unit_game();
  const PathEnsemble a = simulate_ensemble(spec, 10, 5, 1.0, 3);
  const PathEnsemble b = simulate_ensemble(spec, 20, 5, 1.0, 3);
  for (std::size_t i = 0; i < 10; ++i)
    for (int k = 0; k < 5; ++k) EXPECT_EQ(a.increment(i, k)[0], b.increment(i, k)[0]);
}

TEST(Ensemble, EulerRecursionAndInitialState) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"vol_tilt", 0.1}, {"initial", {{"dirac", 0.7}}}});
  const PathEnsemble e = simulate_ensemble(spec, 50, 10, 1.0, 2);
  for (std::size_t i = 0; i < e.paths; ++i) {
    EXPECT_EQ(e.state(i, 0)[0], 0.7);
    for (int k = 0; k < 10; ++k) {
      const double x = e.state(i, k)[0];
      const double sigma = 1.0 + 0.1 * std::tanh(x);
      EXPECT_NEAR(e.state(i, k + 1)[0], x + sigma * e.increment(i, k)[0], 1e-14);
    }
  }
}

TEST(Ensemble, TerminalVarianceOfBrownianMotion) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 100000, 20, 1.0, 11);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < e.paths; ++i) {
    const double x = e.state(i, 20)[0];
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(e.paths);
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_GE(var, 0.97);
  EXPECT_LE(var, 1.03);
}

TEST(Ensemble, IncrementMeansPassLawCheck) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 4000, 40, 2.0, 13);
  for (int k = 0; k < 40; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < e.paths; ++i) s += e.increment(i, k)[0];
    EXPECT_LE(std::abs(s / e.paths), 4 * std::sqrt(e.grid.dt / e.paths)) << k;
  }
}

TEST(Ensemble, QuadraticVariationMatchesVolatility) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"vol_tilt", 0.1}});
  const int k = 20000;
  const PathEnsemble e = simulate_ensemble(spec, 20, k, 1.0, 5);
  for (std::size_t i = 0; i < e.paths; ++i) {
    double qv = 0, expected = 0;
    for (int j = 0; j < k; ++j) {
      const double dx = e.state(i, j + 1)[0] - e.state(i, j)[0];
      const double sigma = 1.0 + 0.1 * std::tanh(e.state(i, j)[0]);
      qv += dx * dx;
      expected += sigma * sigma * e.grid.dt;
    }
    EXPECT_NEAR(qv / expected, 1.0, 0.05) << i;
  }
}

TEST(Ensemble, BinomialEnumerationCoversAllScenarios) {
  const GameSpec spec = make_game("discrete-oracle");
  const PathEnsemble e = enumerate_binomial_ensemble(spec, 3, 1.5);
  ASSERT_EQ(e.paths, 8u);
  EXPECT_TRUE(e.enumerated);
  std::set<std::vector<int>> seen;
  for (std::size_t i = 0; i < e.paths; ++i) {
    std::vector<int> signs;
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(std::abs(e.increment(i, k)[0]), std::sqrt(0.5), 1e-15);
      signs.push_back(e.increment(i, k)[0] > 0);
    }
    seen.insert(signs);
  }
  EXPECT_EQ(seen.size(), 8u);
}

TEST(Ensemble, CsvRoundTrip) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 5, 4, 0.2, 1);
  std::stringstream ss;
  write_ensemble_csv(e, ss);
  const PathEnsemble r = read_ensemble_csv(ss, e.grid.dt);
  EXPECT_EQ(r.paths, e.paths);
  EXPECT_EQ(r.steps(), e.steps());
  for (std::size_t j = 0; j < e.states.size(); ++j) EXPECT_DOUBLE_EQ(r.states[j], e.states[j]);
  for (std::size_t j = 0; j < e.increments.size(); ++j) EXPECT_DOUBLE_EQ(r.increments[j], e.increments[j]);
}

TEST(Weights, ZeroDriftIsIdentity) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 500, 20, 1.0, 2);
  const MeasureWeights w = girsanov_weights(e, constant_beta(e, 20, 0.0), 20, 1.0);
  for (std::size_t i = 0; i < e.paths; ++i)
    for (int k = 0; k <= 20; ++k) EXPECT_EQ(w.weight(i, k), 1.0);
  const MeasureWeights p = project_horizon(w, 10);
  for (std::size_t i = 0; i < e.paths; ++i) EXPECT_EQ(p.weight(i, 10), 1.0);
}

TEST(Weights, UnitDriftMeanIsOne) {
  const std::size_t n = 20000;
  const PathEnsemble e = simulate_ensemble(unit_game(), n, 20, 1.0, 3);
  const MeasureWeights w = girsanov_weights(e, constant_beta(e, 20, 1.0), 20, 1.0);
  EXPECT_NEAR(w.mean_weight(20), 1.0, 3 * std::exp(0.5) / std::sqrt(double(n)));
}

TEST(Weights, UnitDriftSecondMomentMatchesLognormalQuadrature) {
  const std::size_t n = 20000;
  const PathEnsemble e = simulate_ensemble(unit_game(), n, 20, 1.0, 4);
  const MeasureWeights w = girsanov_weights(e, constant_beta(e, 20, 1.0), 20, 1.0);
  const double m2 = gauss_expectation([](double z) { return std::exp(2 * z - 1); });
  const double m4 = gauss_expectation([](double z) { return std::exp(4 * z - 2); });
  EXPECT_NEAR(m2, std::exp(1.0), 1e-9);
  EXPECT_NEAR(w.second_moment(20), m2, 3 * std::sqrt((m4 - m2 * m2) / n));
}

TEST(Weights, ReweightedMarginalIdentityAtStart) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 100, 4, 1.0, 2);
  const WeightedAtoms m = reweighted_marginal(identity_weights(e, 4), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m.atoms[i], 0.0);
    EXPECT_NEAR(m.masses[i], 0.01, 1e-15);
  }
}

TEST(Weights, ReweightedMarginalNormalizes) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 2, 1, 1.0, 2);
  MeasureWeights w = identity_weights(e, 1);
  w.log_w = {0.0, std::log(3.0), 0.0, 0.0};
  const WeightedAtoms m = reweighted_marginal(w, 1);
  EXPECT_NEAR(m.masses[0], 0.75, 1e-15);
  EXPECT_NEAR(m.masses[1], 0.25, 1e-15);
}

TEST(Weights, UnitDriftMeanMatchesDirectSimulation) {
  const std::size_t n = 20000;
  const PathEnsemble e = simulate_ensemble(unit_game(), n, 20, 1.0, 6);
  const MeasureWeights w = girsanov_weights(e, constant_beta(e, 20, 1.0), 20, 1.0);
  const WeightedAtoms m = reweighted_marginal(w, 20);
  // Direct Euler simulation of dX = dt + dW.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0;
    for (int k = 0; k < 20; ++k) x += 0.05 + std::sqrt(0.05) * n01(rng);
    s += x;
    s2 += x * x;
  }
  const double direct = s / n, sd = std::sqrt(s2 / n - direct * direct);
  const double weighted = m.mean()[0];
  // Weighted estimator has a larger variance, roughly e^{1} times.
  const double band = 3 * sd * std::sqrt((1.0 + std::exp(1.0) * 2.0) / n);
  EXPECT_NEAR(direct, 1.0, 3 * sd / std::sqrt(double(n)));
  EXPECT_NEAR(weighted, direct, band);
}

TEST(Weights, ProjectionToFullHorizonIsIdentity) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 200, 20, 1.0, 2);
  const MeasureWeights w = girsanov_weights(e, random_beta(e, 20, 1.0, 1), 20, 1.0);
  const MeasureWeights p = project_horizon(w, 20);
  EXPECT_EQ(p.log_w, w.log_w);
  EXPECT_EQ(p.beta, w.beta);
}

TEST(Weights, ProjectionEqualsFreshBuildBitExactly) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 300, 20, 1.0, 2);
  const MeasureWeights w = girsanov_weights(e, constant_beta(e, 20, 1.0), 20, 1.0);
  const MeasureWeights half = project_horizon(w, 10);
  const MeasureWeights fresh = girsanov_weights(e, constant_beta(e, 10, 1.0), 10, 1.0);
  for (std::size_t i = 0; i < e.paths; ++i) {
    double l = 0.0;
    for (int k = 0; k < 10; ++k) l += e.increment(i, k)[0] - 0.5 * 0.05;
    EXPECT_EQ(half.log_weight(i, 10), fresh.log_weight(i, 10));
    EXPECT_NEAR(half.log_weight(i, 10), l, 1e-12);
  }
}

TEST(Weights, TowerPropertyOnRandomFields) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 300, 30, 1.5, 8);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto beta = random_beta(e, 30, 1.0, s);
    const MeasureWeights full = girsanov_weights(e, beta, 30, 1.0);
    const int kp = 5 + static_cast<int>(s) * 2;
    std::vector<double> head(e.paths * kp);
    for (std::size_t i = 0; i < e.paths; ++i)
      for (int k = 0; k < kp; ++k) head[i * kp + k] = beta[i * 30 + k];
    const MeasureWeights direct = girsanov_weights(e, head, kp, 1.0);
    const MeasureWeights proj = project_horizon(full, kp);
    EXPECT_EQ(proj.log_w, direct.log_w);
  }
}

TEST(Weights, DriftAboveBoundRejected) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 10, 4, 1.0, 2);
  EXPECT_THROW(girsanov_weights(e, constant_beta(e, 4, 1.5), 4, 1.0), MfgError);
}

TEST(Weights, MixtureIsPositiveWithUnitMean) {
  const PathEnsemble e = simulate_ensemble(unit_game(), 5000, 20, 1.0, 12);
  const MeasureWeights a = girsanov_weights(e, random_beta(e, 20, 1.0, 3), 20, 1.0);
  const MeasureWeights b = girsanov_weights(e, random_beta(e, 20, 1.0, 4), 20, 1.0);
  const MeasureWeights m = mixture_weights(a, b, 0.3);
  for (std::size_t i = 0; i < e.paths; ++i) {
    EXPECT_GT(m.weight(i, 20), 0.0);
    EXPECT_NEAR(m.weight(i, 20), 0.7 * a.weight(i, 20) + 0.3 * b.weight(i, 20), 1e-12 * a.weight(i, 20) + 1e-12);
  }
  EXPECT_NEAR(m.mean_weight(20), 1.0, 5 * std::exp(0.5) / std::sqrt(5000.0));
}
