#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfg/game_model.hpp"
#include "mfg/registry.hpp"
#include "support.hpp"

using namespace mfg;
using mfg::test::atoms;
using mfg::test::scalar_game;
using mfg::test::scalar_view;

namespace {

LawSummary law_of(const GameSpec& spec, std::vector<double> x) {
  return spec.model->summarize(0.0, atoms(std::move(x)));
}

}  // namespace

TEST(Hamiltonian, LinearTermOnly) {
  ScalarParams p;
  const GameSpec spec = scalar_game(p);
  const std::vector<double> path{0.0};
  const LawSummary mu = law_of(spec, {0.0});
  const double z = 0.3, a = 1.0;
  EXPECT_NEAR(hamiltonian_tilde(spec, 0.0, scalar_view(path, 0), mu, atoms({0.0}), {&z, 1}, {&a, 1}), 0.3, 1e-15);
}

TEST(Hamiltonian, QuadraticEvaluation) {
  const GameSpec spec = test::quadratic_cost_game();
  const std::vector<double> path{0.0};
  const double z = 0.0, a = 0.4;
  EXPECT_NEAR(hamiltonian_tilde(spec, 0.0, scalar_view(path, 0), law_of(spec, {0.0}), atoms({0.0}), {&z, 1}, {&a, 1}),
              -0.08, 1e-15);
}

TEST(Hamiltonian, InteriorMaximizerIsClampedZ) {
  const GameSpec spec = test::quadratic_cost_game();
  const std::vector<double> path{0.0};
  const double z = 0.3;
  const HamiltonianMax h = maximize_hamiltonian(spec, 0.0, scalar_view(path, 0), law_of(spec, {0.0}), {&z, 1});
  EXPECT_NEAR(spec.actions.point(h.index)[0], 0.3, 1e-12);
  EXPECT_NEAR(h.value, 0.045, 1e-12);
}

TEST(Hamiltonian, BoundaryMaximizer) {
  const GameSpec spec = test::quadratic_cost_game();
  const std::vector<double> path{0.0};
  const double z = 2.0;
  const HamiltonianMax h = maximize_hamiltonian(spec, 0.0, scalar_view(path, 0), law_of(spec, {0.0}), {&z, 1});
  EXPECT_DOUBLE_EQ(spec.actions.point(h.index)[0], 1.0);
  EXPECT_NEAR(h.value, 1.5, 1e-12);
}

TEST(Hamiltonian, FlatTieGoesToFirstIndex) {
  ScalarParams p;
  p.a_gain = 0.0;
  const GameSpec spec = scalar_game(p, {}, ActionSet::finite(1, {-1.0, 0.0, 1.0}));
  const std::vector<double> path{0.0};
  const double z = 0.0;
  const HamiltonianMax h = maximize_hamiltonian(spec, 0.0, scalar_view(path, 0), law_of(spec, {0.0}), {&z, 1});
  EXPECT_EQ(h.index, 0u);
  EXPECT_DOUBLE_EQ(spec.actions.point(h.index)[0], -1.0);
}

TEST(Hamiltonian, DiscreteOracleGameMatchesBruteForceTable) {
  const GameSpec spec = make_game("discrete-oracle");
  const auto& p = dynamic_cast<const ScalarGame&>(*spec.model).params();
  auto clip = [](double v, double c) { return std::clamp(v, -c, c); };
  const double r = std::sqrt(0.5);
  std::size_t cases = 0;
  for (double x : {0.5 - 2 * r, 0.5 - r, 0.5, 0.5 + r, 0.5 + 2 * r}) {
    for (double mean : {-0.4, 0.5, 1.2, 2.0}) {
      const LawSummary mu{{mean}};
      for (double qa : {-1.0, 0.0, 1.0}) {
        const ActionLaw q = atoms({qa, 0.0}, {0.5, 0.5});
        for (double z : {-1.5, -0.2, 0.0, 0.7}) {
          for (std::size_t j = 0; j < spec.actions.size(); ++j) {
            const double a = spec.actions.point(j)[0];
            const std::vector<double> path{x};
            const double f = -p.quad * std::min(x * x, p.quad_cap * p.quad_cap) +
                             p.mean_reward * clip(x, p.reward_clip) * clip(mean, p.reward_clip) -
                             p.q_coupling * (qa / 2) * (qa / 2) - p.cost * a * a / 2;
            const double expected = f + z * a;
            EXPECT_NEAR(hamiltonian_tilde(spec, 0.0, scalar_view(path, 0), mu, q, {&z, 1}, {&a, 1}), expected, 1e-12);
            ++cases;
          }
        }
      }
    }
  }
  EXPECT_EQ(cases, 5u * 4 * 3 * 4 * 3);
}

TEST(Hamiltonian, ArgmaxInvariantUnderDiscountScaling) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"vol_tilt", 0.3}});
  const LawSummary mu = law_of(spec, {-1.0, 0.2, 0.5, 1.7});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ut(0.0, 8.0), ux(-3.0, 3.0), uz(-1.5, 1.5);
  const double lambda = spec.discount;
  for (int n = 0; n < 200; ++n) {
    const double t = ut(rng), x = ux(rng), z = uz(rng);
    const std::vector<double> path{x};
    const PathView view = scalar_view(path, 0);
    const double zs = std::exp(lambda * t) * z;
    const HamiltonianMax h = maximize_hamiltonian(spec, t, view, mu, {&zs, 1});
    double sigma = 0.0;
    spec.model->volatility(t, view, {&sigma, 1});
    std::size_t best = 0;
    double best_v = -INFINITY;
    for (std::size_t j = 0; j < spec.actions.size(); ++j) {
      const auto a = spec.actions.point(j);
      double b = 0.0;
      spec.model->drift(t, view, mu, a, {&b, 1});
      const double v = std::exp(-lambda * t) * (spec.model->reward_state(t, view, mu) + spec.model->reward_action(t, view, a)) +
                       z * b / sigma;
      if (j == 0 || v > best_v + 1e-13 * (1 + std::abs(best_v))) {
        best_v = v;
        best = j;
      }
    }
    EXPECT_EQ(h.index, best) << "t=" << t << " x=" << x << " z=" << z;
  }
}

TEST(Hamiltonian, TieBreakIsDeterministic) {
  const GameSpec spec = make_game("discrete-oracle");
  const std::vector<double> path{0.5};
  const LawSummary mu = law_of(spec, {0.5});
  for (double z : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const auto a = maximize_hamiltonian(spec, 0.0, scalar_view(path, 0), mu, {&z, 1});
    const auto b = maximize_hamiltonian(spec, 0.0, scalar_view(path, 0), mu, {&z, 1});
    EXPECT_EQ(a.index, b.index);
    EXPECT_EQ(a.value, b.value);
  }
}

TEST(Coefficients, NonAnticipative) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  for (const auto& name : registry_names()) {
    const GameSpec spec = make_game(name, {{"time_wave", 0.3}, {"vol_tilt", 0.2}});
    const LawSummary mu = law_of(spec, {-0.5, 0.1, 0.9});
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> path(12);
      for (auto& v : path) v = n01(rng);
      const int step = static_cast<int>(rng() % 11);
      std::vector<double> other = path;
      for (std::size_t j = step + 1; j < other.size(); ++j) other[j] += 3.0 * n01(rng);
      const PathView a{{path.data(), path.size()}, 1, step};
      const PathView b{{other.data(), other.size()}, 1, step};
      const double t = 0.1 * step;
      const double act = 0.35;
      double ba = 0, bb = 0, sa = 0, sb = 0;
      spec.model->drift(t, a, mu, {&act, 1}, {&ba, 1});
      spec.model->drift(t, b, mu, {&act, 1}, {&bb, 1});
      spec.model->volatility(t, a, {&sa, 1});
      spec.model->volatility(t, b, {&sb, 1});
      EXPECT_EQ(ba, bb);
      EXPECT_EQ(sa, sb);
      EXPECT_EQ(spec.model->reward_state(t, a, mu), spec.model->reward_state(t, b, mu));
      EXPECT_EQ(spec.model->reward_action(t, a, {&act, 1}), spec.model->reward_action(t, b, {&act, 1}));
    }
  }
}

TEST(StandingAssumptions, DriftBoundPasses) {
  ScalarParams p;
  const GameSpec spec = scalar_game(p);
  const AssumptionReport r = check_standing_assumptions(spec, {});
  const AssumptionEntry* e = r.find("bounded_drift");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->status, CheckStatus::pass);
  EXPECT_NEAR(e->worst, 1.0, 1e-12);
}

TEST(StandingAssumptions, DriftBoundExceededHasWitness) {
  ScalarParams p;
  p.a_gain = 2.0;
  DeclaredBounds b;
  b.lipschitz = 2.0;
  const GameSpec spec = scalar_game(p, b);
  const AssumptionReport r = check_standing_assumptions(spec, {});
  const AssumptionEntry* e = r.find("bounded_drift");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->status, CheckStatus::fail);
  ASSERT_TRUE(e->witness.has_value());
  EXPECT_DOUBLE_EQ(std::abs(e->witness->action.at(0)), 1.0);
  EXPECT_NEAR(e->witness->measured, 2.0, 1e-12);
  EXPECT_FALSE(r.all_pass());
}

TEST(StandingAssumptions, RegistryGamesPass) {
  for (const auto& name : registry_names()) {
    const AssumptionReport r = check_standing_assumptions(make_game(name), {});
    for (const auto& e : r.entries) EXPECT_NE(e.status, CheckStatus::fail) << name << " " << e.name;
  }
}

TEST(StandingAssumptions, RepulsionRewardBoundAgainstDenseGrid) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const auto& p = dynamic_cast<const ScalarGame&>(*spec.model).params();
  // Dense evaluation of |f| over x and Dirac laws: f1 in [-(confine + repulsion), 0], f2, f3 in [-q_c - cost/2, 0].
  double worst = 0.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    const double conf = p.confine * (1 - std::exp(-x * x / 2));
    for (double y : {x, x + 0.5, x - 2.0}) {
      const double rep = p.repulsion * std::exp(-(x - y) * (x - y) / 2);
      worst = std::max(worst, conf + rep + p.q_coupling + p.cost / 2);
    }
  }
  EXPECT_LE(worst, spec.bounds.reward);
  const AssumptionReport r = check_standing_assumptions(spec, {});
  EXPECT_EQ(r.find("bounded_reward")->status, CheckStatus::pass);
  EXPECT_LE(r.find("bounded_reward")->worst, worst + 1e-9);
}

namespace {

/// -sum_{ij} rho(x_i - x_j) d_i d_j with d = mu - mu' on shared atoms.
double repulsion_integral(const LawPair& pair, double strength) {
  double s = 0.0;
  const auto& a = pair.first;
  const auto& b = pair.second;
  const double ta = a.total_mass(), tb = b.total_mass();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double di = a.masses[i] / ta - b.masses[i] / tb;
      const double dj = a.masses[j] / ta - b.masses[j] / tb;
      const double r = a.atoms[i] - a.atoms[j];
      s += std::exp(-r * r / 2) * di * dj;
    }
  }
  return -strength * s;
}

}  // namespace

TEST(Monotonicity, RepulsiveKernelIsMonotone) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const auto pairs = sample_law_pairs(spec, 30, 60, 5.0, 3);
  const MonotonicityReport r = check_monotonicity(spec, pairs);
  EXPECT_EQ(r.status, CheckStatus::pass);
  EXPECT_LE(r.max_integral, 0.0);
  double oracle_max = -INFINITY;
  for (const auto& pr : pairs) oracle_max = std::max(oracle_max, repulsion_integral(pr, 0.2));
  EXPECT_LE(oracle_max, 0.0);
  EXPECT_NEAR(r.max_integral, oracle_max, 0.05 * std::abs(oracle_max) + 1e-4);
}

TEST(Monotonicity, LawFreeRewardGivesZero) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", 0.0}});
  const auto pairs = sample_law_pairs(spec, 20, 40, 5.0, 4);
  const MonotonicityReport r = check_monotonicity(spec, pairs);
  EXPECT_EQ(r.max_integral, 0.0);
  EXPECT_EQ(r.status, CheckStatus::pass);
}

TEST(Monotonicity, AttractiveKernelFails) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", -0.2}});
  const auto pairs = sample_law_pairs(spec, 30, 60, 5.0, 3);
  const MonotonicityReport r = check_monotonicity(spec, pairs);
  EXPECT_EQ(r.status, CheckStatus::fail);
  EXPECT_GT(r.max_integral, 0.0);
  double oracle_max = -INFINITY;
  for (const auto& pr : pairs) oracle_max = std::max(oracle_max, repulsion_integral(pr, -0.2));
  EXPECT_NEAR(r.max_integral, oracle_max, 0.05 * oracle_max + 1e-4);
}

TEST(GameSpec, ValidationRejectsBadData) {
  GameSpec spec = make_game("gaussian-repulsion");
  spec.discount = 0.0;
  EXPECT_THROW(spec.validate(), MfgError);
  spec = make_game("gaussian-repulsion");
  spec.bounds.monotone_slack = -1.0;
  EXPECT_THROW(spec.validate(), MfgError);
  spec = make_game("gaussian-repulsion");
  spec.bounds.reward = 0.0;
  EXPECT_THROW(spec.validate(), MfgError);
  EXPECT_NO_THROW(make_game("gaussian-repulsion").validate());
}

namespace {

class DegenerateVolatility final : public GameModel {
 public:
  int state_dim() const override { return 1; }
  void drift(double, const PathView&, const LawSummary&, std::span<const double> a, std::span<double> out) const override {
    out[0] = a[0];
  }
  void volatility(double, const PathView& x, std::span<double> out) const override {
    out[0] = x.current()[0] > 1.0 ? 0.0 : 1.0;
  }
};

}  // namespace

TEST(GameSpec, SingularVolatilityRejected) {
  GameSpec spec = make_game("gaussian-repulsion");
  spec.model = std::make_shared<DegenerateVolatility>();
  const std::vector<double> ok{0.0}, bad{2.0};
  double out = 0.0;
  EXPECT_NO_THROW(inverse_volatility(spec, 0.0, scalar_view(ok, 0), {&out, 1}));
  EXPECT_THROW(inverse_volatility(spec, 0.0, scalar_view(bad, 0), {&out, 1}), MfgError);
  EXPECT_THROW(make_game("gaussian-repulsion", {{"sigma0", 0.0}}), MfgError);
}

TEST(Registry, UnknownNamesAndFieldsRejected) {
  EXPECT_THROW(make_game("no-such-game"), MfgError);
  try {
    make_game("gaussian-repulsion", {{"bogus", 1.0}});
    FAIL();
  } catch (const MfgError& e) {
    EXPECT_NE(std::string(e.what()).find("game.bogus"), std::string::npos);
  }
}
