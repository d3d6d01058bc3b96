#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mfg/equilibrium.hpp"
#include "mfg/oracle.hpp"
#include "mfg/registry.hpp"
#include "support.hpp"

using namespace mfg;

namespace {

MeanFieldState pushed_state(const GameSpec& spec, const PathEnsemble& e, int horizon, std::uint32_t action) {
  const MeanFieldState s0 = initial_state(spec, e, horizon);
  const ControlField c = ControlField::constant(e.paths, horizon, action);
  const MeasureWeights w = control_weights(spec, s0.flow, c, e);
  return make_state(spec, w, action_flow(spec, c, w), c);
}

std::size_t node_of(const oracle::NodeTable& nodes, int k, double x) {
  std::size_t best = 0;
  for (std::size_t n = 0; n < nodes[k].size(); ++n)
    if (std::abs(nodes[k][n] - x) < std::abs(nodes[k][best] - x)) best = n;
  return best;
}

}  // namespace

TEST(FixedPointMap, LawFreeGameIgnoresInput) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", 0.0}, {"q_coupling", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 1000, 80, 4.0, 1);
  const FixedPointResult a = fixed_point_map(spec, initial_state(spec, e, 80), e);
  const FixedPointResult b = fixed_point_map(spec, pushed_state(spec, e, 80, 40), e);
  EXPECT_EQ(a.state.weights.log_w, b.state.weights.log_w);
  EXPECT_EQ(a.control.index, b.control.index);
}

TEST(FixedPointMap, ConstantRewardPlaysFirstAction) {
  const GameSpec spec = test::constant_reward_game(0.7);
  const PathEnsemble e = simulate_ensemble(spec, 500, 40, 2.0, 2);
  const FixedPointResult r = fixed_point_map(spec, initial_state(spec, e, 40), e);
  for (auto a : r.control.index) EXPECT_EQ(a, 0u);
  for (const auto& q : r.state.flow.action_laws) {
    EXPECT_NEAR(q.masses[0] / q.total_mass(), 1.0, 1e-12);
  }
  for (double l : r.state.weights.log_w) EXPECT_EQ(l, 0.0);
}

TEST(FixedPointMap, RepulsionGameContracts) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 4000, 160, 8.0, 3);
  const ResidualBinning bins = ResidualBinning::build(e, 160);
  const MeanFieldState s = initial_state(spec, e, 160);
  const MeanFieldState p1 = fixed_point_map(spec, s, e).state;
  const MeanFieldState p2 = fixed_point_map(spec, p1, e).state;
  EXPECT_LT(state_residual(bins, p2, p1).total(), state_residual(bins, p1, s).total());
}

TEST(Picard, LawFreeGameConvergesInOneIteration) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", 0.0}, {"q_coupling", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 1000, 80, 4.0, 4);
  const EquilibriumReport r = solve_equilibrium(spec, e, 80);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.residual, 0.0);
}

TEST(Picard, ExactModeMatchesDiscreteOracle) {
  const GameSpec spec = make_game("discrete-oracle");
  const auto res = oracle::enumerate_discrete_mfg(spec, {});
  ASSERT_EQ(res.equilibria.size(), 1u);
  const auto& eq = res.equilibria[0];
  const PathEnsemble e = enumerate_binomial_ensemble(spec, 2, 1.0);
  EquilibriumConfig cfg;
  cfg.theta = 1.0;
  cfg.tol_fp = 1e-12;
  cfg.regression.mode = RegressionMode::exact;
  const EquilibriumReport r = solve_equilibrium(spec, e, 2, cfg);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.value, eq.value, 1e-9);
  for (std::size_t i = 0; i < e.paths; ++i)
    for (int k = 0; k < 2; ++k)
      EXPECT_EQ(r.control.at(i, k), eq.policy[k][node_of(res.nodes, k, e.state(i, k)[0])]);
  for (int k = 0; k <= 2; ++k) {
    std::vector<double> mass(res.nodes[k].size(), 0.0);
    const WeightedAtoms m = reweighted_marginal(r.state.weights, k);
    for (std::size_t i = 0; i < m.size(); ++i) mass[node_of(res.nodes, k, m.atoms[i])] += m.masses[i];
    for (std::size_t n = 0; n < mass.size(); ++n) EXPECT_NEAR(mass[n], eq.marginals[k][n], 1e-9);
  }
}

TEST(Picard, RepulsionGameConvergesWithinBudget) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 20000, 340, 17.0, 5);
  EquilibriumConfig cfg;
  cfg.theta = 0.5;
  cfg.tol_fp = 5e-3;
  cfg.max_iter = 30;
  const EquilibriumReport r = solve_infinite_equilibrium(spec, e, 1e-3, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 30);
  // a converged state is self-consistent and near-optimal
  const GapReport g = equilibrium_gap(spec, r.state, e);
  EXPECT_LT(g.residual.total(), 2 * cfg.tol_fp);
  EXPECT_LT(g.gap, 1e-3 + 3 * g.gap_band);
  // re-solving the control problem from scratch leaves V unchanged
  const ValueEstimate v = value(spec, r.input_flow, e, 1e-3);
  EXPECT_LT(std::abs(v.value - r.value), 1e-3 + 3 * v.band);
}

TEST(Picard, TwoStartsAgree) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 4000, 120, 6.0, 6);
  EquilibriumConfig cfg;
  cfg.tol_fp = 1e-3;
  const EquilibriumReport a = solve_equilibrium(spec, e, 120, cfg);
  const MeanFieldState start = pushed_state(spec, e, 120, 0);
  const EquilibriumReport b = solve_equilibrium(spec, e, 120, cfg, &start);
  ASSERT_TRUE(a.converged);
  ASSERT_TRUE(b.converged);
  const ResidualBinning bins = ResidualBinning::build(e, 120);
  EXPECT_LT(state_residual(bins, a.state, b.state).tv, 2 * cfg.tol_fp);
}

TEST(Gap, PerturbedActionFlowIncreasesResidual) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 4000, 120, 6.0, 7);
  EquilibriumConfig cfg;
  cfg.tol_fp = 1e-3;
  const EquilibriumReport r = solve_equilibrium(spec, e, 120, cfg);
  ASSERT_TRUE(r.converged);
  const GapReport base = equilibrium_gap(spec, r.state, e);
  MeanFieldState bad = r.state;
  std::swap(bad.flow.action_laws[2], bad.flow.action_laws[100]);
  const GapReport perturbed = equilibrium_gap(spec, bad, e);
  EXPECT_GT(perturbed.residual.w1, base.residual.w1);
  EXPECT_LT(base.residual.total(), 2 * cfg.tol_fp);
}

TEST(Gap, LawFreeGameHasZeroResidual) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", 0.0}, {"q_coupling", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 1000, 80, 4.0, 8);
  const EquilibriumReport r = solve_equilibrium(spec, e, 80);
  EXPECT_EQ(equilibrium_gap(spec, r.state, e).residual.total(), 0.0);
}

TEST(Damping, MixtureIsAProbabilityDensity) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 5000, 80, 4.0, 9);
  const MeanFieldState a = pushed_state(spec, e, 80, 0);
  const MeanFieldState b = pushed_state(spec, e, 80, 40);
  for (double theta : {0.1, 0.5, 0.9}) {
    const MeanFieldState m = mix_states(spec, a, b, theta);
    for (std::size_t i = 0; i < e.paths; ++i) EXPECT_GT(m.weights.weight(i, 80), 0.0);
    EXPECT_NEAR(m.weights.mean_weight(80), 1.0, 5 * std::exp(2.0) / std::sqrt(5000.0));
    for (const auto& q : m.flow.action_laws) EXPECT_NEAR(q.total_mass(), 1.0, 1e-12);
  }
}

TEST(Reports, CsvHeaders) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"repulsion", 0.0}, {"q_coupling", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 200, 20, 1.0, 10);
  const EquilibriumReport r = solve_equilibrium(spec, e, 20);
  std::ostringstream a, b;
  write_residuals_csv(r, a);
  write_equilibrium_csv(spec, r, b);
  const std::string res = a.str(), eq = b.str();
  EXPECT_EQ(res.substr(0, res.find('\n')), "iter,tv_residual,w1_residual,V,theta");
  EXPECT_EQ(eq.substr(0, eq.find('\n')), "t,mean_x,mean_action,mean_y");
  EXPECT_EQ(std::count(eq.begin(), eq.end(), '\n'), 22);
}
