#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfg/control_solver.hpp"
#include "mfg/equilibrium.hpp"
#include "mfg/oracle.hpp"
#include "mfg/registry.hpp"
#include "support.hpp"

using namespace mfg;

namespace {

InteractionFlow driftless_flow(const GameSpec& spec, const PathEnsemble& e, int horizon) {
  return initial_state(spec, e, horizon).flow;
}

ControlField random_control(const GameSpec& spec, std::size_t paths, int horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ControlField c = ControlField::constant(paths, horizon, 0);
  const int mode = static_cast<int>(seed % 3);
  const auto n = static_cast<std::uint32_t>(spec.actions.size());
  const std::uint32_t fixed = static_cast<std::uint32_t>(rng() % n);
  for (auto& v : c.index) v = mode == 0 ? static_cast<std::uint32_t>(rng() % n) : fixed;
  return c;
}

}  // namespace

TEST(OptimalControl, QuadraticCostWithZeroZIsIdle) {
  const GameSpec spec = test::quadratic_cost_game();
  const PathEnsemble e = simulate_ensemble(spec, 500, 40, 2.0, 1);
  const InteractionFlow flow = driftless_flow(spec, e, 40);
  const BsdeSolution s = solve_finite_horizon(spec, flow, e, 40);
  const ControlField c = extract_optimal_control(spec, flow, s, e);
  for (auto a : c.index) EXPECT_DOUBLE_EQ(spec.actions.point(a)[0], 0.0);
}

TEST(OptimalControl, ConstantZGivesClampedAction) {
  const GameSpec spec = test::quadratic_cost_game();
  const PathEnsemble e = simulate_ensemble(spec, 100, 20, 1.0, 1);
  const InteractionFlow flow = driftless_flow(spec, e, 20);
  BsdeSolution s;
  s.paths = e.paths;
  s.horizon = 20;
  s.dt = e.grid.dt;
  s.y.assign(e.paths * 21, 0.0);
  s.z.assign(e.paths * 20, 0.5);
  const ControlField c = extract_optimal_control(spec, flow, s, e);
  for (auto a : c.index) EXPECT_NEAR(spec.actions.point(a)[0], 0.5, 1e-12);
}

TEST(Reward, ConstantRewardDeterministicIntegral) {
  const GameSpec spec = test::constant_reward_game(1.0);
  const PathEnsemble e = simulate_ensemble(spec, 200, 400, 20.0, 1);
  const ControlField c = random_control(spec, e.paths, 400, 3);
  const RewardEstimate r = evaluate_reward(spec, driftless_flow(spec, e, 400), c, e, 400);
  EXPECT_NEAR(r.value, 2 * (1 - std::exp(-10.0)), 1e-9);
  EXPECT_NEAR(r.value, 1.99991, 1e-5);
}

TEST(Reward, ZeroRewardIsZero) {
  const GameSpec spec = test::constant_reward_game(0.0);
  const PathEnsemble e = simulate_ensemble(spec, 200, 40, 2.0, 1);
  const RewardEstimate r = evaluate_reward(spec, driftless_flow(spec, e, 40), random_control(spec, e.paths, 40, 0), e, 40);
  EXPECT_EQ(r.value, 0.0);
}

TEST(Reward, QuadratureWeights) {
  EXPECT_NEAR(reward_weight(0.5, 0.1, 3), std::exp(-0.15) * (1 - std::exp(-0.05)) / 0.5, 1e-16);
  double total = 0;
  for (int k = 0; k < 100; ++k) total += reward_weight(0.5, 0.1, k);
  EXPECT_NEAR(total, (1 - std::exp(-5.0)) / 0.5, 1e-12);
}

TEST(Reward, ZeroDriftGameIsPlainDiscountedAverage) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"a_gain", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 300, 40, 2.0, 2);
  const InteractionFlow flow = driftless_flow(spec, e, 40);
  const ControlField c = random_control(spec, e.paths, 40, 0);
  const RewardEstimate r = evaluate_reward(spec, flow, c, e, 40);
  double plain = 0;
  for (std::size_t i = 0; i < e.paths; ++i) {
    for (int k = 0; k < 40; ++k) {
      const auto a = spec.actions.point(c.at(i, k));
      const PathView v = e.view(i, k);
      const double t = e.grid.time(k);
      plain += reward_weight(0.5, e.grid.dt, k) *
               (spec.model->reward_state(t, v, flow.laws[k]) + spec.model->reward_interaction(t, flow.laws[k], flow.action_laws[k]) +
                spec.model->reward_action(t, v, a));
    }
  }
  EXPECT_NEAR(r.value, plain / e.paths, 1e-12);
}

TEST(Reward, ControlIrrelevance) {
  const GameSpec spec = make_game("gaussian-repulsion", {{"a_gain", 0.0}, {"cost", 0.0}});
  const PathEnsemble e = simulate_ensemble(spec, 300, 40, 2.0, 3);
  const InteractionFlow flow = driftless_flow(spec, e, 40);
  const double j0 = evaluate_reward(spec, flow, random_control(spec, e.paths, 40, 0), e, 40).value;
  for (std::uint64_t s = 1; s < 6; ++s)
    EXPECT_NEAR(evaluate_reward(spec, flow, random_control(spec, e.paths, 40, s), e, 40).value, j0, 1e-12);
}

TEST(Reward, OraclePolicyValueInExactMode) {
  const GameSpec spec = make_game("discrete-oracle");
  const auto res = oracle::enumerate_discrete_mfg(spec, {});
  ASSERT_EQ(res.equilibria.size(), 1u);
  const auto& eq = res.equilibria[0];
  const PathEnsemble e = enumerate_binomial_ensemble(spec, 2, 1.0);
  ControlField c = ControlField::constant(e.paths, 2, 0);
  for (std::size_t i = 0; i < e.paths; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double x = e.state(i, k)[0];
      std::size_t node = 0;
      for (std::size_t n = 0; n < res.nodes[k].size(); ++n)
        if (std::abs(res.nodes[k][n] - x) < std::abs(res.nodes[k][node] - x)) node = n;
      c.index[i * 2 + k] = static_cast<std::uint32_t>(eq.policy[k][node]);
    }
  }
  InteractionFlow flow;
  flow.laws = eq.laws;
  flow.action_laws = eq.action_laws;
  const RewardEstimate r = evaluate_reward(spec, flow, c, e, 2);
  EXPECT_NEAR(r.value, eq.value, 1e-9);
}

TEST(Value, ConstantRewardLimit) {
  const GameSpec spec = test::constant_reward_game(1.0);
  const PathEnsemble e = simulate_ensemble(spec, 1000, 340, 17.0, 4);
  const ValueEstimate v = value(spec, driftless_flow(spec, e, 340), e, 1e-3);
  EXPECT_NEAR(v.value, 2.0, 1e-3);
}

TEST(Value, IdlingIsOptimalUnderPureCost) {
  const GameSpec spec = test::quadratic_cost_game();
  const PathEnsemble e = simulate_ensemble(spec, 2000, 340, 17.0, 5);
  const InteractionFlow flow = driftless_flow(spec, e, 340);
  const ValueEstimate v = value(spec, flow, e, 1e-3);
  EXPECT_NEAR(v.value, 0.0, 1e-3);
  const int k = v.solution.horizon;
  for (std::size_t j = 0; j < spec.actions.size(); ++j) {
    const RewardEstimate r = evaluate_reward(spec, flow.truncated(k), ControlField::constant(e.paths, k, j), e, k);
    EXPECT_LE(r.value, 3 * r.band + 1e-15) << j;
  }
}

TEST(Value, DominatesRandomControls) {
  const GameSpec spec = make_game("gaussian-repulsion");
  const PathEnsemble e = simulate_ensemble(spec, 4000, 340, 17.0, 6);
  const InteractionFlow flow = driftless_flow(spec, e, 340);
  const ValueEstimate v = value(spec, flow, e, 1e-3);
  const int k = v.solution.horizon;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RewardEstimate r = evaluate_reward(spec, flow.truncated(k), random_control(spec, e.paths, k, s), e, k);
    EXPECT_LE(r.value, v.value + 1e-3 + 3 * std::hypot(r.band, v.band)) << s;
  }
}

TEST(Value, OptimalityGapWithinTolerance) {
  for (const auto& name : {"gaussian-repulsion", "clipped-ou-invariant", "constant-reward"}) {
    const GameSpec spec = make_game(name);
    const PathEnsemble e = simulate_ensemble(spec, 4000, 360, 18.0, 7);
    const InteractionFlow flow = driftless_flow(spec, e, 360);
    const ValueEstimate v = value(spec, flow, e, 1e-3);
    const int k = v.solution.horizon;
    const ControlField c = extract_optimal_control(spec, flow.truncated(k), v.solution, e);
    const RewardEstimate r = evaluate_reward(spec, flow.truncated(k), c, e, k);
    EXPECT_LE(v.value - r.value, 1e-3 + 3 * std::hypot(r.band, v.band)) << name;
  }
}

TEST(Feedback, ConstantControl) {
  const GameSpec spec = make_game("clipped-ou-invariant");
  const PathEnsemble e = simulate_ensemble(spec, 2000, 40, 2.0, 8);
  const FeedbackPolicy p = fit_feedback(spec, ControlField::constant(e.paths, 40, 30), e);
  for (double a : p.actions) EXPECT_DOUBLE_EQ(a, spec.actions.point(30)[0]);
  EXPECT_EQ(p.disagreement, 0.0);
  EXPECT_EQ(p.total_variation(), 0.0);
}

TEST(Feedback, SignControlOnFineBins) {
  const GameSpec spec = make_game("clipped-ou-invariant", {{"initial", {{"normal", {{"mean", 0.0}, {"sd", 1.0}}}}}});
  const PathEnsemble e = simulate_ensemble(spec, 5000, 40, 2.0, 9);
  ControlField c = ControlField::constant(e.paths, 40, 0);
  for (std::size_t i = 0; i < e.paths; ++i)
    for (int k = 0; k < 40; ++k) c.index[i * 40 + k] = e.state(i, k)[0] >= 0 ? 40 : 0;
  FeedbackConfig fc;
  fc.bins = 128;
  const FeedbackPolicy p = fit_feedback(spec, c, e, nullptr, fc);
  EXPECT_LT(p.disagreement, 0.02);
  EXPECT_DOUBLE_EQ(p.action_at(-1.0), -1.0);
  EXPECT_DOUBLE_EQ(p.action_at(1.0), 1.0);
}

TEST(Feedback, ClippedOuOptimalControlIsNearlyMarkov) {
  const GameSpec spec = make_game("clipped-ou-invariant");
  const double dt = 0.05;
  const int k = 360;
  const PathEnsemble e = simulate_ensemble(spec, 4000, k, k * dt, 10);
  const LawSummary law = spec.model->summarize(0.0, test::atoms({0.0}));
  const InteractionFlow flow = InteractionFlow::constant(law, spec.actions.uniform_law(), k);
  const BsdeSolution s = solve_infinite_horizon(spec, flow, e, 1e-3);
  const ControlField c = extract_optimal_control(spec, flow.truncated(s.horizon), s, e);
  FeedbackConfig fc;
  fc.bins = 64;
  fc.max_step = s.horizon / 2;
  const FeedbackPolicy p = fit_feedback(spec, c, e, nullptr, fc);
  EXPECT_LT(p.disagreement, 0.05);
}
