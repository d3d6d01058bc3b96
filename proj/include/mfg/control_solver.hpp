#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "mfg/bsde_engine.hpp"
#include "mfg/game_model.hpp"
#include "mfg/path_engine.hpp"

namespace mfg {

/// Per-path, per-step action grid indices.
struct ControlField {
  std::size_t paths = 0;
  int horizon = 0;
  std::vector<std::uint32_t> index;  // i * horizon + k

  std::uint32_t at(std::size_t i, int k) const { return index[i * horizon + k]; }
  ControlField truncated(int k) const;
  /// Every path and step playing the same grid action.
  static ControlField constant(std::size_t paths, int horizon, std::uint32_t action);
};

/// Pointwise maximizers of the Hamiltonian at the solution's Z~.
ControlField extract_optimal_control(const GameSpec& spec, const InteractionFlow& flow, const BsdeSolution& solution,
                                     const PathEnsemble& ensemble);

/// Drift field sigma^{-1} b of a control, in the layout of MeasureWeights::beta.
std::vector<double> control_drift(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                                  const PathEnsemble& ensemble);

/// Controlled law of a control on [0, t_horizon].
MeasureWeights control_weights(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const PathEnsemble& ensemble);

/// Law of the action at each step under the given weights, as masses on the action grid.
std::vector<ActionLaw> action_flow(const GameSpec& spec, const ControlField& control, const MeasureWeights& weights);

/// Reward-quadrature weight of step k: e^{-lambda t_k} (1 - e^{-lambda dt}) / lambda.
double reward_weight(double discount, double dt, int k);

struct RewardEstimate {
  double value = 0.0;
  double band = 0.0;  // standard error
};

/// J = E^{mu, alpha}[sum_k omega_k f(t_k, X, mu_k, q_k, alpha_k)] on [0, t_horizon].
RewardEstimate evaluate_reward(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const PathEnsemble& ensemble, int horizon);
/// Same, with precomputed weights of the control.
RewardEstimate evaluate_reward(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const MeasureWeights& weights);

struct ValueEstimate {
  double value = 0.0;
  double band = 0.0;
  TruncationCertificate certificate;
  BsdeSolution solution;
};

/// V = mean over the ensemble of Y~_0 at the certified horizon.
ValueEstimate value(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble, double tol,
                    const RegressionConfig& regression = {});

/// State-binned feedback control for one-dimensional time-homogeneous games.
struct FeedbackPolicy {
  std::vector<double> edges;    // interior bin edges
  std::vector<double> actions;  // one action per bin
  double disagreement = 0.0;    // weighted fraction of (i, k) where alpha differs from the policy
  int fitted_iteration = 0;

  double action_at(double x) const;
  /// sum over adjacent bins of |action difference|.
  double total_variation() const;
  /// Policy playing `a` everywhere.
  static FeedbackPolicy constant(double a);
};

struct FeedbackConfig {
  std::size_t bins = 64;
  int max_step = -1;  // use steps k < max_step (all when negative)
  double tolerance = -1.0;  // disagreement threshold; one grid step when negative
};

FeedbackPolicy fit_feedback(const GameSpec& spec, const ControlField& control, const PathEnsemble& ensemble,
                            const MeasureWeights* weights = nullptr, const FeedbackConfig& config = {});

/// CSV rows: bin_low, bin_high, action.
void write_policy_csv(const FeedbackPolicy& policy, std::ostream& out);

}  // namespace mfg
