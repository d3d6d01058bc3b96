#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "mfg/bsde_engine.hpp"
#include "mfg/control_solver.hpp"
#include "mfg/measure_metrics.hpp"
#include "mfg/path_engine.hpp"

namespace mfg {

/// (mu, q): the state law as weights over the shared ensemble, its summaries,
/// and the action-law flow.
struct MeanFieldState {
  MeasureWeights weights;
  InteractionFlow flow;
  std::optional<ControlField> control;  // the control that generated `weights`, when known
  int iteration = 0;

  int horizon() const { return weights.horizon; }
};

/// Driftless law with uniform action laws on [0, t_horizon].
MeanFieldState initial_state(const GameSpec& spec, const PathEnsemble& ensemble, int horizon);

/// State from weights and action laws; the law summaries are recomputed.
MeanFieldState make_state(const GameSpec& spec, MeasureWeights weights, std::vector<ActionLaw> action_laws,
                          std::optional<ControlField> control = std::nullopt);

/// (1 - theta) a + theta b for weights and action laws.
MeanFieldState mix_states(const GameSpec& spec, const MeanFieldState& a, const MeanFieldState& b, double theta);

/// Per-step equal-count bins of the ensemble atoms, built once per ensemble.
struct ResidualBinning {
  std::vector<Binning> steps;
  static ResidualBinning build(const PathEnsemble& ensemble, int horizon, std::size_t bins = 64);
};

struct Residual {
  double tv = 0.0;  // max over steps of binned TV between marginals
  double w1 = 0.0;  // max over steps of W1 between action laws
  double total() const { return tv + w1; }
};

Residual state_residual(const ResidualBinning& binning, const MeanFieldState& a, const MeanFieldState& b);

struct FixedPointResult {
  MeanFieldState state;
  BsdeSolution solution;
  ControlField control;
};

/// Best response to the state's flow and the law it induces.
FixedPointResult fixed_point_map(const GameSpec& spec, const MeanFieldState& state, const PathEnsemble& ensemble,
                                 const RegressionConfig& regression = {});

struct EquilibriumConfig {
  double theta = 0.5;
  int max_iter = 50;
  double tol_fp = 5e-3;
  bool adaptive = true;  // halve theta whenever the residual grows
  std::size_t bins = 64;
  RegressionConfig regression;
};

struct IterationRecord {
  int iteration = 0;
  double tv = 0.0;
  double w1 = 0.0;
  double value = 0.0;
  double theta = 0.0;
};

struct EquilibriumReport {
  MeanFieldState state;  // last image Phi(s)
  BsdeSolution solution;  // control problem solved against the last s
  ControlField control;
  InteractionFlow input_flow;  // flow of the last iterate s, against which `control` is optimal
  std::vector<IterationRecord> history;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double best_residual = 0.0;
  double value = 0.0;
  double value_band = 0.0;
  std::optional<TruncationCertificate> certificate;
};

/// Damped Picard iteration s <- (1 - theta) s + theta Phi(s) on [0, t_horizon].
EquilibriumReport solve_equilibrium(const GameSpec& spec, const PathEnsemble& ensemble, int horizon,
                                    const EquilibriumConfig& config = {}, const MeanFieldState* start = nullptr);

/// Same at the certified truncation horizon of `tol`.
EquilibriumReport solve_infinite_equilibrium(const GameSpec& spec, const PathEnsemble& ensemble, double tol,
                                             const EquilibriumConfig& config = {},
                                             const MeanFieldState* start = nullptr);

struct GapReport {
  Residual residual;
  double value = 0.0;
  double value_band = 0.0;
  double reward = 0.0;
  double reward_band = 0.0;
  double gap = 0.0;  // V - J(alpha)
  double gap_band = 0.0;
};

/// Fixed-point residual and optimality gap of a state carrying its control.
GapReport equilibrium_gap(const GameSpec& spec, const MeanFieldState& state, const PathEnsemble& ensemble,
                          const RegressionConfig& regression = {}, std::size_t bins = 64);

/// CSV rows: iter, tv_residual, w1_residual, V.
void write_residuals_csv(const EquilibriumReport& report, std::ostream& out);

/// CSV rows: t, mean_x, mean_action, mean_y.
void write_equilibrium_csv(const GameSpec& spec, const EquilibriumReport& report, std::ostream& out);

}  // namespace mfg
