#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mfg/equilibrium.hpp"

namespace mfg {

/// Equilibrium of the game on [0, T] with zero terminal reward; T must lie on the grid.
EquilibriumReport solve_finite_mfg(const GameSpec& spec, const PathEnsemble& ensemble, double horizon_time,
                                   const EquilibriumConfig& config = {}, const MeanFieldState* start = nullptr);

/// 2 M / lambda e^{-lambda T}.
double epsilon_bound(double reward_bound, double discount, double horizon_time);

struct EpsilonGapReport {
  double horizon = 0.0;
  double gap = 0.0;       // E^alpha[sum_k omega_k (H~_k - h~(alpha_k))], equal to V - J
  double gap_band = 0.0;
  double value = 0.0;     // V on [0, T] against the restricted flow
  double reward = 0.0;    // J of the restricted control
  double raw_gap = 0.0;   // value - reward
  double raw_band = 0.0;
  double bound = 0.0;
  bool within_bound = false;  // gap <= bound + 3 gap_band
};

/// Optimality gap on [0, T] of the infinite-horizon equilibrium restricted to [0, T].
EpsilonGapReport epsilon_gap(const GameSpec& spec, const EquilibriumReport& infinite, double horizon_time,
                             const PathEnsemble& ensemble, const RegressionConfig& regression = {});

/// Constants entering the convergence-rate bounds.
struct RateConstants {
  double reward_bound = 0.0;  // M
  double concavity = 0.0;     // m
  double discount = 0.0;      // lambda
  double lipschitz = 0.0;     // L
  double slack = 0.0;         // delta
  double action_bound = 0.0;  // C_A

  static RateConstants from(const GameSpec& spec);
  /// m lambda / (2 L^2) - delta; the bounds need it positive.
  double denominator() const;
  double entropy(double horizon_time, double t) const;
  double tv(double horizon_time, double t) const;
  double control(double horizon_time) const;
  double w1(double horizon_time) const;
};

struct ConcavityCheck {
  CheckStatus status = CheckStatus::skipped;
  double worst = 0.0;  // max of |a - a*|^2 - (4/m)(h(a*) - h(a)) - slack
  std::size_t violations = 0;
  std::size_t samples = 0;
};

/// Checks |a - a*|^2 <= (4/m)(h(a*) - h(a)) + slack over the action grid.
/// Skipped when m <= 0.
ConcavityCheck strong_concavity_gap_check(std::span<const double> h, const ActionSet& actions, double m,
                                          std::size_t maximizer, double slack = 0.0);

/// The same check on h~ at random (t, x, z), with slack equal to the squared grid spacing.
ConcavityCheck concavity_scan(const GameSpec& spec, std::size_t samples, std::uint64_t seed);

struct RateAssumptions {
  bool drift_law_free = false;
  ConcavityCheck concavity;
  MonotonicityReport monotonicity;
  bool slack_below_threshold = false;
  bool applicable() const;
};

RateAssumptions check_rate_assumptions(const GameSpec& spec, std::uint64_t seed = 7);

struct SweepRow {
  double horizon = 0.0;
  double t = 0.0;
  double entropy = 0.0;  // Girsanov form, symmetrized
  double entropy_band = 0.0;
  double entropy_direct = 0.0;
  double entropy_direct_band = 0.0;
  double entropy_bound = 0.0;
  double tv = 0.0;
  double tv_band = 0.0;
  double tv_bound = 0.0;
  double control = 0.0;
  double control_band = 0.0;
  double control_bound = 0.0;
  double w1q = 0.0;
  double w1q_bound = 0.0;
  bool converged = false;
  bool within = false;  // every measured value <= bound + 3 bands
};

struct SlopeFit {
  double t = 0.0;
  double tv_slope = 0.0;
  double entropy_slope = 0.0;
  std::size_t points = 0;
};

struct SweepConfig {
  std::vector<double> horizons{4.0, 6.0, 8.0, 10.0};
  std::vector<double> t_slices{1.0, 2.0};
  double tol = 1e-3;  // truncation tolerance of the infinite-horizon reference
  EquilibriumConfig equilibrium;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SlopeFit> slopes;
  RateAssumptions assumptions;
  bool applicable = false;
  bool reference_converged = false;
  double reference_horizon = 0.0;
  std::vector<double> finite_residuals;
  std::vector<std::string> warnings;
  bool all_within() const;
};

/// Least-squares slope of log(y) against x; non-positive y are skipped.
double fit_log_slope(std::span<const double> x, std::span<const double> y);

/// Distances between finite-horizon equilibria and the infinite-horizon one.
/// `reference` is solved at the truncation horizon when not given.
SweepReport rate_sweep(const GameSpec& spec, const PathEnsemble& ensemble, const SweepConfig& config,
                       const EquilibriumReport* reference = nullptr);

/// CSV rows: T, t, entropy_sym, entropy_bound, tv, tv_bound, ctrl_dist, ctrl_bound, w1q, w1q_bound,
/// followed by band and convergence columns.
void write_sweep_csv(const SweepReport& report, std::ostream& out);

}  // namespace mfg
