#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfg/control_solver.hpp"
#include "mfg/equilibrium.hpp"
#include "mfg/measure_metrics.hpp"

namespace mfg {

struct DriftCheckConfig {
  double probe_factor = 2.0;  // probe radii up to probe_factor * R
  std::size_t radii = 64;
  std::size_t directions = 16;  // random unit directions when d > 1
  std::size_t laws = 6;
  std::uint64_t seed = 3;
};

struct DriftConditionReport {
  CheckStatus status = CheckStatus::skipped;
  double margin = 0.0;    // min of -(x.b + tr(Sigma)/2) over |x| in [R', probe_factor R]
  double required = 0.0;  // k
  std::optional<Witness> witness;
  double local_sup = 0.0;  // largest |b|, |sigma|, |sigma^{-1}| seen on B_0(R)
  CheckStatus local_status = CheckStatus::skipped;
  std::size_t samples = 0;
};

/// Samples the drift condition on the shell outside R' over grid actions and
/// a few state laws. Passes iff the smallest margin is at least k.
DriftConditionReport check_drift_condition(const GameSpec& spec, const DriftCheckConfig& config = {});

/// Time average (1/T) int_0^T mu_t dt of a marginal flow on a grid, by the trapezoid rule,
/// as pooled atoms.
WeightedAtoms cesaro_average(std::span<const WeightedAtoms> flow, double dt, double horizon_time);
/// Same, binned.
std::vector<double> cesaro_operator(std::span<const WeightedAtoms> flow, double dt, double horizon_time,
                                    const Binning& binning);

struct StationaryConfig {
  double horizon = 64.0;             // averaging horizon T
  std::vector<double> checkpoints;   // extra averaging horizons <= T reported alongside
  std::size_t paths = 20000;
  double dt = 0.005;
  std::uint64_t seed = 1;
  Binning binning = Binning::uniform(-4.0, 4.0, 32);
  std::optional<WeightedAtoms> initial;  // spec.initial when empty
};

struct CesaroCheckpoint {
  double horizon = 0.0;
  std::vector<double> masses;
  double mean = 0.0;
  double second_moment = 0.0;
};

struct StationaryEstimate {
  Binning binning;
  std::vector<double> masses;  // D^T on the bins
  double horizon = 0.0;
  double mean = 0.0;
  double mean_band = 0.0;
  double second_moment = 0.0;
  double second_moment_band = 0.0;
  std::vector<CesaroCheckpoint> checkpoints;  // ascending, the last one is T
  double gamma_hat = 0.0;         // fitted from 2 T d_TV(D^T, D^{2T}) over checkpoint doublings
  double certificate = 0.0;       // gamma_hat / T, heuristic
  double cesaro_residual = 0.0;   // d_TV(D^{T/2}, D^T) when T/2 is a checkpoint
  double noise_band = 0.0;        // typical binned TV between two independent estimates
  WeightedAtoms sample;           // one draw of X at a uniform time in [0, T] per path
};

/// Long-run average of the marginals of dX = b(X, mu, pi(X)) dt + sigma(X) dW, simulated by
/// Euler steps. Throws when the drift condition fails.
StationaryEstimate estimate_stationary(const GameSpec& spec, const LawSummary& law, const FeedbackPolicy& policy,
                                       const StationaryConfig& config);

struct StationaryMfgConfig {
  StationaryConfig stationary;
  std::size_t control_paths = 4000;  // ensemble for the control problem
  double control_dt = 0.05;
  double value_tol = 1e-3;
  RegressionConfig regression;
  FeedbackConfig feedback;
  double tol = 0.03;  // outer stopping threshold on binned TV
  int max_outer = 8;
};

struct OuterIteration {
  int iteration = 0;
  double tv = 0.0;
  double mean = 0.0;
  double value = 0.0;
  double policy_disagreement = 0.0;
};

struct StationaryMfgReport {
  StationaryEstimate estimate;  // the law mu
  FeedbackPolicy policy;
  LawSummary law;
  std::vector<OuterIteration> history;
  bool converged = false;
  double residual = 0.0;
  double value = 0.0;
  TruncationCertificate certificate;
  std::vector<std::string> warnings;
};

/// Outer iteration mu <- D^T under the optimal feedback policy for the constant law mu.
StationaryMfgReport solve_stationary_mfg(const GameSpec& spec, const StationaryMfgConfig& config,
                                         const WeightedAtoms* start = nullptr);

struct InvarianceTracePoint {
  double t = 0.0;
  double tv = 0.0;
};

struct InvariantMfgReport {
  StationaryMfgReport stationary;
  std::vector<InvarianceTracePoint> trace;
  double max_tv = 0.0;
  double band = 0.0;
  double mirror_tv = 0.0;  // d_TV(mu, mu(-.)) on a symmetric binning
  bool invariant = false;  // max_tv < tol + band
};

struct InvarianceConfig {
  double check_horizon = 16.0;
  double trace_every = 0.25;
  double tol = 0.05;
};

/// Marginal trace of the dynamics started from `initial` under `policy` and the constant `law`.
std::vector<InvarianceTracePoint> invariance_trace(const GameSpec& spec, const LawSummary& law,
                                                   const FeedbackPolicy& policy, const WeightedAtoms& initial,
                                                   const std::vector<double>& reference, const Binning& binning,
                                                   const StationaryConfig& sim, const InvarianceConfig& config);

/// Solves the stationary game, then re-simulates from its law and checks invariance.
InvariantMfgReport solve_invariant_mfg(const GameSpec& spec, const StationaryMfgConfig& config,
                                       const InvarianceConfig& invariance = {});

/// Expected binned TV between two independent samples of sizes n1 and n2 from `masses`.
double tv_noise_band(std::span<const double> masses, double n1, double n2);

/// TV between masses on a binning symmetric around zero and their mirror image.
double mirror_tv(const Binning& binning, std::span<const double> masses);

struct DoeblinConfig {
  std::size_t cycles = 1000;
  double dt = 0.005;
  double max_time = 1e5;  // simulated time budget per start point
  std::uint64_t seed = 5;
  std::size_t exit_bins = 2;  // histogram bins on the outer sphere (2 means the two points when d = 1)
};

struct DoeblinReport {
  double xi = 0.0;  // (R^2 - R'^2) / (2 R Lambda + d Lambda^2)
  double mean_cycle = 0.0;
  double cycle_band = 0.0;
  std::size_t completed = 0;
  double theta = 0.0;  // min over start pairs of exit-histogram overlap
  std::vector<std::vector<double>> exit_histograms;  // one per start point
  bool lower_bound_holds = false;
  bool flagged = false;
  std::string note;
};

double doeblin_xi(double outer, double inner, double local_bound, int dim);

/// Sphere-to-sphere hitting chain of the controlled dynamics (one-dimensional).
DoeblinReport doeblin_chain_diagnostic(const GameSpec& spec, const LawSummary& law, const FeedbackPolicy& policy,
                                       const DoeblinConfig& config = {});

/// CSV rows: bin_center, mass.
void write_stationary_csv(const StationaryEstimate& estimate, std::ostream& out);
/// CSV rows: t, tv_to_mu.
void write_invariance_csv(const std::vector<InvarianceTracePoint>& trace, std::ostream& out);

}  // namespace mfg
