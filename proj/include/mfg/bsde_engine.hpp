#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfg/game_model.hpp"
#include "mfg/path_engine.hpp"

namespace mfg {

/// The interaction inputs (mu_t, q_t) on the time grid.
struct InteractionFlow {
  std::vector<LawSummary> laws;        // steps 0..K
  std::vector<ActionLaw> action_laws;  // steps 0..K-1

  int steps() const { return static_cast<int>(action_laws.size()); }
  /// The same law and action law at every one of `steps` steps.
  static InteractionFlow constant(const LawSummary& law, const ActionLaw& q, int steps);
  /// Restriction to the first k steps.
  InteractionFlow truncated(int k) const;
};

enum class RegressionMode { polynomial, binned, exact };

struct RegressionConfig {
  RegressionMode mode = RegressionMode::polynomial;
  int degree = 3;
  int bins = 32;
};

std::string to_string(RegressionMode mode);
RegressionMode regression_mode_from_string(const std::string& s);

struct TruncationCertificate {
  double tol = 0.0;
  double t_required = 0.0;  // on the grid
  double reward_bound = 0.0;
  double discount = 0.0;
  double y_bound = 0.0;       // (M / lambda) e^{-lambda T}
  double z_bound_shape = 0.0; // (1 + T) e^{-2 lambda T}, constant fitted separately
};

/// Grid horizon (1/lambda) ln(M / (lambda tol / 2)) rounded up to the grid.
TruncationCertificate truncation_certificate(const GameSpec& spec, double tol, const TimeGrid& grid);

struct BsdeSolution {
  std::size_t paths = 0;
  int dim = 1;
  int horizon = 0;  // k_T
  double dt = 0.0;
  std::vector<double> y;                 // i * (horizon + 1) + k
  std::vector<double> z;                 // (i * horizon + k) * dim
  std::vector<std::uint32_t> maximizer;  // i * horizon + k, action grid index
  std::vector<double> hamiltonian;       // i * horizon + k, H~ without f2
  double value = 0.0;                    // mean of Y~_0
  double value_band = 0.0;               // standard error
  double max_abs_y_unclamped = 0.0;
  std::optional<TruncationCertificate> certificate;
  RegressionConfig regression;
  std::vector<std::string> warnings;

  double y_at(std::size_t i, int k) const { return y[i * (horizon + 1) + k]; }
  std::span<const double> z_at(std::size_t i, int k) const {
    return {z.data() + (i * horizon + k) * dim, static_cast<std::size_t>(dim)};
  }
  /// (1/N) sum_i sum_k e^{-2 lambda t_k} |Z~|^2 dt.
  double z_energy(double discount) const;
};

/// Backward regression solve of the transformed BSDE on [0, t_{k_T}] with
/// zero terminal value, using the exponential integrator
///   Y~_k = e^{-lambda dt} E[Y~_{k+1} | X_k] + (1 - e^{-lambda dt}) / lambda (H~ + f2),
///   Z~_k = kappa E[Y~_{k+1} dW_k | X_k] / dt,  kappa = lambda dt / (e^{lambda dt} - 1),
/// clamped to |Y~| <= M / lambda.
BsdeSolution solve_finite_horizon(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble,
                                  int horizon, const RegressionConfig& regression = {});

/// Finite-horizon solve at the certified truncation horizon for `tol`.
BsdeSolution solve_infinite_horizon(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble,
                                    double tol, const RegressionConfig& regression = {});

struct StabilityReport {
  std::vector<double> y_gaps;       // |Y~_0^(n) - Y~_0|
  std::vector<double> energy_gaps;  // discounted Z energy of Z^(n) - Z
};

/// Re-solves along a sequence of flows and reports gaps to the limit flow.
StabilityReport stability_probe(const GameSpec& spec, const std::vector<InteractionFlow>& sequence,
                                const InteractionFlow& limit, const PathEnsemble& ensemble, int horizon,
                                const RegressionConfig& regression = {});

/// CSV rows: t, mean Y~, mean |Z~|^2.
void write_bsde_profile_csv(const BsdeSolution& solution, std::ostream& out);

}  // namespace mfg
