#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mfg/common.hpp"
#include "mfg/game_model.hpp"

namespace mfg {

enum class NoiseKind { gaussian, binomial };

/// N driftless Euler paths with their increments. Storage is path-major so
/// that the prefix of path i up to step k is one contiguous block.
struct PathEnsemble {
  int dim = 1;
  std::size_t paths = 0;
  TimeGrid grid;
  NoiseKind noise = NoiseKind::gaussian;
  bool enumerated = false;  // every binomial scenario present exactly once
  std::uint64_t seed = 0;
  std::vector<double> states;      // ((i * (steps + 1)) + k) * dim
  std::vector<double> increments;  // ((i * steps) + k) * dim

  int steps() const { return grid.steps; }
  std::span<const double> state(std::size_t i, int k) const {
    return {states.data() + (i * (grid.steps + 1) + k) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<const double> increment(std::size_t i, int k) const {
    return {increments.data() + (i * grid.steps + k) * dim, static_cast<std::size_t>(dim)};
  }
  PathView view(std::size_t i, int k) const {
    return PathView{{states.data() + i * (grid.steps + 1) * dim, static_cast<std::size_t>(k + 1) * dim}, dim, k};
  }
};

/// Driftless Euler ensemble on [0, t_max] with k steps. Path i draws from its
/// own generator seeded by (seed, i), so results do not depend on threading.
PathEnsemble simulate_ensemble(const GameSpec& spec, std::size_t n, int k, double t_max, std::uint64_t seed,
                               NoiseKind noise = NoiseKind::gaussian);

/// All 2^k paths of the binomial walk with increments +-sqrt(dt); the initial
/// law must be a Dirac mass.
PathEnsemble enumerate_binomial_ensemble(const GameSpec& spec, int k, double t_max);

/// Density of a controlled law on [0, t_horizon] relative to the ensemble law.
struct MeasureWeights {
  const PathEnsemble* ensemble = nullptr;
  int horizon = 0;               // k_T
  std::vector<double> log_w;     // i * (horizon + 1) + k, cumulative
  std::vector<double> beta;      // (i * horizon + k) * dim, empty for mixtures

  std::size_t paths() const { return ensemble ? ensemble->paths : 0; }
  double log_weight(std::size_t i, int k) const { return log_w[i * (horizon + 1) + k]; }
  double weight(std::size_t i, int k) const;
  bool has_drift() const { return !beta.empty(); }
  std::span<const double> drift(std::size_t i, int k) const {
    const int d = ensemble->dim;
    return {beta.data() + (i * horizon + k) * d, static_cast<std::size_t>(d)};
  }
  /// (1/N) sum_i w_i at step k, and the second moment.
  double mean_weight(int k) const;
  double second_moment(int k) const;
};

/// Weights equal to one on [0, t_{k_T}].
MeasureWeights identity_weights(const PathEnsemble& ensemble, int horizon);

/// Doleans-Dade weights of the drift field beta (layout as MeasureWeights::beta).
/// Throws when some |beta| exceeds drift_bound.
MeasureWeights girsanov_weights(const PathEnsemble& ensemble, std::vector<double> beta, int horizon,
                                double drift_bound);

/// Density of (1 - theta) A + theta B, step by step.
MeasureWeights mixture_weights(const MeasureWeights& a, const MeasureWeights& b, double theta);

/// Marginal at step k: atoms X[i][k] with normalized masses w_i.
WeightedAtoms reweighted_marginal(const MeasureWeights& weights, int k);

/// Restriction to [0, t_k]; bit-identical to building on [0, t_k] directly.
MeasureWeights project_horizon(const MeasureWeights& weights, int k);

/// CSV columns: path, step, x_0..x_{d-1}, dw_0..dw_{d-1} (empty increments on the last step).
void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& out);
PathEnsemble read_ensemble_csv(std::istream& in, double dt, NoiseKind noise = NoiseKind::gaussian);

}  // namespace mfg
