#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "mfg/game_model.hpp"

namespace mfg::oracle {

/// How the running reward of step k is weighted.
///   exact_discount: e^{-lambda t_k} (1 - e^{-lambda dt}) / lambda
///   left_rectangle: e^{-lambda t_k} dt
enum class RewardQuadrature { exact_discount, left_rectangle };

struct DiscreteConfig {
  int steps = 2;
  double dt = 0.5;
  RewardQuadrature quadrature = RewardQuadrature::exact_discount;
  std::size_t budget = 1000000;  // policy-scenario pairs
};

/// Per-step node states of the recombining +-sqrt(dt) lattice.
using NodeTable = std::vector<std::vector<double>>;

struct DiscreteEquilibrium {
  std::size_t policy_index = 0;
  std::vector<std::vector<std::size_t>> policy;  // [k][node] action index, k < K
  std::vector<std::vector<double>> marginals;    // [k][node] probabilities, k <= K
  std::vector<std::vector<double>> values;       // [k][node] value to go at t_k, k <= K
  std::vector<LawSummary> laws;                  // k <= K
  std::vector<ActionLaw> action_laws;            // k < K, masses on the action grid
  double value = 0.0;
};

struct DiscreteResult {
  NodeTable nodes;
  std::size_t policy_count = 0;
  std::size_t evaluations = 0;  // policy-scenario pairs evaluated
  std::vector<DiscreteEquilibrium> equilibria;  // ascending policy index
};

/// Exhaustive search over feedback policies (maps (k, node) -> action) of a
/// one-dimensional Markov game driven by a +-sqrt(dt) walk started from a
/// Dirac mass. A policy is an equilibrium when no policy does better against
/// the flow it induces. Throws when the budget would be exceeded.
DiscreteResult enumerate_discrete_mfg(const GameSpec& spec, const DiscreteConfig& config);

struct BestResponse {
  std::size_t policy_index = 0;
  std::vector<std::vector<std::size_t>> policy;
  double value = 0.0;
};

/// Best policy against a given flow (laws for k <= K, action laws for k < K),
/// by enumeration; ties go to the smallest policy index.
BestResponse best_response(const GameSpec& spec, const DiscreteConfig& config, const std::vector<LawSummary>& laws,
                           const std::vector<ActionLaw>& action_laws);

/// Lattice nodes for the configuration.
NodeTable lattice_nodes(const GameSpec& spec, const DiscreteConfig& config);

/// CSV rows: equilibrium, k, node, x, probability, action, value.
void write_discrete_csv(const DiscreteResult& result, const GameSpec& spec, std::ostream& out);

/// Density proportional to exp(2 int_0^x b) on [lo, hi] (sigma = 1).
struct StationaryDensity {
  std::vector<double> x;
  std::vector<double> density;
  std::vector<double> cdf;
  double mean = 0.0;
  double second_moment = 0.0;

  /// Masses of the bins (edges[j-1], edges[j]] with unbounded end bins.
  std::vector<double> bin_masses(const std::vector<double>& edges) const;
};

/// Trapezoid quadrature on `points` nodes. Throws when the density does not
/// decay at the ends of the domain.
StationaryDensity stationary_density_quadrature(const std::function<double(double)>& drift, double lo, double hi,
                                                std::size_t points = 20001);

}  // namespace mfg::oracle
