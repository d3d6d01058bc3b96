#pragma once

#include <span>
#include <string>
#include <vector>

#include "mfg/common.hpp"
#include "mfg/path_engine.hpp"

namespace mfg {

/// Two estimators of H(A | B) = E_A[log dA/dB] between path laws.
struct EntropyEstimate {
  double girsanov = 0.0;  // 1/2 E_A sum |beta_A - beta_B|^2 dt
  double girsanov_band = 0.0;
  double direct = 0.0;    // E_A[l_A - l_B]
  double direct_band = 0.0;
};

/// Both weight sets must live on the same ensemble. k < 0 means the common
/// horizon, which must then be equal for A and B.
EntropyEstimate relative_entropy_paths(const MeasureWeights& a, const MeasureWeights& b, int k = -1);

/// sum a log(a / b) for normalized mass vectors; +inf if a is not dominated by b.
double relative_entropy_discrete(std::span<const double> a, std::span<const double> b);

/// 1/2 sum |a - b| after normalizing both.
double tv_masses(std::span<const double> a, std::span<const double> b);

/// 1-D binning. Bin j covers (edges[j-1], edges[j]]; the end bins are unbounded.
struct Binning {
  std::vector<double> edges;  // interior edges, ascending

  std::size_t bins() const { return edges.size() + 1; }
  std::size_t bin_of(double x) const;
  /// Equal-mass edges of a sample (unweighted quantiles).
  static Binning equal_mass(std::span<const double> sample, std::size_t bins);
  /// Equal-width bins on [lo, hi] plus the two unbounded tail bins.
  static Binning uniform(double lo, double hi, std::size_t inner_bins);
  std::vector<double> masses(const WeightedAtoms& law) const;
};

/// TV between two 1-D weighted laws on `bins` equal-mass bins of the pooled atoms.
double tv_binned(const WeightedAtoms& a, const WeightedAtoms& b, std::size_t bins = 64);
double tv_binned(const WeightedAtoms& a, const WeightedAtoms& b, const Binning& binning);

/// TV between path laws on [0, t_k]: 1/2 E_P |w_A - w_B|, with a standard error.
struct TvEstimate {
  double value = 0.0;
  double band = 0.0;
};
TvEstimate tv_paths(const MeasureWeights& a, const MeasureWeights& b, int k);

/// sqrt(H / 2). Negative H is clamped to zero with a warning.
double pinsker(double h, std::vector<std::string>* warnings = nullptr);

/// Exact W1 between action laws: quantile coupling in 1-D, min-cost flow otherwise.
double w1_actions(const ActionLaw& a, const ActionLaw& b);

/// W1 through min-cost flow on the atoms (any dimension).
double w1_transport(const ActionLaw& a, const ActionLaw& b);

}  // namespace mfg
