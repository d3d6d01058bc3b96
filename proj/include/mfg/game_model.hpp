#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mfg/common.hpp"

namespace mfg {

/// Restriction of one state path to [0, t_step]; coefficients evaluated at
/// t_step only ever see this prefix.
struct PathView {
  std::span<const double> states;  // (step + 1) * dim values, oldest first
  int dim = 1;
  int step = 0;

  std::span<const double> at(int k) const {
    return states.subspan(static_cast<std::size_t>(k) * dim, dim);
  }
  std::span<const double> current() const { return at(step); }
};

/// Finite summary of a time marginal mu_t. The layout is owned by the game
/// model that produced it (see GameModel::summarize).
struct LawSummary {
  std::vector<double> values;
};

/// Law of the control at one time: weighted atoms in A.
using ActionLaw = WeightedAtoms;

/// Compact action set with a materialized search grid.
class ActionSet {
 public:
  /// Product of closed intervals, `points` grid points per coordinate.
  static ActionSet box(std::vector<std::pair<double, double>> bounds, int points);
  /// Explicit finite list of actions (flat, `dim` values per atom).
  static ActionSet finite(int dim, std::vector<double> atoms);

  int dim() const { return dim_; }
  std::size_t size() const { return grid_.size() / dim_; }
  std::span<const double> point(std::size_t j) const {
    return {grid_.data() + j * dim_, static_cast<std::size_t>(dim_)};
  }
  const std::vector<double>& grid() const { return grid_; }
  bool is_box() const { return !bounds_.empty(); }
  const std::vector<std::pair<double, double>>& bounds() const { return bounds_; }
  int points_per_axis() const { return points_; }

  bool contains(std::span<const double> a, double tol = 1e-12) const;
  /// Largest Euclidean norm over A.
  double norm_bound() const;
  /// Index of the grid point nearest to a.
  std::size_t nearest(std::span<const double> a) const;
  /// Uniform masses on the grid.
  ActionLaw uniform_law() const;

 private:
  int dim_ = 1;
  int points_ = 0;
  std::vector<std::pair<double, double>> bounds_;
  std::vector<double> grid_;
};

/// Bounds the user declares for a game; the checkers verify them by sampling.
struct DeclaredBounds {
  double drift = 1.0;          // C   : sup |sigma^{-1} b|
  double reward = 1.0;         // M   : sup |f|
  double lipschitz = 1.0;      // L   : Lipschitz constant of sigma^{-1} b in a
  double concavity = 0.0;      // m   : strong concavity modulus (0 = undeclared)
  double monotone_slack = 0.0; // delta
  double action_norm = 1.0;    // C_A : sup |a|
};

/// Radii and constants of the drift condition for time-homogeneous games.
struct ErgodicParams {
  double inner_radius = 2.0;  // R'
  double outer_radius = 3.0;  // R
  double drift_margin = 1.0;  // k
  double local_bound = 3.0;   // Lambda
};

/// Initial law of the state.
class InitialLaw {
 public:
  static InitialLaw dirac(std::vector<double> point);
  static InitialLaw normal(std::vector<double> mean, std::vector<double> stddev);
  static InitialLaw empirical(WeightedAtoms atoms);

  int dim() const { return dim_; }
  bool is_dirac() const { return kind_ == Kind::dirac; }
  std::span<const double> dirac_point() const { return first_; }
  void sample(std::mt19937_64& rng, std::span<double> out) const;
  std::string describe() const;

 private:
  enum class Kind { dirac, normal, empirical };
  Kind kind_ = Kind::dirac;
  int dim_ = 1;
  std::vector<double> first_;
  std::vector<double> second_;
  WeightedAtoms atoms_;
  std::vector<double> cdf_;
};

/// Coefficients of a game. Implementations must be non-anticipative: values at
/// step k may depend on the path only through PathView (its prefix).
class GameModel {
 public:
  virtual ~GameModel() = default;

  virtual int state_dim() const = 0;

  /// Summary of the time-t marginal that b and f read.
  virtual LawSummary summarize(double t, const WeightedAtoms& marginal) const;

  /// b(t, x, mu, a) into out (size state_dim()).
  virtual void drift(double t, const PathView& x, const LawSummary& mu,
                     std::span<const double> a, std::span<double> out) const = 0;
  /// sigma(t, x), row-major state_dim() x state_dim(). Default: identity.
  virtual void volatility(double t, const PathView& x, std::span<double> out) const;

  /// f1(t, x, mu).
  virtual double reward_state(double t, const PathView& x, const LawSummary& mu) const;
  /// f2(t, mu, q).
  virtual double reward_interaction(double t, const LawSummary& mu, const ActionLaw& q) const;
  /// f3(t, x, a).
  virtual double reward_action(double t, const PathView& x, std::span<const double> a) const;

  /// f3 and b at every grid action. Override when the per-action virtual
  /// calls dominate; the default loops over reward_action and drift.
  virtual void action_terms(double t, const PathView& x, const LawSummary& mu,
                            const ActionSet& actions, std::span<double> reward_out,
                            std::span<double> drift_out) const;

  virtual bool time_homogeneous() const { return false; }
  virtual bool drift_depends_on_law() const { return true; }
  /// False when neither b nor f1 nor f3 read the state law, so that the
  /// optimal control and the controlled law do not depend on (mu, q).
  virtual bool control_depends_on_law() const { return true; }
  /// True when the coefficients read the path only through its current state.
  virtual bool markovian() const { return false; }
};

struct GameSpec {
  std::string name;
  std::shared_ptr<const GameModel> model;
  double discount = 0.5;  // lambda
  ActionSet actions = ActionSet::box({{-1.0, 1.0}}, 41);
  InitialLaw initial = InitialLaw::dirac({0.0});
  DeclaredBounds bounds;
  std::optional<ErgodicParams> ergodic;

  int dim() const { return model->state_dim(); }
  /// Throws MfgError when the declared data break the structural invariants.
  void validate() const;
};

/// sigma^{-1}(t, x), row-major. Throws on a singular or non-finite sigma.
void inverse_volatility(const GameSpec& spec, double t, const PathView& x, std::span<double> out);

/// sigma^{-1} b(t, x, mu, a).
void scaled_drift(const GameSpec& spec, double t, const PathView& x, const LawSummary& mu,
                  std::span<const double> a, std::span<double> out);

/// f1 + f2 + f3 + z . sigma^{-1} b at a single action.
double hamiltonian_tilde(const GameSpec& spec, double t, const PathView& x, const LawSummary& mu,
                         const ActionLaw& q, std::span<const double> z, std::span<const double> a);

struct HamiltonianMax {
  std::size_t index = 0;  // grid index of the maximizer
  double value = 0.0;     // f1 + f3 + z . sigma^{-1} b at the maximizer (f2 excluded)
};

/// Reusable buffers for repeated maximization over the action grid.
class HamiltonianWorkspace {
 public:
  explicit HamiltonianWorkspace(const GameSpec& spec);

  /// Exhaustive grid search; ties go to the smallest grid index.
  HamiltonianMax maximize(double t, const PathView& x, const LawSummary& mu, std::span<const double> z);
  /// h values of the last maximize() call, one per grid action.
  std::span<const double> values() const { return values_; }
  /// sigma^{-1} b of grid action j from the last maximize() call.
  std::span<const double> scaled_drift_at(std::size_t j) const {
    return {scaled_.data() + j * dim_, static_cast<std::size_t>(dim_)};
  }

 private:
  const GameSpec* spec_;
  int dim_;
  std::vector<double> sigma_inv_;
  std::vector<double> rewards_;
  std::vector<double> drifts_;
  std::vector<double> scaled_;
  std::vector<double> values_;
};

HamiltonianMax maximize_hamiltonian(const GameSpec& spec, double t, const PathView& x,
                                    const LawSummary& mu, std::span<const double> z);

enum class CheckStatus { pass, fail, skipped };
std::string to_string(CheckStatus s);

struct Witness {
  double t = 0.0;
  std::size_t path = 0;
  std::vector<double> state;
  std::vector<double> action;
  double measured = 0.0;
};

struct AssumptionEntry {
  std::string name;
  CheckStatus status = CheckStatus::skipped;
  double declared = 0.0;
  double worst = 0.0;
  std::optional<Witness> witness;
  std::string note;
};

struct AssumptionReport {
  std::vector<AssumptionEntry> entries;
  std::size_t samples = 0;

  bool all_pass() const;
  const AssumptionEntry* find(const std::string& name) const;
};

struct StandingCheckConfig {
  std::size_t budget = 2000;  // sampled (t, path, mu, q, a) tuples
  double time_span = 10.0;
  std::uint64_t seed = 1;
};

/// Samples coefficient evaluations and compares them with the declared bounds
/// C, M, C_A and L. Violations are reported, never thrown.
AssumptionReport check_standing_assumptions(const GameSpec& spec, const StandingCheckConfig& config);

/// A pair of laws on common atoms at time t.
struct LawPair {
  double t = 0.0;
  WeightedAtoms first;
  WeightedAtoms second;
};

struct MonotonicityReport {
  std::size_t pairs = 0;
  double max_integral = 0.0;   // max over pairs of the Lasry-Lions integral
  double max_violation = 0.0;  // max of integral - delta * symmetric entropy
  std::size_t worst_pair = 0;
  double slack = 0.0;          // delta used
  CheckStatus status = CheckStatus::skipped;
};

/// Integral of (f1(mu) - f1(mu')) d(mu - mu') for each pair, compared with
/// delta * (H(mu, mu') + H(mu', mu)).
MonotonicityReport check_monotonicity(const GameSpec& spec, std::span<const LawPair> pairs,
                                      double tolerance = 1e-12);

/// Random pairs of laws sharing atoms drawn around the initial law.
std::vector<LawPair> sample_law_pairs(const GameSpec& spec, std::size_t count, std::size_t atoms,
                                      double time_span, std::uint64_t seed);

}  // namespace mfg
