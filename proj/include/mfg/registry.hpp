#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mfg/game_model.hpp"

namespace mfg {

/// Coefficients of the one-dimensional registry games.
///   b  = a_gain a - restoring clip(x, clip) - mean_coupling clip(mean mu, clip)
///   sigma = sigma0 (1 + vol_tilt tanh x)
///   f1 = -confine (1 - exp(-x^2 / 2 s_c^2)) - quad min(x^2, cap^2) - repulsion (rho * mu)(x)
///        + mean_reward clip(x, r_clip) clip(mean mu, r_clip) + constant + time_wave sin t
///   f2 = -q_coupling (mean q)^2
///   f3 = -cost a^2 / 2
/// with rho(y) = exp(-y^2 / 2 s_r^2), evaluated on a cloud-in-cell field grid.
struct ScalarParams {
  double a_gain = 1.0;
  double restoring = 0.0;
  double clip = 1e300;
  double mean_coupling = 0.0;
  double sigma0 = 1.0;
  double vol_tilt = 0.0;
  double confine = 0.0;
  double confine_scale = 1.0;
  double quad = 0.0;
  double quad_cap = 1e150;
  double repulsion = 0.0;
  double repulsion_scale = 1.0;
  double mean_reward = 0.0;
  double reward_clip = 1e150;
  double constant = 0.0;
  double time_wave = 0.0;
  double q_coupling = 0.0;
  double cost = 0.0;
  double field_lo = -6.0;
  double field_hi = 6.0;
  int field_points = 97;
};

class ScalarGame final : public GameModel {
 public:
  explicit ScalarGame(ScalarParams p);

  const ScalarParams& params() const { return p_; }

  int state_dim() const override { return 1; }
  LawSummary summarize(double t, const WeightedAtoms& marginal) const override;
  void drift(double t, const PathView& x, const LawSummary& mu, std::span<const double> a,
             std::span<double> out) const override;
  void volatility(double t, const PathView& x, std::span<double> out) const override;
  double reward_state(double t, const PathView& x, const LawSummary& mu) const override;
  double reward_interaction(double t, const LawSummary& mu, const ActionLaw& q) const override;
  double reward_action(double t, const PathView& x, std::span<const double> a) const override;
  void action_terms(double t, const PathView& x, const LawSummary& mu, const ActionSet& actions,
                    std::span<double> reward_out, std::span<double> drift_out) const override;
  bool time_homogeneous() const override { return p_.time_wave == 0.0; }
  bool drift_depends_on_law() const override { return p_.mean_coupling != 0.0; }
  bool control_depends_on_law() const override {
    return p_.mean_coupling != 0.0 || p_.repulsion != 0.0 || p_.mean_reward != 0.0;
  }
  bool markovian() const override { return true; }

  /// Kernel field (rho * mu)(x) read from a summary.
  double field_at(const LawSummary& mu, double x) const;

 private:
  double base_drift(double x, const LawSummary& mu) const;

  ScalarParams p_;
  double field_step_ = 0.0;
  std::vector<double> kernel_;  // field_points x field_points
};

/// Names accepted by make_game.
std::vector<std::string> registry_names();

/// Builds a registry game; `overrides` may replace any coefficient parameter
/// (keys of ScalarParams) and the game data: discount, actions, initial,
/// bounds, ergodic.
GameSpec make_game(const std::string& name, const nlohmann::json& overrides = nlohmann::json::object());

/// JSON echo of a registry game's parameters.
nlohmann::json describe_game(const GameSpec& spec);

}  // namespace mfg
