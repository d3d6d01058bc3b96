#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mfg/game_model.hpp"
#include "mfg/registry.hpp"

namespace mfg::test {

inline GameSpec scalar_game(ScalarParams p, DeclaredBounds bounds = {},
                            ActionSet actions = ActionSet::box({{-1.0, 1.0}}, 41),
                            InitialLaw initial = InitialLaw::dirac({0.0}), double discount = 0.5) {
  GameSpec s;
  s.name = "test";
  s.model = std::make_shared<ScalarGame>(p);
  s.discount = discount;
  s.actions = std::move(actions);
  s.initial = std::move(initial);
  s.bounds = bounds;
  return s;
}

/// Game with f = constant, b = 0.
inline GameSpec constant_reward_game(double c, double discount = 0.5) {
  ScalarParams p;
  p.a_gain = 0.0;
  p.constant = c;
  DeclaredBounds b;
  b.reward = std::max(std::abs(c), 1e-9);
  return scalar_game(p, b, ActionSet::box({{-1.0, 1.0}}, 41), InitialLaw::dirac({0.0}), discount);
}

/// b(a) = a, f3 = -a^2 / 2, nothing else.
inline GameSpec quadratic_cost_game() {
  ScalarParams p;
  p.cost = 1.0;
  DeclaredBounds b;
  b.reward = 0.5;
  b.concavity = 1.0;
  return scalar_game(p, b);
}

inline WeightedAtoms atoms(std::vector<double> x, std::vector<double> m = {}) {
  WeightedAtoms w;
  w.dim = 1;
  if (m.empty()) m.assign(x.size(), 1.0 / static_cast<double>(x.size()));
  w.atoms = std::move(x);
  w.masses = std::move(m);
  return w;
}

inline PathView scalar_view(const std::vector<double>& path, int step) {
  return PathView{{path.data(), static_cast<std::size_t>(step + 1)}, 1, step};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace mfg::test
