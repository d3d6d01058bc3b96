#include "mfg/registry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace mfg {

using nlohmann::json;

ScalarGame::ScalarGame(ScalarParams p) : p_(p) {
  if (p_.field_points < 2 || !(p_.field_hi > p_.field_lo)) throw MfgError("field grid needs two points and lo < hi");
  if (!(p_.sigma0 > 0.0)) throw MfgError("sigma0 must be positive");
  if (!(std::abs(p_.vol_tilt) < 1.0)) throw MfgError("|vol_tilt| must be < 1 to keep sigma invertible");
  if (!(p_.confine_scale > 0.0) || !(p_.repulsion_scale > 0.0)) throw MfgError("length scales must be positive");
  if (!(p_.clip > 0.0)) throw MfgError("clip must be positive");
  field_step_ = (p_.field_hi - p_.field_lo) / (p_.field_points - 1);
  const int g = p_.field_points;
  kernel_.resize(static_cast<std::size_t>(g) * g);
  for (int r = 0; r < g; ++r)
    for (int c = 0; c < g; ++c) {
      const double y = (r - c) * field_step_;
      kernel_[r * g + c] = std::exp(-y * y / (2.0 * p_.repulsion_scale * p_.repulsion_scale));
    }
}

namespace {

double clamp_abs(double v, double c) { return std::clamp(v, -c, c); }

// Cloud-in-cell weights of x on the field grid (clamped at the ends).
void cic(double x, double lo, double step, int g, int& j, double& frac) {
  double u = (x - lo) / step;
  u = std::clamp(u, 0.0, static_cast<double>(g - 1));
  j = std::min(static_cast<int>(u), g - 2);
  frac = u - j;
}

}  // namespace

LawSummary ScalarGame::summarize(double, const WeightedAtoms& marginal) const {
  if (marginal.dim != 1) throw MfgError("scalar game expects one-dimensional laws");
  LawSummary s;
  const double total = marginal.total_mass();
  if (!(total > 0.0)) throw MfgError("law with no mass");
  double m = 0.0;
  for (std::size_t j = 0; j < marginal.size(); ++j) m += marginal.masses[j] * marginal.atoms[j];
  s.values.push_back(m / total);
  if (p_.repulsion != 0.0) {
    const int g = p_.field_points;
    std::vector<double> dep(g, 0.0);
    for (std::size_t j = 0; j < marginal.size(); ++j) {
      int idx;
      double frac;
      cic(marginal.atoms[j], p_.field_lo, field_step_, g, idx, frac);
      const double w = marginal.masses[j] / total;
      dep[idx] += w * (1.0 - frac);
      dep[idx + 1] += w * frac;
    }
    for (int r = 0; r < g; ++r) {
      double v = 0.0;
      for (int c = 0; c < g; ++c) v += kernel_[r * g + c] * dep[c];
      s.values.push_back(v);
    }
  }
  return s;
}

double ScalarGame::field_at(const LawSummary& mu, double x) const {
  if (mu.values.size() <= 1) return 0.0;
  const int g = p_.field_points;
  if (static_cast<int>(mu.values.size()) != g + 1) throw MfgError("law summary does not match the field grid");
  int idx;
  double frac;
  cic(x, p_.field_lo, field_step_, g, idx, frac);
  return (1.0 - frac) * mu.values[1 + idx] + frac * mu.values[2 + idx];
}

double ScalarGame::base_drift(double x, const LawSummary& mu) const {
  double b = -p_.restoring * clamp_abs(x, p_.clip);
  if (p_.mean_coupling != 0.0) b -= p_.mean_coupling * clamp_abs(mu.values.at(0), p_.clip);
  return b;
}

void ScalarGame::drift(double, const PathView& x, const LawSummary& mu, std::span<const double> a,
                       std::span<double> out) const {
  out[0] = p_.a_gain * a[0] + base_drift(x.current()[0], mu);
}

void ScalarGame::volatility(double, const PathView& x, std::span<double> out) const {
  out[0] = p_.vol_tilt == 0.0 ? p_.sigma0 : p_.sigma0 * (1.0 + p_.vol_tilt * std::tanh(x.current()[0]));
}

double ScalarGame::reward_state(double t, const PathView& x, const LawSummary& mu) const {
  const double v = x.current()[0];
  double f = p_.constant;
  if (p_.confine != 0.0) {
    f -= p_.confine * (1.0 - std::exp(-v * v / (2.0 * p_.confine_scale * p_.confine_scale)));
  }
  if (p_.quad != 0.0) f -= p_.quad * std::min(v * v, p_.quad_cap * p_.quad_cap);
  if (p_.repulsion != 0.0) f -= p_.repulsion * field_at(mu, v);
  if (p_.mean_reward != 0.0) {
    f += p_.mean_reward * clamp_abs(v, p_.reward_clip) * clamp_abs(mu.values.at(0), p_.reward_clip);
  }
  if (p_.time_wave != 0.0) f += p_.time_wave * std::sin(t);
  return f;
}

double ScalarGame::reward_interaction(double, const LawSummary&, const ActionLaw& q) const {
  if (p_.q_coupling == 0.0) return 0.0;
  const double m = q.mean().at(0);
  return -p_.q_coupling * m * m;
}

double ScalarGame::reward_action(double, const PathView&, std::span<const double> a) const {
  return -0.5 * p_.cost * a[0] * a[0];
}

void ScalarGame::action_terms(double, const PathView& x, const LawSummary& mu, const ActionSet& actions,
                              std::span<double> reward_out, std::span<double> drift_out) const {
  const double base = base_drift(x.current()[0], mu);
  const auto& grid = actions.grid();
  const std::size_t n = actions.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double a = grid[j];
    reward_out[j] = -0.5 * p_.cost * a * a;
    drift_out[j] = p_.a_gain * a + base;
  }
}

std::vector<std::string> registry_names() {
  return {"constant-reward", "gaussian-repulsion", "clipped-ou-invariant", "discrete-oracle"};
}

namespace {

struct Defaults {
  ScalarParams params;
  GameSpec spec;
};

Defaults registry_defaults(const std::string& name) {
  Defaults d;
  auto& p = d.params;
  auto& s = d.spec;
  s.name = name;
  s.discount = 0.5;
  s.actions = ActionSet::box({{-1.0, 1.0}}, 41);
  s.initial = InitialLaw::dirac({0.0});
  if (name == "constant-reward") {
    p.a_gain = 0.0;
    p.constant = 1.0;
    s.bounds = DeclaredBounds{1.0, 1.0, 1.0, 0.0, 0.0, 1.0};
  } else if (name == "gaussian-repulsion") {
    p.confine = 0.25;
    p.repulsion = 0.2;
    p.q_coupling = 0.05;
    p.cost = 1.0;
    s.bounds = DeclaredBounds{1.0, 1.0, 1.0, 1.0, 0.0, 1.0};
  } else if (name == "clipped-ou-invariant") {
    p.restoring = 1.0;
    p.clip = 3.0;
    p.mean_coupling = 0.1;
    p.quad = 0.1;
    p.quad_cap = 3.0;
    p.cost = 1.0;
    s.bounds = DeclaredBounds{4.3, 1.5, 1.0, 1.0, 0.0, 1.0};
    s.ergodic = ErgodicParams{2.0, 3.0, 0.5, 4.3};
  } else if (name == "discrete-oracle") {
    p.quad = 1.0;
    p.quad_cap = 1.5;
    p.mean_reward = 0.5;
    p.reward_clip = 1.5;
    p.q_coupling = 0.1;
    p.cost = 1.0;
    s.actions = ActionSet::finite(1, {-1.0, 0.0, 1.0});
    s.initial = InitialLaw::dirac({0.5});
    s.bounds = DeclaredBounds{1.0, 4.0, 1.0, 0.0, 0.0, 1.0};
  } else {
    throw MfgError("unknown game '" + name + "'");
  }
  return d;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw MfgError("config field " + path + " must be a number");
  return j.get<double>();
}

std::map<std::string, double ScalarParams::*> param_fields() {
  return {{"a_gain", &ScalarParams::a_gain},
          {"restoring", &ScalarParams::restoring},
          {"clip", &ScalarParams::clip},
          {"mean_coupling", &ScalarParams::mean_coupling},
          {"sigma0", &ScalarParams::sigma0},
          {"vol_tilt", &ScalarParams::vol_tilt},
          {"confine", &ScalarParams::confine},
          {"confine_scale", &ScalarParams::confine_scale},
          {"quad", &ScalarParams::quad},
          {"quad_cap", &ScalarParams::quad_cap},
          {"repulsion", &ScalarParams::repulsion},
          {"repulsion_scale", &ScalarParams::repulsion_scale},
          {"mean_reward", &ScalarParams::mean_reward},
          {"reward_clip", &ScalarParams::reward_clip},
          {"constant", &ScalarParams::constant},
          {"time_wave", &ScalarParams::time_wave},
          {"q_coupling", &ScalarParams::q_coupling},
          {"cost", &ScalarParams::cost},
          {"field_lo", &ScalarParams::field_lo},
          {"field_hi", &ScalarParams::field_hi}};
}

ActionSet parse_actions(const json& j, const std::string& path) {
  if (!j.is_object()) throw MfgError("config field " + path + " must be an object");
  if (j.contains("atoms")) {
    if (!j["atoms"].is_array() || j["atoms"].empty()) throw MfgError("config field " + path + ".atoms must be a non-empty array");
    std::vector<double> atoms;
    for (std::size_t k = 0; k < j["atoms"].size(); ++k) atoms.push_back(number(j["atoms"][k], path + ".atoms[" + std::to_string(k) + "]"));
    return ActionSet::finite(1, atoms);
  }
  const double lo = number(j.value("lo", json(-1.0)), path + ".lo");
  const double hi = number(j.value("hi", json(1.0)), path + ".hi");
  const json pts = j.value("points", json(41));
  if (!pts.is_number_integer() || pts.get<int>() < 1) throw MfgError("config field " + path + ".points must be a positive integer");
  return ActionSet::box({{lo, hi}}, pts.get<int>());
}

InitialLaw parse_initial(const json& j, const std::string& path) {
  if (!j.is_object()) throw MfgError("config field " + path + " must be an object");
  if (j.contains("dirac")) return InitialLaw::dirac({number(j["dirac"], path + ".dirac")});
  if (j.contains("normal")) {
    const json& n = j["normal"];
    return InitialLaw::normal({number(n.value("mean", json(0.0)), path + ".normal.mean")},
                              {number(n.value("sd", json(1.0)), path + ".normal.sd")});
  }
  throw MfgError("config field " + path + " needs 'dirac' or 'normal'");
}

}  // namespace

GameSpec make_game(const std::string& name, const json& overrides) {
  Defaults d = registry_defaults(name);
  if (!overrides.is_object()) throw MfgError("game overrides must be a JSON object");
  const auto fields = param_fields();
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = "game." + key;
    if (auto it = fields.find(key); it != fields.end()) {
      d.params.*(it->second) = number(value, path);
    } else if (key == "field_points") {
      if (!value.is_number_integer()) throw MfgError("config field " + path + " must be an integer");
      d.params.field_points = value.get<int>();
    } else if (key == "discount") {
      d.spec.discount = number(value, path);
    } else if (key == "actions") {
      d.spec.actions = parse_actions(value, path);
    } else if (key == "initial") {
      d.spec.initial = parse_initial(value, path);
    } else if (key == "bounds") {
      if (!value.is_object()) throw MfgError("config field " + path + " must be an object");
      auto& b = d.spec.bounds;
      const std::map<std::string, double*> bf{{"C", &b.drift},         {"M", &b.reward},
                                              {"L", &b.lipschitz},     {"m", &b.concavity},
                                              {"delta", &b.monotone_slack}, {"C_A", &b.action_norm}};
      for (const auto& [bk, bv] : value.items()) {
        auto bit = bf.find(bk);
        if (bit == bf.end()) throw MfgError("unknown config field " + path + "." + bk);
        *bit->second = number(bv, path + "." + bk);
      }
    } else if (key == "ergodic") {
      if (value.is_null()) {
        d.spec.ergodic.reset();
        continue;
      }
      if (!value.is_object()) throw MfgError("config field " + path + " must be an object");
      ErgodicParams e = d.spec.ergodic.value_or(ErgodicParams{});
      const std::map<std::string, double*> ef{{"R_inner", &e.inner_radius},
                                              {"R_outer", &e.outer_radius},
                                              {"k", &e.drift_margin},
                                              {"Lambda", &e.local_bound}};
      for (const auto& [ek, ev] : value.items()) {
        auto eit = ef.find(ek);
        if (eit == ef.end()) throw MfgError("unknown config field " + path + "." + ek);
        *eit->second = number(ev, path + "." + ek);
      }
      d.spec.ergodic = e;
    } else {
      throw MfgError("unknown config field " + path);
    }
  }
  d.spec.model = std::make_shared<ScalarGame>(d.params);
  d.spec.validate();
  return d.spec;
}

json describe_game(const GameSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["discount"] = spec.discount;
  j["actions"] = spec.actions.size();
  j["initial"] = spec.initial.describe();
  const auto& b = spec.bounds;
  j["bounds"] = {{"C", b.drift}, {"M", b.reward}, {"L", b.lipschitz}, {"m", b.concavity},
                 {"delta", b.monotone_slack}, {"C_A", b.action_norm}};
  if (spec.ergodic) {
    j["ergodic"] = {{"R_inner", spec.ergodic->inner_radius}, {"R_outer", spec.ergodic->outer_radius},
                    {"k", spec.ergodic->drift_margin}, {"Lambda", spec.ergodic->local_bound}};
  }
  if (const auto* g = dynamic_cast<const ScalarGame*>(spec.model.get())) {
    const auto& p = g->params();
    json pj;
    for (const auto& [key, member] : param_fields()) {
      const double v = p.*member;
      pj[key] = std::abs(v) >= 1e100 ? json("inf") : json(v);
    }
    pj["field_points"] = p.field_points;
    j["params"] = pj;
  }
  return j;
}

}  // namespace mfg
