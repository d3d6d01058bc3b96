#include "mfg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace mfg::oracle {

namespace {

struct Lattice {
  NodeTable nodes;
  // succ[k][node] = {down index, up index} at step k + 1.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> succ;
  std::vector<std::vector<double>> sigma;  // [k][node]
};

double eval_sigma(const GameSpec& spec, double t, double x) {
  double s = 0.0;
  const PathView v{std::span<const double>(&x, 1), 1, 0};
  spec.model->volatility(t, v, std::span<double>(&s, 1));
  if (!std::isfinite(s) || s == 0.0) throw MfgError("oracle: singular volatility");
  return s;
}

std::size_t find_or_add(std::vector<double>& list, double x) {
  for (std::size_t j = 0; j < list.size(); ++j) {
    if (std::abs(list[j] - x) <= 1e-12 * std::max(1.0, std::abs(x))) return j;
  }
  list.push_back(x);
  return list.size() - 1;
}

void check_spec(const GameSpec& spec, const DiscreteConfig& config) {
  if (spec.dim() != 1) throw MfgError("oracle: one-dimensional games only");
  if (!spec.model->markovian()) throw MfgError("oracle: coefficients must depend on the current state only");
  if (!spec.initial.is_dirac()) throw MfgError("oracle: initial law must be a Dirac mass");
  if (config.steps < 1 || config.steps > 3) throw MfgError("oracle: 1..3 steps supported");
  if (!(config.dt > 0.0)) throw MfgError("oracle: dt must be positive");
}

Lattice build_lattice(const GameSpec& spec, const DiscreteConfig& config) {
  Lattice l;
  const double sq = std::sqrt(config.dt);
  l.nodes.push_back({spec.initial.dirac_point()[0]});
  for (int k = 0; k < config.steps; ++k) {
    std::vector<double> next;
    std::vector<std::pair<std::size_t, std::size_t>> succ;
    std::vector<double> sig;
    for (double x : l.nodes[k]) {
      const double s = eval_sigma(spec, k * config.dt, x);
      sig.push_back(s);
      const std::size_t dn = find_or_add(next, x - s * sq);
      const std::size_t up = find_or_add(next, x + s * sq);
      succ.emplace_back(dn, up);
    }
    // Sort the next layer and remap successor indices.
    std::vector<std::size_t> order(next.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return next[a] < next[b]; });
    std::vector<std::size_t> rank(next.size());
    std::vector<double> sorted(next.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      rank[order[r]] = r;
      sorted[r] = next[order[r]];
    }
    for (auto& [dn, up] : succ) {
      dn = rank[dn];
      up = rank[up];
    }
    l.succ.push_back(std::move(succ));
    l.sigma.push_back(std::move(sig));
    l.nodes.push_back(std::move(sorted));
  }
  return l;
}

struct Flow {
  std::vector<LawSummary> laws;       // k <= K
  std::vector<ActionLaw> action_laws;  // k < K
  std::vector<std::vector<double>> marginals;
};

using Policy = std::vector<std::vector<std::size_t>>;

Policy decode(std::size_t index, const Lattice& l, std::size_t n_actions) {
  Policy p(l.succ.size());
  std::size_t total = 0;
  for (std::size_t k = 0; k < l.succ.size(); ++k) total += l.nodes[k].size();
  std::vector<std::size_t> digits(total);
  for (std::size_t j = total; j-- > 0;) {
    digits[j] = index % n_actions;
    index /= n_actions;
  }
  std::size_t pos = 0;
  for (std::size_t k = 0; k < l.succ.size(); ++k) {
    p[k].resize(l.nodes[k].size());
    for (std::size_t n = 0; n < l.nodes[k].size(); ++n) p[k][n] = digits[pos++];
  }
  return p;
}

double up_probability(const GameSpec& spec, const DiscreteConfig& config, const Lattice& l, int k, std::size_t node,
                      const LawSummary& mu, std::size_t action) {
  const double x = l.nodes[k][node];
  const PathView v{std::span<const double>(&x, 1), 1, 0};
  double b = 0.0;
  spec.model->drift(k * config.dt, v, mu, spec.actions.point(action), std::span<double>(&b, 1));
  const double beta = b / l.sigma[k][node];
  const double shift = beta * std::sqrt(config.dt);
  if (!(std::abs(shift) < 1.0)) throw MfgError("oracle: |beta| sqrt(dt) must be < 1");
  return 0.5 * (1.0 + shift);
}

LawSummary summarize_nodes(const GameSpec& spec, double t, const std::vector<double>& xs,
                           const std::vector<double>& probs) {
  WeightedAtoms m;
  m.dim = 1;
  m.atoms = xs;
  m.masses = probs;
  return spec.model->summarize(t, m);
}

Flow induced_flow(const GameSpec& spec, const DiscreteConfig& config, const Lattice& l, const Policy& p) {
  Flow f;
  const int K = config.steps;
  f.marginals.push_back({1.0});
  for (int k = 0; k < K; ++k) {
    const auto& probs = f.marginals[k];
    f.laws.push_back(summarize_nodes(spec, k * config.dt, l.nodes[k], probs));
    ActionLaw q = spec.actions.uniform_law();
    std::fill(q.masses.begin(), q.masses.end(), 0.0);
    for (std::size_t n = 0; n < probs.size(); ++n) q.masses[p[k][n]] += probs[n];
    f.action_laws.push_back(q);
    std::vector<double> next(l.nodes[k + 1].size(), 0.0);
    for (std::size_t n = 0; n < probs.size(); ++n) {
      const double pu = up_probability(spec, config, l, k, n, f.laws[k], p[k][n]);
      next[l.succ[k][n].second] += probs[n] * pu;
      next[l.succ[k][n].first] += probs[n] * (1.0 - pu);
    }
    f.marginals.push_back(std::move(next));
  }
  f.laws.push_back(summarize_nodes(spec, K * config.dt, l.nodes[K], f.marginals[K]));
  return f;
}

double step_weight(const GameSpec& spec, const DiscreteConfig& config) {
  const double lam = spec.discount;
  return config.quadrature == RewardQuadrature::exact_discount ? (1.0 - std::exp(-lam * config.dt)) / lam
                                                               : config.dt;
}

double running_reward(const GameSpec& spec, const DiscreteConfig& config, const Lattice& l, int k, std::size_t node,
                      const LawSummary& mu, const ActionLaw& q, std::size_t action) {
  const double x = l.nodes[k][node];
  const double t = k * config.dt;
  const PathView v{std::span<const double>(&x, 1), 1, 0};
  const auto& m = *spec.model;
  return m.reward_state(t, v, mu) + m.reward_interaction(t, mu, q) + m.reward_action(t, v, spec.actions.point(action));
}

// Expected discounted reward of policy p against the flow, summing over every
// scenario of the walk.
double scenario_value(const GameSpec& spec, const DiscreteConfig& config, const Lattice& l,
                      const std::vector<LawSummary>& laws, const std::vector<ActionLaw>& q, const Policy& p) {
  const int K = config.steps;
  const double w = step_weight(spec, config);
  double total = 0.0;
  for (std::size_t s = 0; s < (std::size_t{1} << K); ++s) {
    double prob = 1.0, reward = 0.0;
    std::size_t node = 0;
    for (int k = 0; k < K; ++k) {
      const std::size_t a = p[k][node];
      reward += std::exp(-spec.discount * k * config.dt) * w * running_reward(spec, config, l, k, node, laws[k], q[k], a);
      const bool up = (s >> (K - 1 - k)) & 1u;
      const double pu = up_probability(spec, config, l, k, node, laws[k], a);
      prob *= up ? pu : 1.0 - pu;
      node = up ? l.succ[k][node].second : l.succ[k][node].first;
    }
    total += prob * reward;
  }
  return total;
}

std::size_t count_policies(const Lattice& l, std::size_t n_actions) {
  std::size_t count = 1;
  for (std::size_t k = 0; k < l.succ.size(); ++k)
    for (std::size_t n = 0; n < l.nodes[k].size(); ++n) {
      if (count > std::numeric_limits<std::size_t>::max() / n_actions) throw MfgError("oracle: too many policies");
      count *= n_actions;
    }
  return count;
}

std::vector<std::vector<double>> policy_values(const GameSpec& spec, const DiscreteConfig& config, const Lattice& l,
                                               const Flow& f, const Policy& p) {
  const int K = config.steps;
  const double w = step_weight(spec, config);
  const double disc = std::exp(-spec.discount * config.dt);
  std::vector<std::vector<double>> v(K + 1);
  v[K].assign(l.nodes[K].size(), 0.0);
  for (int k = K - 1; k >= 0; --k) {
    v[k].resize(l.nodes[k].size());
    for (std::size_t n = 0; n < l.nodes[k].size(); ++n) {
      const std::size_t a = p[k][n];
      const double pu = up_probability(spec, config, l, k, n, f.laws[k], a);
      v[k][n] = w * running_reward(spec, config, l, k, n, f.laws[k], f.action_laws[k], a) +
                disc * (pu * v[k + 1][l.succ[k][n].second] + (1.0 - pu) * v[k + 1][l.succ[k][n].first]);
    }
  }
  return v;
}

}  // namespace

NodeTable lattice_nodes(const GameSpec& spec, const DiscreteConfig& config) {
  check_spec(spec, config);
  return build_lattice(spec, config).nodes;
}

DiscreteResult enumerate_discrete_mfg(const GameSpec& spec, const DiscreteConfig& config) {
  check_spec(spec, config);
  const Lattice l = build_lattice(spec, config);
  const std::size_t n_actions = spec.actions.size();
  const std::size_t policies = count_policies(l, n_actions);
  const std::size_t scenarios = std::size_t{1} << config.steps;
  if (policies > config.budget || policies * policies > config.budget / scenarios) {
    throw MfgError("oracle: enumeration budget exceeded (" + std::to_string(policies) + " policies)");
  }
  DiscreteResult r;
  r.nodes = l.nodes;
  r.policy_count = policies;
  std::vector<Policy> all(policies);
  for (std::size_t p = 0; p < policies; ++p) all[p] = decode(p, l, n_actions);
  for (std::size_t p = 0; p < policies; ++p) {
    const Flow f = induced_flow(spec, config, l, all[p]);
    const double own = scenario_value(spec, config, l, f.laws, f.action_laws, all[p]);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t rho = 0; rho < policies; ++rho) {
      best = std::max(best, scenario_value(spec, config, l, f.laws, f.action_laws, all[rho]));
    }
    r.evaluations += (policies + 1) * scenarios;
    if (own >= best - 1e-12 * std::max(1.0, std::abs(best))) {
      DiscreteEquilibrium e;
      e.policy_index = p;
      e.policy = all[p];
      e.marginals = f.marginals;
      e.values = policy_values(spec, config, l, f, all[p]);
      e.laws = f.laws;
      e.action_laws = f.action_laws;
      e.value = own;
      r.equilibria.push_back(std::move(e));
    }
  }
  return r;
}

BestResponse best_response(const GameSpec& spec, const DiscreteConfig& config, const std::vector<LawSummary>& laws,
                           const std::vector<ActionLaw>& action_laws) {
  check_spec(spec, config);
  const Lattice l = build_lattice(spec, config);
  if (static_cast<int>(laws.size()) < config.steps || static_cast<int>(action_laws.size()) < config.steps) {
    throw MfgError("oracle: flow shorter than the horizon");
  }
  const std::size_t n_actions = spec.actions.size();
  const std::size_t policies = count_policies(l, n_actions);
  if (policies * (std::size_t{1} << config.steps) > config.budget) throw MfgError("oracle: enumeration budget exceeded");
  BestResponse out;
  out.value = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < policies; ++p) {
    const Policy pol = decode(p, l, n_actions);
    const double v = scenario_value(spec, config, l, laws, action_laws, pol);
    if (v > out.value + 1e-13 * std::max(1.0, std::abs(v))) {
      out.value = v;
      out.policy_index = p;
      out.policy = pol;
    }
  }
  return out;
}

void write_discrete_csv(const DiscreteResult& result, const GameSpec& spec, std::ostream& out) {
  out << "equilibrium,k,node,x,probability,action,value\n" << std::setprecision(17);
  for (std::size_t e = 0; e < result.equilibria.size(); ++e) {
    const auto& eq = result.equilibria[e];
    for (std::size_t k = 0; k < result.nodes.size(); ++k) {
      for (std::size_t n = 0; n < result.nodes[k].size(); ++n) {
        out << e << "," << k << "," << n << "," << result.nodes[k][n] << "," << eq.marginals[k][n] << ",";
        if (k < eq.policy.size()) out << spec.actions.point(eq.policy[k][n])[0];
        out << "," << eq.values[k][n] << "\n";
      }
    }
  }
}

StationaryDensity stationary_density_quadrature(const std::function<double(double)>& drift, double lo, double hi,
                                                std::size_t points) {
  if (!(hi > lo) || points < 3) throw MfgError("quadrature needs lo < hi and at least three nodes");
  StationaryDensity s;
  const double h = (hi - lo) / static_cast<double>(points - 1);
  s.x.resize(points);
  for (std::size_t j = 0; j < points; ++j) s.x[j] = lo + h * static_cast<double>(j);
  // Potential U(x) = 2 int_{x_0}^x b with x_0 the node closest to zero.
  std::vector<double> u(points, 0.0);
  std::size_t origin = 0;
  for (std::size_t j = 1; j < points; ++j)
    if (std::abs(s.x[j]) < std::abs(s.x[origin])) origin = j;
  for (std::size_t j = origin + 1; j < points; ++j) u[j] = u[j - 1] + h * (drift(s.x[j - 1]) + drift(s.x[j]));
  for (std::size_t j = origin; j-- > 0;) u[j] = u[j + 1] - h * (drift(s.x[j]) + drift(s.x[j + 1]));
  const double top = *std::max_element(u.begin(), u.end());
  s.density.resize(points);
  for (std::size_t j = 0; j < points; ++j) s.density[j] = std::exp(u[j] - top);
  if (s.density.front() > 1e-12 || s.density.back() > 1e-12) {
    throw MfgError("stationary density does not decay at the domain ends; drift not confining on the grid");
  }
  double z = 0.0;
  for (std::size_t j = 0; j + 1 < points; ++j) z += 0.5 * h * (s.density[j] + s.density[j + 1]);
  for (double& v : s.density) v /= z;
  s.cdf.assign(points, 0.0);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t j = 0; j + 1 < points; ++j) {
    s.cdf[j + 1] = s.cdf[j] + 0.5 * h * (s.density[j] + s.density[j + 1]);
    m1 += 0.5 * h * (s.x[j] * s.density[j] + s.x[j + 1] * s.density[j + 1]);
    m2 += 0.5 * h * (s.x[j] * s.x[j] * s.density[j] + s.x[j + 1] * s.x[j + 1] * s.density[j + 1]);
  }
  s.mean = m1;
  s.second_moment = m2;
  return s;
}

std::vector<double> StationaryDensity::bin_masses(const std::vector<double>& edges) const {
  auto cdf_at = [&](double e) {
    if (e <= x.front()) return 0.0;
    if (e >= x.back()) return 1.0;
    const double h = x[1] - x[0];
    const std::size_t j = std::min(static_cast<std::size_t>((e - x.front()) / h), x.size() - 2);
    const double r = (e - x[j]) / h;
    // Exact integral of the linear interpolant of the density over [x_j, e].
    return cdf[j] + h * (density[j] * r + 0.5 * (density[j + 1] - density[j]) * r * r);
  };
  std::vector<double> m;
  double prev = 0.0;
  for (double e : edges) {
    const double c = cdf_at(e);
    m.push_back(c - prev);
    prev = c;
  }
  m.push_back(1.0 - prev);
  return m;
}

}  // namespace mfg::oracle
