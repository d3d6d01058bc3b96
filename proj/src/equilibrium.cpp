#include "mfg/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace mfg {

namespace {

std::vector<LawSummary> summarize_flow(const GameSpec& spec, const MeasureWeights& w) {
  std::vector<LawSummary> laws(w.horizon + 1);
  parallel_for(laws.size(), [&](std::size_t k) {
    const int kk = static_cast<int>(k);
    laws[k] = spec.model->summarize(w.ensemble->grid.time(kk), reweighted_marginal(w, kk));
  });
  return laws;
}

ControlField control_from_solution(const BsdeSolution& s) {
  ControlField c;
  c.paths = s.paths;
  c.horizon = s.horizon;
  c.index = s.maximizer;
  return c;
}

}  // namespace

MeanFieldState initial_state(const GameSpec& spec, const PathEnsemble& ensemble, int horizon) {
  std::vector<ActionLaw> q(horizon, spec.actions.uniform_law());
  return make_state(spec, identity_weights(ensemble, horizon), std::move(q));
}

MeanFieldState make_state(const GameSpec& spec, MeasureWeights weights, std::vector<ActionLaw> action_laws,
                          std::optional<ControlField> control) {
  if (static_cast<int>(action_laws.size()) != weights.horizon) throw MfgError("action-law flow length mismatch");
  for (const auto& q : action_laws) {
    const double s = q.total_mass();
    if (std::abs(s - 1.0) > 1e-9) throw MfgError("action law masses must sum to one");
  }
  MeanFieldState s;
  s.flow.laws = summarize_flow(spec, weights);
  s.flow.action_laws = std::move(action_laws);
  s.weights = std::move(weights);
  s.control = std::move(control);
  return s;
}

MeanFieldState mix_states(const GameSpec& spec, const MeanFieldState& a, const MeanFieldState& b, double theta) {
  if (theta >= 1.0) return b;
  if (a.horizon() != b.horizon()) throw MfgError("mixing states with different horizons");
  std::vector<ActionLaw> q(a.flow.action_laws);
  for (std::size_t k = 0; k < q.size(); ++k) {
    const auto& qb = b.flow.action_laws[k];
    if (qb.atoms != q[k].atoms) throw MfgError("mixing action laws on different atoms");
    for (std::size_t j = 0; j < q[k].size(); ++j) q[k].masses[j] = (1.0 - theta) * q[k].masses[j] + theta * qb.masses[j];
  }
  MeanFieldState m = make_state(spec, mixture_weights(a.weights, b.weights, theta), std::move(q));
  m.iteration = b.iteration;
  return m;
}

ResidualBinning ResidualBinning::build(const PathEnsemble& ensemble, int horizon, std::size_t bins) {
  ResidualBinning r;
  r.steps.resize(horizon + 1);
  std::vector<double> xs(ensemble.paths);
  for (int k = 0; k <= horizon; ++k) {
    for (std::size_t i = 0; i < ensemble.paths; ++i) xs[i] = ensemble.state(i, k)[0];
    r.steps[k] = Binning::equal_mass(xs, bins);
  }
  return r;
}

Residual state_residual(const ResidualBinning& binning, const MeanFieldState& a, const MeanFieldState& b) {
  if (a.weights.ensemble != b.weights.ensemble || a.horizon() != b.horizon()) {
    throw MfgError("residual between states on different supports");
  }
  const PathEnsemble& e = *a.weights.ensemble;
  if (e.dim != 1) throw MfgError("binned residual is one-dimensional");
  if (static_cast<int>(binning.steps.size()) < a.horizon() + 1) throw MfgError("residual binning too short");
  Residual r;
  std::vector<double> tvs(a.horizon() + 1, 0.0);
  parallel_for(tvs.size(), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    const Binning& bn = binning.steps[k];
    std::vector<double> ma(bn.bins(), 0.0), mb(bn.bins(), 0.0);
    for (std::size_t i = 0; i < e.paths; ++i) {
      const std::size_t j = bn.bin_of(e.state(i, k)[0]);
      ma[j] += a.weights.weight(i, k);
      mb[j] += b.weights.weight(i, k);
    }
    tvs[kk] = tv_masses(ma, mb);
  });
  r.tv = *std::max_element(tvs.begin(), tvs.end());
  for (int k = 0; k < a.horizon(); ++k) {
    r.w1 = std::max(r.w1, w1_actions(a.flow.action_laws[k], b.flow.action_laws[k]));
  }
  return r;
}

FixedPointResult fixed_point_map(const GameSpec& spec, const MeanFieldState& state, const PathEnsemble& ensemble,
                                 const RegressionConfig& regression) {
  FixedPointResult r;
  r.solution = solve_finite_horizon(spec, state.flow, ensemble, state.horizon(), regression);
  r.control = control_from_solution(r.solution);
  MeasureWeights w = control_weights(spec, state.flow, r.control, ensemble);
  std::vector<ActionLaw> q = action_flow(spec, r.control, w);
  r.state = make_state(spec, std::move(w), std::move(q), r.control);
  r.state.iteration = state.iteration + 1;
  return r;
}

EquilibriumReport solve_equilibrium(const GameSpec& spec, const PathEnsemble& ensemble, int horizon,
                                    const EquilibriumConfig& config, const MeanFieldState* start) {
  if (!(config.theta > 0.0 && config.theta <= 1.0)) throw MfgError("damping theta must lie in (0, 1]");
  if (config.max_iter < 1) throw MfgError("max_iter must be at least 1");
  if (!(config.tol_fp > 0.0)) throw MfgError("tol_fp must be positive");
  if (horizon < 1 || horizon > ensemble.steps()) throw MfgError("equilibrium horizon outside the ensemble");
  const ResidualBinning binning = ResidualBinning::build(ensemble, horizon, config.bins);
  MeanFieldState s = start ? *start : initial_state(spec, ensemble, horizon);
  if (s.horizon() != horizon) throw MfgError("start state horizon mismatch");
  // Without interaction Phi is constant, so one full step reaches its fixed point.
  double theta = spec.model->control_depends_on_law() ? config.theta : 1.0;
  EquilibriumReport rep;
  rep.best_residual = std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::infinity();
  for (int n = 0; n < config.max_iter; ++n) {
    FixedPointResult img = fixed_point_map(spec, s, ensemble, config.regression);
    const Residual r = state_residual(binning, s, img.state);
    rep.history.push_back({n, r.tv, r.w1, img.solution.value, theta});
    rep.best_residual = std::min(rep.best_residual, r.total());
    const bool done = r.total() < config.tol_fp;
    if (done || n + 1 == config.max_iter) {
      rep.state = std::move(img.state);
      rep.solution = std::move(img.solution);
      rep.control = std::move(img.control);
      rep.input_flow = s.flow;
      rep.converged = done;
      rep.iterations = n;
      rep.residual = r.total();
      rep.value = rep.solution.value;
      rep.value_band = rep.solution.value_band;
      return rep;
    }
    if (config.adaptive && r.total() > prev) theta = std::max(theta / 2.0, 1.0 / 64.0);
    prev = r.total();
    const int it = s.iteration + 1;
    s = mix_states(spec, s, img.state, theta);
    s.iteration = it;
  }
  return rep;
}

EquilibriumReport solve_infinite_equilibrium(const GameSpec& spec, const PathEnsemble& ensemble, double tol,
                                             const EquilibriumConfig& config, const MeanFieldState* start) {
  const TruncationCertificate cert = truncation_certificate(spec, tol, ensemble.grid);
  const int k = ensemble.grid.index_of(cert.t_required);
  if (k > ensemble.steps()) {
    throw MfgError("ensemble horizon " + std::to_string(ensemble.grid.horizon()) + " is shorter than T_required=" +
                   std::to_string(cert.t_required));
  }
  EquilibriumReport r = solve_equilibrium(spec, ensemble, k, config, start);
  r.certificate = cert;
  r.solution.certificate = cert;
  return r;
}

GapReport equilibrium_gap(const GameSpec& spec, const MeanFieldState& state, const PathEnsemble& ensemble,
                          const RegressionConfig& regression, std::size_t bins) {
  if (!state.control) throw MfgError("equilibrium gap needs the state's control");
  const FixedPointResult img = fixed_point_map(spec, state, ensemble, regression);
  GapReport g;
  g.residual = state_residual(ResidualBinning::build(ensemble, state.horizon(), bins), state, img.state);
  g.value = img.solution.value;
  g.value_band = img.solution.value_band;
  // Mixtures carry no drift field; their control's law is then rebuilt.
  const RewardEstimate j = state.weights.has_drift()
                               ? evaluate_reward(spec, state.flow, *state.control, state.weights)
                               : evaluate_reward(spec, state.flow, *state.control, ensemble, state.horizon());
  g.reward = j.value;
  g.reward_band = j.band;
  g.gap = g.value - g.reward;
  g.gap_band = std::sqrt(g.value_band * g.value_band + g.reward_band * g.reward_band);
  return g;
}

void write_residuals_csv(const EquilibriumReport& report, std::ostream& out) {
  out << "iter,tv_residual,w1_residual,V,theta\n" << std::setprecision(12);
  for (const auto& h : report.history) {
    out << h.iteration << "," << h.tv << "," << h.w1 << "," << h.value << "," << h.theta << "\n";
  }
}

void write_equilibrium_csv(const GameSpec& spec, const EquilibriumReport& report, std::ostream& out) {
  const MeasureWeights& w = report.state.weights;
  const PathEnsemble& e = *w.ensemble;
  out << "t,mean_x,mean_action,mean_y\n" << std::setprecision(12);
  for (int k = 0; k <= w.horizon; ++k) {
    double sw = 0.0, sx = 0.0, sa = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < e.paths; ++i) {
      const double wi = w.weight(i, k);
      sw += wi;
      sx += wi * e.state(i, k)[0];
      if (k < report.control.horizon) sa += wi * spec.actions.point(report.control.at(i, k))[0];
      if (k <= report.solution.horizon) sy += report.solution.y_at(i, k);
    }
    out << e.grid.time(k) << "," << sx / sw << "," << sa / sw << "," << sy / static_cast<double>(e.paths) << "\n";
  }
}

}  // namespace mfg
