#include "mfg/control_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace mfg {

ControlField ControlField::truncated(int k) const {
  if (k < 0 || k > horizon) throw MfgError("control truncation beyond its horizon");
  ControlField c;
  c.paths = paths;
  c.horizon = k;
  c.index.resize(paths * k);
  for (std::size_t i = 0; i < paths; ++i) {
    std::copy_n(index.begin() + i * horizon, k, c.index.begin() + i * k);
  }
  return c;
}

ControlField ControlField::constant(std::size_t paths, int horizon, std::uint32_t action) {
  ControlField c;
  c.paths = paths;
  c.horizon = horizon;
  c.index.assign(paths * horizon, action);
  return c;
}

ControlField extract_optimal_control(const GameSpec& spec, const InteractionFlow& flow, const BsdeSolution& solution,
                                     const PathEnsemble& ensemble) {
  if (solution.paths != ensemble.paths || solution.horizon > ensemble.steps() ||
      std::abs(solution.dt - ensemble.grid.dt) > 1e-15) {
    throw MfgError("BSDE solution grid does not match the ensemble");
  }
  ControlField c;
  c.paths = solution.paths;
  c.horizon = solution.horizon;
  c.index.resize(c.paths * c.horizon);
  parallel_chunks(c.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    HamiltonianWorkspace ws(spec);
    for (std::size_t i = begin; i < end; ++i) {
      for (int k = 0; k < c.horizon; ++k) {
        const auto h = ws.maximize(ensemble.grid.time(k), ensemble.view(i, k), flow.laws[k], solution.z_at(i, k));
        c.index[i * c.horizon + k] = static_cast<std::uint32_t>(h.index);
      }
    }
  });
  return c;
}

std::vector<double> control_drift(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                                  const PathEnsemble& ensemble) {
  if (control.paths != ensemble.paths || control.horizon > ensemble.steps()) {
    throw MfgError("control does not match the ensemble");
  }
  if (flow.steps() < control.horizon) throw MfgError("interaction flow shorter than the control");
  const int d = ensemble.dim;
  const int kt = control.horizon;
  std::vector<double> beta(control.paths * kt * d);
  parallel_chunks(control.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<double> inv(static_cast<std::size_t>(d) * d), b(d);
    for (std::size_t i = begin; i < end; ++i) {
      for (int k = 0; k < kt; ++k) {
        const double t = ensemble.grid.time(k);
        const PathView v = ensemble.view(i, k);
        inverse_volatility(spec, t, v, inv);
        spec.model->drift(t, v, flow.laws[k], spec.actions.point(control.at(i, k)), b);
        for (int r = 0; r < d; ++r) {
          double s = 0.0;
          for (int c = 0; c < d; ++c) s += inv[r * d + c] * b[c];
          beta[(i * kt + k) * d + r] = s;
        }
      }
    }
  });
  return beta;
}

MeasureWeights control_weights(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const PathEnsemble& ensemble) {
  return girsanov_weights(ensemble, control_drift(spec, flow, control, ensemble), control.horizon,
                          spec.bounds.drift);
}

std::vector<ActionLaw> action_flow(const GameSpec& spec, const ControlField& control, const MeasureWeights& weights) {
  if (weights.horizon < control.horizon) throw MfgError("weights shorter than the control");
  std::vector<ActionLaw> out;
  out.reserve(control.horizon);
  const std::size_t na = spec.actions.size();
  for (int k = 0; k < control.horizon; ++k) {
    ActionLaw q = spec.actions.uniform_law();
    std::fill(q.masses.begin(), q.masses.end(), 0.0);
    std::vector<std::vector<double>> partial(chunk_count(control.paths), std::vector<double>(na, 0.0));
    double hi = -INFINITY;
    for (std::size_t i = 0; i < control.paths; ++i) hi = std::max(hi, weights.log_weight(i, k));
    parallel_chunks(control.paths, [&](std::size_t begin, std::size_t end, std::size_t c) {
      for (std::size_t i = begin; i < end; ++i) partial[c][control.at(i, k)] += std::exp(weights.log_weight(i, k) - hi);
    });
    for (const auto& p : partial)
      for (std::size_t j = 0; j < na; ++j) q.masses[j] += p[j];
    q.normalize();
    out.push_back(std::move(q));
  }
  return out;
}

double reward_weight(double discount, double dt, int k) {
  return std::exp(-discount * k * dt) * (-std::expm1(-discount * dt)) / discount;
}

RewardEstimate evaluate_reward(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const MeasureWeights& weights) {
  const PathEnsemble& e = *weights.ensemble;
  const int kt = control.horizon;
  if (weights.horizon != kt) throw MfgError("weight horizon does not match the control horizon");
  if (flow.steps() < kt) throw MfgError("interaction flow shorter than the control");
  std::vector<double> f2(kt), omega(kt);
  for (int k = 0; k < kt; ++k) {
    f2[k] = spec.model->reward_interaction(e.grid.time(k), flow.laws[k], flow.action_laws[k]);
    omega[k] = reward_weight(spec.discount, e.grid.dt, k);
  }
  std::vector<double> per_path(control.paths);
  parallel_chunks(control.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    const auto& m = *spec.model;
    for (std::size_t i = begin; i < end; ++i) {
      double s = 0.0;
      for (int k = 0; k < kt; ++k) {
        const double t = e.grid.time(k);
        const PathView v = e.view(i, k);
        const double f =
            m.reward_state(t, v, flow.laws[k]) + f2[k] + m.reward_action(t, v, spec.actions.point(control.at(i, k)));
        s += weights.weight(i, k) * omega[k] * f;
      }
      per_path[i] = s;
    }
  });
  RewardEstimate r;
  double sum = 0.0;
  for (double v : per_path) sum += v;
  r.value = sum / static_cast<double>(control.paths);
  double var = 0.0;
  for (double v : per_path) var += (v - r.value) * (v - r.value);
  var /= static_cast<double>(std::max<std::size_t>(1, control.paths - 1));
  r.band = std::sqrt(var / static_cast<double>(control.paths));
  if (e.enumerated) r.band = 0.0;
  return r;
}

RewardEstimate evaluate_reward(const GameSpec& spec, const InteractionFlow& flow, const ControlField& control,
                               const PathEnsemble& ensemble, int horizon) {
  if (horizon > control.horizon) throw MfgError("control shorter than the reward horizon");
  const ControlField c = horizon == control.horizon ? control : control.truncated(horizon);
  const MeasureWeights w = control_weights(spec, flow, c, ensemble);
  return evaluate_reward(spec, flow, c, w);
}

ValueEstimate value(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble, double tol,
                    const RegressionConfig& regression) {
  ValueEstimate v;
  v.solution = solve_infinite_horizon(spec, flow, ensemble, tol, regression);
  v.value = v.solution.value;
  v.band = v.solution.value_band;
  v.certificate = *v.solution.certificate;
  return v;
}

double FeedbackPolicy::action_at(double x) const {
  const auto j = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), x) - edges.begin());
  return actions[std::min(j, actions.size() - 1)];
}

double FeedbackPolicy::total_variation() const {
  double s = 0.0;
  for (std::size_t j = 1; j < actions.size(); ++j) s += std::abs(actions[j] - actions[j - 1]);
  return s;
}

FeedbackPolicy FeedbackPolicy::constant(double a) {
  FeedbackPolicy p;
  p.actions = {a};
  return p;
}

FeedbackPolicy fit_feedback(const GameSpec& spec, const ControlField& control, const PathEnsemble& ensemble,
                            const MeasureWeights* weights, const FeedbackConfig& config) {
  if (!spec.model->time_homogeneous()) throw MfgError("feedback fitting needs time-homogeneous coefficients");
  if (spec.dim() != 1 || spec.actions.dim() != 1) throw MfgError("feedback fitting is one-dimensional");
  if (config.bins < 1) throw MfgError("feedback fitting needs at least one bin");
  const int kmax = config.max_step < 0 ? control.horizon : std::min(config.max_step, control.horizon);
  if (kmax < 1) throw MfgError("feedback fitting needs at least one step");
  if (weights && weights->horizon < kmax - 1) throw MfgError("weights shorter than the fitted control");
  const std::size_t n = control.paths;
  std::vector<double> xs;
  xs.reserve(n * kmax);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < kmax; ++k) xs.push_back(ensemble.state(i, k)[0]);
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  FeedbackPolicy p;
  for (std::size_t j = 1; j < config.bins; ++j) {
    const double e = sorted[(j * sorted.size()) / config.bins];
    if (p.edges.empty() || e > p.edges.back()) p.edges.push_back(e);
  }
  const std::size_t nb = p.edges.size() + 1;
  std::vector<double> num(nb, 0.0), den(nb, 0.0);
  std::vector<std::size_t> bin(xs.size());
  std::vector<double> wts(xs.size(), 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < kmax; ++k) {
      const std::size_t r = i * kmax + k;
      bin[r] = static_cast<std::size_t>(std::lower_bound(p.edges.begin(), p.edges.end(), xs[r]) - p.edges.begin());
      if (weights) wts[r] = weights->weight(i, k);
      num[bin[r]] += wts[r] * spec.actions.point(control.at(i, k))[0];
      den[bin[r]] += wts[r];
    }
  }
  p.actions.resize(nb);
  for (std::size_t j = 0; j < nb; ++j) p.actions[j] = den[j] > 0.0 ? num[j] / den[j] : 0.0;
  // Empty bins inherit the nearest populated neighbour.
  for (std::size_t j = 0; j < nb; ++j) {
    if (den[j] > 0.0) continue;
    for (std::size_t off = 1; off < nb; ++off) {
      if (j >= off && den[j - off] > 0.0) {
        p.actions[j] = p.actions[j - off];
        break;
      }
      if (j + off < nb && den[j + off] > 0.0) {
        p.actions[j] = p.actions[j + off];
        break;
      }
    }
  }
  double tol = config.tolerance;
  if (tol < 0.0) {
    if (spec.actions.is_box() && spec.actions.points_per_axis() > 1) {
      const auto [lo, hi] = spec.actions.bounds()[0];
      tol = (hi - lo) / (spec.actions.points_per_axis() - 1);
    } else {
      tol = 1e-9;
    }
  }
  double bad = 0.0, total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < kmax; ++k) {
      const std::size_t r = i * kmax + k;
      total += wts[r];
      if (std::abs(spec.actions.point(control.at(i, k))[0] - p.actions[bin[r]]) > tol + 1e-12) bad += wts[r];
    }
  }
  p.disagreement = total > 0.0 ? bad / total : 0.0;
  return p;
}

void write_policy_csv(const FeedbackPolicy& p, std::ostream& out) {
  out << "bin_low,bin_high,action\n" << std::setprecision(12);
  for (std::size_t j = 0; j < p.actions.size(); ++j) {
    out << (j == 0 ? -INFINITY : p.edges[j - 1]) << "," << (j < p.edges.size() ? p.edges[j] : INFINITY) << ","
        << p.actions[j] << "\n";
  }
}

}  // namespace mfg
