#include "mfg/asymptotics_lab.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

namespace mfg {

namespace {

struct MeanBand {
  double mean = 0.0;
  double band = 0.0;
};

MeanBand mean_band(std::span<const double> v, bool enumerated) {
  MeanBand r;
  const double n = static_cast<double>(v.size());
  for (double x : v) r.mean += x;
  r.mean /= n;
  if (enumerated || v.size() < 2) return r;
  double var = 0.0;
  for (double x : v) var += (x - r.mean) * (x - r.mean);
  r.band = std::sqrt(var / (n - 1.0) / n);
  return r;
}

double squared_grid_spacing(const ActionSet& actions) {
  if (actions.is_box()) {
    if (actions.points_per_axis() < 2) return 0.0;
    double s = 0.0;
    for (const auto& [lo, hi] : actions.bounds()) {
      const double h = (hi - lo) / (actions.points_per_axis() - 1);
      s += h * h;
    }
    return s;
  }
  // Largest nearest-neighbour distance among the listed actions.
  double worst = 0.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < actions.size(); ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int c = 0; c < actions.dim(); ++c) {
        const double diff = actions.point(i)[c] - actions.point(j)[c];
        d2 += diff * diff;
      }
      best = std::min(best, d2);
    }
    if (std::isfinite(best)) worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace

EquilibriumReport solve_finite_mfg(const GameSpec& spec, const PathEnsemble& ensemble, double horizon_time,
                                   const EquilibriumConfig& config, const MeanFieldState* start) {
  const int k = ensemble.grid.index_of(horizon_time);
  if (k > ensemble.steps()) throw MfgError("finite horizon beyond the ensemble");
  return solve_equilibrium(spec, ensemble, k, config, start);
}

double epsilon_bound(double reward_bound, double discount, double horizon_time) {
  return 2.0 * reward_bound / discount * std::exp(-discount * horizon_time);
}

EpsilonGapReport epsilon_gap(const GameSpec& spec, const EquilibriumReport& infinite, double horizon_time,
                             const PathEnsemble& ensemble, const RegressionConfig& regression) {
  const int kt = ensemble.grid.index_of(horizon_time);
  if (kt < 1 || kt > infinite.control.horizon) throw MfgError("gap horizon outside the equilibrium horizon");
  if (infinite.input_flow.steps() < kt) throw MfgError("equilibrium report carries no interaction flow");
  const InteractionFlow flow = infinite.input_flow.truncated(kt);
  const ControlField alpha = infinite.control.truncated(kt);
  const BsdeSolution sol = solve_finite_horizon(spec, flow, ensemble, kt, regression);
  const MeasureWeights w = control_weights(spec, flow, alpha, ensemble);

  std::vector<double> per_path(ensemble.paths);
  parallel_chunks(ensemble.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    HamiltonianWorkspace ws(spec);
    for (std::size_t i = begin; i < end; ++i) {
      double s = 0.0;
      for (int k = 0; k < kt; ++k) {
        const double t = ensemble.grid.time(k);
        const HamiltonianMax h = ws.maximize(t, ensemble.view(i, k), flow.laws[k], sol.z_at(i, k));
        const double defect = h.value - ws.values()[alpha.at(i, k)];
        s += w.weight(i, k) * reward_weight(spec.discount, ensemble.grid.dt, k) * defect;
      }
      per_path[i] = s;
    }
  });
  const MeanBand d = mean_band(per_path, ensemble.enumerated);
  const RewardEstimate j = evaluate_reward(spec, flow, alpha, w);

  EpsilonGapReport r;
  r.horizon = ensemble.grid.time(kt);
  r.gap = d.mean;
  r.gap_band = d.band;
  r.value = sol.value;
  r.reward = j.value;
  r.raw_gap = sol.value - j.value;
  r.raw_band = std::sqrt(sol.value_band * sol.value_band + j.band * j.band);
  r.bound = epsilon_bound(spec.bounds.reward, spec.discount, r.horizon);
  r.within_bound = r.gap <= r.bound + 3.0 * r.gap_band;
  return r;
}

RateConstants RateConstants::from(const GameSpec& spec) {
  RateConstants c;
  c.reward_bound = spec.bounds.reward;
  c.concavity = spec.bounds.concavity;
  c.discount = spec.discount;
  c.lipschitz = spec.bounds.lipschitz;
  c.slack = spec.bounds.monotone_slack;
  c.action_bound = spec.bounds.action_norm;
  return c;
}

double RateConstants::denominator() const {
  return concavity * discount / (2.0 * lipschitz * lipschitz) - slack;
}

double RateConstants::entropy(double horizon_time, double t) const {
  return 2.0 * reward_bound * std::exp(-discount * (horizon_time - t)) / denominator();
}

double RateConstants::tv(double horizon_time, double t) const {
  return std::sqrt(reward_bound / (2.0 * denominator())) * std::exp(-0.5 * discount * (horizon_time - t));
}

double RateConstants::control(double horizon_time) const {
  return (1.0 + slack / denominator()) * 8.0 * reward_bound * std::exp(-discount * horizon_time) /
         (discount * concavity);
}

double RateConstants::w1(double horizon_time) const {
  const double lead = 8.0 / concavity + (action_bound * action_bound + 8.0 * slack / concavity) / denominator();
  return lead * reward_bound * std::exp(-discount * horizon_time) / discount;
}

ConcavityCheck strong_concavity_gap_check(std::span<const double> h, const ActionSet& actions, double m,
                                          std::size_t maximizer, double slack) {
  ConcavityCheck c;
  if (!(m > 0.0)) return c;
  if (h.size() != actions.size() || maximizer >= h.size()) throw MfgError("concavity check size mismatch");
  c.status = CheckStatus::pass;
  c.worst = -std::numeric_limits<double>::infinity();
  const auto star = actions.point(maximizer);
  for (std::size_t j = 0; j < h.size(); ++j) {
    double d2 = 0.0;
    for (int r = 0; r < actions.dim(); ++r) {
      const double diff = actions.point(j)[r] - star[r];
      d2 += diff * diff;
    }
    const double excess = d2 - 4.0 / m * (h[maximizer] - h[j]) - slack;
    c.worst = std::max(c.worst, excess);
    if (excess > 1e-12) ++c.violations;
  }
  c.samples = 1;
  if (c.violations > 0) c.status = CheckStatus::fail;
  return c;
}

ConcavityCheck concavity_scan(const GameSpec& spec, std::size_t samples, std::uint64_t seed) {
  ConcavityCheck total;
  const double m = spec.bounds.concavity;
  if (!(m > 0.0)) return total;
  const double slack = squared_grid_spacing(spec.actions);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ut(0.0, 10.0), ux(-4.0, 4.0), uz(-2.0, 2.0);
  HamiltonianWorkspace ws(spec);
  const int d = spec.dim();
  WeightedAtoms mu0;
  mu0.dim = d;
  mu0.atoms.resize(64 * static_cast<std::size_t>(d));
  mu0.masses.assign(64, 1.0 / 64.0);
  for (std::size_t j = 0; j < 64; ++j) spec.initial.sample(rng, {mu0.atoms.data() + j * d, static_cast<std::size_t>(d)});
  const LawSummary law = spec.model->summarize(0.0, mu0);
  std::vector<double> x(d), z(d);
  total.status = CheckStatus::pass;
  total.worst = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = ut(rng);
    for (int c = 0; c < d; ++c) {
      x[c] = ux(rng);
      z[c] = uz(rng);
    }
    const PathView v{x, d, 0};
    const HamiltonianMax hm = ws.maximize(t, v, law, z);
    const ConcavityCheck one = strong_concavity_gap_check(ws.values(), spec.actions, m, hm.index, slack);
    total.worst = std::max(total.worst, one.worst);
    total.violations += one.violations;
    ++total.samples;
  }
  if (total.violations > 0) total.status = CheckStatus::fail;
  return total;
}

bool RateAssumptions::applicable() const {
  return drift_law_free && concavity.status == CheckStatus::pass && monotonicity.status == CheckStatus::pass &&
         slack_below_threshold;
}

RateAssumptions check_rate_assumptions(const GameSpec& spec, std::uint64_t seed) {
  RateAssumptions a;
  a.drift_law_free = !spec.model->drift_depends_on_law();
  a.concavity = concavity_scan(spec, 200, seed);
  const std::vector<LawPair> pairs = sample_law_pairs(spec, 50, 200, 10.0, seed);
  a.monotonicity = check_monotonicity(spec, pairs);
  a.slack_below_threshold = RateConstants::from(spec).denominator() > 0.0;
  return a;
}

bool SweepReport::all_within() const {
  return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.within; });
}

double fit_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw MfgError("slope fit needs paired samples");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(y[i] > 0.0)) continue;
    const double ly = std::log(y[i]);
    sx += x[i];
    sy += ly;
    sxx += x[i] * x[i];
    sxy += x[i] * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double nn = static_cast<double>(n);
  const double den = nn * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (nn * sxy - sx * sy) / den;
}

SweepReport rate_sweep(const GameSpec& spec, const PathEnsemble& ensemble, const SweepConfig& config,
                       const EquilibriumReport* reference) {
  if (config.horizons.empty()) throw MfgError("sweep needs at least one horizon");
  SweepReport rep;
  rep.assumptions = check_rate_assumptions(spec);
  rep.applicable = rep.assumptions.applicable();
  if (!rep.applicable) rep.warnings.push_back("rate assumptions not verified; bounds are inapplicable");

  EquilibriumReport own;
  if (!reference) {
    own = solve_infinite_equilibrium(spec, ensemble, config.tol, config.equilibrium);
    reference = &own;
  }
  rep.reference_converged = reference->converged;
  rep.reference_horizon = ensemble.grid.time(reference->control.horizon);
  if (!reference->converged) rep.warnings.push_back("infinite-horizon reference did not converge");
  const MeasureWeights& winf = reference->state.weights;
  if (!winf.has_drift()) throw MfgError("reference state carries no drift field");

  const RateConstants rc = RateConstants::from(spec);
  const double dt = ensemble.grid.dt;
  for (double horizon_time : config.horizons) {
    const int kt = ensemble.grid.index_of(horizon_time);
    if (kt > reference->control.horizon) throw MfgError("sweep horizon beyond the reference horizon");
    const EquilibriumReport fin = solve_finite_mfg(spec, ensemble, horizon_time, config.equilibrium);
    rep.finite_residuals.push_back(fin.residual);
    if (!fin.converged) {
      rep.warnings.push_back("finite-horizon equilibrium at T=" + std::to_string(horizon_time) + " did not converge");
    }
    const MeasureWeights& wt = fin.state.weights;

    std::vector<double> ctrl(ensemble.paths);
    parallel_chunks(ensemble.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
      for (std::size_t i = begin; i < end; ++i) {
        double s = 0.0;
        for (int k = 0; k < kt; ++k) {
          const auto a = spec.actions.point(reference->control.at(i, k));
          const auto b = spec.actions.point(fin.control.at(i, k));
          double d2 = 0.0;
          for (int c = 0; c < spec.actions.dim(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
          s += std::exp(-spec.discount * ensemble.grid.time(k)) * dt * d2 * (winf.weight(i, k) + wt.weight(i, k));
        }
        ctrl[i] = s;
      }
    });
    const MeanBand cd = mean_band(ctrl, ensemble.enumerated);
    double w1q = 0.0;
    for (int k = 0; k < kt; ++k) {
      const double w = w1_actions(reference->state.flow.action_laws[k], fin.state.flow.action_laws[k]);
      w1q += std::exp(-spec.discount * ensemble.grid.time(k)) * dt * w * w;
    }

    for (double t : config.t_slices) {
      if (t > horizon_time + 1e-12) continue;
      const int ks = ensemble.grid.index_of(t);
      SweepRow row;
      row.horizon = ensemble.grid.time(kt);
      row.t = ensemble.grid.time(ks);
      const EntropyEstimate ab = relative_entropy_paths(wt, winf, ks);
      const EntropyEstimate ba = relative_entropy_paths(winf, wt, ks);
      row.entropy = ab.girsanov + ba.girsanov;
      row.entropy_band = std::hypot(ab.girsanov_band, ba.girsanov_band);
      row.entropy_direct = ab.direct + ba.direct;
      row.entropy_direct_band = std::hypot(ab.direct_band, ba.direct_band);
      const TvEstimate tv = tv_paths(wt, winf, ks);
      row.tv = tv.value;
      row.tv_band = tv.band;
      row.control = cd.mean;
      row.control_band = cd.band;
      row.w1q = w1q;
      row.converged = fin.converged && reference->converged;
      if (rc.denominator() > 0.0 && rc.concavity > 0.0) {
        row.entropy_bound = rc.entropy(row.horizon, row.t);
        row.tv_bound = rc.tv(row.horizon, row.t);
        row.control_bound = rc.control(row.horizon);
        row.w1q_bound = rc.w1(row.horizon);
        row.within = row.entropy <= row.entropy_bound + 3.0 * row.entropy_band &&
                     row.tv <= row.tv_bound + 3.0 * row.tv_band &&
                     row.control <= row.control_bound + 3.0 * row.control_band && row.w1q <= row.w1q_bound;
      } else {
        row.entropy_bound = row.tv_bound = row.control_bound = row.w1q_bound =
            std::numeric_limits<double>::quiet_NaN();
      }
      rep.rows.push_back(row);
    }
  }

  std::vector<double> slices;
  for (const auto& r : rep.rows) {
    if (std::none_of(slices.begin(), slices.end(), [&](double s) { return std::abs(s - r.t) < 1e-12; })) {
      slices.push_back(r.t);
    }
  }
  for (double t : slices) {
    std::vector<double> x, tv, h;
    for (const auto& r : rep.rows) {
      if (std::abs(r.t - t) > 1e-12) continue;
      x.push_back(r.horizon - r.t);
      tv.push_back(r.tv);
      h.push_back(r.entropy);
    }
    rep.slopes.push_back({t, fit_log_slope(x, tv), fit_log_slope(x, h), x.size()});
  }
  return rep;
}

void write_sweep_csv(const SweepReport& report, std::ostream& out) {
  out << "T,t,entropy_sym,entropy_bound,tv,tv_bound,ctrl_dist,ctrl_bound,w1q,w1q_bound,"
         "entropy_band,entropy_direct,entropy_direct_band,tv_band,ctrl_band,converged,within\n"
      << std::setprecision(12);
  for (const auto& r : report.rows) {
    out << r.horizon << "," << r.t << "," << r.entropy << "," << r.entropy_bound << "," << r.tv << "," << r.tv_bound
        << "," << r.control << "," << r.control_bound << "," << r.w1q << "," << r.w1q_bound << "," << r.entropy_band
        << "," << r.entropy_direct << "," << r.entropy_direct_band << "," << r.tv_band << "," << r.control_band << ","
        << (r.converged ? 1 : 0) << "," << (r.within ? 1 : 0) << "\n";
  }
}

}  // namespace mfg
