#include "mfg/stationary_solver.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

namespace mfg {

namespace {

double frobenius(std::span<const double> m) {
  double s = 0.0;
  for (double v : m) s += v * v;
  return std::sqrt(s);
}

std::vector<double> normalized(std::vector<double> m) {
  double s = 0.0;
  for (double v : m) s += v;
  if (s > 0.0)
    for (double& v : m) v /= s;
  return m;
}

int steps_for(double horizon_time, double dt) {
  const double r = horizon_time / dt;
  const int k = static_cast<int>(std::llround(r));
  if (k < 1 || std::abs(r - k) > 1e-6 * std::max(1.0, r)) throw MfgError("horizon is not a multiple of dt");
  return k;
}

WeightedAtoms sample_initial(const InitialLaw& law, std::size_t n, std::uint64_t seed) {
  WeightedAtoms w;
  w.dim = law.dim();
  w.atoms.resize(n * w.dim);
  w.masses.assign(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng = path_rng(seed, i, 0x696eu);
    law.sample(rng, {w.atoms.data() + i * w.dim, static_cast<std::size_t>(w.dim)});
  }
  return w;
}

/// Inverse-CDF draws from weighted 1-D atoms.
class AtomSampler {
 public:
  explicit AtomSampler(const WeightedAtoms& atoms) : atoms_(&atoms), cdf_(atoms.size()) {
    double s = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) cdf_[j] = (s += atoms.masses[j]);
    if (!(s > 0.0)) throw MfgError("initial law has no mass");
  }
  double draw(std::mt19937_64& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
    const auto j = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    return atoms_->atoms[std::min(j, cdf_.size() - 1)];
  }

 private:
  const WeightedAtoms* atoms_;
  std::vector<double> cdf_;
};

/// One-dimensional Euler stepper of dX = b(X, mu, pi(X)) dt + sigma(X) dW.
class Stepper {
 public:
  Stepper(const GameSpec& spec, const LawSummary& law, const FeedbackPolicy& policy, double dt)
      : spec_(&spec), law_(&law), policy_(&policy), dt_(dt), sqdt_(std::sqrt(dt)) {}

  double step(double x, double noise) const {
    double b = 0.0, s = 0.0, a = policy_->action_at(x);
    const PathView v{{&x, 1}, 1, 0};
    spec_->model->drift(0.0, v, *law_, {&a, 1}, {&b, 1});
    spec_->model->volatility(0.0, v, {&s, 1});
    return x + b * dt_ + s * sqdt_ * noise;
  }

 private:
  const GameSpec* spec_;
  const LawSummary* law_;
  const FeedbackPolicy* policy_;
  double dt_;
  double sqdt_;
};

void require_scalar_markov(const GameSpec& spec) {
  if (spec.dim() != 1) throw MfgError("stationary simulation is one-dimensional");
  if (!spec.model->time_homogeneous()) throw MfgError("stationary games need time-homogeneous coefficients");
  if (!spec.model->markovian()) throw MfgError("stationary games need coefficients of the current state only");
}

}  // namespace

DriftConditionReport check_drift_condition(const GameSpec& spec, const DriftCheckConfig& config) {
  DriftConditionReport r;
  if (!spec.ergodic) return r;
  const ErgodicParams& e = *spec.ergodic;
  const int d = spec.dim();
  r.required = e.drift_margin;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss;

  std::vector<std::vector<double>> dirs;
  for (int c = 0; c < d; ++c) {
    for (double sgn : {1.0, -1.0}) {
      std::vector<double> u(d, 0.0);
      u[c] = sgn;
      dirs.push_back(u);
    }
  }
  if (d > 1) {
    for (std::size_t j = 0; j < config.directions; ++j) {
      std::vector<double> u(d);
      for (double& v : u) v = gauss(rng);
      const double n = norm(u);
      for (double& v : u) v /= n;
      dirs.push_back(u);
    }
  }
  std::vector<LawSummary> laws;
  const std::size_t nl = std::max<std::size_t>(1, config.laws);
  for (std::size_t j = 0; j < nl; ++j) {
    const double m = nl == 1 ? 0.0 : -2.0 * e.outer_radius + 4.0 * e.outer_radius * j / (nl - 1);
    WeightedAtoms w;
    w.dim = d;
    w.atoms.assign(d, 0.0);
    w.atoms[0] = m;
    w.masses = {1.0};
    laws.push_back(spec.model->summarize(0.0, w));
  }

  const double r_hi = config.probe_factor * e.outer_radius;
  const std::size_t nr = std::max<std::size_t>(2, config.radii);
  std::vector<double> x(d), b(d), sig(static_cast<std::size_t>(d) * d), inv(static_cast<std::size_t>(d) * d);
  r.margin = std::numeric_limits<double>::infinity();
  for (std::size_t ir = 0; ir < nr; ++ir) {
    const double rad = e.inner_radius + (r_hi - e.inner_radius) * ir / (nr - 1);
    for (const auto& u : dirs) {
      for (int c = 0; c < d; ++c) x[c] = rad * u[c];
      const PathView v{x, d, 0};
      spec.model->volatility(0.0, v, sig);
      double tr = 0.0;
      for (double s : sig) tr += s * s;
      for (const auto& law : laws) {
        for (std::size_t j = 0; j < spec.actions.size(); ++j) {
          spec.model->drift(0.0, v, law, spec.actions.point(j), b);
          const double m = -(dot(x, b) + 0.5 * tr);
          ++r.samples;
          if (m < r.margin) {
            r.margin = m;
            const auto a = spec.actions.point(j);
            r.witness = Witness{0.0, 0, x, {a.begin(), a.end()}, m};
          }
        }
      }
    }
  }
  r.status = r.margin >= e.drift_margin ? CheckStatus::pass : CheckStatus::fail;
  if (r.status == CheckStatus::pass) r.witness.reset();

  // Local bound on the ball of radius R.
  for (std::size_t ir = 0; ir < nr; ++ir) {
    const double rad = e.outer_radius * ir / (nr - 1);
    for (const auto& u : dirs) {
      for (int c = 0; c < d; ++c) x[c] = rad * u[c];
      const PathView v{x, d, 0};
      spec.model->volatility(0.0, v, sig);
      inverse_volatility(spec, 0.0, v, inv);
      r.local_sup = std::max({r.local_sup, frobenius(sig), frobenius(inv)});
      for (const auto& law : laws) {
        for (std::size_t j = 0; j < spec.actions.size(); ++j) {
          spec.model->drift(0.0, v, law, spec.actions.point(j), b);
          r.local_sup = std::max(r.local_sup, norm(b));
        }
      }
    }
  }
  r.local_status = r.local_sup <= e.local_bound * (1.0 + 1e-9) ? CheckStatus::pass : CheckStatus::fail;
  return r;
}

WeightedAtoms cesaro_average(std::span<const WeightedAtoms> flow, double dt, double horizon_time) {
  const int k = steps_for(horizon_time, dt);
  if (static_cast<int>(flow.size()) < k + 1) throw MfgError("marginal flow shorter than the averaging horizon");
  WeightedAtoms out;
  out.dim = flow[0].dim;
  for (int j = 0; j <= k; ++j) {
    const WeightedAtoms& m = flow[j];
    if (m.dim != out.dim) throw MfgError("marginal flow mixes dimensions");
    const double wt = (j == 0 || j == k ? 0.5 : 1.0) * dt / horizon_time;
    const double total = m.total_mass();
    if (!(total > 0.0)) throw MfgError("marginal with no mass");
    out.atoms.insert(out.atoms.end(), m.atoms.begin(), m.atoms.end());
    for (double v : m.masses) out.masses.push_back(wt * v / total);
  }
  return out;
}

std::vector<double> cesaro_operator(std::span<const WeightedAtoms> flow, double dt, double horizon_time,
                                    const Binning& binning) {
  return normalized(binning.masses(cesaro_average(flow, dt, horizon_time)));
}

double tv_noise_band(std::span<const double> masses, double n1, double n2) {
  double s = 0.0;
  for (double p : masses) s += std::sqrt(std::max(0.0, p * (1.0 - p)) * (1.0 / n1 + 1.0 / n2));
  return 0.5 * std::sqrt(2.0 / std::numbers::pi) * s;
}

double mirror_tv(const Binning& binning, std::span<const double> masses) {
  const auto& e = binning.edges;
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (std::abs(e[j] + e[e.size() - 1 - j]) > 1e-9) throw MfgError("mirror TV needs a symmetric binning");
  }
  std::vector<double> rev(masses.rbegin(), masses.rend());
  return tv_masses(masses, rev);
}

StationaryEstimate estimate_stationary(const GameSpec& spec, const LawSummary& law, const FeedbackPolicy& policy,
                                       const StationaryConfig& config) {
  require_scalar_markov(spec);
  const DriftConditionReport drift = check_drift_condition(spec);
  if (drift.status != CheckStatus::pass) {
    throw MfgError("drift condition failed: margin " + std::to_string(drift.margin) + " below k");
  }
  if (config.paths < 2) throw MfgError("stationary estimate needs at least two paths");
  const int kt = steps_for(config.horizon, config.dt);
  std::vector<int> marks;
  for (double c : config.checkpoints) {
    if (c > config.horizon + 1e-12) throw MfgError("checkpoint beyond the averaging horizon");
    marks.push_back(steps_for(c, config.dt));
  }
  marks.push_back(kt);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  const std::size_t nm = marks.size();
  const std::size_t nb = config.binning.bins();
  const std::size_t n = config.paths;

  const WeightedAtoms init = config.initial ? *config.initial : sample_initial(spec.initial, n, config.seed);
  if (init.dim != 1) throw MfgError("stationary initial law must be one-dimensional");
  const AtomSampler sampler(init);
  const Stepper stepper(spec, law, policy, config.dt);

  // Per chunk, per checkpoint: bin integrals and moment integrals.
  const std::size_t nc = chunk_count(n);
  std::vector<std::vector<double>> bins(nc, std::vector<double>(nm * nb, 0.0));
  std::vector<std::vector<double>> moments(nc, std::vector<double>(nm * 2, 0.0));
  std::vector<double> path_x(n), path_x2(n), sample(n);
  parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t c) {
    std::vector<double> run(nb);
    std::normal_distribution<double> gauss;
    for (std::size_t i = begin; i < end; ++i) {
      std::mt19937_64 rng = path_rng(config.seed, i, 0x7374u);
      const int pick = std::uniform_int_distribution<int>(0, kt)(rng);
      double x = sampler.draw(rng);
      std::fill(run.begin(), run.end(), 0.0);
      double sx = 0.0, sx2 = 0.0;
      std::size_t next = 0;
      for (int k = 0; k <= kt; ++k) {
        if (k == pick) sample[i] = x;
        const std::size_t b = config.binning.bin_of(x);
        const double half = 0.5 * config.dt;
        if (k == marks[next]) {
          double* out = bins[c].data() + next * nb;
          for (std::size_t j = 0; j < nb; ++j) out[j] += run[j];
          out[b] += (k == 0 ? 0.0 : half);
          moments[c][next * 2] += sx + (k == 0 ? 0.0 : half * x);
          moments[c][next * 2 + 1] += sx2 + (k == 0 ? 0.0 : half * x * x);
          if (k == kt) {
            path_x[i] = (sx + half * x) / config.horizon;
            path_x2[i] = (sx2 + half * x * x) / config.horizon;
          }
          ++next;
        }
        const double w = k == 0 ? half : config.dt;
        run[b] += w;
        sx += w * x;
        sx2 += w * x * x;
        if (k < kt) x = stepper.step(x, gauss(rng));
      }
    }
  });

  StationaryEstimate est;
  est.binning = config.binning;
  est.horizon = config.dt * kt;
  for (std::size_t m = 0; m < nm; ++m) {
    CesaroCheckpoint cp;
    cp.horizon = config.dt * marks[m];
    cp.masses.assign(nb, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t j = 0; j < nb; ++j) cp.masses[j] += bins[c][m * nb + j];
      cp.mean += moments[c][m * 2];
      cp.second_moment += moments[c][m * 2 + 1];
    }
    cp.masses = normalized(std::move(cp.masses));
    cp.mean /= cp.horizon * static_cast<double>(n);
    cp.second_moment /= cp.horizon * static_cast<double>(n);
    est.checkpoints.push_back(std::move(cp));
  }
  const CesaroCheckpoint& last = est.checkpoints.back();
  est.masses = last.masses;
  est.mean = last.mean;
  est.second_moment = last.second_moment;
  auto band = [n](const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(n - 1) / static_cast<double>(n));
  };
  est.mean_band = band(path_x, est.mean);
  est.second_moment_band = band(path_x2, est.second_moment);

  double gsum = 0.0;
  std::size_t gcount = 0;
  for (std::size_t a = 0; a < nm; ++a) {
    for (std::size_t b = a + 1; b < nm; ++b) {
      if (marks[b] != 2 * marks[a]) continue;
      gsum += 2.0 * est.checkpoints[a].horizon * tv_masses(est.checkpoints[a].masses, est.checkpoints[b].masses);
      ++gcount;
      if (marks[b] == kt) est.cesaro_residual = tv_masses(est.checkpoints[a].masses, est.masses);
    }
  }
  est.gamma_hat = gcount ? gsum / static_cast<double>(gcount) : 0.0;
  est.certificate = est.gamma_hat / est.horizon;
  est.noise_band = tv_noise_band(est.masses, static_cast<double>(n), static_cast<double>(n));
  est.sample.dim = 1;
  est.sample.atoms = std::move(sample);
  est.sample.masses.assign(n, 1.0 / static_cast<double>(n));
  return est;
}

StationaryMfgReport solve_stationary_mfg(const GameSpec& spec, const StationaryMfgConfig& config,
                                         const WeightedAtoms* start) {
  require_scalar_markov(spec);
  if (config.max_outer < 1) throw MfgError("max_outer must be at least 1");
  StationaryMfgReport rep;
  const Binning& binning = config.stationary.binning;
  WeightedAtoms current =
      start ? *start : sample_initial(spec.initial, config.stationary.paths, config.stationary.seed);
  std::vector<double> prev = normalized(binning.masses(current));
  const bool reads_law = spec.model->control_depends_on_law() || spec.model->drift_depends_on_law();
  const TruncationCertificate cert0 =
      truncation_certificate(spec, config.value_tol, TimeGrid{config.control_dt, 1 << 30});
  const int kc = steps_for(cert0.t_required, config.control_dt);

  for (int it = 0; it < config.max_outer; ++it) {
    const LawSummary law = spec.model->summarize(0.0, current);
    GameSpec local = spec;
    local.initial = InitialLaw::empirical(current);
    const PathEnsemble ens = simulate_ensemble(local, config.control_paths, kc, kc * config.control_dt,
                                               config.stationary.seed + 7919u * (it + 1));
    const InteractionFlow flow = InteractionFlow::constant(law, spec.actions.uniform_law(), kc);
    const BsdeSolution sol = solve_infinite_horizon(local, flow, ens, config.value_tol, config.regression);
    ControlField control;
    control.paths = sol.paths;
    control.horizon = sol.horizon;
    control.index = sol.maximizer;
    FeedbackConfig fc = config.feedback;
    if (fc.max_step < 0) fc.max_step = std::max(1, kc / 2);
    FeedbackPolicy policy = fit_feedback(local, control, ens, nullptr, fc);
    policy.fitted_iteration = it;

    StationaryConfig sc = config.stationary;
    sc.initial = current;
    sc.seed = config.stationary.seed + 104729u * (it + 1);
    StationaryEstimate est = estimate_stationary(spec, law, policy, sc);
    const double tv = tv_masses(est.masses, prev);
    rep.history.push_back({it, tv, est.mean, sol.value, policy.disagreement});
    rep.value = sol.value;
    rep.certificate = *sol.certificate;
    rep.law = law;
    rep.policy = std::move(policy);
    prev = est.masses;
    current = est.sample;
    rep.estimate = std::move(est);
    // A law-free game maps every law to the same image, so one pass is exact.
    if (!reads_law) {
      rep.converged = true;
      rep.residual = 0.0;
      break;
    }
    rep.residual = tv;
    if (it > 0 && tv < config.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.law = spec.model->summarize(0.0, rep.estimate.sample);
  if (!rep.converged) rep.warnings.push_back("stationary outer iteration did not converge");
  return rep;
}

std::vector<InvarianceTracePoint> invariance_trace(const GameSpec& spec, const LawSummary& law,
                                                   const FeedbackPolicy& policy, const WeightedAtoms& initial,
                                                   const std::vector<double>& reference, const Binning& binning,
                                                   const StationaryConfig& sim, const InvarianceConfig& config) {
  require_scalar_markov(spec);
  if (reference.size() != binning.bins()) throw MfgError("reference masses do not match the binning");
  const int kt = steps_for(config.check_horizon, sim.dt);
  const int every = steps_for(config.trace_every, sim.dt);
  const std::size_t np = static_cast<std::size_t>(kt / every) + 1;
  const std::size_t nb = binning.bins();
  const std::size_t n = sim.paths;
  const AtomSampler sampler(initial);
  const Stepper stepper(spec, law, policy, sim.dt);
  std::vector<std::vector<double>> bins(chunk_count(n), std::vector<double>(np * nb, 0.0));
  parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t c) {
    std::normal_distribution<double> gauss;
    for (std::size_t i = begin; i < end; ++i) {
      std::mt19937_64 rng = path_rng(sim.seed, i, 0x6976u);
      double x = sampler.draw(rng);
      for (int k = 0; k <= kt; ++k) {
        if (k % every == 0) bins[c][(k / every) * nb + binning.bin_of(x)] += 1.0;
        if (k < kt) x = stepper.step(x, gauss(rng));
      }
    }
  });
  std::vector<InvarianceTracePoint> trace;
  for (std::size_t p = 0; p < np; ++p) {
    std::vector<double> m(nb, 0.0);
    for (const auto& b : bins)
      for (std::size_t j = 0; j < nb; ++j) m[j] += b[p * nb + j];
    trace.push_back({p * every * sim.dt, tv_masses(m, reference)});
  }
  return trace;
}

InvariantMfgReport solve_invariant_mfg(const GameSpec& spec, const StationaryMfgConfig& config,
                                       const InvarianceConfig& invariance) {
  InvariantMfgReport rep;
  rep.stationary = solve_stationary_mfg(spec, config);
  const StationaryEstimate& est = rep.stationary.estimate;
  StationaryConfig sim = config.stationary;
  sim.seed = config.stationary.seed + 15485863u;
  rep.trace = invariance_trace(spec, rep.stationary.law, rep.stationary.policy, est.sample, est.masses, est.binning,
                               sim, invariance);
  for (const auto& p : rep.trace) rep.max_tv = std::max(rep.max_tv, p.tv);
  const double n = static_cast<double>(sim.paths);
  rep.band = tv_noise_band(est.masses, n, n);
  rep.mirror_tv = mirror_tv(est.binning, est.masses);
  rep.invariant = rep.stationary.converged && rep.max_tv < invariance.tol + rep.band;
  return rep;
}

double doeblin_xi(double outer, double inner, double local_bound, int dim) {
  return (outer * outer - inner * inner) / (2.0 * outer * local_bound + dim * local_bound * local_bound);
}

DoeblinReport doeblin_chain_diagnostic(const GameSpec& spec, const LawSummary& law, const FeedbackPolicy& policy,
                                       const DoeblinConfig& config) {
  require_scalar_markov(spec);
  if (!spec.ergodic) throw MfgError("Doeblin diagnostic needs ergodic parameters");
  const ErgodicParams& e = *spec.ergodic;
  const double big = e.outer_radius, small = e.inner_radius;
  DoeblinReport rep;
  rep.xi = doeblin_xi(big, small, e.local_bound, 1);
  const std::vector<double> starts{-big, big};
  const std::size_t per_start = std::max<std::size_t>(1, config.cycles / starts.size());
  const std::size_t total = per_start * starts.size();
  const Stepper stepper(spec, law, policy, config.dt);
  std::vector<double> length(total, -1.0);
  std::vector<int> exit_side(total, -1);
  const double budget = config.max_time / static_cast<double>(per_start);
  parallel_for(total, [&](std::size_t c) {
    std::mt19937_64 rng = path_rng(config.seed, c, 0x6462u);
    std::normal_distribution<double> gauss;
    double x = starts[c / per_start], t = 0.0;
    bool inside = false;
    while (t < budget) {
      x = stepper.step(x, gauss(rng));
      t += config.dt;
      if (!inside) {
        inside = std::abs(x) <= small;
      } else if (std::abs(x) >= big) {
        length[c] = t;
        exit_side[c] = x > 0.0 ? 1 : 0;
        return;
      }
    }
  });
  const std::size_t nbins = std::max<std::size_t>(2, config.exit_bins);
  rep.exit_histograms.assign(starts.size(), std::vector<double>(nbins, 0.0));
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t c = 0; c < total; ++c) {
    if (length[c] < 0.0) continue;
    ++rep.completed;
    sum += length[c];
    sum2 += length[c] * length[c];
    const std::size_t bin = exit_side[c] == 1 ? nbins - 1 : 0;
    rep.exit_histograms[c / per_start][bin] += 1.0;
  }
  if (rep.completed == 0) {
    rep.flagged = true;
    rep.note = "no cycle completed within the time budget";
    return rep;
  }
  const double m = static_cast<double>(rep.completed);
  rep.mean_cycle = sum / m;
  rep.cycle_band = rep.completed > 1 ? std::sqrt(std::max(0.0, sum2 / m - rep.mean_cycle * rep.mean_cycle) / (m - 1.0))
                                     : 0.0;
  for (auto& h : rep.exit_histograms) h = normalized(std::move(h));
  rep.theta = 1.0;
  for (std::size_t a = 0; a < starts.size(); ++a) {
    for (std::size_t b = a + 1; b < starts.size(); ++b) {
      double overlap = 0.0;
      for (std::size_t j = 0; j < nbins; ++j)
        overlap += std::min(rep.exit_histograms[a][j], rep.exit_histograms[b][j]);
      rep.theta = std::min(rep.theta, overlap);
    }
  }
  rep.lower_bound_holds = rep.mean_cycle >= rep.xi;
  if (rep.completed < total) {
    rep.flagged = true;
    rep.note = std::to_string(total - rep.completed) + " cycles did not complete within the time budget";
  }
  return rep;
}

void write_stationary_csv(const StationaryEstimate& estimate, std::ostream& out) {
  out << "bin_center,mass\n" << std::setprecision(12);
  const auto& e = estimate.binning.edges;
  for (std::size_t j = 0; j < estimate.masses.size(); ++j) {
    double center = 0.0;
    if (e.empty()) {
      center = 0.0;
    } else if (j == 0) {
      center = e.size() > 1 ? e[0] - 0.5 * (e[1] - e[0]) : e[0] - 0.5;
    } else if (j == e.size()) {
      center = e.size() > 1 ? e.back() + 0.5 * (e.back() - e[e.size() - 2]) : e.back() + 0.5;
    } else {
      center = 0.5 * (e[j - 1] + e[j]);
    }
    out << center << "," << estimate.masses[j] << "\n";
  }
}

void write_invariance_csv(const std::vector<InvarianceTracePoint>& trace, std::ostream& out) {
  out << "t,tv_to_mu\n" << std::setprecision(12);
  for (const auto& p : trace) out << p.t << "," << p.tv << "\n";
}

}  // namespace mfg
