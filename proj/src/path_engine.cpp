#include "mfg/path_engine.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace mfg {

namespace {

void euler_step(const GameSpec& spec, const PathEnsemble& e, std::size_t i, int k, std::vector<double>& sig,
                std::vector<double>& states) {
  const int d = e.dim;
  const PathView view{{states.data() + i * (e.grid.steps + 1) * d, static_cast<std::size_t>(k + 1) * d}, d, k};
  spec.model->volatility(e.grid.time(k), view, sig);
  const double* dw = e.increments.data() + (i * e.grid.steps + k) * d;
  double* x = states.data() + (i * (e.grid.steps + 1) + k) * d;
  for (int r = 0; r < d; ++r) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += sig[r * d + c] * dw[c];
    if (!std::isfinite(s)) throw MfgError("non-finite volatility during simulation");
    x[d + r] = x[r] + s;
  }
}

}  // namespace

PathEnsemble simulate_ensemble(const GameSpec& spec, std::size_t n, int k, double t_max, std::uint64_t seed,
                               NoiseKind noise) {
  if (n < 2) throw MfgError("ensemble needs at least two paths");
  if (k < 1) throw MfgError("ensemble needs at least one step");
  if (!(t_max > 0.0)) throw MfgError("ensemble horizon must be positive");
  PathEnsemble e;
  e.dim = spec.dim();
  e.paths = n;
  e.grid = TimeGrid{t_max / k, k};
  e.noise = noise;
  e.seed = seed;
  const int d = e.dim;
  e.states.assign(n * (k + 1) * d, 0.0);
  e.increments.assign(n * k * d, 0.0);
  const double sq = std::sqrt(e.grid.dt);
  parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<double> sig(static_cast<std::size_t>(d) * d);
    for (std::size_t i = begin; i < end; ++i) {
      auto rng = path_rng(seed, i);
      spec.initial.sample(rng, std::span<double>(e.states.data() + i * (k + 1) * d, d));
      double* dw = e.increments.data() + i * k * d;
      if (noise == NoiseKind::gaussian) {
        std::normal_distribution<double> n01(0.0, 1.0);
        for (int j = 0; j < k * d; ++j) dw[j] = sq * n01(rng);
      } else {
        for (int j = 0; j < k * d; ++j) dw[j] = (rng() >> 63) ? sq : -sq;
      }
      for (int s = 0; s < k; ++s) euler_step(spec, e, i, s, sig, e.states);
    }
  });
  return e;
}

PathEnsemble enumerate_binomial_ensemble(const GameSpec& spec, int k, double t_max) {
  if (k < 1 || k > 20) throw MfgError("binomial enumeration supports 1..20 steps");
  if (!spec.initial.is_dirac()) throw MfgError("binomial enumeration needs a Dirac initial law");
  if (!(t_max > 0.0)) throw MfgError("ensemble horizon must be positive");
  const int d = spec.dim();
  const std::size_t per_step = std::size_t{1} << d;
  std::size_t n = 1;
  for (int s = 0; s < k; ++s) n *= per_step;
  if (n > (std::size_t{1} << 20)) throw MfgError("binomial enumeration too large");
  PathEnsemble e;
  e.dim = d;
  e.paths = n;
  e.grid = TimeGrid{t_max / k, k};
  e.noise = NoiseKind::binomial;
  e.enumerated = true;
  e.states.assign(n * (k + 1) * d, 0.0);
  e.increments.assign(n * k * d, 0.0);
  const double sq = std::sqrt(e.grid.dt);
  std::vector<double> sig(static_cast<std::size_t>(d) * d);
  const auto x0 = spec.initial.dirac_point();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(x0.begin(), x0.end(), e.states.begin() + i * (k + 1) * d);
    // Scenario digits in base 2^d, first step most significant; bit 1 = up.
    std::size_t rest = i;
    for (int s = k - 1; s >= 0; --s) {
      const std::size_t digit = rest % per_step;
      rest /= per_step;
      for (int c = 0; c < d; ++c) {
        const bool up = (digit >> (d - 1 - c)) & 1u;
        e.increments[(i * k + s) * d + c] = up ? sq : -sq;
      }
    }
    for (int s = 0; s < k; ++s) euler_step(spec, e, i, s, sig, e.states);
  }
  return e;
}

double MeasureWeights::weight(std::size_t i, int k) const { return std::exp(log_weight(i, k)); }

double MeasureWeights::mean_weight(int k) const {
  return parallel_sum(paths(), [&](std::size_t i) { return weight(i, k); }) / static_cast<double>(paths());
}

double MeasureWeights::second_moment(int k) const {
  return parallel_sum(paths(), [&](std::size_t i) { return std::exp(2.0 * log_weight(i, k)); }) /
         static_cast<double>(paths());
}

MeasureWeights identity_weights(const PathEnsemble& ensemble, int horizon) {
  if (horizon < 0 || horizon > ensemble.steps()) throw MfgError("weight horizon beyond the ensemble");
  MeasureWeights w;
  w.ensemble = &ensemble;
  w.horizon = horizon;
  w.log_w.assign(ensemble.paths * (horizon + 1), 0.0);
  w.beta.assign(ensemble.paths * horizon * ensemble.dim, 0.0);
  return w;
}

MeasureWeights girsanov_weights(const PathEnsemble& ensemble, std::vector<double> beta, int horizon,
                                double drift_bound) {
  if (horizon < 0 || horizon > ensemble.steps()) throw MfgError("weight horizon beyond the ensemble");
  const int d = ensemble.dim;
  if (beta.size() != ensemble.paths * horizon * d) throw MfgError("drift field has the wrong size");
  MeasureWeights w;
  w.ensemble = &ensemble;
  w.horizon = horizon;
  w.beta = std::move(beta);
  w.log_w.assign(ensemble.paths * (horizon + 1), 0.0);
  const double dt = ensemble.grid.dt;
  const double sq = std::sqrt(dt);
  const double limit = drift_bound * (1.0 + 1e-12);
  const bool binomial = ensemble.noise == NoiseKind::binomial;
  parallel_chunks(ensemble.paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      double acc = 0.0;
      double* lw = w.log_w.data() + i * (horizon + 1);
      for (int k = 0; k < horizon; ++k) {
        const double* b = w.beta.data() + (i * horizon + k) * d;
        const auto dw = ensemble.increment(i, k);
        double bb = 0.0, bdw = 0.0;
        for (int c = 0; c < d; ++c) {
          bb += b[c] * b[c];
          bdw += b[c] * dw[c];
        }
        if (!(std::sqrt(bb) <= limit)) {
          throw MfgError("drift field exceeds the declared bound C at path " + std::to_string(i) + ", step " +
                         std::to_string(k));
        }
        if (binomial) {
          // Discrete stochastic exponential of the +-sqrt(dt) walk.
          for (int c = 0; c < d; ++c) {
            const double g = 1.0 + b[c] * dw[c];
            if (!(g > 0.0) || std::abs(b[c]) * sq >= 1.0) {
              throw MfgError("binomial reweighting needs |beta| sqrt(dt) < 1");
            }
            acc += std::log(g);
          }
        } else {
          acc += bdw - 0.5 * bb * dt;
        }
        lw[k + 1] = acc;
      }
    }
  });
  return w;
}

MeasureWeights mixture_weights(const MeasureWeights& a, const MeasureWeights& b, double theta) {
  if (a.ensemble != b.ensemble || a.horizon != b.horizon) throw MfgError("mixture of weights on different supports");
  if (!(theta >= 0.0 && theta <= 1.0)) throw MfgError("mixture parameter must lie in [0, 1]");
  if (theta == 0.0) return a;
  if (theta == 1.0) return b;
  MeasureWeights m;
  m.ensemble = a.ensemble;
  m.horizon = a.horizon;
  m.log_w.resize(a.log_w.size());
  const double la = std::log1p(-theta), lb = std::log(theta);
  for (std::size_t j = 0; j < a.log_w.size(); ++j) {
    const double x = la + a.log_w[j], y = lb + b.log_w[j];
    const double hi = std::max(x, y);
    m.log_w[j] = hi + std::log1p(std::exp(std::min(x, y) - hi));
  }
  return m;
}

WeightedAtoms reweighted_marginal(const MeasureWeights& weights, int k) {
  if (k < 0 || k > weights.horizon) throw MfgError("marginal requested beyond the weight horizon");
  const PathEnsemble& e = *weights.ensemble;
  WeightedAtoms m;
  m.dim = e.dim;
  m.atoms.resize(e.paths * e.dim);
  m.masses.resize(e.paths);
  double hi = -INFINITY;
  for (std::size_t i = 0; i < e.paths; ++i) hi = std::max(hi, weights.log_weight(i, k));
  for (std::size_t i = 0; i < e.paths; ++i) {
    const auto x = e.state(i, k);
    std::copy(x.begin(), x.end(), m.atoms.begin() + i * e.dim);
    m.masses[i] = std::exp(weights.log_weight(i, k) - hi);
  }
  m.normalize();
  return m;
}

MeasureWeights project_horizon(const MeasureWeights& weights, int k) {
  if (k < 0 || k > weights.horizon) throw MfgError("projection horizon beyond the weight horizon");
  MeasureWeights p;
  p.ensemble = weights.ensemble;
  p.horizon = k;
  const std::size_t n = weights.paths();
  const int d = weights.ensemble->dim;
  p.log_w.resize(n * (k + 1));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(weights.log_w.begin() + i * (weights.horizon + 1), k + 1, p.log_w.begin() + i * (k + 1));
  }
  if (weights.has_drift()) {
    p.beta.resize(n * k * d);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(weights.beta.begin() + i * weights.horizon * d, k * d, p.beta.begin() + i * k * d);
    }
  }
  return p;
}

void write_ensemble_csv(const PathEnsemble& e, std::ostream& out) {
  out << "path,step";
  for (int c = 0; c < e.dim; ++c) out << ",x" << c;
  for (int c = 0; c < e.dim; ++c) out << ",dw" << c;
  out << "\n" << std::setprecision(17);
  for (std::size_t i = 0; i < e.paths; ++i) {
    for (int k = 0; k <= e.steps(); ++k) {
      out << i << "," << k;
      for (double v : e.state(i, k)) out << "," << v;
      if (k < e.steps()) {
        for (double v : e.increment(i, k)) out << "," << v;
      } else {
        for (int c = 0; c < e.dim; ++c) out << ",";
      }
      out << "\n";
    }
  }
}

PathEnsemble read_ensemble_csv(std::istream& in, double dt, NoiseKind noise) {
  std::string line;
  if (!std::getline(in, line)) throw MfgError("empty ensemble file");
  int columns = 0;
  for (char ch : line) columns += ch == ',';
  if (columns < 3 || (columns - 1) % 2 != 0) throw MfgError("ensemble header must be path,step,x...,dw...");
  const int d = (columns - 1) / 2;
  std::map<std::size_t, std::vector<std::pair<int, std::vector<double>>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    while (static_cast<int>(cells.size()) < 2 + 2 * d) cells.emplace_back();
    std::vector<double> vals(2 * d, NAN);
    for (int c = 0; c < 2 * d; ++c)
      if (!cells[2 + c].empty()) vals[c] = std::stod(cells[2 + c]);
    rows[std::stoull(cells[0])].emplace_back(std::stoi(cells[1]), std::move(vals));
  }
  if (rows.empty()) throw MfgError("ensemble file has no rows");
  PathEnsemble e;
  e.dim = d;
  e.paths = rows.size();
  const int steps = static_cast<int>(rows.begin()->second.size()) - 1;
  if (steps < 1) throw MfgError("ensemble file needs at least one step");
  e.grid = TimeGrid{dt, steps};
  e.noise = noise;
  e.states.resize(e.paths * (steps + 1) * d);
  e.increments.resize(e.paths * steps * d);
  std::size_t i = 0;
  for (auto& [path, list] : rows) {
    if (path != i) throw MfgError("ensemble paths must be numbered 0..N-1");
    if (static_cast<int>(list.size()) != steps + 1) throw MfgError("ragged ensemble file");
    for (const auto& [k, vals] : list) {
      if (k < 0 || k > steps) throw MfgError("step index out of range in ensemble file");
      for (int c = 0; c < d; ++c) e.states[(i * (steps + 1) + k) * d + c] = vals[c];
      if (k < steps)
        for (int c = 0; c < d; ++c) e.increments[(i * steps + k) * d + c] = vals[d + c];
    }
    ++i;
  }
  return e;
}

}  // namespace mfg
