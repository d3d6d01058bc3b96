#include "mfg/bsde_engine.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace mfg {

InteractionFlow InteractionFlow::constant(const LawSummary& law, const ActionLaw& q, int steps) {
  InteractionFlow f;
  f.laws.assign(steps + 1, law);
  f.action_laws.assign(steps, q);
  return f;
}

InteractionFlow InteractionFlow::truncated(int k) const {
  if (k < 0 || k > steps()) throw MfgError("flow truncation beyond its horizon");
  InteractionFlow f;
  f.laws.assign(laws.begin(), laws.begin() + k + 1);
  f.action_laws.assign(action_laws.begin(), action_laws.begin() + k);
  return f;
}

std::string to_string(RegressionMode mode) {
  switch (mode) {
    case RegressionMode::polynomial:
      return "polynomial";
    case RegressionMode::binned:
      return "binned";
    case RegressionMode::exact:
      return "exact";
  }
  return "unknown";
}

RegressionMode regression_mode_from_string(const std::string& s) {
  if (s == "polynomial") return RegressionMode::polynomial;
  if (s == "binned") return RegressionMode::binned;
  if (s == "exact") return RegressionMode::exact;
  throw MfgError("unknown regression mode '" + s + "'");
}

TruncationCertificate truncation_certificate(const GameSpec& spec, double tol, const TimeGrid& grid) {
  if (!(tol > 0.0)) throw MfgError("truncation tolerance must be positive");
  TruncationCertificate c;
  c.tol = tol;
  c.reward_bound = spec.bounds.reward;
  c.discount = spec.discount;
  const double lam = spec.discount;
  const double raw = std::max(0.0, std::log(spec.bounds.reward / (lam * tol / 2.0)) / lam);
  c.t_required = grid.time(grid.index_at_or_after(raw));
  c.y_bound = spec.bounds.reward / lam * std::exp(-lam * c.t_required);
  c.z_bound_shape = (1.0 + c.t_required) * std::exp(-2.0 * lam * c.t_required);
  return c;
}

double BsdeSolution::z_energy(double discount) const {
  double s = 0.0;
  for (std::size_t i = 0; i < paths; ++i) {
    for (int k = 0; k < horizon; ++k) {
      double zz = 0.0;
      for (double v : z_at(i, k)) zz += v * v;
      s += std::exp(-2.0 * discount * k * dt) * zz * dt;
    }
  }
  return paths ? s / static_cast<double>(paths) : 0.0;
}

namespace {

// Conditional expectations given X_k for several targets at once.
class Conditioner {
 public:
  Conditioner(const PathEnsemble& e, int k, const RegressionConfig& cfg, std::vector<std::string>& warnings)
      : n_(e.paths) {
    const int d = e.dim;
    if (cfg.mode == RegressionMode::polynomial) {
      build_polynomial(e, k, cfg.degree, warnings);
      return;
    }
    group_.assign(n_, 0);
    if (cfg.mode == RegressionMode::binned) {
      if (d != 1) throw MfgError("binned regression is one-dimensional");
      if (cfg.bins < 1) throw MfgError("binned regression needs at least one bin");
      std::vector<double> xs(n_);
      for (std::size_t i = 0; i < n_; ++i) xs[i] = e.state(i, k)[0];
      std::vector<double> sorted = xs;
      std::sort(sorted.begin(), sorted.end());
      std::vector<double> edges;
      for (int j = 1; j < cfg.bins; ++j) {
        const double edge = sorted[(static_cast<std::size_t>(j) * n_) / cfg.bins];
        if (edges.empty() || edge > edges.back()) edges.push_back(edge);
      }
      for (std::size_t i = 0; i < n_; ++i) {
        group_[i] = static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), xs[i]) - edges.begin());
      }
      groups_ = edges.size() + 1;
    } else {
      // Exact conditioning: one group per distinct state.
      std::vector<std::size_t> order(n_);
      std::iota(order.begin(), order.end(), 0);
      auto less = [&](std::size_t a, std::size_t b) {
        const auto xa = e.state(a, k), xb = e.state(b, k);
        return std::lexicographical_compare(xa.begin(), xa.end(), xb.begin(), xb.end());
      };
      std::stable_sort(order.begin(), order.end(), less);
      std::size_t g = 0;
      for (std::size_t r = 0; r < n_; ++r) {
        if (r > 0 && less(order[r - 1], order[r])) ++g;
        group_[order[r]] = g;
      }
      groups_ = g + 1;
    }
    counts_.assign(groups_, 0.0);
    for (std::size_t i = 0; i < n_; ++i) counts_[group_[i]] += 1.0;
  }

  /// Fitted conditional expectation of each target column.
  void apply(const Eigen::MatrixXd& targets, Eigen::MatrixXd& fitted) const {
    if (!group_.empty()) {
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(groups_, targets.cols());
      for (std::size_t i = 0; i < n_; ++i) sums.row(group_[i]) += targets.row(i);
      for (std::size_t g = 0; g < groups_; ++g)
        if (counts_[g] > 0) sums.row(g) /= counts_[g];
      fitted.resize(n_, targets.cols());
      for (std::size_t i = 0; i < n_; ++i) fitted.row(i) = sums.row(group_[i]);
      return;
    }
    const Eigen::MatrixXd coef = qr_.solve(targets);
    fitted = design_ * coef;
  }

 private:
  void build_polynomial(const PathEnsemble& e, int k, int degree, std::vector<std::string>& warnings) {
    const int d = e.dim;
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (int c = 0; c < d; ++c) mean[c] += e.state(i, k)[c];
    for (double& m : mean) m /= static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (int c = 0; c < d; ++c) sd[c] += std::pow(e.state(i, k)[c] - mean[c], 2);
    for (double& s : sd) s = std::sqrt(s / static_cast<double>(n_));
    // A point mass needs only the constant; that is not a rank failure.
    const bool point_mass = std::all_of(sd.begin(), sd.end(), [](double v) { return v == 0.0; });
    const int start = point_mass ? 0 : std::max(0, degree);
    for (int deg = start; deg >= 0; --deg) {
      // Exponent tuples of total degree <= deg.
      std::vector<std::vector<int>> exps{std::vector<int>(d, 0)};
      for (int total = 1; total <= deg; ++total) {
        std::vector<int> cur(d, 0);
        std::function<void(int, int)> rec = [&](int c, int left) {
          if (c == d - 1) {
            cur[c] = left;
            exps.push_back(cur);
            return;
          }
          for (int v = left; v >= 0; --v) {
            cur[c] = v;
            rec(c + 1, left - v);
          }
        };
        rec(0, total);
      }
      design_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(exps.size()));
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t p = 0; p < exps.size(); ++p) {
          double v = 1.0;
          for (int c = 0; c < d; ++c) {
            const double u = sd[c] > 0.0 ? (e.state(i, k)[c] - mean[c]) / sd[c] : 0.0;
            for (int r = 0; r < exps[p][c]; ++r) v *= u;
          }
          design_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = v;
        }
      }
      qr_.compute(design_);
      qr_.setThreshold(1e-10);
      if (qr_.rank() == design_.cols()) {
        if (deg < start) {
          warnings.push_back("rank-deficient regression at step " + std::to_string(k) + "; degree lowered to " +
                             std::to_string(deg));
        }
        return;
      }
    }
    throw MfgError("regression design is singular even at degree 0");
  }

  std::size_t n_;
  std::vector<std::size_t> group_;
  std::size_t groups_ = 0;
  std::vector<double> counts_;
  Eigen::MatrixXd design_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

}  // namespace

BsdeSolution solve_finite_horizon(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble,
                                  int horizon, const RegressionConfig& regression) {
  if (horizon < 0 || horizon > ensemble.steps()) throw MfgError("BSDE horizon beyond the ensemble");
  if (flow.steps() < horizon || static_cast<int>(flow.laws.size()) < horizon + 1) {
    throw MfgError("interaction flow shorter than the BSDE horizon");
  }
  if (ensemble.dim != spec.dim()) throw MfgError("ensemble dimension does not match the game");
  const std::size_t n = ensemble.paths;
  const int d = ensemble.dim;
  const double dt = ensemble.grid.dt;
  const double lam = spec.discount;
  const double disc = std::exp(-lam * dt);
  const double c = -std::expm1(-lam * dt) / lam;
  const double kappa = lam * dt / std::expm1(lam * dt);
  const double ybound = spec.bounds.reward / lam;

  BsdeSolution s;
  s.paths = n;
  s.dim = d;
  s.horizon = horizon;
  s.dt = dt;
  s.regression = regression;
  s.y.assign(n * (horizon + 1), 0.0);
  s.z.assign(n * horizon * d, 0.0);
  s.maximizer.assign(n * horizon, 0);
  s.hamiltonian.assign(n * horizon, 0.0);

  std::vector<double> max_abs(chunk_count(n), 0.0);
  std::vector<char> bad(chunk_count(n), 0);
  Eigen::MatrixXd targets(n, 1 + d), fitted, resid_targets(n, d), zfit;
  double resid_sq0 = 0.0;
  for (int k = horizon - 1; k >= 0; --k) {
    const Conditioner cond(ensemble, k, regression, s.warnings);
    for (std::size_t i = 0; i < n; ++i) targets(i, 0) = s.y_at(i, k + 1);
    Eigen::MatrixXd ybar_m;
    cond.apply(targets.leftCols(1), ybar_m);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = s.y_at(i, k + 1) - ybar_m(i, 0);
      const auto dw = ensemble.increment(i, k);
      for (int cc = 0; cc < d; ++cc) resid_targets(i, cc) = r * dw[cc] / dt;
      if (k == 0) resid_sq0 += r * r;
    }
    cond.apply(resid_targets, zfit);
    const double t = ensemble.grid.time(k);
    const LawSummary& mu = flow.laws[k];
    const double f2 = spec.model->reward_interaction(t, mu, flow.action_laws[k]);
    parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
      HamiltonianWorkspace ws(spec);
      std::vector<double> z(d);
      for (std::size_t i = begin; i < end; ++i) {
        for (int cc = 0; cc < d; ++cc) {
          z[cc] = kappa * zfit(i, cc);
          s.z[(i * horizon + k) * d + cc] = z[cc];
        }
        const HamiltonianMax h = ws.maximize(t, ensemble.view(i, k), mu, z);
        s.maximizer[i * horizon + k] = static_cast<std::uint32_t>(h.index);
        s.hamiltonian[i * horizon + k] = h.value;
        const double y = disc * ybar_m(i, 0) + c * (h.value + f2);
        if (!std::isfinite(y)) bad[chunk] = 1;
        max_abs[chunk] = std::max(max_abs[chunk], std::abs(y));
        s.y[i * (horizon + 1) + k] = std::clamp(y, -ybound, ybound);
      }
    });
    if (std::any_of(bad.begin(), bad.end(), [](char b) { return b != 0; })) {
      throw MfgError("non-finite value in the backward recursion at step " + std::to_string(k));
    }
  }
  s.max_abs_y_unclamped = *std::max_element(max_abs.begin(), max_abs.end());
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += s.y_at(i, 0);
  m /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += std::pow(s.y_at(i, 0) - m, 2);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  s.value = m;
  const double resid_var = n > 1 ? resid_sq0 / static_cast<double>(n - 1) : 0.0;
  s.value_band = horizon > 0 ? std::sqrt((var + disc * disc * resid_var) / static_cast<double>(n)) : 0.0;
  return s;
}

BsdeSolution solve_infinite_horizon(const GameSpec& spec, const InteractionFlow& flow, const PathEnsemble& ensemble,
                                    double tol, const RegressionConfig& regression) {
  const TruncationCertificate cert = truncation_certificate(spec, tol, ensemble.grid);
  const int k = ensemble.grid.index_of(cert.t_required);
  if (k > ensemble.steps()) {
    throw MfgError("ensemble horizon " + std::to_string(ensemble.grid.horizon()) + " is shorter than T_required=" +
                   std::to_string(cert.t_required));
  }
  BsdeSolution s = solve_finite_horizon(spec, flow, ensemble, k, regression);
  s.certificate = cert;
  return s;
}

StabilityReport stability_probe(const GameSpec& spec, const std::vector<InteractionFlow>& sequence,
                                const InteractionFlow& limit, const PathEnsemble& ensemble, int horizon,
                                const RegressionConfig& regression) {
  const BsdeSolution ref = solve_finite_horizon(spec, limit, ensemble, horizon, regression);
  StabilityReport r;
  for (const auto& f : sequence) {
    const BsdeSolution s = solve_finite_horizon(spec, f, ensemble, horizon, regression);
    double gap = 0.0;
    for (std::size_t i = 0; i < s.paths; ++i) gap = std::max(gap, std::abs(s.y_at(i, 0) - ref.y_at(i, 0)));
    r.y_gaps.push_back(gap);
    double energy = 0.0;
    for (std::size_t i = 0; i < s.paths; ++i) {
      for (int k = 0; k < horizon; ++k) {
        double zz = 0.0;
        for (int c = 0; c < s.dim; ++c) zz += std::pow(s.z_at(i, k)[c] - ref.z_at(i, k)[c], 2);
        energy += std::exp(-2.0 * spec.discount * k * s.dt) * zz * s.dt;
      }
    }
    r.energy_gaps.push_back(energy / static_cast<double>(s.paths));
  }
  return r;
}

void write_bsde_profile_csv(const BsdeSolution& s, std::ostream& out) {
  out << "t,mean_y,mean_z2\n" << std::setprecision(12);
  for (int k = 0; k <= s.horizon; ++k) {
    double my = 0.0, mz = 0.0;
    for (std::size_t i = 0; i < s.paths; ++i) {
      my += s.y_at(i, k);
      if (k < s.horizon)
        for (double v : s.z_at(i, k)) mz += v * v;
    }
    out << k * s.dt << "," << my / static_cast<double>(s.paths) << "," << mz / static_cast<double>(s.paths) << "\n";
  }
}

}  // namespace mfg
