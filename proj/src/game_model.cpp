#include "mfg/game_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mfg/measure_metrics.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// ActionSet

ActionSet ActionSet::box(std::vector<std::pair<double, double>> bounds, int points) {
  if (bounds.empty()) throw MfgError("action box needs at least one coordinate");
  if (points < 1) throw MfgError("action grid needs at least one point per coordinate");
  for (const auto& [lo, hi] : bounds) {
    if (!(std::isfinite(lo) && std::isfinite(hi)) || lo > hi) {
      throw MfgError("action box bounds must be finite with lo <= hi");
    }
  }
  ActionSet s;
  s.dim_ = static_cast<int>(bounds.size());
  s.points_ = points;
  s.bounds_ = std::move(bounds);
  std::size_t total = 1;
  for (int c = 0; c < s.dim_; ++c) total *= static_cast<std::size_t>(points);
  s.grid_.resize(total * s.dim_);
  // Lexicographic: the last coordinate varies fastest.
  for (std::size_t j = 0; j < total; ++j) {
    std::size_t rest = j;
    for (int c = s.dim_ - 1; c >= 0; --c) {
      const std::size_t idx = rest % points;
      rest /= points;
      const auto [lo, hi] = s.bounds_[c];
      s.grid_[j * s.dim_ + c] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(idx) / (points - 1);
    }
  }
  return s;
}

ActionSet ActionSet::finite(int dim, std::vector<double> atoms) {
  if (dim < 1) throw MfgError("action dimension must be positive");
  if (atoms.empty() || atoms.size() % dim != 0) throw MfgError("finite action set must list at least one atom");
  for (double v : atoms) {
    if (!std::isfinite(v)) throw MfgError("finite action atoms must be finite");
  }
  ActionSet s;
  s.dim_ = dim;
  s.grid_ = std::move(atoms);
  return s;
}

bool ActionSet::contains(std::span<const double> a, double tol) const {
  if (static_cast<int>(a.size()) != dim_) return false;
  if (is_box()) {
    for (int c = 0; c < dim_; ++c) {
      if (a[c] < bounds_[c].first - tol || a[c] > bounds_[c].second + tol) return false;
    }
    return true;
  }
  for (std::size_t j = 0; j < size(); ++j) {
    double d = 0.0;
    for (int c = 0; c < dim_; ++c) d = std::max(d, std::abs(a[c] - grid_[j * dim_ + c]));
    if (d <= tol) return true;
  }
  return false;
}

double ActionSet::norm_bound() const {
  if (is_box()) {
    double s = 0.0;
    for (const auto& [lo, hi] : bounds_) {
      const double m = std::max(std::abs(lo), std::abs(hi));
      s += m * m;
    }
    return std::sqrt(s);
  }
  double best = 0.0;
  for (std::size_t j = 0; j < size(); ++j) best = std::max(best, norm(point(j)));
  return best;
}

std::size_t ActionSet::nearest(std::span<const double> a) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < size(); ++j) {
    double d = 0.0;
    for (int c = 0; c < dim_; ++c) {
      const double e = a[c] - grid_[j * dim_ + c];
      d += e * e;
    }
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

ActionLaw ActionSet::uniform_law() const {
  ActionLaw q;
  q.dim = dim_;
  q.atoms = grid_;
  q.masses.assign(size(), 1.0 / static_cast<double>(size()));
  return q;
}

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::dirac(std::vector<double> point) {
  if (point.empty()) throw MfgError("dirac initial law needs a point");
  InitialLaw l;
  l.kind_ = Kind::dirac;
  l.dim_ = static_cast<int>(point.size());
  l.first_ = std::move(point);
  return l;
}

InitialLaw InitialLaw::normal(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.empty() || mean.size() != stddev.size()) throw MfgError("normal initial law needs matching mean/stddev");
  for (double s : stddev) {
    if (!(s >= 0.0)) throw MfgError("normal initial law needs non-negative stddev");
  }
  InitialLaw l;
  l.kind_ = Kind::normal;
  l.dim_ = static_cast<int>(mean.size());
  l.first_ = std::move(mean);
  l.second_ = std::move(stddev);
  return l;
}

InitialLaw InitialLaw::empirical(WeightedAtoms atoms) {
  if (atoms.size() == 0) throw MfgError("empirical initial law needs atoms");
  InitialLaw l;
  l.kind_ = Kind::empirical;
  l.dim_ = atoms.dim;
  atoms.normalize();
  l.cdf_.resize(atoms.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    acc += atoms.masses[j];
    l.cdf_[j] = acc;
  }
  l.cdf_.back() = 1.0;
  l.first_.assign(atoms.atom(0).begin(), atoms.atom(0).end());
  l.atoms_ = std::move(atoms);
  return l;
}

void InitialLaw::sample(std::mt19937_64& rng, std::span<double> out) const {
  switch (kind_) {
    case Kind::dirac:
      std::copy(first_.begin(), first_.end(), out.begin());
      return;
    case Kind::normal: {
      std::normal_distribution<double> n(0.0, 1.0);
      for (int c = 0; c < dim_; ++c) out[c] = first_[c] + second_[c] * n(rng);
      return;
    }
    case Kind::empirical: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double r = u(rng);
      const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), r);
      const std::size_t j = std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1);
      const auto a = atoms_.atom(j);
      std::copy(a.begin(), a.end(), out.begin());
      return;
    }
  }
}

std::string InitialLaw::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::dirac:
      os << "dirac(" << first_[0] << (dim_ > 1 ? ",..." : "") << ")";
      break;
    case Kind::normal:
      os << "normal(" << first_[0] << "," << second_[0] << (dim_ > 1 ? ",..." : "") << ")";
      break;
    case Kind::empirical:
      os << "empirical(" << atoms_.size() << " atoms)";
      break;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// GameModel defaults

LawSummary GameModel::summarize(double, const WeightedAtoms& marginal) const {
  return LawSummary{marginal.mean()};
}

void GameModel::volatility(double, const PathView& x, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (int c = 0; c < x.dim; ++c) out[c * x.dim + c] = 1.0;
}

double GameModel::reward_state(double, const PathView&, const LawSummary&) const { return 0.0; }
double GameModel::reward_interaction(double, const LawSummary&, const ActionLaw&) const { return 0.0; }
double GameModel::reward_action(double, const PathView&, std::span<const double>) const { return 0.0; }

void GameModel::action_terms(double t, const PathView& x, const LawSummary& mu, const ActionSet& actions,
                             std::span<double> reward_out, std::span<double> drift_out) const {
  const int d = state_dim();
  for (std::size_t j = 0; j < actions.size(); ++j) {
    const auto a = actions.point(j);
    reward_out[j] = reward_action(t, x, a);
    drift(t, x, mu, a, drift_out.subspan(j * d, d));
  }
}

void GameSpec::validate() const {
  if (!model) throw MfgError("game '" + name + "' has no coefficient model");
  if (!(discount > 0.0) || !std::isfinite(discount)) throw MfgError("discount lambda must be > 0");
  const auto& b = bounds;
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(b.drift) || !positive(b.reward) || !positive(b.lipschitz) || !positive(b.action_norm)) {
    throw MfgError("declared bounds C, M, L, C_A must be finite and > 0");
  }
  if (!(b.monotone_slack >= 0.0)) throw MfgError("declared delta must be >= 0");
  if (!(b.concavity >= 0.0)) throw MfgError("declared m must be >= 0 (0 = undeclared)");
  if (initial.dim() != dim()) throw MfgError("initial law dimension does not match the state dimension");
  if (actions.size() == 0) throw MfgError("action grid is empty");
  if (ergodic) {
    const auto& e = *ergodic;
    if (!(e.inner_radius > 0.0 && e.inner_radius < e.outer_radius)) throw MfgError("need 0 < R' < R");
    if (!(e.drift_margin > 0.0)) throw MfgError("drift margin k must be > 0");
    if (!(e.local_bound > 0.0)) throw MfgError("Lambda must be > 0");
  }
}

// ---------------------------------------------------------------------------
// Hamiltonian

void inverse_volatility(const GameSpec& spec, double t, const PathView& x, std::span<double> out) {
  const int d = spec.dim();
  if (d == 1) {
    double s = 0.0;
    spec.model->volatility(t, x, std::span<double>(&s, 1));
    if (!std::isfinite(s) || std::abs(s) < 1e-300) throw MfgError("singular volatility");
    out[0] = 1.0 / s;
    return;
  }
  Eigen::MatrixXd m(d, d);
  std::vector<double> buf(static_cast<std::size_t>(d) * d);
  spec.model->volatility(t, x, buf);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) m(r, c) = buf[r * d + c];
  if (!m.allFinite()) throw MfgError("non-finite volatility");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-14) throw MfgError("singular volatility");
  const Eigen::MatrixXd inv = lu.inverse();
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) out[r * d + c] = inv(r, c);
}

namespace {
void apply(std::span<const double> m, std::span<const double> v, std::span<double> out, int d) {
  for (int r = 0; r < d; ++r) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += m[r * d + c] * v[c];
    out[r] = s;
  }
}
}  // namespace

void scaled_drift(const GameSpec& spec, double t, const PathView& x, const LawSummary& mu,
                  std::span<const double> a, std::span<double> out) {
  const int d = spec.dim();
  std::vector<double> inv(static_cast<std::size_t>(d) * d), b(d);
  inverse_volatility(spec, t, x, inv);
  spec.model->drift(t, x, mu, a, b);
  apply(inv, b, out, d);
}

double hamiltonian_tilde(const GameSpec& spec, double t, const PathView& x, const LawSummary& mu,
                         const ActionLaw& q, std::span<const double> z, std::span<const double> a) {
  if (!spec.actions.contains(a, 1e-9)) throw MfgError("action outside the action set");
  const int d = spec.dim();
  std::vector<double> beta(d);
  scaled_drift(spec, t, x, mu, a, beta);
  const auto& m = *spec.model;
  return m.reward_state(t, x, mu) + m.reward_interaction(t, mu, q) + m.reward_action(t, x, a) + dot(z, beta);
}

HamiltonianWorkspace::HamiltonianWorkspace(const GameSpec& spec)
    : spec_(&spec),
      dim_(spec.dim()),
      sigma_inv_(static_cast<std::size_t>(dim_) * dim_),
      rewards_(spec.actions.size()),
      drifts_(spec.actions.size() * dim_),
      scaled_(spec.actions.size() * dim_),
      values_(spec.actions.size()) {
  if (spec.actions.size() == 0) throw MfgError("empty action grid");
}

HamiltonianMax HamiltonianWorkspace::maximize(double t, const PathView& x, const LawSummary& mu,
                                              std::span<const double> z) {
  const auto& m = *spec_->model;
  const std::size_t n = spec_->actions.size();
  inverse_volatility(*spec_, t, x, sigma_inv_);
  m.action_terms(t, x, mu, spec_->actions, rewards_, drifts_);
  const double base = m.reward_state(t, x, mu);
  HamiltonianMax best{0, -std::numeric_limits<double>::infinity()};
  for (std::size_t j = 0; j < n; ++j) {
    double lin = 0.0;
    if (dim_ == 1) {
      scaled_[j] = sigma_inv_[0] * drifts_[j];
      lin = z[0] * scaled_[j];
    } else {
      std::span<double> sj(scaled_.data() + j * dim_, dim_);
      apply(sigma_inv_, std::span<const double>(drifts_.data() + j * dim_, dim_), sj, dim_);
      lin = dot(z, sj);
    }
    const double v = base + rewards_[j] + lin;
    values_[j] = v;
    if (v > best.value) best = {j, v};
  }
  if (!std::isfinite(best.value)) throw MfgError("non-finite Hamiltonian value");
  return best;
}

HamiltonianMax maximize_hamiltonian(const GameSpec& spec, double t, const PathView& x, const LawSummary& mu,
                                    std::span<const double> z) {
  HamiltonianWorkspace ws(spec);
  return ws.maximize(t, x, mu, z);
}

// ---------------------------------------------------------------------------
// Assumption checks

std::string to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass:
      return "pass";
    case CheckStatus::fail:
      return "fail";
    case CheckStatus::skipped:
      return "skipped";
  }
  return "unknown";
}

bool AssumptionReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const AssumptionEntry& e) { return e.status != CheckStatus::fail; });
}

const AssumptionEntry* AssumptionReport::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

namespace {

struct SampleWorld {
  std::vector<std::vector<double>> paths;  // each (steps + 1) * d
  std::vector<LawSummary> laws;
  std::vector<ActionLaw> action_laws;
  double dt = 0.0;
  int steps = 0;
};

SampleWorld build_world(const GameSpec& spec, double span, std::mt19937_64& rng, std::size_t n_paths) {
  SampleWorld w;
  const int d = spec.dim();
  w.steps = 50;
  w.dt = span / w.steps;
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> sig(static_cast<std::size_t>(d) * d), dw(d);
  for (std::size_t p = 0; p < n_paths; ++p) {
    std::vector<double> path(static_cast<std::size_t>(w.steps + 1) * d);
    spec.initial.sample(rng, std::span<double>(path.data(), d));
    for (int k = 0; k < w.steps; ++k) {
      PathView view{std::span<const double>(path.data(), static_cast<std::size_t>(k + 1) * d), d, k};
      spec.model->volatility(k * w.dt, view, sig);
      for (int c = 0; c < d; ++c) dw[c] = std::sqrt(w.dt) * n01(rng);
      for (int r = 0; r < d; ++r) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += sig[r * d + c] * dw[c];
        path[(k + 1) * d + r] = path[k * d + r] + s;
      }
    }
    w.paths.push_back(std::move(path));
  }
  // State laws: the driftless cloud at a few times, with random reweightings.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int li = 0; li < 6; ++li) {
    const int k = (li * w.steps) / 5;
    WeightedAtoms m;
    m.dim = d;
    for (const auto& path : w.paths) {
      m.atoms.insert(m.atoms.end(), path.begin() + static_cast<long>(k) * d, path.begin() + static_cast<long>(k + 1) * d);
      m.masses.push_back(li % 2 == 0 ? 1.0 : std::exp(2.0 * (u(rng) - 0.5)));
    }
    m.normalize();
    w.laws.push_back(spec.model->summarize(k * w.dt, m));
  }
  // Action laws: uniform, Dirac at the grid ends, random weights.
  w.action_laws.push_back(spec.actions.uniform_law());
  for (std::size_t j : {std::size_t{0}, spec.actions.size() - 1}) {
    ActionLaw q;
    q.dim = spec.actions.dim();
    const auto a = spec.actions.point(j);
    q.atoms.assign(a.begin(), a.end());
    q.masses = {1.0};
    w.action_laws.push_back(q);
  }
  ActionLaw rq = spec.actions.uniform_law();
  for (double& m : rq.masses) m = u(rng);
  rq.normalize();
  w.action_laws.push_back(rq);
  return w;
}

void track(AssumptionEntry& e, double value, const Witness& w) {
  if (value > e.worst || !e.witness) {
    e.worst = std::max(e.worst, value);
    if (value >= e.worst) {
      e.witness = w;
      e.witness->measured = value;
    }
  }
}

}  // namespace

AssumptionReport check_standing_assumptions(const GameSpec& spec, const StandingCheckConfig& config) {
  if (config.budget < 1) throw MfgError("assumption check needs a budget of at least one sample");
  spec.validate();
  std::mt19937_64 rng(config.seed);
  const int d = spec.dim();
  const int da = spec.actions.dim();
  const std::size_t n_paths = std::max<std::size_t>(16, std::min<std::size_t>(200, config.budget / 10));
  SampleWorld world = build_world(spec, config.time_span, rng, n_paths);

  AssumptionEntry drift{"bounded_drift", CheckStatus::pass, spec.bounds.drift, 0.0, std::nullopt, "sup |sigma^-1 b| <= C"};
  AssumptionEntry reward{"bounded_reward", CheckStatus::pass, spec.bounds.reward, 0.0, std::nullopt, "sup |f| <= M"};
  AssumptionEntry action{"bounded_action", CheckStatus::pass, spec.bounds.action_norm, 0.0, std::nullopt, "sup |a| <= C_A"};
  AssumptionEntry lip{"lipschitz_in_action", CheckStatus::pass, spec.bounds.lipschitz, 0.0, std::nullopt,
                      "|sigma^-1 b(a) - sigma^-1 b(a')| <= L |a - a'|"};

  std::uniform_int_distribution<std::size_t> pick_path(0, world.paths.size() - 1);
  std::uniform_int_distribution<int> pick_step(0, world.steps);
  std::uniform_int_distribution<std::size_t> pick_law(0, world.laws.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_q(0, world.action_laws.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_grid(0, spec.actions.size() - 1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  auto random_action = [&](std::vector<double>& a) {
    if (spec.actions.is_box() && u01(rng) < 0.5) {
      for (int c = 0; c < da; ++c) {
        const auto [lo, hi] = spec.actions.bounds()[c];
        a[c] = lo + (hi - lo) * u01(rng);
      }
    } else {
      const auto p = spec.actions.point(pick_grid(rng));
      std::copy(p.begin(), p.end(), a.begin());
    }
  };

  std::vector<double> a(da), a2(da), beta(d), beta2(d);
  // The grid extremes are always probed; many bounds are attained there.
  const std::size_t forced = std::min<std::size_t>(spec.actions.size(), 2);
  for (std::size_t s = 0; s < config.budget; ++s) {
    const std::size_t p = pick_path(rng);
    const int k = pick_step(rng);
    const double t = k * world.dt;
    const PathView x{std::span<const double>(world.paths[p].data(), static_cast<std::size_t>(k + 1) * d), d, k};
    const LawSummary& mu = world.laws[pick_law(rng)];
    const ActionLaw& q = world.action_laws[pick_q(rng)];
    if (s < forced) {
      const auto e = spec.actions.point(s == 0 ? 0 : spec.actions.size() - 1);
      std::copy(e.begin(), e.end(), a.begin());
    } else {
      random_action(a);
    }
    Witness w{t, p, std::vector<double>(x.current().begin(), x.current().end()), a, 0.0};

    scaled_drift(spec, t, x, mu, a, beta);
    track(drift, norm(beta), w);
    const auto& m = *spec.model;
    const double f = m.reward_state(t, x, mu) + m.reward_interaction(t, mu, q) + m.reward_action(t, x, a);
    track(reward, std::abs(f), w);
    track(action, norm(a), w);

    random_action(a2);
    double da_norm = 0.0;
    for (int c = 0; c < da; ++c) da_norm += (a[c] - a2[c]) * (a[c] - a2[c]);
    da_norm = std::sqrt(da_norm);
    if (da_norm > 1e-9) {
      scaled_drift(spec, t, x, mu, a2, beta2);
      double diff = 0.0;
      for (int c = 0; c < d; ++c) diff += (beta[c] - beta2[c]) * (beta[c] - beta2[c]);
      track(lip, std::sqrt(diff) / da_norm, w);
    }
  }

  AssumptionReport report;
  report.samples = config.budget;
  for (AssumptionEntry* e : {&drift, &reward, &action, &lip}) {
    const double slack = 1e-9 * std::max(1.0, e->declared);
    e->status = e->worst <= e->declared + slack ? CheckStatus::pass : CheckStatus::fail;
    report.entries.push_back(*e);
  }
  return report;
}

MonotonicityReport check_monotonicity(const GameSpec& spec, std::span<const LawPair> pairs, double tolerance) {
  MonotonicityReport r;
  r.pairs = pairs.size();
  r.slack = spec.bounds.monotone_slack;
  r.max_integral = -std::numeric_limits<double>::infinity();
  r.max_violation = -std::numeric_limits<double>::infinity();
  if (pairs.empty()) {
    r.max_integral = r.max_violation = 0.0;
    return r;
  }
  const int d = spec.dim();
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const LawPair& pair = pairs[pi];
    if (pair.first.size() != pair.second.size() || pair.first.atoms != pair.second.atoms) {
      throw MfgError("monotonicity check needs both laws on common atoms");
    }
    WeightedAtoms mu = pair.first, nu = pair.second;
    mu.normalize();
    nu.normalize();
    const LawSummary smu = spec.model->summarize(pair.t, mu);
    const LawSummary snu = spec.model->summarize(pair.t, nu);
    double integral = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
      const PathView x{mu.atom(j), d, 0};
      const double df = spec.model->reward_state(pair.t, x, smu) - spec.model->reward_state(pair.t, x, snu);
      integral += df * (mu.masses[j] - nu.masses[j]);
    }
    double entropy = 0.0;
    if (r.slack > 0.0) {
      entropy = relative_entropy_discrete(mu.masses, nu.masses) + relative_entropy_discrete(nu.masses, mu.masses);
    }
    const double violation = integral - r.slack * entropy;
    r.max_integral = std::max(r.max_integral, integral);
    if (violation > r.max_violation) {
      r.max_violation = violation;
      r.worst_pair = pi;
    }
  }
  r.status = r.max_violation <= tolerance ? CheckStatus::pass : CheckStatus::fail;
  return r;
}

std::vector<LawPair> sample_law_pairs(const GameSpec& spec, std::size_t count, std::size_t atoms, double time_span,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = spec.dim();
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<LawPair> out;
  out.reserve(count);
  std::vector<double> x0(d);
  for (std::size_t p = 0; p < count; ++p) {
    LawPair pair;
    pair.t = time_span * u01(rng);
    const double spread = std::sqrt(std::max(pair.t, 0.25));
    pair.first.dim = pair.second.dim = d;
    // Two bumps so that pairs differ in shape, not only in location.
    const double shift_a = 1.5 * n01(rng), shift_b = 1.5 * n01(rng);
    for (std::size_t j = 0; j < atoms; ++j) {
      spec.initial.sample(rng, x0);
      for (int c = 0; c < d; ++c) pair.first.atoms.push_back(x0[c] + spread * n01(rng));
      const double xj = pair.first.atoms[j * d];
      pair.first.masses.push_back(std::exp(-0.5 * (xj - shift_a) * (xj - shift_a)) + 0.05 * u01(rng));
      pair.second.masses.push_back(std::exp(-0.5 * (xj - shift_b) * (xj - shift_b)) + 0.05 * u01(rng));
    }
    pair.second.atoms = pair.first.atoms;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace mfg
