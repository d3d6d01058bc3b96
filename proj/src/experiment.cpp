#include "mfg/experiment.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mfg/asymptotics_lab.hpp"
#include "mfg/oracle.hpp"
#include "mfg/registry.hpp"
#include "mfg/stationary_solver.hpp"

namespace mfg {

namespace {

using nlohmann::json;

/// Typed access to a JSON object that remembers which keys were read.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError("config field " + label() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_->contains(key) && !(*j_)[key].is_null(); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return (*j_)[key];
  }

  double number(const std::string& key, double fallback, double lo = -INFINITY, bool lo_open = false) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const json& v = (*j_)[key];
    if (!v.is_number()) throw ConfigError("config field " + field(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || (lo_open && x == lo)) {
      throw ConfigError("config field " + field(key) + ": value out of range");
    }
    return x;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback, std::int64_t lo) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const json& v = (*j_)[key];
    if (!v.is_number_integer()) throw ConfigError("config field " + field(key) + ": expected an integer");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < lo) throw ConfigError("config field " + field(key) + ": must be at least " + std::to_string(lo));
    return x;
  }

  bool boolean(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const json& v = (*j_)[key];
    if (!v.is_boolean()) throw ConfigError("config field " + field(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const json& v = (*j_)[key];
    if (!v.is_string()) throw ConfigError("config field " + field(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    used_.insert(key);
    if (!has(key)) return fallback;
    const json& v = (*j_)[key];
    if (!v.is_array() || v.empty()) throw ConfigError("config field " + field(key) + ": expected a non-empty array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        throw ConfigError("config field " + field(key) + "[" + std::to_string(i) + "]: expected a number");
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  Reader sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return has(key) ? Reader((*j_)[key], field(key)) : Reader(empty, field(key));
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config field " + field(it.key()));
    }
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

struct EnsembleSettings {
  std::size_t paths = 10000;
  double dt = 0.05;
  std::optional<int> steps;
  std::optional<double> t_max;
  NoiseKind noise = NoiseKind::gaussian;
  bool enumerated = false;
};

struct Context {
  std::string mode;
  std::uint64_t seed = 0;
  GameSpec spec;
  EnsembleSettings ensemble;
  double tol = 1e-3;
  EquilibriumConfig equilibrium;
  std::vector<double> horizons;
  std::vector<double> t_slices{1.0, 2.0};
  std::optional<double> horizon;
  StationaryMfgConfig stationary;
  InvarianceConfig invariance;
  std::optional<double> constant_action;
  oracle::DiscreteConfig oracle;
  StandingCheckConfig check;
  std::size_t check_pairs = 50;
  std::size_t check_atoms = 200;
};

GameSpec parse_game(Reader& root) {
  if (!root.has("game")) throw ConfigError("missing config field game");
  const json& g = root.raw("game");
  if (g.is_string()) return make_game(g.get<std::string>());
  if (!g.is_object()) throw ConfigError("config field game: expected a registry name or an object");
  if (!g.contains("name") || !g["name"].is_string()) throw ConfigError("missing config field game.name");
  json overrides = g;
  overrides.erase("name");
  return make_game(g["name"].get<std::string>(), overrides);
}

RegressionConfig parse_regression(Reader r) {
  RegressionConfig c;
  c.mode = regression_mode_from_string(r.string("mode", to_string(c.mode)));
  c.degree = static_cast<int>(r.integer("degree", c.degree, 0));
  c.bins = static_cast<int>(r.integer("bins", c.bins, 1));
  r.finish();
  return c;
}

Context parse_config(const ExperimentOptions& options) {
  Context ctx;
  Reader root(options.config, "");
  const std::string cfg_mode = root.string("mode", "");
  ctx.mode = options.mode.empty() ? cfg_mode : options.mode;
  if (ctx.mode.empty()) throw ConfigError("missing config field mode");
  const auto modes = experiment_modes();
  if (std::find(modes.begin(), modes.end(), ctx.mode) == modes.end()) {
    throw ConfigError("config field mode: unknown mode '" + ctx.mode + "'");
  }
  if (options.seed) {
    ctx.seed = *options.seed;
    root.raw("seed");
  } else {
    if (!root.has("seed")) throw ConfigError("missing config field seed");
    ctx.seed = static_cast<std::uint64_t>(root.integer("seed", 0, 0));
  }
  ctx.spec = parse_game(root);
  if (root.has("n_A")) {
    const int na = static_cast<int>(root.integer("n_A", 41, 1));
    if (!ctx.spec.actions.is_box()) throw ConfigError("config field n_A: the game has a finite action set");
    ctx.spec.actions = ActionSet::box(ctx.spec.actions.bounds(), na);
  }
  ctx.spec.validate();

  ctx.ensemble.paths = static_cast<std::size_t>(root.integer("N", 10000, 1));
  ctx.ensemble.dt = root.number("dt", 0.05, 0.0, true);
  if (root.has("K")) ctx.ensemble.steps = static_cast<int>(root.integer("K", 1, 1));
  if (root.has("T_max")) ctx.ensemble.t_max = root.number("T_max", 1.0, 0.0, true);
  if (ctx.ensemble.steps && ctx.ensemble.t_max) ctx.ensemble.dt = *ctx.ensemble.t_max / *ctx.ensemble.steps;
  const std::string noise = root.string("noise", "gaussian");
  if (noise == "gaussian") {
    ctx.ensemble.noise = NoiseKind::gaussian;
  } else if (noise == "binomial") {
    ctx.ensemble.noise = NoiseKind::binomial;
  } else if (noise == "enumerated") {
    ctx.ensemble.noise = NoiseKind::binomial;
    ctx.ensemble.enumerated = true;
  } else {
    throw ConfigError("config field noise: expected gaussian, binomial or enumerated");
  }

  ctx.tol = root.number("tol", 1e-3, 0.0, true);
  ctx.equilibrium.tol_fp = root.number("tol_fp", ctx.equilibrium.tol_fp, 0.0, true);
  ctx.equilibrium.theta = root.number("theta", ctx.equilibrium.theta, 0.0, true);
  if (ctx.equilibrium.theta > 1.0) throw ConfigError("config field theta: value out of range");
  ctx.equilibrium.max_iter = static_cast<int>(root.integer("max_iter", ctx.equilibrium.max_iter, 1));
  ctx.equilibrium.adaptive = root.boolean("adaptive", ctx.equilibrium.adaptive);
  ctx.equilibrium.bins = static_cast<std::size_t>(root.integer("bins", 64, 2));
  ctx.equilibrium.regression = parse_regression(root.sub("regression"));

  if (ctx.mode == "sweep" && !root.has("horizons")) throw ConfigError("missing config field horizons");
  ctx.horizons = root.numbers("horizons", {4.0, 6.0, 8.0, 10.0});
  ctx.t_slices = root.numbers("t_slices", ctx.t_slices);
  if (ctx.mode == "finite-solve" && !root.has("T")) throw ConfigError("missing config field T");
  if (root.has("T")) ctx.horizon = root.number("T", 1.0, 0.0, true);

  {
    Reader s = root.sub("stationary");
    StationaryConfig& sc = ctx.stationary.stationary;
    sc.horizon = s.number("T", sc.horizon, 0.0, true);
    sc.paths = static_cast<std::size_t>(s.integer("paths", static_cast<std::int64_t>(sc.paths), 2));
    sc.dt = s.number("dt", sc.dt, 0.0, true);
    sc.checkpoints = s.numbers("checkpoints", {});
    const double lo = s.number("lo", -4.0);
    const double hi = s.number("hi", 4.0);
    const auto inner = static_cast<std::size_t>(s.integer("bins", 32, 1));
    if (!(hi > lo)) throw ConfigError("config field stationary.hi: must exceed stationary.lo");
    sc.binning = Binning::uniform(lo, hi, inner);
    if (s.has("initial")) {
      const std::vector<double> pts = s.numbers("initial", {});
      WeightedAtoms w;
      w.dim = 1;
      w.atoms = pts;
      w.masses.assign(pts.size(), 1.0 / static_cast<double>(pts.size()));
      sc.initial = w;
    }
    ctx.stationary.control_paths =
        static_cast<std::size_t>(s.integer("control_paths", static_cast<std::int64_t>(ctx.stationary.control_paths), 2));
    ctx.stationary.control_dt = s.number("control_dt", ctx.stationary.control_dt, 0.0, true);
    ctx.stationary.tol = s.number("tol", ctx.stationary.tol, 0.0, true);
    ctx.stationary.max_outer = static_cast<int>(s.integer("max_outer", ctx.stationary.max_outer, 1));
    ctx.stationary.feedback.bins = static_cast<std::size_t>(s.integer("policy_bins", 64, 1));
    if (s.has("constant_action")) ctx.constant_action = s.number("constant_action", 0.0);
    s.finish();
  }
  ctx.stationary.value_tol = ctx.tol;
  ctx.stationary.regression = ctx.equilibrium.regression;
  ctx.stationary.stationary.seed = ctx.seed;
  {
    Reader s = root.sub("invariance");
    ctx.invariance.check_horizon = s.number("T_check", ctx.invariance.check_horizon, 0.0, true);
    ctx.invariance.trace_every = s.number("every", ctx.invariance.trace_every, 0.0, true);
    ctx.invariance.tol = s.number("tol", ctx.invariance.tol, 0.0, true);
    s.finish();
  }
  {
    Reader s = root.sub("oracle");
    ctx.oracle.steps = static_cast<int>(s.integer("steps", ctx.oracle.steps, 1));
    ctx.oracle.dt = s.number("dt", ctx.oracle.dt, 0.0, true);
    const std::string q = s.string("quadrature", "exact_discount");
    if (q == "exact_discount") {
      ctx.oracle.quadrature = oracle::RewardQuadrature::exact_discount;
    } else if (q == "left_rectangle") {
      ctx.oracle.quadrature = oracle::RewardQuadrature::left_rectangle;
    } else {
      throw ConfigError("config field oracle.quadrature: expected exact_discount or left_rectangle");
    }
    ctx.oracle.budget = static_cast<std::size_t>(s.integer("budget", static_cast<std::int64_t>(ctx.oracle.budget), 1));
    s.finish();
  }
  {
    Reader s = root.sub("check");
    ctx.check.budget = static_cast<std::size_t>(s.integer("budget", static_cast<std::int64_t>(ctx.check.budget), 1));
    ctx.check.time_span = s.number("time_span", ctx.check.time_span, 0.0, true);
    ctx.check_pairs = static_cast<std::size_t>(s.integer("pairs", static_cast<std::int64_t>(ctx.check_pairs), 1));
    ctx.check_atoms = static_cast<std::size_t>(s.integer("atoms", static_cast<std::int64_t>(ctx.check_atoms), 2));
    s.finish();
  }
  ctx.check.seed = ctx.seed;
  root.finish();
  return ctx;
}

PathEnsemble build_ensemble(const Context& ctx, double needed) {
  const EnsembleSettings& e = ctx.ensemble;
  int steps = 0;
  double t_max = 0.0;
  if (e.steps && e.t_max) {
    steps = *e.steps;
    t_max = *e.t_max;
  } else if (e.steps) {
    steps = *e.steps;
    t_max = steps * e.dt;
  } else {
    t_max = e.t_max ? *e.t_max : needed;
    steps = static_cast<int>(std::ceil(t_max / e.dt - 1e-9));
    t_max = steps * e.dt;
  }
  if (t_max + 1e-9 < needed) {
    throw ConfigError("config field T_max: ensemble horizon " + std::to_string(t_max) + " is shorter than the " +
                      std::to_string(needed) + " this mode needs");
  }
  if (e.enumerated) return enumerate_binomial_ensemble(ctx.spec, steps, t_max);
  return simulate_ensemble(ctx.spec, e.paths, steps, t_max, ctx.seed, e.noise);
}

double required_horizon(const Context& ctx) {
  return truncation_certificate(ctx.spec, ctx.tol, TimeGrid{ctx.ensemble.dt, 1 << 30}).t_required;
}

json witness_json(const Witness& w) {
  return {{"t", w.t}, {"path", w.path}, {"state", w.state}, {"action", w.action}, {"measured", w.measured}};
}

json entry_json(const AssumptionEntry& e) {
  json j = {{"name", e.name}, {"status", to_string(e.status)}, {"declared", e.declared}, {"worst", e.worst}};
  if (e.witness) j["witness"] = witness_json(*e.witness);
  if (!e.note.empty()) j["note"] = e.note;
  return j;
}

json certificate_json(const TruncationCertificate& c) {
  return {{"tol", c.tol},         {"T_required", c.t_required}, {"M", c.reward_bound},
          {"lambda", c.discount}, {"y_bound", c.y_bound},       {"z_bound_shape", c.z_bound_shape}};
}

class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}

  template <typename Writer>
  void write(const std::string& name, Writer&& writer) {
    std::ostringstream os;
    writer(os);
    put(name, os.str());
  }

  void put(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw MfgError("cannot write " + (dir_ / name).string());
    f << content;
    if (!f) throw MfgError("failed writing " + (dir_ / name).string());
    files_.emplace_back(name, git_blob_sha1(content));
  }

  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

json equilibrium_summary(const EquilibriumReport& r) {
  json j = {{"converged", r.converged},     {"iterations", r.iterations}, {"residual", r.residual},
            {"best_residual", r.best_residual}, {"value", r.value},     {"value_band", r.value_band},
            {"horizon", r.solution.horizon * r.solution.dt}};
  if (r.certificate) j["certificate"] = certificate_json(*r.certificate);
  j["warnings"] = r.solution.warnings;
  return j;
}

int run_solve(Context& ctx, Artifacts& out, json& summary) {
  const bool finite = ctx.mode == "finite-solve";
  const double needed = finite ? *ctx.horizon : required_horizon(ctx);
  const PathEnsemble ens = build_ensemble(ctx, needed);
  const EquilibriumReport rep = finite ? solve_finite_mfg(ctx.spec, ens, *ctx.horizon, ctx.equilibrium)
                                       : solve_infinite_equilibrium(ctx.spec, ens, ctx.tol, ctx.equilibrium);
  out.write("equilibrium.csv", [&](std::ostream& os) { write_equilibrium_csv(ctx.spec, rep, os); });
  out.write("residuals.csv", [&](std::ostream& os) { write_residuals_csv(rep, os); });
  summary = equilibrium_summary(rep);
  summary["paths"] = ens.paths;
  summary["dt"] = ens.grid.dt;
  if (finite && rep.converged) {
    summary["epsilon_bound"] = epsilon_bound(ctx.spec.bounds.reward, ctx.spec.discount, *ctx.horizon);
  }
  return rep.converged ? kExitOk : kExitFlagged;
}

int run_sweep(Context& ctx, Artifacts& out, json& summary) {
  double needed = required_horizon(ctx);
  for (double h : ctx.horizons) needed = std::max(needed, h);
  const PathEnsemble ens = build_ensemble(ctx, needed);
  SweepConfig sc;
  sc.horizons = ctx.horizons;
  sc.t_slices = ctx.t_slices;
  sc.tol = ctx.tol;
  sc.equilibrium = ctx.equilibrium;
  const SweepReport rep = rate_sweep(ctx.spec, ens, sc);
  out.write("sweep.csv", [&](std::ostream& os) { write_sweep_csv(rep, os); });
  json slopes = json::array();
  for (const auto& s : rep.slopes) {
    slopes.push_back({{"t", s.t}, {"tv_slope", s.tv_slope}, {"entropy_slope", s.entropy_slope}, {"points", s.points}});
  }
  summary = {{"applicable", rep.applicable},
             {"all_within", rep.all_within()},
             {"reference_converged", rep.reference_converged},
             {"reference_horizon", rep.reference_horizon},
             {"finite_residuals", rep.finite_residuals},
             {"slopes", slopes},
             {"concavity", {{"status", to_string(rep.assumptions.concavity.status)},
                            {"worst", rep.assumptions.concavity.worst}}},
             {"monotonicity", {{"status", to_string(rep.assumptions.monotonicity.status)},
                               {"max_violation", rep.assumptions.monotonicity.max_violation}}},
             {"drift_law_free", rep.assumptions.drift_law_free},
             {"warnings", rep.warnings}};
  const bool converged =
      rep.reference_converged && std::all_of(rep.rows.begin(), rep.rows.end(), [](const SweepRow& r) { return r.converged; });
  return converged && rep.applicable ? kExitOk : kExitFlagged;
}

json stationary_json(const StationaryEstimate& e) {
  json cps = json::array();
  for (const auto& c : e.checkpoints) {
    cps.push_back({{"T", c.horizon}, {"mean", c.mean}, {"second_moment", c.second_moment}});
  }
  return {{"T", e.horizon},
          {"mean", e.mean},
          {"mean_band", e.mean_band},
          {"second_moment", e.second_moment},
          {"second_moment_band", e.second_moment_band},
          {"gamma_hat", e.gamma_hat},
          {"certificate", e.certificate},
          {"certificate_kind", "heuristic"},
          {"cesaro_residual", e.cesaro_residual},
          {"noise_band", e.noise_band},
          {"checkpoints", cps}};
}

/// Quadrature stationary law for a unit-volatility scalar game under a fixed action.
std::optional<oracle::StationaryDensity> unit_vol_oracle(const GameSpec& spec, const LawSummary& law, double a) {
  for (double x : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    double s = 0.0;
    spec.model->volatility(0.0, PathView{{&x, 1}, 1, 0}, {&s, 1});
    if (std::abs(s - 1.0) > 1e-12) return std::nullopt;
  }
  const double reach = spec.ergodic ? 4.0 * spec.ergodic->outer_radius : 12.0;
  try {
    return oracle::stationary_density_quadrature(
        [&](double x) {
          double b = 0.0;
          spec.model->drift(0.0, PathView{{&x, 1}, 1, 0}, law, {&a, 1}, {&b, 1});
          return b;
        },
        -reach, reach);
  } catch (const MfgError&) {
    return std::nullopt;
  }
}

int run_stationary(Context& ctx, Artifacts& out, json& summary) {
  const DriftConditionReport drift = check_drift_condition(ctx.spec);
  summary["drift_condition"] = {{"status", to_string(drift.status)}, {"margin", drift.margin}, {"k", drift.required}};
  if (drift.status != CheckStatus::pass) throw MfgError("drift condition failed; stationary estimate refused");
  if (ctx.constant_action) {
    StationaryConfig sc = ctx.stationary.stationary;
    const WeightedAtoms init =
        sc.initial ? *sc.initial : WeightedAtoms{1, {ctx.spec.initial.dirac_point()[0]}, {1.0}};
    if (!sc.initial && !ctx.spec.initial.is_dirac()) throw ConfigError("missing config field stationary.initial");
    sc.initial = init;
    const LawSummary law = ctx.spec.model->summarize(0.0, init);
    const StationaryEstimate est =
        estimate_stationary(ctx.spec, law, FeedbackPolicy::constant(*ctx.constant_action), sc);
    out.write("stationary.csv", [&](std::ostream& os) { write_stationary_csv(est, os); });
    summary["estimate"] = stationary_json(est);
    if (const auto orc = unit_vol_oracle(ctx.spec, law, *ctx.constant_action)) {
      summary["oracle"] = {{"mean", orc->mean},
                           {"second_moment", orc->second_moment},
                           {"tv", tv_masses(est.masses, orc->bin_masses(est.binning.edges))}};
    }
    return kExitOk;
  }
  const StationaryMfgReport rep = solve_stationary_mfg(ctx.spec, ctx.stationary);
  out.write("stationary.csv", [&](std::ostream& os) { write_stationary_csv(rep.estimate, os); });
  out.write("policy.csv", [&](std::ostream& os) { write_policy_csv(rep.policy, os); });
  json hist = json::array();
  for (const auto& h : rep.history) {
    hist.push_back({{"iteration", h.iteration},
                    {"tv", h.tv},
                    {"mean", h.mean},
                    {"value", h.value},
                    {"policy_disagreement", h.policy_disagreement}});
  }
  summary["estimate"] = stationary_json(rep.estimate);
  summary["converged"] = rep.converged;
  summary["residual"] = rep.residual;
  summary["value"] = rep.value;
  summary["certificate"] = certificate_json(rep.certificate);
  summary["history"] = hist;
  summary["warnings"] = rep.warnings;
  return rep.converged ? kExitOk : kExitFlagged;
}

int run_invariant(Context& ctx, Artifacts& out, json& summary) {
  const InvariantMfgReport rep = solve_invariant_mfg(ctx.spec, ctx.stationary, ctx.invariance);
  out.write("stationary.csv", [&](std::ostream& os) { write_stationary_csv(rep.stationary.estimate, os); });
  out.write("invariance.csv", [&](std::ostream& os) { write_invariance_csv(rep.trace, os); });
  out.write("policy.csv", [&](std::ostream& os) { write_policy_csv(rep.stationary.policy, os); });
  summary = {{"estimate", stationary_json(rep.stationary.estimate)},
             {"stationary_converged", rep.stationary.converged},
             {"max_tv", rep.max_tv},
             {"band", rep.band},
             {"tol", ctx.invariance.tol},
             {"mirror_tv", rep.mirror_tv},
             {"invariant", rep.invariant}};
  return rep.invariant ? kExitOk : kExitFlagged;
}

int run_check(Context& ctx, Artifacts& out, json& summary) {
  json report;
  bool ok = true;
  const AssumptionReport standing = check_standing_assumptions(ctx.spec, ctx.check);
  json entries = json::array();
  for (const auto& e : standing.entries) {
    entries.push_back(entry_json(e));
    ok = ok && e.status != CheckStatus::fail;
  }
  report["standing"] = {{"entries", entries}, {"samples", standing.samples}};
  const auto pairs = sample_law_pairs(ctx.spec, ctx.check_pairs, ctx.check_atoms, ctx.check.time_span, ctx.seed);
  const MonotonicityReport mono = check_monotonicity(ctx.spec, pairs);
  report["monotonicity"] = {{"status", to_string(mono.status)},    {"pairs", mono.pairs},
                            {"max_integral", mono.max_integral}, {"max_violation", mono.max_violation},
                            {"delta", mono.slack},               {"worst_pair", mono.worst_pair}};
  ok = ok && mono.status != CheckStatus::fail;
  const ConcavityCheck conc = concavity_scan(ctx.spec, 200, ctx.seed);
  report["strong_concavity"] = {{"status", to_string(conc.status)},
                                {"m", ctx.spec.bounds.concavity},
                                {"worst", conc.samples ? conc.worst : 0.0},
                                {"violations", conc.violations},
                                {"samples", conc.samples}};
  ok = ok && conc.status != CheckStatus::fail;
  const DriftConditionReport drift = check_drift_condition(ctx.spec);
  json dj = {{"status", to_string(drift.status)}, {"samples", drift.samples}};
  if (drift.status != CheckStatus::skipped) {
    dj["margin"] = drift.margin;
    dj["k"] = drift.required;
    dj["local_sup"] = drift.local_sup;
    dj["local_status"] = to_string(drift.local_status);
    if (drift.witness) dj["witness"] = witness_json(*drift.witness);
    ok = ok && drift.status == CheckStatus::pass && drift.local_status == CheckStatus::pass;
  }
  report["drift_condition"] = dj;
  report["game"] = describe_game(ctx.spec);
  out.put("assumptions.json", report.dump(2) + "\n");
  summary = {{"all_pass", ok}};
  return ok ? kExitOk : kExitFlagged;
}

int run_oracle(Context& ctx, Artifacts& out, json& summary) {
  const oracle::DiscreteResult res = oracle::enumerate_discrete_mfg(ctx.spec, ctx.oracle);
  out.write("oracle.csv", [&](std::ostream& os) { oracle::write_discrete_csv(res, ctx.spec, os); });
  json eq = json::array();
  for (const auto& e : res.equilibria) eq.push_back({{"policy_index", e.policy_index}, {"value", e.value}});
  summary = {{"policies", res.policy_count}, {"evaluations", res.evaluations}, {"equilibria", eq}};
  return res.equilibria.empty() ? kExitFlagged : kExitOk;
}

std::string iso_time_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::vector<std::string> experiment_modes() {
  return {"solve", "finite-solve", "sweep", "stationary", "invariant", "check", "oracle"};
}

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) && EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw MfgError("sha1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

json load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
}

ExperimentResult run_experiment(const ExperimentOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  json manifest = {{"started", iso_time_now()}, {"config", options.config}};
  std::filesystem::path dir(options.out_dir);
  bool have_dir = false;
  try {
    std::filesystem::create_directories(dir);
    have_dir = true;
  } catch (const std::exception& e) {
    result.message = std::string("cannot create output directory: ") + e.what();
  }
  Artifacts out(dir);
  if (have_dir) {
    try {
      if (options.workers > 0) set_worker_count(options.workers);
      Context ctx = parse_config(options);
      manifest["mode"] = ctx.mode;
      manifest["seed"] = ctx.seed;
      manifest["game"] = describe_game(ctx.spec);
      json summary = json::object();
      int code = kExitOk;
      if (ctx.mode == "solve" || ctx.mode == "finite-solve") {
        code = run_solve(ctx, out, summary);
      } else if (ctx.mode == "sweep") {
        code = run_sweep(ctx, out, summary);
      } else if (ctx.mode == "stationary") {
        code = run_stationary(ctx, out, summary);
      } else if (ctx.mode == "invariant") {
        code = run_invariant(ctx, out, summary);
      } else if (ctx.mode == "check") {
        code = run_check(ctx, out, summary);
      } else {
        code = run_oracle(ctx, out, summary);
      }
      result.exit_code = code;
      result.summary = summary;
    } catch (const ConfigError& e) {
      result.exit_code = kExitError;
      result.message = e.what();
    } catch (const std::exception& e) {
      result.exit_code = kExitError;
      result.message = e.what();
    }
  } else {
    result.exit_code = kExitError;
  }
  result.status = result.exit_code == kExitOk ? "ok" : result.exit_code == kExitFlagged ? "flagged" : "error";
  for (const auto& [name, hash] : out.files()) result.outputs.push_back(name);

  json files = json::object();
  std::string listing;
  for (const auto& [name, hash] : out.files()) {
    files[name] = hash;
    listing += hash + "  " + name + "\n";
  }
  manifest["status"] = result.status;
  manifest["exit_code"] = result.exit_code;
  if (!result.message.empty()) manifest["message"] = result.message;
  manifest["workers"] = worker_count();
  manifest["outputs"] = files;
  manifest["content_hash"] = git_blob_sha1(listing);
  manifest["summary"] = result.summary;
  manifest["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (have_dir) {
    std::ofstream f(dir / "manifest.json");
    f << manifest.dump(2) << "\n";
  }
  return result;
}

}  // namespace mfg
