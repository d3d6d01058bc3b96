#include "mfg/measure_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mfg {

namespace {

struct MeanBand {
  double mean = 0.0;
  double band = 0.0;
};

// Mean and standard error of per-path terms.
template <typename F>
MeanBand mean_band(std::size_t n, F&& term) {
  std::vector<double> v(n);
  parallel_for(n, [&](std::size_t i) { v[i] = term(i); });
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
  return {m, std::sqrt(var / static_cast<double>(n))};
}

int common_horizon(const MeasureWeights& a, const MeasureWeights& b, int k) {
  if (a.ensemble != b.ensemble || a.ensemble == nullptr) throw MfgError("weights live on different ensembles");
  if (k < 0) {
    if (a.horizon != b.horizon) throw MfgError("entropy between weights with mismatched horizons");
    return a.horizon;
  }
  if (k > a.horizon || k > b.horizon) throw MfgError("entropy horizon beyond the weight horizon");
  return k;
}

}  // namespace

EntropyEstimate relative_entropy_paths(const MeasureWeights& a, const MeasureWeights& b, int k) {
  const int kt = common_horizon(a, b, k);
  const PathEnsemble& e = *a.ensemble;
  const std::size_t n = e.paths;
  EntropyEstimate out;
  const auto direct = mean_band(n, [&](std::size_t i) {
    return a.weight(i, kt) * (a.log_weight(i, kt) - b.log_weight(i, kt));
  });
  out.direct = direct.mean;
  out.direct_band = direct.band;
  if (a.has_drift() && b.has_drift()) {
    const int d = e.dim;
    const double dt = e.grid.dt;
    const auto gir = mean_band(n, [&](std::size_t i) {
      double s = 0.0;
      for (int j = 0; j < kt; ++j) {
        const auto ba = a.drift(i, j), bb = b.drift(i, j);
        for (int c = 0; c < d; ++c) s += (ba[c] - bb[c]) * (ba[c] - bb[c]);
      }
      return a.weight(i, kt) * 0.5 * s * dt;
    });
    out.girsanov = gir.mean;
    out.girsanov_band = gir.band;
  } else {
    out.girsanov = out.direct;
    out.girsanov_band = out.direct_band;
  }
  return out;
}

double relative_entropy_discrete(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MfgError("entropy between mass vectors of different sizes");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (!(sa > 0.0) || !(sb > 0.0)) throw MfgError("entropy needs positive total masses");
  double h = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double p = a[j] / sa, q = b[j] / sb;
    if (p <= 0.0) continue;
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    h += p * std::log(p / q);
  }
  return std::max(h, 0.0);
}

double tv_masses(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MfgError("TV between mass vectors of different sizes");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (!(sa > 0.0) || !(sb > 0.0)) throw MfgError("TV needs positive total masses");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += std::abs(a[j] / sa - b[j] / sb);
  return std::min(1.0, 0.5 * s);
}

std::size_t Binning::bin_of(double x) const {
  return static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), x) - edges.begin());
}

Binning Binning::equal_mass(std::span<const double> sample, std::size_t bins) {
  if (bins < 1) throw MfgError("binning needs at least one bin");
  if (sample.empty()) throw MfgError("binning needs a sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  Binning b;
  for (std::size_t j = 1; j < bins; ++j) {
    const std::size_t idx = (j * s.size()) / bins;
    const double edge = s[std::min(idx, s.size() - 1)];
    if (b.edges.empty() || edge > b.edges.back()) b.edges.push_back(edge);
  }
  return b;
}

Binning Binning::uniform(double lo, double hi, std::size_t inner_bins) {
  if (!(hi > lo) || inner_bins < 1) throw MfgError("uniform binning needs lo < hi and at least one bin");
  Binning b;
  for (std::size_t j = 0; j <= inner_bins; ++j) {
    b.edges.push_back(lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(inner_bins));
  }
  return b;
}

std::vector<double> Binning::masses(const WeightedAtoms& law) const {
  if (law.dim != 1) throw MfgError("binning is one-dimensional");
  std::vector<double> m(bins(), 0.0);
  for (std::size_t j = 0; j < law.size(); ++j) m[bin_of(law.atoms[j])] += law.masses[j];
  const double s = std::accumulate(m.begin(), m.end(), 0.0);
  if (!(s > 0.0)) throw MfgError("binned law has no mass");
  for (double& v : m) v /= s;
  return m;
}

double tv_binned(const WeightedAtoms& a, const WeightedAtoms& b, const Binning& binning) {
  const auto ma = binning.masses(a), mb = binning.masses(b);
  return tv_masses(ma, mb);
}

double tv_binned(const WeightedAtoms& a, const WeightedAtoms& b, std::size_t bins) {
  if (a.dim != 1 || b.dim != 1) throw MfgError("binned TV is one-dimensional");
  std::vector<double> pooled(a.atoms);
  pooled.insert(pooled.end(), b.atoms.begin(), b.atoms.end());
  return tv_binned(a, b, Binning::equal_mass(pooled, bins));
}

TvEstimate tv_paths(const MeasureWeights& a, const MeasureWeights& b, int k) {
  const int kt = common_horizon(a, b, k);
  const auto r = mean_band(a.paths(), [&](std::size_t i) { return 0.5 * std::abs(a.weight(i, kt) - b.weight(i, kt)); });
  return {std::min(1.0, r.mean), r.band};
}

double pinsker(double h, std::vector<std::string>* warnings) {
  if (std::isnan(h)) throw MfgError("Pinsker bound of NaN entropy");
  if (h < 0.0) {
    if (warnings) warnings->push_back("negative entropy estimate clamped to zero");
    h = 0.0;
  }
  return std::sqrt(h / 2.0);
}

double w1_actions(const ActionLaw& a, const ActionLaw& b) {
  if (a.dim != b.dim) throw MfgError("W1 between action laws of different dimensions");
  if (a.dim != 1) return w1_transport(a, b);
  const double sa = a.total_mass(), sb = b.total_mass();
  if (!(sa > 0.0) || !(sb > 0.0)) throw MfgError("W1 needs positive total masses");
  struct Point {
    double x;
    double delta;
  };
  std::vector<Point> pts;
  pts.reserve(a.size() + b.size());
  for (std::size_t j = 0; j < a.size(); ++j) pts.push_back({a.atoms[j], a.masses[j] / sa});
  for (std::size_t j = 0; j < b.size(); ++j) pts.push_back({b.atoms[j], -b.masses[j] / sb});
  std::sort(pts.begin(), pts.end(), [](const Point& p, const Point& q) { return p.x < q.x; });
  double cdf = 0.0, w = 0.0;
  for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
    cdf += pts[j].delta;
    w += std::abs(cdf) * (pts[j + 1].x - pts[j].x);
  }
  return w;
}

double w1_transport(const ActionLaw& a, const ActionLaw& b) {
  if (a.dim != b.dim) throw MfgError("W1 between action laws of different dimensions");
  const std::size_t n = a.size(), m = b.size();
  const double sa = a.total_mass(), sb = b.total_mass();
  if (!(sa > 0.0) || !(sb > 0.0)) throw MfgError("W1 needs positive total masses");
  if (n * m > 250000) throw MfgError("transport problem too large");
  // Successive shortest paths on the bipartite graph; the reverse arcs carry
  // the current flow so that earlier choices can be undone.
  std::vector<double> supply(n), demand(m), cost(n * m), flow(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) supply[i] = a.masses[i] / sa;
  for (std::size_t j = 0; j < m; ++j) demand[j] = b.masses[j] / sb;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (int c = 0; c < a.dim; ++c) {
        const double e = a.atoms[i * a.dim + c] - b.atoms[j * b.dim + c];
        s += e * e;
      }
      cost[i * m + j] = std::sqrt(s);
    }
  const double eps = 1e-15;
  const double inf = std::numeric_limits<double>::infinity();
  // Nodes: 0..n-1 sources, n..n+m-1 sinks.
  for (int guard = 0; guard < 100000; ++guard) {
    double remaining = 0.0;
    for (double s : supply) remaining += s;
    if (remaining <= 1e-13) break;
    std::vector<double> dist(n + m, inf);
    std::vector<long> parent(n + m, -1);
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > eps) dist[i] = 0.0;
    // Bellman-Ford; the graph is small.
    for (std::size_t it = 0; it < n + m; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] == inf) continue;
        for (std::size_t j = 0; j < m; ++j) {
          const double nd = dist[i] + cost[i * m + j];
          if (nd < dist[n + j] - 1e-15) {
            dist[n + j] = nd;
            parent[n + j] = static_cast<long>(i);
            changed = true;
          }
        }
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (dist[n + j] == inf) continue;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] <= eps) continue;
          const double nd = dist[n + j] - cost[i * m + j];
          if (nd < dist[i] - 1e-15) {
            dist[i] = nd;
            parent[i] = static_cast<long>(n + j);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    std::size_t best = n + m;
    for (std::size_t j = 0; j < m; ++j) {
      if (demand[j] > eps && dist[n + j] < inf && (best == n + m || dist[n + j] < dist[best])) best = n + j;
    }
    if (best == n + m) break;
    // Bottleneck along the path.
    double amount = demand[best - n];
    std::size_t v = best;
    while (true) {
      const long p = parent[v];
      if (v < n) {
        if (p < 0) {
          amount = std::min(amount, supply[v]);
          break;
        }
        amount = std::min(amount, flow[v * m + (p - n)]);
      }
      v = static_cast<std::size_t>(p);
    }
    v = best;
    while (true) {
      const long p = parent[v];
      if (v >= n) {
        flow[static_cast<std::size_t>(p) * m + (v - n)] += amount;
      } else {
        if (p < 0) {
          supply[v] -= amount;
          break;
        }
        flow[v * m + (p - n)] -= amount;
      }
      v = static_cast<std::size_t>(p);
    }
    demand[best - n] -= amount;
  }
  double w = 0.0;
  for (std::size_t j = 0; j < n * m; ++j) w += flow[j] * cost[j];
  return w;
}

}  // namespace mfg
