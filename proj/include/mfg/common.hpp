#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfg {

/// Raised for contract violations and numerical failures that must stop a run.
class MfgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Work is always split into chunks of this many items so that reductions are
/// summed in the same order whatever the worker count.
inline constexpr std::size_t kChunkSize = 512;

/// Generator of one path or stream, seeded by (seed, stream, salt) only.
std::mt19937_64 path_rng(std::uint64_t seed, std::size_t stream, std::uint32_t salt = 0x6d66u);

void set_worker_count(int workers);
int worker_count();

inline std::size_t chunk_count(std::size_t n) {
  return (n + kChunkSize - 1) / kChunkSize;
}

/// Runs body(begin, end, chunk) over [0, n) in fixed-size chunks.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Per-item convenience wrapper over parallel_chunks.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

/// Deterministic sum of per-item terms: chunk partials are combined in order.
template <typename F>
double parallel_sum(std::size_t n, F&& term) {
  std::vector<double> partial(chunk_count(n), 0.0);
  parallel_chunks(n, [&](std::size_t begin, std::size_t end, std::size_t c) {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    partial[c] = s;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Uniform time grid t_k = k * dt, k = 0..steps.
struct TimeGrid {
  double dt = 0.05;
  int steps = 0;

  double time(int k) const { return dt * k; }
  double horizon() const { return dt * steps; }
  /// Smallest grid index whose time is >= t (within rounding).
  int index_at_or_after(double t) const;
  /// Grid index of a time that must lie on the grid.
  int index_of(double t) const;
};

/// Weighted atoms in R^dim; masses are not required to be normalized.
struct WeightedAtoms {
  int dim = 1;
  std::vector<double> atoms;   // size() * dim
  std::vector<double> masses;  // size()

  std::size_t size() const { return masses.size(); }
  std::span<const double> atom(std::size_t j) const {
    return {atoms.data() + j * dim, static_cast<std::size_t>(dim)};
  }
  double total_mass() const;
  void normalize();
  /// Mean of the normalized measure, per coordinate.
  std::vector<double> mean() const;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace mfg
