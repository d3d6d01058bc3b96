#include "mfg/common.hpp"

#include <atomic>
#include <cmath>

namespace mfg {

std::mt19937_64 path_rng(std::uint64_t seed, std::size_t stream, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(stream) >> 32), salt};
  return std::mt19937_64(seq);
}

namespace {
std::atomic<int> g_workers{1};
}

void set_worker_count(int workers) { g_workers = std::max(1, workers); }
int worker_count() { return g_workers.load(); }

void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body) {
  const std::size_t chunks = chunk_count(n);
  const int workers = static_cast<int>(std::min<std::size_t>(worker_count(), chunks));
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunkSize;
    body(begin, std::min(n, begin + kChunkSize), c);
  };
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) {
        if (failed) return;
        try {
          run_chunk(c);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

int TimeGrid::index_at_or_after(double t) const {
  if (t <= 0.0) return 0;
  return static_cast<int>(std::ceil(t / dt - 1e-9));
}

int TimeGrid::index_of(double t) const {
  const double k = t / dt;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-7) {
    throw MfgError("time " + std::to_string(t) + " is not on the grid with dt=" + std::to_string(dt));
  }
  return static_cast<int>(r);
}

double WeightedAtoms::total_mass() const {
  double s = 0.0;
  for (double m : masses) s += m;
  return s;
}

void WeightedAtoms::normalize() {
  const double s = total_mass();
  if (!(s > 0.0)) throw MfgError("cannot normalize a measure with non-positive total mass");
  for (double& m : masses) m /= s;
}

std::vector<double> WeightedAtoms::mean() const {
  std::vector<double> out(dim, 0.0);
  const double s = total_mass();
  for (std::size_t j = 0; j < size(); ++j) {
    for (int c = 0; c < dim; ++c) out[c] += masses[j] * atoms[j * dim + c];
  }
  for (double& v : out) v /= s;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace mfg
