#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "stackel/error.hpp"
#include "stackel/numerics/time_grid.hpp"

namespace stackel {

using RngSeed = std::uint64_t;
using PathRng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Generator for one path; depends only on (seed, path index).
inline PathRng path_rng(RngSeed seed, std::uint64_t path) {
  return PathRng(splitmix64(splitmix64(seed) ^ splitmix64(path + 0x632be59bd9b4e019ULL)));
}

/// Worker count from STACKEL_WORKERS, else hardware concurrency.
inline unsigned default_workers() {
  if (const char* env = std::getenv("STACKEL_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
    throw ConfigError(std::string("STACKEL_WORKERS must be an integer in [1, 1024], got '") + env + "'");
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Wright-Fisher noise coefficient with the argument clamped at 0.
inline double wright_fisher(double x) { return std::sqrt(std::max(0.0, x * (1.0 - x))); }

inline constexpr std::size_t kPathBlock = 256;

/// Sums per-path contributions into `width` accumulators. fn(path, acc) adds
/// one path's contribution to acc. Paths are grouped in fixed blocks that are
/// reduced in block order, so the result does not depend on `workers`.
template <class Fn>
std::vector<double> sum_over_paths(std::size_t n_paths, std::size_t width, unsigned workers, Fn&& fn) {
  const std::size_t n_blocks = (n_paths + kPathBlock - 1) / kPathBlock;
  std::vector<std::vector<double>> partial(n_blocks, std::vector<double>(width, 0.0));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (;;) {
      std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      try {
        auto& acc = partial[b];
        const std::size_t end = std::min(n_paths, (b + 1) * kPathBlock);
        for (std::size_t p = b * kPathBlock; p < end; ++p) fn(p, acc.data());
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n_blocks;
        return;
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_blocks, 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<double> total(width, 0.0);
  for (const auto& part : partial)
    for (std::size_t j = 0; j < width; ++j) total[j] += part[j];
  return total;
}

struct McEstimate {
  double mean = 0;
  double se = 0;
  std::size_t n_paths = 0;
  RngSeed seed = 0;
};

inline McEstimate estimate_from_sums(double sum, double sum_sq, std::size_t n, RngSeed seed) {
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  double var = n > 1 ? (sum_sq - nn * mean * mean) / (nn - 1) : 0.0;
  if (var < 0) var = 0;
  return {mean, std::sqrt(var / nn), n, seed};
}

/// Summary of an Euler-Maruyama ensemble: per-node mean and variance plus the
/// terminal value of every path.
struct PathEnsemble {
  TimeGrid grid;
  std::size_t n_paths;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> terminal;
};

/// Euler-Maruyama for dx = drift(t,x) dt + diffusion(t,x) dW.
inline PathEnsemble em_paths(const std::function<double(double, double)>& drift,
                             const std::function<double(double, double)>& diffusion, double x0,
                             const TimeGrid& grid, std::size_t n_paths, RngSeed seed,
                             unsigned workers = 1) {
  if (n_paths < 1) throw ParameterError("need at least one path", "n_paths");
  const std::size_t nodes = grid.size();
  const double h = grid.h(), sq = std::sqrt(h);
  std::vector<double> terminal(n_paths);
  auto sums = sum_over_paths(n_paths, 2 * nodes, workers, [&](std::size_t p, double* acc) {
    auto rng = path_rng(seed, p);
    std::normal_distribution<double> normal;
    double x = x0;
    acc[0] += x;
    acc[nodes] += x * x;
    for (std::size_t i = 0; i < grid.n_steps(); ++i) {
      const double t = grid.t(i);
      x += drift(t, x) * h + diffusion(t, x) * sq * normal(rng);
      if (!std::isfinite(x)) throw SimulationBlowup(p, i + 1);
      acc[i + 1] += x;
      acc[nodes + i + 1] += x * x;
    }
    terminal[p] = x;
  });
  PathEnsemble out{grid, n_paths, std::vector<double>(nodes), std::vector<double>(nodes), std::move(terminal)};
  const double n = static_cast<double>(n_paths);
  for (std::size_t i = 0; i < nodes; ++i) {
    out.mean[i] = sums[i] / n;
    double v = n_paths > 1 ? (sums[nodes + i] - n * out.mean[i] * out.mean[i]) / (n - 1) : 0.0;
    out.variance[i] = std::max(0.0, v);
  }
  return out;
}

}  // namespace stackel
