#pragma once

// Pre-limit models for the scaling experiments and a deterministic
// replication runner.
//
// For eps in (0,1) the natural pre-limit model has branching ratio a = 1 - eps,
// generation kernels shrunk in time by n(eps) and background mu / eps, so that
// eps^2 H approximates the limit measure with background mu.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feller/grid.hpp"
#include "feller/kernels.hpp"
#include "feller/parallel.hpp"
#include "feller/random.hpp"
#include "feller/simulator.hpp"

namespace feller {

// eps^{-1/alpha} when every kernel is Mittag-Leffler with a common alpha < 1,
// else 1/eps.
double natural_scale(std::span<const KernelSpec> period, double eps);

// Generation kernels shrunk by n: RowConstant for one kernel, Periodic otherwise.
KernelFamily scaled_family(std::span<const KernelSpec> period, double n);

struct PrelimitModel {
  double eps;
  double n;
  HawkesParams params;
};

PrelimitModel natural_model(std::span<const KernelSpec> period, const GridMeasure& mu, double eps);

// Closed-form limit kernel of the natural model when one exists: Exp with the
// averaged mean for finite-mean kernels, ML(alpha, s) with s^alpha averaged
// for Mittag-Leffler kernels of a common alpha.
std::optional<KernelSpec> natural_limit_kernel(std::span<const KernelSpec> period);

// Geometric mixture of the pre-limit family with its atom eps * delta_0
// removed and renormalised; a grid proxy for the limit kernel.
GridMeasure prelimit_kernel_proxy(const PrelimitModel& model, const Grid& grid);

// Runs reps independent samples; replication r draws from stream
// stream_base + r of seed and fn(r, sample) must only write slot r.
template <class Fn>
void for_each_replication(const HawkesSimulator& sim, std::size_t reps, std::uint64_t seed,
                          std::uint64_t stream_base, std::size_t threads, Fn&& fn) {
  parallel_for(reps, threads, [&](std::size_t r) {
    Rng rng = make_stream(seed, stream_base + r);
    const PointSample sample = sim.sample(rng, seed);
    fn(r, sample);
  });
}

// Number of points with time <= t.
std::size_t count_until(const PointSample& sample, double t);

struct SampleStats {
  double mean;
  double variance;      // unbiased
  double mean_stderr;   // sqrt(variance / n)
  double var_stderr;    // sqrt((m4 - m2^2) / n) with central moments
};

SampleStats sample_stats(std::span<const double> x);

// values[r][j] = (f * eps^2 H_r)(t_j) for each replication.
std::vector<std::vector<double>> simulate_functionals(const PrelimitModel& model,
                                                      const GridFunction& f,
                                                      std::span<const double> t_list,
                                                      std::size_t reps, std::uint64_t seed,
                                                      std::uint64_t stream_base,
                                                      std::size_t threads);

// Column j of a replication matrix.
std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t j);

}  // namespace feller
