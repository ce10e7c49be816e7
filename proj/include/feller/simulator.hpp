#pragma once

// Cluster (genealogical-tree) simulation of Hawkes processes whose excitation
// kernel may change from one generation to the next.
// Each node has Poisson(a) children; a child of a generation-g node sits at
// the parent's time plus a draw from pi^{g+1}. Nodes past the horizon are
// kept but never expanded, since all their descendants are later still.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "feller/grid.hpp"
#include "feller/kernels.hpp"
#include "feller/random.hpp"

namespace feller {

inline constexpr std::size_t kMaxClusterNodes = 10'000'000;

struct HawkesParams {
  double a;
  KernelFamily family;
  // mu_n on [0, T]; its grid fixes the horizon.
  GridMeasure background;

  double horizon() const { return background.grid().horizon(); }
  double eps() const { return 1.0 - a; }
};

void validate(const HawkesParams& params);

struct ClusterNode {
  double time;
  std::uint32_t generation;
  std::int64_t parent;  // -1 for the root
};

struct ClusterTree {
  std::vector<ClusterNode> nodes;

  std::size_t size() const { return nodes.size(); }
  std::size_t count_within(double t) const;
};

struct SamplePoint {
  double time;
  std::uint32_t generation;
  std::uint64_t cluster_id;
};

struct PointSample {
  std::vector<SamplePoint> points;
  double horizon;
  double a;
  std::uint64_t seed;
};

class ClusterSampler {
 public:
  ClusterSampler(double a, const KernelFamily& family);

  // Root at time 0 in generation m0. horizon = +inf gives the unpruned tree,
  // capped at max_nodes (ClusterOverflow beyond).
  ClusterTree sample(std::size_t m0, double horizon, Rng& rng,
                     std::size_t max_nodes = kMaxClusterNodes) const;

  // Total size of an unpruned tree without storing times. The size law only
  // depends on a.
  std::size_t sample_size(Rng& rng, std::size_t max_nodes = kMaxClusterNodes) const;

  // Appends offset + node time for every node with time <= horizon - offset.
  void append_points(double offset, double horizon, std::uint64_t cluster_id, Rng& rng,
                     std::vector<SamplePoint>& out) const;

  double a() const { return a_; }

 private:
  double a_;
  std::vector<KernelSampler> generation_samplers_;
};

ClusterTree sample_cluster(const HawkesParams& params, std::size_t m0, Rng& rng);

class HawkesSimulator {
 public:
  explicit HawkesSimulator(HawkesParams params);

  const HawkesParams& params() const { return params_; }
  const ClusterSampler& clusters() const { return clusters_; }

  PointSample sample(Rng& rng, std::uint64_t seed_echo = 0) const;

  // Immigrant times only: Poisson(mu[0,T]) draws from the normalized
  // background, uniform inside each cell.
  std::vector<double> sample_immigrants(Rng& rng) const;

 private:
  HawkesParams params_;
  ClusterSampler clusters_;
  std::vector<double> cumulative_;  // background lattice CDF
  double total_mass_;
};

PointSample sample_hawkes(const HawkesParams& params, Rng& rng, std::uint64_t seed_echo = 0);

// eps^2 per point, binned into the grid cell containing it.
GridMeasure scaled_measure(const PointSample& sample, double eps, const Grid& grid);

// Columns: time, generation, cluster_id.
std::string to_csv(const PointSample& sample);

}  // namespace feller
