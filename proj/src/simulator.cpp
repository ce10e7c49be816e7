#include "feller/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "feller/errors.hpp"
#include "feller/io.hpp"

namespace feller {

void validate(const HawkesParams& params) {
  if (!(params.a > 0.0 && params.a < 1.0)) {
    throw ValidationError("branching ratio a must lie in (0, 1)");
  }
  if (params.background.is_signed()) {
    throw ValidationError("background measure must be nonnegative");
  }
  for (double m : params.background.lattice()) {
    if (!(m >= 0.0) || !std::isfinite(m)) {
      throw ValidationError("background measure must be nonnegative and finite");
    }
  }
}

std::size_t ClusterTree::count_within(double t) const {
  std::size_t n = 0;
  for (const auto& node : nodes) n += node.time <= t;
  return n;
}

ClusterSampler::ClusterSampler(double a, const KernelFamily& family) : a_(a) {
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("branching ratio a must lie in (0, 1)");
  for (std::size_t m = 1; m <= family.period(); ++m) {
    generation_samplers_.emplace_back(family.generation(m));
  }
}

ClusterTree ClusterSampler::sample(std::size_t m0, double horizon, Rng& rng,
                                   std::size_t max_nodes) const {
  std::poisson_distribution<int> offspring(a_);
  const std::size_t period = generation_samplers_.size();
  ClusterTree tree;
  tree.nodes.push_back({0.0, static_cast<std::uint32_t>(m0), -1});
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const ClusterNode parent = tree.nodes[i];
    if (parent.time > horizon) continue;
    const int children = offspring(rng);
    const KernelSampler& lag = generation_samplers_[parent.generation % period];
    for (int c = 0; c < children; ++c) {
      if (tree.nodes.size() >= max_nodes) {
        throw ClusterOverflow("cluster exceeded " + std::to_string(max_nodes) + " nodes");
      }
      tree.nodes.push_back({parent.time + lag(rng), parent.generation + 1,
                            static_cast<std::int64_t>(i)});
    }
  }
  return tree;
}

std::size_t ClusterSampler::sample_size(Rng& rng, std::size_t max_nodes) const {
  std::poisson_distribution<int> offspring(a_);
  std::size_t total = 1;
  std::size_t pending = 1;
  while (pending > 0) {
    --pending;
    const auto children = static_cast<std::size_t>(offspring(rng));
    total += children;
    pending += children;
    if (total > max_nodes) {
      throw ClusterOverflow("cluster exceeded " + std::to_string(max_nodes) + " nodes");
    }
  }
  return total;
}

void ClusterSampler::append_points(double offset, double horizon, std::uint64_t cluster_id,
                                   Rng& rng, std::vector<SamplePoint>& out) const {
  std::poisson_distribution<int> offspring(a_);
  const std::size_t period = generation_samplers_.size();
  const double local_horizon = horizon - offset;
  thread_local std::vector<std::pair<double, std::uint32_t>> queue;
  queue.clear();
  queue.emplace_back(0.0, 0u);
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto [time, gen] = queue[i];
    if (time > local_horizon) continue;
    out.push_back({offset + time, gen, cluster_id});
    const int children = offspring(rng);
    const KernelSampler& lag = generation_samplers_[gen % period];
    for (int c = 0; c < children; ++c) {
      if (queue.size() >= kMaxClusterNodes) {
        throw ClusterOverflow("cluster exceeded the node cap");
      }
      queue.emplace_back(time + lag(rng), gen + 1);
    }
  }
}

ClusterTree sample_cluster(const HawkesParams& params, std::size_t m0, Rng& rng) {
  validate(params);
  return ClusterSampler(params.a, params.family).sample(m0, params.horizon(), rng);
}

HawkesSimulator::HawkesSimulator(HawkesParams params)
    : params_(std::move(params)), clusters_(params_.a, params_.family) {
  validate(params_);
  auto lat = params_.background.lattice();
  cumulative_.resize(lat.size());
  double run = 0.0;
  for (std::size_t k = 0; k < lat.size(); ++k) {
    run += lat[k];
    cumulative_[k] = run;
  }
  total_mass_ = run;
}

std::vector<double> HawkesSimulator::sample_immigrants(Rng& rng) const {
  std::vector<double> times;
  if (!(total_mass_ > 0.0)) return times;
  std::poisson_distribution<long> count_dist(total_mass_);
  const long count = count_dist(rng);
  times.reserve(static_cast<std::size_t>(count));
  const Grid& g = params_.background.grid();
  for (long i = 0; i < count; ++i) {
    const double u = uniform_open(rng) * total_mass_;
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    const auto k = static_cast<std::size_t>(it - cumulative_.begin());
    if (k == 0) {
      times.push_back(0.0);
    } else {
      const double lo = g.time(k - 1);
      times.push_back(lo + uniform_open(rng) * (g.time(k) - lo));
    }
  }
  return times;
}

PointSample HawkesSimulator::sample(Rng& rng, std::uint64_t seed_echo) const {
  PointSample out{{}, params_.horizon(), params_.a, seed_echo};
  const auto immigrants = sample_immigrants(rng);
  for (std::size_t c = 0; c < immigrants.size(); ++c) {
    clusters_.append_points(immigrants[c], params_.horizon(), c, rng, out.points);
  }
  std::sort(out.points.begin(), out.points.end(), [](const SamplePoint& x, const SamplePoint& y) {
    if (x.time != y.time) return x.time < y.time;
    if (x.cluster_id != y.cluster_id) return x.cluster_id < y.cluster_id;
    return x.generation < y.generation;
  });
  return out;
}

PointSample sample_hawkes(const HawkesParams& params, Rng& rng, std::uint64_t seed_echo) {
  return HawkesSimulator(params).sample(rng, seed_echo);
}

GridMeasure scaled_measure(const PointSample& sample, double eps, const Grid& grid) {
  std::vector<double> lattice(grid.size(), 0.0);
  const double w = eps * eps;
  for (const auto& p : sample.points) {
    const std::size_t k = grid.cell_of(p.time);
    if (k < grid.size()) lattice[k] += w;
  }
  return GridMeasure::from_lattice(grid, std::move(lattice));
}

std::string to_csv(const PointSample& sample) {
  std::string out = "time,generation,cluster_id\n";
  for (const auto& p : sample.points) {
    out += io::format_double(p.time);
    out += ',';
    out += std::to_string(p.generation);
    out += ',';
    out += std::to_string(p.cluster_id);
    out += '\n';
  }
  return out;
}

}  // namespace feller
