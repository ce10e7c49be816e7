#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "feller/errors.hpp"
#include "feller/lambert.hpp"
#include "feller/simulator.hpp"

using namespace feller;

namespace {

// Smallest positive root of x = exp(beta + a (x - 1)), by long-double bisection
// on [0, 1/a]; F is positive at 0 and nonpositive at 1/a.
long double mgf_oracle(long double a, long double beta) {
  long double lo = 0.0L, hi = 1.0L / a;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (std::exp(beta + a * (mid - 1.0L)) - mid > 0.0L) lo = mid; else hi = mid;
  }
  return 0.5L * (lo + hi);
}

double bisect_w(double x) {
  double lo = -1.0, hi = std::max(1.0, x);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid * std::exp(mid) < x) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

HawkesParams lebesgue_params(double a, const KernelFamily& fam, double T, double dt,
                             double intensity) {
  const Grid g(T, dt);
  return HawkesParams{a, fam, GridMeasure::lebesgue(g, intensity)};
}

struct MeanSe {
  double mean, se;
};

MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / (n - 1.0) / n)};
}

}  // namespace

TEST_CASE("lambert_w0") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(lambert_w0(-std::exp(-1.0)) == -1.0);
  CHECK(lambert_w0(-std::exp(-1.0) - 5e-13) == -1.0);
  CHECK_THROWS_AS(lambert_w0(-std::exp(-1.0) - 1e-9), DomainError);
  CHECK(std::fabs(lambert_w0(1.0) - 0.5671432904) < 1e-10);
  CHECK(std::fabs(lambert_w0(1.0) - bisect_w(1.0)) < 1e-14);
  double prev = -1.0;
  for (double x = -0.3678; x < 50.0; x += 0.0137) {
    const double w = lambert_w0(x);
    CAPTURE(x);
    CHECK(std::fabs(w * std::exp(w) - x) <= 1e-12 * std::max(std::fabs(x), 1e-300));
    CHECK(w > prev);
    prev = w;
  }
  for (double x : {1e-10, -1e-10, 1e3, 1e8, 1e200}) {
    const double w = lambert_w0(x);
    CHECK(std::fabs(w * std::exp(w) - x) <= 1e-12 * std::fabs(x));
  }
  // Close to the branch point, relative accuracy in W + 1.
  for (double d : {-1e-14, -1e-10, -1e-6, -1e-2}) {
    const double y = lambert_w0_branch_offset(d);
    CHECK(std::log1p(-y) + y == doctest::Approx(d).epsilon(1e-9));
  }
}

TEST_CASE("cluster_size_mgf") {
  CHECK(cluster_size_mgf(0.8, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  const double bmax = 0.8 - 1.0 - std::log(0.8);
  CHECK(cluster_mgf_threshold(0.8) == doctest::Approx(bmax).epsilon(1e-14));
  CHECK(std::fabs(cluster_size_mgf(0.8, cluster_mgf_threshold(0.8)) - 1.25) < 1e-10);
  // The threshold evaluated in closed form may sit an ulp above the series value.
  CHECK(std::fabs(cluster_size_mgf(0.8, 0.8 - 1.0 - std::log(0.8)) - 1.25) < 1e-10);
  CHECK(std::isinf(cluster_size_mgf(0.8, bmax * (1.0 + 1e-12))));
  CHECK(std::isinf(cluster_size_mgf(0.8, bmax + 1e-6)));
  {
    // Plain fixed-point iteration x <- exp(beta + a (x - 1)) from x = 1.
    double x = 1.0;
    for (int i = 0; i < 10000; ++i) x = std::exp(0.01 + 0.5 * (x - 1.0));
    CHECK(std::fabs(cluster_size_mgf(0.5, 0.01) - x) < 1e-4);
    CHECK(std::fabs(cluster_size_mgf(0.5, 0.01) - 1.0204110264) < 1e-9);
  }
  for (double a : {0.1, 0.5, 0.9, 0.99, 0.999}) {
    const double b = cluster_mgf_threshold(a);
    for (double frac : {-3.0, -0.5, 0.0, 0.3, 0.9, 0.999}) {
      const double beta = frac * b;
      CAPTURE(a);
      CAPTURE(frac);
      const double oracle = static_cast<double>(mgf_oracle(a, beta));
      CHECK(cluster_size_mgf(a, beta) == doctest::Approx(oracle).epsilon(1e-11));
    }
  }
}

TEST_CASE("tilted moments") {
  for (double a : {0.5, 0.9}) {
    const double beta = 0.4 * cluster_mgf_threshold(a);
    const double h = 1e-4;
    // Richardson-extrapolated central differences.
    auto d1 = [&](double s) {
      return (cluster_size_mgf(a, beta + s) - cluster_size_mgf(a, beta - s)) / (2 * s);
    };
    const double fd1 = (4.0 * d1(h / 2) - d1(h)) / 3.0;
    auto d2 = [&](double s) {
      return (cluster_size_mgf(a, beta + s) - 2 * cluster_size_mgf(a, beta) +
              cluster_size_mgf(a, beta - s)) / (s * s);
    };
    const double fd2 = (4.0 * d2(h / 2) - d2(h)) / 3.0;
    CHECK(cluster_size_tilted_moment(a, beta, 1) == doctest::Approx(fd1).epsilon(1e-6));
    CHECK(cluster_size_tilted_moment(a, beta, 2) == doctest::Approx(fd2).epsilon(1e-4));
  }
  // Mean cluster size at beta = 0 is 1/(1-a); second moment 1/(1-a)^3.
  CHECK(cluster_size_tilted_moment(0.9, 0.0, 1) == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(cluster_size_tilted_moment(0.9, 0.0, 2) == doctest::Approx(1000.0).epsilon(1e-9));
  // eps^{2k-1} E[|H|^k exp(((1-delta)/2) eps^2 |H|)] -> c_k delta^{1/2-k}, c_1 = 1, c_2 = 1.
  const double eps = 1e-5, delta = 0.25;
  const double beta = 0.5 * (1.0 - delta) * eps * eps;
  CHECK(eps * cluster_size_tilted_moment(1.0 - eps, beta, 1) ==
        doctest::Approx(std::pow(delta, -0.5)).epsilon(1e-2));
  CHECK(std::pow(eps, 3) * cluster_size_tilted_moment(1.0 - eps, beta, 2) ==
        doctest::Approx(std::pow(delta, -1.5)).epsilon(1e-2));
  CHECK_THROWS_AS(cluster_size_tilted_moment(0.5, 0.0, 3), DomainError);
}

TEST_CASE("tail_limit_exact") {
  const double a = 0.999;
  CHECK(std::fabs(tail_limit_exact(a, 0.25) - 0.5) < 0.02);
  double prev = 2.0;
  for (double delta = 0.0; delta < 1.0; delta += 0.05) {
    const double v = tail_limit_exact(a, delta);
    CHECK(v < prev);
    prev = v;
  }
  CHECK(tail_limit_exact(a, 0.999999) < 2e-3);
  // Independent oracle: long-double bisection on the fixed-point equation.
  for (double delta : {0.0, 0.25, 0.81}) {
    for (double e : {1e-2, 1e-3}) {
      const long double al = 1.0L - static_cast<long double>(e);
      const long double beta = 0.5L * (1.0L - delta) * e * e;
      const double oracle = static_cast<double>((mgf_oracle(al, beta) - 1.0L) / e);
      CAPTURE(delta);
      CAPTURE(e);
      CHECK(tail_limit_exact(1.0 - e, delta) == doctest::Approx(oracle).epsilon(1e-8));
    }
  }
  // At delta = 0 the approach to 1 is of order sqrt(eps): 1 - sqrt(2 eps / 3) + O(eps).
  for (double e : {1e-3, 1e-5, 1e-7}) {
    CHECK(std::fabs(tail_limit_exact(1.0 - e, 0.0) - (1.0 - std::sqrt(2.0 * e / 3.0))) < 3.0 * e);
  }
  CHECK_THROWS_AS(tail_limit_exact(0.999, 1.0), DomainError);
  CHECK(tail_limit_exact(0.1, 0.0) ==
        doctest::Approx(static_cast<double>((mgf_oracle(0.1L, 0.405L) - 1.0L) / 0.9L)).epsilon(1e-10));
  CHECK_THROWS_AS(tail_limit_exact(0.0, 0.0), DomainError);
}

TEST_CASE("cluster statistics") {
  const std::size_t n = 100000;
  SUBCASE("root without children") {
    const double a = 0.7;
    ClusterSampler s(a, KernelFamily(RowConstant{Exponential{1.0}}));
    Rng rng = make_stream(1, 0);
    std::vector<double> ones(n);
    for (auto& x : ones) x = s.sample(0, 1e300, rng).size() == 1;
    const auto ms = mean_se(ones);
    CHECK(std::fabs(ms.mean - std::exp(-a)) <= 3.0 * ms.se);
  }
  SUBCASE("mean size 1/(1-a)") {
    ClusterSampler s(0.9, KernelFamily(RowConstant{Exponential{1.0}}));
    Rng rng = make_stream(2, 0);
    std::vector<double> sizes(n);
    for (auto& x : sizes) x = static_cast<double>(s.sample_size(rng));
    const auto ms = mean_se(sizes);
    CHECK(std::fabs(ms.mean - 10.0) <= 3.0 * ms.se);
  }
  SUBCASE("size MGF") {
    const double a = 0.8;
    const double beta = 0.5 * cluster_mgf_threshold(a);
    ClusterSampler s(a, KernelFamily(RowConstant{Exponential{1.0}}));
    Rng rng = make_stream(3, 0);
    std::vector<double> v(n);
    for (auto& x : v) x = std::exp(beta * static_cast<double>(s.sample_size(rng)));
    const auto ms = mean_se(v);
    CHECK(std::fabs(ms.mean - cluster_size_mgf(a, beta)) <= 3.0 * ms.se);
  }
  SUBCASE("overflow cap") {
    ClusterSampler s(0.999, KernelFamily(RowConstant{Exponential{1.0}}));
    Rng rng = make_stream(4, 0);
    bool overflowed = false;
    for (int i = 0; i < 2000 && !overflowed; ++i) {
      try {
        s.sample(0, 1e300, rng, 50);
      } catch (const ClusterOverflow&) {
        overflowed = true;
      }
    }
    CHECK(overflowed);
  }
}

TEST_CASE("tree invariants") {
  const KernelFamily fam(Periodic{{Exponential{2.0}, Deterministic{0.3}, MittagLeffler{0.6, 0.1}}});
  ClusterSampler s(0.9, fam);
  Rng rng = make_stream(5, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto tree = s.sample(0, 3.0, rng);
    REQUIRE(tree.nodes.front().parent == -1);
    CHECK(tree.nodes.front().time == 0.0);
    CHECK(tree.nodes.front().generation == 0);
    for (std::size_t i = 1; i < tree.size(); ++i) {
      const auto& node = tree.nodes[i];
      REQUIRE(node.parent >= 0);
      const auto& parent = tree.nodes[static_cast<std::size_t>(node.parent)];
      CHECK(node.time > parent.time);
      CHECK(node.generation == parent.generation + 1);
      CHECK(parent.time <= 3.0);  // only nodes inside the horizon have children
    }
  }
}

TEST_CASE("size law does not depend on the kernel family") {
  const std::size_t n = 20000;
  auto histogram = [&](const KernelFamily& fam, std::uint64_t seed) {
    ClusterSampler s(0.6, fam);
    Rng rng = make_stream(seed, 0);
    std::vector<double> bins(6, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto size = s.sample(0, 1e300, rng).size();
      bins[std::min<std::size_t>(size, 6) - 1] += 1;
    }
    return bins;
  };
  const auto h1 = histogram(KernelFamily(RowConstant{Exponential{1.0}}), 6);
  const auto h2 = histogram(KernelFamily(RowConstant{Deterministic{0.5}}), 7);
  double chi2 = 0.0;
  for (std::size_t b = 0; b < h1.size(); ++b) {
    const double tot = h1[b] + h2[b];
    if (tot == 0.0) continue;
    chi2 += (h1[b] - h2[b]) * (h1[b] - h2[b]) / tot;
  }
  CHECK(chi2 < 20.52);  // chi-square(5) 0.999 quantile
}

TEST_CASE("pruning soundness") {
  const std::size_t n = 10000;
  const KernelFamily fam(RowConstant{Exponential{1.5}});
  const HawkesSimulator long_run(lebesgue_params(0.7, fam, 3.0, 1e-2, 1.0));
  const HawkesSimulator short_run(lebesgue_params(0.7, fam, 2.0, 1e-2, 1.0));
  std::vector<double> c1(n), c2(n);
  for (std::size_t r = 0; r < n; ++r) {
    Rng r1 = make_stream(8, r);
    Rng r2 = make_stream(9, r);
    const auto s1 = long_run.sample(r1);
    c1[r] = static_cast<double>(std::count_if(s1.points.begin(), s1.points.end(),
                                              [](const SamplePoint& p) { return p.time <= 2.0; }));
    c2[r] = static_cast<double>(short_run.sample(r2).points.size());
  }
  // Two-sample Kolmogorov-Smirnov on the counts (conservative for discrete laws).
  std::sort(c1.begin(), c1.end());
  std::sort(c2.begin(), c2.end());
  double d = 0.0;
  for (double v = 0.0; v <= std::max(c1.back(), c2.back()); v += 1.0) {
    const double f1 = static_cast<double>(std::upper_bound(c1.begin(), c1.end(), v) - c1.begin()) / n;
    const double f2 = static_cast<double>(std::upper_bound(c2.begin(), c2.end(), v) - c2.begin()) / n;
    d = std::max(d, std::fabs(f1 - f2));
  }
  CHECK(d < 1.95 * std::sqrt(2.0 / n));
}

TEST_CASE("sample_hawkes") {
  SUBCASE("zero background") {
    const Grid g(5.0, 1e-2);
    HawkesParams p{0.5, KernelFamily(RowConstant{Exponential{1.0}}), GridMeasure::zero(g)};
    Rng rng = make_stream(10, 0);
    CHECK(sample_hawkes(p, rng).points.empty());
  }
  SUBCASE("mean counts follow the first-moment identity") {
    const double a = 0.5;
    const Grid g(5.0, 1e-3);
    const KernelFamily fam(RowConstant{Exponential{1.0}});
    const auto mu = GridMeasure::lebesgue(g, 2.0);
    const HawkesSimulator sim(HawkesParams{a, fam, mu});
    const auto rho = geometric_mixture(a, fam, 0, g).rho;
    const auto rho_mu = convolve(rho, mu);
    const std::size_t n = 4000;
    for (double t : {1.0, 3.0, 5.0}) {
      std::vector<double> counts(n);
      for (std::size_t r = 0; r < n; ++r) {
        Rng rng = make_stream(11, r);
        const auto s = sim.sample(rng);
        counts[r] = static_cast<double>(std::count_if(
            s.points.begin(), s.points.end(), [t](const SamplePoint& p) { return p.time <= t; }));
      }
      const auto ms = mean_se(counts);
      const double predicted = rho_mu.cdf_at(g.floor_index(t)) / (1.0 - a);
      CAPTURE(t);
      CHECK(std::fabs(ms.mean - predicted) <= 3.0 * ms.se);
    }
  }
  SUBCASE("small branching ratio is nearly Poisson") {
    const double a = 0.01;
    const HawkesSimulator sim(lebesgue_params(a, KernelFamily(RowConstant{Exponential{1.0}}), 5.0,
                                              1e-2, 20.0));
    std::vector<double> counts(4000);
    for (std::size_t r = 0; r < counts.size(); ++r) {
      Rng rng = make_stream(12, r);
      counts[r] = static_cast<double>(sim.sample(rng).points.size());
    }
    const auto ms = mean_se(counts);
    // mu[0,T] (1 + a + O(a^2)); the kernel tail past T removes O(a) mass too.
    CHECK(std::fabs(ms.mean - 100.0 * (1.0 + a)) <= 3.0 * ms.se + 100.0 * a);
  }
  SUBCASE("determinism and ordering") {
    const HawkesSimulator sim(lebesgue_params(0.8, KernelFamily(RowConstant{MittagLeffler{0.5, 0.2}}),
                                              4.0, 1e-2, 3.0));
    Rng r1 = make_stream(13, 5);
    Rng r2 = make_stream(13, 5);
    const auto s1 = sim.sample(r1, 13);
    const auto s2 = sim.sample(r2, 13);
    REQUIRE(s1.points.size() == s2.points.size());
    CHECK(to_csv(s1) == to_csv(s2));
    for (std::size_t i = 1; i < s1.points.size(); ++i) {
      CHECK(s1.points[i - 1].time <= s1.points[i].time);
    }
    for (const auto& p : s1.points) {
      CHECK(p.time >= 0.0);
      CHECK(p.time <= 4.0);
    }
  }
}

TEST_CASE("scaled_measure") {
  const Grid g(2.0, 0.1);
  PointSample empty{{}, 2.0, 0.9, 0};
  CHECK(scaled_measure(empty, 0.1, g).total_mass() == 0.0);
  PointSample one{{{0.55, 0, 0}}, 2.0, 0.9, 0};
  const auto m = scaled_measure(one, 0.1, g);
  CHECK(m.lattice()[g.cell_of(0.55)] == doctest::Approx(0.01));
  CHECK(m.total_mass() == doctest::Approx(0.01));
}
