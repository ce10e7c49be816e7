#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "feller/errors.hpp"
#include "feller/kernels.hpp"

using namespace feller;

namespace {

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& F) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = F(xs[i]);
    d = std::max({d, std::fabs(f - i / n), std::fabs((i + 1) / n - f)});
  }
  return d;
}

std::vector<double> draws(const KernelSpec& spec, std::size_t n, std::uint64_t seed) {
  KernelSampler sampler(spec);
  Rng rng = make_stream(seed, 0);
  std::vector<double> out(n);
  for (auto& x : out) x = sampler(rng);
  return out;
}

GridMeasure single_jump(double c, double b, const Grid& g) {
  GridMeasure d = GridMeasure::dirac(g, b);
  std::vector<double> lat(d.lattice().begin(), d.lattice().end());
  for (auto& v : lat) v *= c;
  return GridMeasure::from_lattice(g, lat);
}

}  // namespace

TEST_CASE("discretize_kernel examples") {
  const Grid g(5.0, 1e-3);
  const auto e = discretize_kernel(Exponential{1.0}, g);
  CHECK(e.atom_at_zero() == 0.0);
  CHECK(e.cell_mass()[0] == -std::expm1(-1e-3));
  const auto d = discretize_kernel(Deterministic{1.0}, g);
  CHECK(d.lattice()[g.cell_of(1.0)] == 1.0);
  CHECK(d.total_mass() == 1.0);
  const auto m = discretize_kernel(MittagLeffler{1.0, 1.0}, g);
  for (std::size_t k = 0; k < g.size(); ++k) {
    CHECK(std::fabs(m.lattice()[k] - e.lattice()[k]) < 1e-10);
  }
  CHECK_THROWS_AS(discretize_kernel(MittagLeffler{1.2, 1.0}, g), ValidationError);
  CHECK_THROWS_AS(discretize_kernel(MittagLeffler{0.0, 1.0}, g), ValidationError);
  const Grid jg(5.0, 1e-3);
  const auto with_atom = GridMeasure::from_lattice(jg, [&] {
    std::vector<double> v(jg.size(), 0.0);
    v[0] = 0.5;
    return v;
  }());
  CHECK_THROWS_AS(discretize_kernel(GidTriplet{1.0, with_atom}, g), ValidationError);
}

TEST_CASE("discretized kernels are probability laws without an atom at zero") {
  const Grid g(4.0, 1e-2);
  const Grid jg(4.0, 1e-2);
  const std::vector<KernelSpec> specs = {
      Exponential{2.0},
      MittagLeffler{0.3, 1.0},
      MittagLeffler{0.5, 2.0},
      MittagLeffler{0.8, 0.5},
      GidTriplet{0.5, single_jump(1.5, 0.3, jg)},
      Deterministic{2.5},
      Deterministic{7.0},
      Pareto{0.5, 1.0},
  };
  for (const auto& s : specs) {
    const auto m = discretize_kernel(s, g);
    CAPTURE(describe(s));
    CHECK(m.atom_at_zero() == 0.0);
    CHECK(std::fabs(m.total_mass() + m.tail_mass() - 1.0) < 1e-10);
    for (double v : m.cell_mass()) CHECK(v >= 0.0);
  }
}

TEST_CASE("GID discretization against closed forms") {
  const Grid g(20.0, 1e-2);
  SUBCASE("no jumps: Exp(1/L)") {
    const auto m = discretize_kernel(GidTriplet{2.0, GridMeasure::zero(g)}, g);
    const auto e = discretize_kernel(Exponential{0.5}, g);
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(std::fabs(m.lattice()[k] - e.lattice()[k]) < 1e-13);
    }
  }
  SUBCASE("drift and one jump size: mean and exact lattice route") {
    const double L = 0.4, c = 1.5, b = 0.3;
    const GidTriplet spec{L, single_jump(c, b, g)};
    const auto m = discretize_kernel(spec, g);
    double mean = 0.0;
    for (std::size_t k = 1; k < g.size(); ++k) mean += g.time(k) * m.lattice()[k];
    // E X = L + c b, since the Exp(1) time has mean 1.
    CHECK(mean == doctest::Approx(L + c * b).epsilon(5e-3));
    CHECK(m.total_mass() + m.tail_mass() == doctest::Approx(1.0).epsilon(1e-12));
    // The generic CDF route on a different grid gives the same CDF.
    const Grid coarse(20.0, 5e-2);
    const auto mc = discretize_kernel(spec, coarse);
    for (double t : {0.5, 1.0, 3.0}) {
      CHECK(mc.cdf_at(coarse.floor_index(t)) ==
            doctest::Approx(m.cdf_at(g.floor_index(t))).epsilon(1e-10));
      CHECK(cdf(spec, t) == doctest::Approx(m.cdf_at(g.floor_index(t))).epsilon(1e-10));
    }
  }
  SUBCASE("zero drift: geometric compound with an atom at zero") {
    const double c = 2.0, b = 0.5;
    const auto m = discretize_kernel(GidTriplet{0.0, single_jump(c, b, g)}, g);
    const double q = c / (1.0 + c);
    CHECK(m.atom_at_zero() == doctest::Approx(1.0 - q));
    for (int k = 1; k <= 5; ++k) {
      CHECK(m.lattice()[g.cell_of(k * b)] == doctest::Approx((1.0 - q) * std::pow(q, k)));
    }
  }
}

TEST_CASE("sample_kernel examples") {
  const std::size_t n = 100000;
  SUBCASE("GID with drift 1 and no jumps is Exp(1)") {
    const Grid g(1.0, 0.1);
    const auto xs = draws(GidTriplet{1.0, GridMeasure::zero(g)}, n, 11);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    CHECK(mean >= 0.98);
    CHECK(mean <= 1.02);
  }
  SUBCASE("GID with zero drift and one jump size is b times a geometric") {
    const Grid g(2.0, 0.01);
    const double c = 1.5, b = 0.25;
    const auto xs = draws(GidTriplet{0.0, single_jump(c, b, g)}, n, 12);
    const double p = 1.0 / (1.0 + c);
    for (int k = 0; k <= 5; ++k) {
      double hits = 0.0;
      for (double x : xs) hits += std::fabs(x - k * b) < 1e-9;
      const double expected = p * std::pow(1.0 - p, k);
      const double se = std::sqrt(expected * (1.0 - expected) / n);
      CAPTURE(k);
      CHECK(std::fabs(hits / n - expected) <= 3.0 * se);
    }
  }
  SUBCASE("Mittag-Leffler alpha = 1 is Exp(1)") {
    const auto xs = draws(MittagLeffler{1.0, 1.0}, n, 13);
    CHECK(ks_statistic(xs, [](double t) { return -std::expm1(-t); }) < 1.95 / std::sqrt(n));
  }
  SUBCASE("Mittag-Leffler alpha = 1/2 against the numeric CDF") {
    const auto xs = draws(MittagLeffler{0.5, 1.0}, n, 14);
    CHECK(ks_statistic(xs, [](double t) { return cdf(MittagLeffler{0.5, 1.0}, t); }) <
          1.95 / std::sqrt(n));
  }
  SUBCASE("Mittag-Leffler Laplace transform") {
    for (double alpha : {0.3, 0.7}) {
      const auto xs = draws(MittagLeffler{alpha, 1.0}, n, 15);
      for (double lambda : {0.5, 1.0, 3.0}) {
        double s = 0.0, s2 = 0.0;
        for (double x : xs) {
          const double v = std::exp(-lambda * x);
          s += v;
          s2 += v * v;
        }
        const double mean = s / n;
        const double se = std::sqrt((s2 / n - mean * mean) / n);
        CAPTURE(alpha);
        CAPTURE(lambda);
        CHECK(std::fabs(mean - 1.0 / (1.0 + std::pow(lambda, alpha))) <= 4.0 * se);
      }
    }
  }
  SUBCASE("positive stable Laplace transform") {
    Rng rng = make_stream(16, 0);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(-sample_positive_stable(0.6, rng));
    CHECK(std::fabs(s / n - std::exp(-1.0)) < 0.005);
  }
}

TEST_CASE("sampler agrees with the discretized CDF") {
  const std::size_t n = 100000;
  const Grid g(50.0, 1e-2);
  const std::vector<KernelSpec> specs = {Exponential{0.7}, MittagLeffler{0.8, 0.5},
                                         GidTriplet{0.5, single_jump(1.0, 0.37, g)},
                                         Pareto{1.5, 0.2}};
  std::uint64_t seed = 20;
  for (const auto& s : specs) {
    const auto m = discretize_kernel(s, g);
    auto xs = draws(s, n, seed++);
    // Compare on the lattice: the grid CDF is exact at lattice points.
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (std::size_t k = 0; k < g.size(); k += 7) {
      const double t = g.time(k);
      const double emp = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), t) -
                                             xs.begin()) / n;
      d = std::max(d, std::fabs(emp - m.cdf_at(k)));
    }
    CAPTURE(describe(s));
    CHECK(d < 1.95 / std::sqrt(n));
  }
}

TEST_CASE("sampler is deterministic per stream") {
  const auto a = draws(MittagLeffler{0.4, 1.0}, 100, 99);
  const auto b = draws(MittagLeffler{0.4, 1.0}, 100, 99);
  CHECK(a == b);
}

TEST_CASE("convolution_power") {
  const Grid g(5.0, 1e-3);
  const KernelFamily det(RowConstant{Deterministic{1.0}});
  const auto p0 = convolution_power(det, 0, 0, g);
  CHECK(p0.atom_at_zero() == 1.0);
  CHECK(p0.total_mass() == 1.0);
  const auto p3 = convolution_power(det, 0, 3, g);
  CHECK(p3.lattice()[g.cell_of(3.0)] == doctest::Approx(1.0));
  const KernelFamily ex(RowConstant{Exponential{1.0}});
  const auto p2 = convolution_power(ex, 0, 2, g);
  CHECK(std::fabs(p2.cdf_at(1000) - (1.0 - 2.0 * std::exp(-1.0))) < 2e-3);
  // Periodic families use generations m+1..m+j.
  const KernelFamily per(Periodic{{Deterministic{1.0}, Deterministic{0.5}}});
  CHECK(per.period() == 2);
  CHECK(convolution_power(per, 0, 3, g).lattice()[g.cell_of(2.5)] == doctest::Approx(1.0));
  CHECK(convolution_power(per, 1, 3, g).lattice()[g.cell_of(2.0)] == doctest::Approx(1.0));
}

TEST_CASE("geometric_mixture") {
  const Grid g(5.0, 1e-3);
  SUBCASE("atom at zero is exactly 1 - a") {
    for (double a : {0.1, 0.5, 0.9}) {
      const auto r = geometric_mixture(a, KernelFamily(RowConstant{Exponential{3.0}}), 0, g);
      CHECK(r.rho.atom_at_zero() == 1.0 - a);
      CHECK(r.truncation_mass < 1e-12);
    }
  }
  SUBCASE("a = 1/2 with Exp(1)") {
    const auto r = geometric_mixture(0.5, KernelFamily(RowConstant{Exponential{1.0}}), 0, g);
    CHECK(std::fabs(r.rho.cdf_at(1000) - (0.5 + 0.5 * (1.0 - std::exp(-0.5)))) < 2e-3);
  }
  SUBCASE("scaled exponential family converges to Exp(kappa)") {
    // Every lattice convolution moves mass right by about dt/2 and rho_n mixes
    // about n generations, so the grid has to resolve the scaled kernel.
    const Grid fine(5.0, 2e-4);
    const double n = 200.0, kappa = 1.0;
    const auto r = geometric_mixture(1.0 - kappa / n, KernelFamily(Scaled{Exponential{1.0}, n}),
                                     0, fine);
    const auto target = discretize_kernel(Exponential{kappa}, fine);
    CHECK(wasserstein1_truncated(r.rho, target, 5.0) <= 0.02);
  }
  SUBCASE("periodic family") {
    const KernelFamily per(Periodic{{Exponential{1.0}, Exponential{2.0}}});
    const auto r0 = geometric_mixture(0.6, per, 0, g);
    const auto r1 = geometric_mixture(0.6, per, 1, g);
    // First-generation lag differs, so the two shifts differ; mean of the
    // non-atom part follows from E[sum of k alternating lags].
    CHECK(r0.rho.cdf_at(500) < r1.rho.cdf_at(500));
    const auto r2 = geometric_mixture(0.6, per, 2, g);
    for (std::size_t k = 0; k < g.size(); k += 250) {
      CHECK(r2.rho.lattice()[k] == doctest::Approx(r0.rho.lattice()[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("null_array_sup") {
  CHECK(null_array_sup(KernelFamily(Scaled{Exponential{1.0}, 10.0}), 10.0, 0.1) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(null_array_sup(KernelFamily(Scaled{Exponential{1.0}, 1.0}), 50.0, 0.1) ==
        doctest::Approx(std::exp(-5.0)).epsilon(1e-14));
  CHECK(null_array_sup(KernelFamily(RowConstant{Deterministic{1.0}}), 100.0, 0.5) == 1.0);
  for (double n : {4.0, 100.0, 1e4}) {
    CHECK(null_array_sup(KernelFamily(Scaled{Pareto{0.5, 1.0}, n}), n, 1.0) ==
          doctest::Approx(1.0 / std::sqrt(n)).epsilon(1e-12));
  }
  CHECK(null_array_sup(KernelFamily(Periodic{{Exponential{1.0}, Exponential{2.0}}}), 1.0, 1.0) ==
        doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("tail diagnostics separate the two scaling regimes") {
  const auto ex = tail_diagnostics(Exponential{1.0}, 1.0, 50.0, 8);
  CHECK(ex.back().exp_ratio < 1e-10);
  for (std::size_t i = 1; i < ex.size(); ++i) CHECK(ex[i].exp_ratio < ex[i - 1].exp_ratio);
  const auto pa = tail_diagnostics(Pareto{0.5, 1.0}, 10.0, 1000.0, 5);
  for (const auto& d : pa) {
    CHECK(d.alpha_hat == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(d.exp_ratio > 0.4);
  }
  const auto ml = tail_diagnostics(MittagLeffler{0.7, 1.0}, 10.0, 1e4, 4);
  CHECK(std::fabs(ml.back().alpha_hat - 0.7) < 0.01);
}
