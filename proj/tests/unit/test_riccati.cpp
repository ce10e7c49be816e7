#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "feller/errors.hpp"
#include "feller/kernels.hpp"
#include "feller/riccati.hpp"

using namespace feller;

namespace {

// For rho = Exp(1), h = (f + h^2/2) * rho is equivalent to h' = f + h^2/2 - h,
// h(0) = 0. Classical RK4 with a fine step, sampled on the grid.
std::vector<double> exp_ode_oracle(const std::function<double(double)>& f, const Grid& grid,
                                   int substeps = 10) {
  auto rhs = [&](double t, double h) { return f(t) + 0.5 * h * h - h; };
  std::vector<double> out(grid.size(), 0.0);
  double h = 0.0;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double t0 = grid.time(k - 1);
    const double step = (grid.time(k) - t0) / substeps;
    for (int s = 0; s < substeps; ++s) {
      const double t = t0 + s * step;
      const double k1 = rhs(t, h);
      const double k2 = rhs(t + step / 2, h + step / 2 * k1);
      const double k3 = rhs(t + step / 2, h + step / 2 * k2);
      const double k4 = rhs(t + step, h + step * k3);
      h += step / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    out[k] = h;
  }
  return out;
}

double sup_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
  return m;
}

RiccatiProblem exp_problem(const Grid& g, const std::function<double(double)>& f) {
  return {GridFunction::from(g, f), discretize_kernel(Exponential{1.0}, g)};
}

}  // namespace

TEST_CASE("marching") {
  SUBCASE("zero forcing") {
    const Grid g(5.0, 1e-2);
    const auto sol = solve_marching(exp_problem(g, [](double) { return 0.0; }));
    CHECK(sup_norm(sol.h.values()) == 0.0);
    CHECK(sol.residual == 0.0);
  }
  SUBCASE("constant 0.18 reaches the stationary point") {
    const Grid g(20.0, 1e-3);
    const auto sol = solve_marching(exp_problem(g, [](double) { return 0.18; }));
    CHECK(std::fabs(sol.h[g.n_cells()] - (1.0 - std::sqrt(1.0 - 2.0 * 0.18))) < 1e-3);
    CHECK(sol.residual <= sol.tolerance);
    CHECK(sol.warnings.empty());
  }
  SUBCASE("ODE oracle") {
    const Grid g(5.0, 1e-3);
    for (auto f : std::vector<std::function<double(double)>>{
             [](double) { return 0.18; }, [](double t) { return -0.3 * std::min(t, 1.0); }}) {
      const auto sol = solve_marching(exp_problem(g, f));
      CHECK(sup_diff(sol.h.values(), exp_ode_oracle(f, g)) <= 1e-3);
    }
  }
  SUBCASE("blow-up and warnings") {
    const Grid g(20.0, 1e-2);
    CHECK_THROWS_AS(solve_marching(exp_problem(g, [](double) { return 2.0; })), BlowUpError);
    const Grid g2(1.0, 1e-2);
    const auto sol = solve_marching(exp_problem(g2, [](double) { return 0.6; }));
    CHECK(sol.warnings.size() == 1);
  }
  SUBCASE("atom at zero is rejected") {
    const Grid g(1.0, 0.1);
    const RiccatiProblem p{GridFunction::constant(g, 0.1), GridMeasure::dirac(g, 0.0)};
    CHECK_THROWS_AS(solve_marching(p), ValidationError);
  }
  SUBCASE("dough form equivalence") {
    const Grid g(5.0, 1e-2);
    const auto p = RiccatiProblem{GridFunction::from(g, [](double t) { return 0.3 * std::sin(t); }),
                                  discretize_kernel(MittagLeffler{0.7, 1.0}, g)};
    const auto h = solve_marching(p).h;
    const auto k = solve_dough(convolve(p.f, p.rho), p.rho);
    CHECK(sup_diff(h.values(), k.values()) < 1e-13);
  }
}

TEST_CASE("picard") {
  SUBCASE("zero forcing needs one sweep per window") {
    const Grid g(2.0, 1e-2);
    const auto sol = solve_picard(exp_problem(g, [](double) { return 0.0; }), 0.5, 1e-10);
    CHECK(sup_norm(sol.h.values()) == 0.0);
    CHECK(sol.iterations == 5);  // 201 points in windows of 50
  }
  SUBCASE("stationary point") {
    const Grid g(20.0, 1e-3);
    const auto sol = solve_picard(exp_problem(g, [](double) { return 0.18; }), 0.5, 1e-10);
    CHECK(std::fabs(sol.h[g.n_cells()] - 0.2) < 1e-3);
    const auto march = solve_marching(exp_problem(g, [](double) { return 0.18; }));
    CHECK(sup_diff(sol.h.values(), march.h.values()) <= std::max(1e-10, 10 * g.dt()));
  }
  SUBCASE("non-contraction") {
    const Grid g(1.0, 1e-2);
    CHECK_THROWS_AS(solve_picard(exp_problem(g, [](double) { return 3.0; }), 1.0, 1e-10),
                    NumericalRefusal);
  }
}

TEST_CASE("series") {
  const Grid g(5.0, 1e-3);
  SUBCASE("zero forcing") {
    const auto s = solve_series(exp_problem(g, [](double) { return 0.0; }), 5);
    for (double v : s.term_norms) CHECK(v == 0.0);
    CHECK_FALSE(s.truncated);
  }
  SUBCASE("first term is f * rho") {
    const auto p = exp_problem(g, [](double t) { return 0.4 * std::cos(t); });
    const auto s = solve_series(p, 1);
    CHECK(sup_diff(s.solution.h.values(), convolve(p.f, p.rho).values()) == 0.0);
    CHECK(s.truncated);
  }
  SUBCASE("agrees with marching") {
    const auto p = exp_problem(g, [](double) { return 0.18; });
    const auto s = solve_series(p, 60);
    CHECK(sup_diff(s.solution.h.values(), solve_marching(p).h.values()) <= 1e-6);
    CHECK(s.solution.n_terms == 60);
  }
  SUBCASE("refusal") {
    CHECK_THROWS_AS(solve_series(exp_problem(g, [](double) { return 0.6; }), 10),
                    NumericalRefusal);
    CHECK_THROWS_AS(solve_series(exp_problem(g, [](double) { return -0.6; }), 10),
                    NumericalRefusal);
  }
  SUBCASE("term decay envelope") {
    const Grid g2(5.0, 1e-2);
    const double c = 0.45;
    const auto s = solve_series(exp_problem(g2, [c](double) { return c; }), 80);
    double fitted = 0.0;
    for (std::size_t n = 1; n <= s.term_norms.size(); ++n) {
      const double nn = static_cast<double>(n);
      fitted = std::max(fitted, s.term_norms[n - 1] * std::pow(nn, 1.5) / std::pow(2 * c, nn));
    }
    CHECK(fitted <= 10.0);
  }
}

TEST_CASE("perturbation system") {
  const Grid g(5.0, 1e-3);
  const auto rho = discretize_kernel(Exponential{1.0}, g);
  SUBCASE("zero base collapses to the series") {
    const auto gf = GridFunction::from(g, [](double t) { return 0.2 * std::exp(-t); });
    const auto ks = solve_perturbation_system(GridFunction::constant(g, 0.0), gf, rho, 3);
    CHECK(sup_norm(ks[0].values()) == 0.0);
    const auto k1 = convolve(gf, rho);
    CHECK(sup_diff(ks[1].values(), k1.values()) < 1e-14);
    std::vector<double> sq(g.size());
    for (std::size_t k = 0; k < sq.size(); ++k) sq[k] = 0.5 * k1[k] * k1[k];
    const auto k2 = convolve(GridFunction(g, sq), rho);
    CHECK(sup_diff(ks[2].values(), k2.values()) < 1e-14);
  }
  SUBCASE("zero perturbation") {
    const auto ks = solve_perturbation_system(GridFunction::constant(g, 0.1),
                                              GridFunction::constant(g, 0.0), rho, 4);
    for (std::size_t n = 1; n < ks.size(); ++n) CHECK(sup_norm(ks[n].values()) == 0.0);
  }
  SUBCASE("sum reproduces the direct solve") {
    const auto ks = solve_perturbation_system(GridFunction::constant(g, 0.1),
                                              GridFunction::constant(g, 0.05), rho, 30);
    std::vector<double> sum(g.size(), 0.0);
    for (const auto& k : ks) {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += k[i];
    }
    const auto direct = solve_marching({GridFunction::constant(g, 0.15), rho});
    CHECK(sup_diff(sum, direct.h.values()) <= 1e-6);
  }
  SUBCASE("refusal") {
    CHECK_THROWS_AS(solve_perturbation_system(GridFunction::constant(g, 0.4),
                                              GridFunction::constant(g, 0.2), rho, 3),
                    NumericalRefusal);
  }
}

TEST_CASE("certificates") {
  const Grid g(10.0, 1e-2);
  SUBCASE("zero forcing") {
    const auto p = exp_problem(g, [](double) { return 0.0; });
    CHECK(check_bounds(solve_marching(p), p).passed);
  }
  SUBCASE("constant forcing envelope") {
    const auto p = exp_problem(g, [](double) { return 0.18; });
    const auto c = check_bounds(solve_marching(p), p);
    CHECK(c.passed);
    CHECK(c.upper == doctest::Approx(0.2));
  }
  SUBCASE("mixed sign forcing") {
    const auto p = RiccatiProblem{GridFunction::from(g, [](double t) { return 0.45 * std::sin(3 * t); }),
                                  discretize_kernel(MittagLeffler{0.6, 1.0}, g)};
    CHECK(check_bounds(solve_marching(p), p).passed);
  }
  SUBCASE("violation is reported") {
    const auto p = exp_problem(g, [](double) { return 0.18; });
    auto sol = solve_marching(p);
    std::vector<double> bad(sol.h.values().begin(), sol.h.values().end());
    bad[300] = 0.25;
    sol.h = GridFunction(g, bad);
    const auto c = check_bounds(sol, p);
    CHECK_FALSE(c.passed);
    CHECK(c.first_violation == std::optional<std::size_t>(300));
  }
  SUBCASE("comparison") {
    const auto p1 = exp_problem(g, [](double) { return 0.1; });
    const auto p2 = exp_problem(g, [](double) { return 0.18; });
    const auto c = check_comparison(solve_marching(p1), p1, solve_marching(p2), p2);
    CHECK(c.applicable);
    CHECK(c.passed);
    const auto reversed = check_comparison(solve_marching(p2), p2, solve_marching(p1), p1);
    CHECK_FALSE(reversed.applicable);
  }
}

TEST_CASE("stability gap") {
  const Grid g(5.0, 1e-3);
  const auto f1 = [](double t) { return 0.2 * std::cos(t); };
  const auto p1 = exp_problem(g, f1);
  SUBCASE("identical problems") {
    const auto gap = stability_gap(p1, p1);
    CHECK(gap.lhs == 0.0);
    CHECK(gap.rhs_f == 0.0);
  }
  SUBCASE("bound holds") {
    const auto p2 = exp_problem(g, [&](double t) { return f1(t) + 0.01; });
    const auto gap = stability_gap(p1, p2);
    CHECK(gap.lhs > 0.0);
    CHECK(gap.lhs / gap.rhs_f <= gap.C);
    CHECK(gap.lhs / gap.rhs_F <= gap.C);
    // lambda0 solves M int e^{-lambda u} rho(du) = 1/2 (or is 0).
    if (gap.lambda0 > 0.0) {
      double s = 0.0;
      auto lat = p1.rho.lattice();
      for (std::size_t k = 1; k < lat.size(); ++k) s += std::exp(-gap.lambda0 * g.time(k)) * lat[k];
      CHECK(gap.M * s == doctest::Approx(0.5).epsilon(1e-9));
    }
  }
  SUBCASE("near linearity") {
    const auto big = stability_gap(p1, exp_problem(g, [&](double t) { return f1(t) + 0.01; }));
    const auto small = stability_gap(p1, exp_problem(g, [&](double t) { return f1(t) + 0.005; }));
    CHECK(small.lhs / big.lhs == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("lambda0 for a large M") {
    const double lam = stability_lambda0(p1.rho, 4.0);
    CHECK(lam > 0.0);
    // For Exp(1) on a long horizon, 4 / (1 + lambda) ~ 1/2.
    CHECK(lam == doctest::Approx(7.0).epsilon(1e-2));
  }
}

TEST_CASE("properties on random problems") {
  std::mt19937_64 rng(20261018);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Grid g(4.0, 2e-3);
  const std::vector<KernelSpec> kernels{Exponential{1.0}, Exponential{3.0},
                                        MittagLeffler{0.5, 1.0}, MittagLeffler{0.8, 0.5}};
  for (int trial = 0; trial < 12; ++trial) {
    const double c0 = u(rng), c1 = u(rng), c2 = u(rng);
    const double freq = 1.0 + 3.0 * std::fabs(u(rng));
    auto raw = [=](double t) { return c0 + c1 * std::sin(freq * t) + c2 * std::cos(2 * t); };
    double peak = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) peak = std::max(peak, std::fabs(raw(g.time(k))));
    const double scale = 0.45 / peak;
    auto f = [=](double t) { return scale * raw(t); };
    const RiccatiProblem p{GridFunction::from(g, f),
                           discretize_kernel(kernels[static_cast<std::size_t>(trial) % 4], g)};
    const auto m = solve_marching(p);
    const auto pic = solve_picard(p, 0.25, 1e-12);
    const auto ser = solve_series(p, 200);
    const double tol = std::max(1e-6, 10 * g.dt());
    CAPTURE(trial);
    CHECK(sup_diff(m.h.values(), pic.h.values()) <= tol);
    CHECK(sup_diff(m.h.values(), ser.solution.h.values()) <= tol);
    CHECK(m.residual <= m.tolerance);
    CHECK(pic.residual <= pic.tolerance);
    CHECK(ser.solution.residual <= ser.solution.tolerance);
    CHECK(check_bounds(m, p).passed);

    // Sign propagation.
    for (double sign : {1.0, -1.0}) {
      const RiccatiProblem q{GridFunction::from(g, [=](double t) { return sign * std::fabs(f(t)); }),
                             p.rho};
      const auto hq = solve_marching(q);
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (sign * hq.h[k] < 0.0) {
          FAIL("sign not propagated at index " << k);
        }
      }
    }
  }
}

TEST_CASE("grid refinement order") {
  auto f = [](double t) { return 0.3 * std::sin(2 * t) + 0.1; };
  std::vector<std::vector<double>> coarse_samples;
  const double T = 4.0;
  std::vector<double> dts{0.02, 0.01, 0.005, 0.0025};
  for (double dt : dts) {
    const Grid g(T, dt);
    const auto sol = solve_marching(exp_problem(g, f));
    const std::size_t stride = static_cast<std::size_t>(std::llround(0.02 / dt));
    std::vector<double> s;
    for (std::size_t k = 0; k < g.size(); k += stride) s.push_back(sol.h[k]);
    coarse_samples.push_back(s);
  }
  for (std::size_t i = 0; i + 2 < coarse_samples.size(); ++i) {
    const double d1 = sup_diff(coarse_samples[i], coarse_samples[i + 1]);
    const double d2 = sup_diff(coarse_samples[i + 1], coarse_samples[i + 2]);
    CHECK(std::log2(d1 / d2) >= 0.9);
  }
}

TEST_CASE("json metadata") {
  const Grid g(1.0, 0.1);
  const auto p = exp_problem(g, [](double) { return 0.1; });
  const auto j = to_json(solve_series(p, 5).solution);
  CHECK(j["method"] == "series");
  CHECK(j["n_terms"] == 5);
  CHECK(j.contains("residual"));
}
