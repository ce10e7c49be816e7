#include "feller/riccati.hpp"

#include <algorithm>
#include <cmath>

#include "feller/errors.hpp"
#include "feller/io.hpp"

namespace feller {
namespace {

// sum_{i<k} a[i] b[i] with four accumulators so the loop vectorizes.
double dot(const double* a, const double* b, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= k; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < k; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// rho lattice reversed, so that sum_{i<k} g[i] rho[k-i] is a contiguous dot
// product: rho[k-i] = rev[n-k+i].
class ReversedKernel {
 public:
  explicit ReversedKernel(const GridMeasure& rho) {
    auto lat = rho.lattice();
    rev_.assign(lat.rbegin(), lat.rend());
  }
  double lagged(const std::vector<double>& g, std::size_t k) const {
    return lagged(g, 0, k);
  }
  // sum_{i=from}^{k-1} g[i] rho[k-i]
  double lagged(const std::vector<double>& g, std::size_t from, std::size_t k) const {
    if (k <= from) return 0.0;
    const std::size_t n = rev_.size() - 1;
    return dot(g.data() + from, rev_.data() + (n - k + from), k - from);
  }

 private:
  std::vector<double> rev_;
};

void check_blow_up(double v, std::size_t k, const Grid& grid) {
  if (!std::isfinite(v) || std::fabs(v) > kBlowUpThreshold) {
    throw BlowUpError("solution left the bounded regime at t = " +
                      io::format_double(grid.time(k)));
  }
}

std::vector<std::string> sup_warnings(const RiccatiProblem& prob) {
  std::vector<std::string> w;
  double fmax = -std::numeric_limits<double>::infinity();
  for (double v : prob.f.values()) fmax = std::max(fmax, v);
  if (fmax > 0.5) {
    w.push_back("sup f = " + io::format_double(fmax) +
                " exceeds 1/2; existence of a bounded solution is not guaranteed");
  }
  return w;
}

// Solves X = (s + b X) * rho by forward marching.
std::vector<double> march_linear(const std::vector<double>& s, const std::vector<double>& b,
                                 const GridMeasure& rho) {
  const ReversedKernel kernel(rho);
  const std::size_t n = s.size();
  std::vector<double> x(n, 0.0), g(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = kernel.lagged(g, k);
    check_blow_up(x[k], k, rho.grid());
    g[k] = s[k] + b[k] * x[k];
  }
  return x;
}

std::vector<double> to_vector(const GridFunction& f) {
  return {f.values().begin(), f.values().end()};
}

RiccatiSolution finish(const RiccatiProblem& prob, std::vector<double> h, RiccatiMethod method) {
  RiccatiSolution sol{GridFunction(prob.f.grid(), std::move(h)), 0.0, default_tolerance(prob),
                      method, 0, 0, {}};
  sol.residual = fixed_point_residual(sol.h, prob);
  sol.warnings = sup_warnings(prob);
  return sol;
}

std::vector<double> running_sup(std::span<const double> v) {
  std::vector<double> out(v.size());
  double m = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    m = std::max(m, std::fabs(v[k]));
    out[k] = m;
  }
  return out;
}

double grid_integral(const std::vector<double>& m, double dt) {
  double s = 0.0;
  for (std::size_t k = 1; k < m.size(); ++k) s += m[k] * dt;
  return s;
}

}  // namespace

void validate(const RiccatiProblem& prob) {
  require_same_grid(prob.f.grid(), prob.rho.grid(), "Riccati f and rho");
  if (prob.rho.is_signed()) throw ValidationError("Riccati kernel rho must be nonnegative");
  if (prob.rho.atom_at_zero() != 0.0) {
    throw ValidationError("Riccati kernel rho must have no atom at zero");
  }
  for (double v : prob.f.values()) {
    if (!std::isfinite(v)) throw ValidationError("Riccati f must be finite");
  }
}

std::string to_string(RiccatiMethod method) {
  switch (method) {
    case RiccatiMethod::kMarching: return "marching";
    case RiccatiMethod::kPicard: return "picard";
    case RiccatiMethod::kSeries: return "series";
    case RiccatiMethod::kDough: return "dough";
  }
  return "unknown";
}

double default_tolerance(const RiccatiProblem& prob) {
  return std::max(10.0 * prob.f.grid().dt() * sup_norm(prob.f.values()), 1e-12);
}

double fixed_point_residual(const GridFunction& h, const RiccatiProblem& prob) {
  std::vector<double> g(h.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = prob.f[k] + 0.5 * h[k] * h[k];
  const auto rhs = convolve(GridFunction(h.grid(), std::move(g)), prob.rho);
  double r = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) r = std::max(r, std::fabs(h[k] - rhs[k]));
  return r;
}

RiccatiSolution solve_marching(const RiccatiProblem& prob) {
  validate(prob);
  const ReversedKernel kernel(prob.rho);
  const std::size_t n = prob.f.size();
  std::vector<double> h(n, 0.0), g(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    h[k] = kernel.lagged(g, k);
    check_blow_up(h[k], k, prob.f.grid());
    g[k] = prob.f[k] + 0.5 * h[k] * h[k];
  }
  return finish(prob, std::move(h), RiccatiMethod::kMarching);
}

RiccatiSolution solve_picard(const RiccatiProblem& prob, double window, double tol,
                             std::size_t max_sweeps) {
  validate(prob);
  if (!(window > 0.0)) throw ValidationError("Picard window must be positive");
  if (!(tol > 0.0)) throw ValidationError("Picard tolerance must be positive");
  const Grid& grid = prob.f.grid();
  const ReversedKernel kernel(prob.rho);
  const std::size_t n = prob.f.size();
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window / grid.dt())));
  const double window_mass = prob.rho.cdf_at(std::min(w, grid.n_cells()));

  std::vector<double> h(n, 0.0), g(n, 0.0), history(n, 0.0), next(n, 0.0), frozen(n, 0.0);
  double history_sup = 0.0;
  std::size_t sweeps = 0;
  for (std::size_t a = 0; a < n; a += w) {
    const std::size_t b = std::min(a + w, n);  // window is [a, b)
    // History part: sum_{i<a} g[i] rho[k-i], with g frozen before the window.
    std::fill(frozen.begin() + static_cast<std::ptrdiff_t>(std::min(a, n)), frozen.end(), 0.0);
    std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(a), frozen.begin());
    for (std::size_t k = a; k < b; ++k) {
      history[k] = kernel.lagged(frozen, k);
      g[k] = prob.f[k] + 0.5 * h[k] * h[k];
    }
    bool converged = false;
    while (!converged) {
      if (++sweeps > max_sweeps) {
        throw NumericalRefusal("Picard iteration did not converge within the sweep budget");
      }
      double diff = 0.0, sup = history_sup;
      for (std::size_t k = a; k < b; ++k) {
        next[k] = history[k] + kernel.lagged(g, a, k);
        check_blow_up(next[k], k, grid);
        diff = std::max(diff, std::fabs(next[k] - h[k]));
        sup = std::max(sup, std::fabs(next[k]));
      }
      for (std::size_t k = a; k < b; ++k) {
        h[k] = next[k];
        g[k] = prob.f[k] + 0.5 * h[k] * h[k];
      }
      if (sup * window_mass >= 1.0) {
        throw NumericalRefusal("Picard map is not a contraction on this window (factor " +
                               io::format_double(sup * window_mass) +
                               "); use a smaller window");
      }
      converged = diff < tol;
    }
    for (std::size_t k = a; k < b; ++k) history_sup = std::max(history_sup, std::fabs(h[k]));
  }
  auto sol = finish(prob, std::move(h), RiccatiMethod::kPicard);
  sol.iterations = sweeps;
  sol.tolerance = std::max(sol.tolerance, tol);
  return sol;
}

std::vector<GridFunction> series_terms(const GridFunction& f, const GridMeasure& rho,
                                       std::size_t n_max) {
  validate(RiccatiProblem{f, rho});
  const Grid& grid = f.grid();
  const std::size_t n = f.size();
  std::vector<GridFunction> terms;
  terms.reserve(n_max);
  if (n_max == 0) return terms;
  terms.push_back(convolve(f, rho));
  std::vector<double> src(n);
  for (std::size_t m = 2; m <= n_max; ++m) {
    std::fill(src.begin(), src.end(), 0.0);
    for (std::size_t i = 1; 2 * i <= m; ++i) {
      const auto& a = terms[i - 1];
      const auto& b = terms[m - i - 1];
      const double w = 2 * i == m ? 0.5 : 1.0;
      for (std::size_t k = 0; k < n; ++k) src[k] += w * a[k] * b[k];
    }
    terms.push_back(convolve(GridFunction(grid, src), rho));
  }
  return terms;
}

SeriesSolution solve_series(const RiccatiProblem& prob, std::size_t n_max) {
  validate(prob);
  if (n_max == 0) throw ValidationError("series needs n_max >= 1");
  const double fnorm = sup_norm(prob.f.values());
  if (fnorm > 0.5) {
    throw NumericalRefusal("series solution requires ||f||_sup <= 1/2 (got " +
                           io::format_double(fnorm) + ")");
  }
  const Grid& grid = prob.f.grid();
  const std::size_t n = prob.f.size();
  SeriesSolution out{{GridFunction::constant(grid, 0.0), 0.0, 0.0, RiccatiMethod::kSeries, 0, 0, {}},
                     series_terms(prob.f, prob.rho, n_max), {}, false};
  for (const auto& term : out.terms) out.term_norms.push_back(sup_norm(term.values()));
  std::vector<double> h(n, 0.0);
  for (const auto& term : out.terms) {
    for (std::size_t k = 0; k < n; ++k) h[k] += term[k];
  }
  out.truncated = out.term_norms.back() > 1e-12;
  out.solution = finish(prob, std::move(h), RiccatiMethod::kSeries);
  out.solution.n_terms = n_max;
  if (out.truncated) {
    out.solution.warnings.push_back("series truncated: ||K_n_max||_sup = " +
                                    io::format_double(out.term_norms.back()));
  }
  return out;
}

GridFunction solve_dough(const GridFunction& F, const GridMeasure& rho) {
  validate(RiccatiProblem{F, rho});
  const ReversedKernel kernel(rho);
  const std::size_t n = F.size();
  std::vector<double> k_vals(n, 0.0), g(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    k_vals[k] = F[k] + kernel.lagged(g, k);
    check_blow_up(k_vals[k], k, F.grid());
    g[k] = 0.5 * k_vals[k] * k_vals[k];
  }
  return GridFunction(F.grid(), std::move(k_vals));
}

std::vector<GridFunction> solve_perturbation_system(const GridFunction& f0,
                                                    const GridFunction& g,
                                                    const GridMeasure& rho,
                                                    std::size_t n_max) {
  require_same_grid(f0.grid(), g.grid(), "perturbation f0 and g");
  const double budget = sup_norm(f0.values()) + sup_norm(g.values());
  if (budget > 0.5) {
    throw NumericalRefusal("perturbation system requires ||f0|| + ||g|| <= 1/2 (got " +
                           io::format_double(budget) + ")");
  }
  const RiccatiProblem base{f0, rho};
  std::vector<GridFunction> out;
  out.push_back(solve_marching(base).h);
  const auto b = to_vector(out[0]);
  if (sup_norm(b) >= 1.0) {
    throw NumericalRefusal("perturbation system requires ||K'_0||_sup < 1");
  }
  const Grid& grid = f0.grid();
  const std::size_t n = f0.size();
  if (n_max >= 1) out.emplace_back(grid, march_linear(to_vector(g), b, rho));
  std::vector<double> src(n);
  for (std::size_t m = 2; m <= n_max; ++m) {
    std::fill(src.begin(), src.end(), 0.0);
    for (std::size_t i = 1; 2 * i <= m; ++i) {
      const auto& x = out[i];
      const auto& y = out[m - i];
      const double w = 2 * i == m ? 0.5 : 1.0;
      for (std::size_t k = 0; k < n; ++k) src[k] += w * x[k] * y[k];
    }
    out.emplace_back(grid, march_linear(src, b, rho));
  }
  return out;
}

BoundsCertificate check_bounds(const RiccatiSolution& sol, const RiccatiProblem& prob,
                               double slack) {
  require_same_grid(sol.h.grid(), prob.f.grid(), "solution and problem");
  double neg = 0.0, pos = 0.0;
  for (std::size_t k = 0; k < sol.h.size(); ++k) {
    neg = std::max(neg, -prob.f[k]);
    pos = std::max(pos, prob.f[k]);
    const double lower = -neg;
    const bool upper_known = pos <= 0.5;
    const double upper = upper_known ? 1.0 - std::sqrt(1.0 - 2.0 * pos)
                                     : std::numeric_limits<double>::infinity();
    const double v = sol.h[k];
    if (v < lower - slack || v > upper + slack) {
      return {false, k, lower, upper,
              "h(" + io::format_double(sol.h.grid().time(k)) + ") = " + io::format_double(v) +
                  " outside [" + io::format_double(lower) + ", " + io::format_double(upper) + "]"};
    }
  }
  return {true, std::nullopt, -neg, pos <= 0.5 ? 1.0 - std::sqrt(1.0 - 2.0 * pos) : 0.0,
          "envelope holds"};
}

ComparisonCertificate check_comparison(const RiccatiSolution& sol1,
                                       const RiccatiProblem& prob1,
                                       const RiccatiSolution& sol2,
                                       const RiccatiProblem& prob2, double slack) {
  require_same_grid(sol1.h.grid(), sol2.h.grid(), "compared solutions");
  const std::size_t n = sol1.h.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (prob1.f[k] > prob2.f[k] || sol1.h[k] + sol2.h[k] < -slack) {
      return {false, false, k, "preconditions f1 <= f2 and h1 + h2 >= 0 fail at index " +
                                   std::to_string(k)};
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (sol1.h[k] > sol2.h[k] + slack) {
      return {true, false, k, "h1 > h2 at t = " + io::format_double(sol1.h.grid().time(k))};
    }
  }
  return {true, true, std::nullopt, "h1 <= h2 everywhere"};
}

double stability_lambda0(const GridMeasure& rho, double M) {
  if (rho.atom_at_zero() != 0.0) throw ValidationError("rho must have no atom at zero");
  const Grid& grid = rho.grid();
  auto lat = rho.lattice();
  auto weighted = [&](double lambda) {
    double s = 0.0;
    for (std::size_t k = 1; k < lat.size(); ++k) s += std::exp(-lambda * grid.time(k)) * lat[k];
    return M * s;
  };
  if (weighted(0.0) <= 0.5) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (weighted(hi) > 0.5) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw NumericalRefusal("no finite lambda0 for this kernel");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (weighted(mid) > 0.5) lo = mid; else hi = mid;
  }
  return hi;
}

StabilityGap stability_gap(const RiccatiProblem& prob1, const RiccatiProblem& prob2) {
  require_same_grid(prob1.f.grid(), prob2.f.grid(), "stability problems");
  const auto s1 = solve_marching(prob1);
  const auto s2 = solve_marching(prob2);
  const Grid& grid = prob1.f.grid();
  const std::size_t n = grid.size();
  std::vector<double> dh(n), df(n);
  for (std::size_t k = 0; k < n; ++k) {
    dh[k] = s2.h[k] - s1.h[k];
    df[k] = prob2.f[k] - prob1.f[k];
  }
  const auto dF = convolve(GridFunction(grid, df), prob1.rho);
  StabilityGap gap{};
  gap.lhs = grid_integral(running_sup(dh), grid.dt());
  gap.rhs_f = grid_integral(running_sup(df), grid.dt());
  gap.rhs_F = grid_integral(running_sup(dF.values()), grid.dt());
  gap.M = std::max(sup_norm(s1.h.values()), sup_norm(s2.h.values()));
  gap.lambda0 = stability_lambda0(prob1.rho, gap.M);
  gap.C = 2.0 * std::exp(gap.lambda0 * grid.horizon());
  return gap;
}

nlohmann::json to_json(const RiccatiSolution& sol) {
  nlohmann::json j = io::to_json(sol.h);
  j["method"] = to_string(sol.method);
  j["residual"] = sol.residual;
  j["tolerance"] = sol.tolerance;
  if (sol.method == RiccatiMethod::kSeries) j["n_terms"] = sol.n_terms;
  if (sol.method == RiccatiMethod::kPicard) j["iterations"] = sol.iterations;
  j["warnings"] = sol.warnings;
  return j;
}

}  // namespace feller
