#include "feller/analytics.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "feller/errors.hpp"
#include "feller/io.hpp"
#include "feller/parallel.hpp"
#include "feller/riccati.hpp"

namespace feller {
namespace {

std::size_t grid_index(const Grid& grid, double t) {
  if (!(t >= 0.0) || t > grid.horizon() * (1.0 + 1e-12)) {
    throw DomainError("time " + io::format_double(t) + " outside the grid");
  }
  const std::size_t k = grid.floor_index(t);
  if (k + 1 < grid.size() && grid.time(k + 1) - t < t - grid.time(k)) return k + 1;
  return k;
}

double factorial(std::size_t n) {
  double f = 1.0;
  for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
  return f;
}

GridFunction scaled(const GridFunction& f, double c) {
  std::vector<double> v(f.values().begin(), f.values().end());
  for (double& x : v) x *= c;
  return GridFunction(f.grid(), std::move(v));
}

}  // namespace

double LaplaceCurve::at(double t) const {
  if (times.empty()) throw DomainError("empty Laplace curve");
  auto it = std::lower_bound(times.begin(), times.end(), t);
  std::size_t j = static_cast<std::size_t>(it - times.begin());
  if (j == times.size()) j = times.size() - 1;
  if (j > 0 && std::fabs(times[j - 1] - t) <= std::fabs(times[j] - t)) --j;
  return values[j];
}

GridFunction log_limit_laplace(const GridFunction& f, const GridMeasure& rho,
                               const GridMeasure& mu) {
  require_same_grid(f.grid(), mu.grid(), "Laplace f and mu");
  const auto sol = solve_marching(RiccatiProblem{f, rho});
  return convolve(sol.h, mu);
}

LaplaceCurve limit_laplace(const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu) {
  const auto logm = log_limit_laplace(f, rho, mu);
  LaplaceCurve out;
  const Grid& g = f.grid();
  out.times.resize(g.size());
  out.values.resize(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    out.times[k] = g.time(k);
    out.values[k] = std::exp(logm[k]);
  }
  return out;
}

double scaled_functional(const PointSample& sample, double eps, const GridFunction& f, double t) {
  const Grid& g = f.grid();
  const std::size_t k = grid_index(g, t);
  double s = 0.0;
  for (const auto& p : sample.points) {
    const std::size_t j = g.cell_of(p.time);
    if (j > k) break;  // points are sorted by time
    s += f[k - j];
  }
  return eps * eps * s;
}

std::vector<double> laplace_row(const GridMeasure& xi, const GridFunction& f,
                                std::span<const double> t_list) {
  require_same_grid(xi.grid(), f.grid(), "sample and f");
  auto lat = xi.lattice();
  std::vector<double> row;
  row.reserve(t_list.size());
  for (double t : t_list) {
    const std::size_t k = grid_index(f.grid(), t);
    double s = 0.0;
    for (std::size_t j = 0; j <= k; ++j) {
      if (lat[j] != 0.0) s += f[k - j] * lat[j];
    }
    row.push_back(std::exp(s));
  }
  return row;
}

LaplaceCurve summarize_rows(const std::vector<std::vector<double>>& rows,
                            std::span<const double> t_list) {
  if (rows.empty()) throw ValidationError("empirical Laplace needs at least one sample");
  const std::size_t m = t_list.size();
  const double n = static_cast<double>(rows.size());
  LaplaceCurve out{{t_list.begin(), t_list.end()}, std::vector<double>(m, 0.0),
                   std::vector<double>(m, 0.0)};
  for (const auto& row : rows) {
    if (row.size() != m) throw ValidationError("row length does not match t_list");
    for (std::size_t j = 0; j < m; ++j) out.values[j] += row[j];
  }
  for (std::size_t j = 0; j < m; ++j) out.values[j] /= n;
  if (rows.size() > 1) {
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < m; ++j) {
        const double d = row[j] - out.values[j];
        out.stderrs[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < m; ++j) out.stderrs[j] = std::sqrt(out.stderrs[j] / (n - 1.0) / n);
  }
  return out;
}

LaplaceCurve empirical_laplace(const std::vector<GridMeasure>& samples, const GridFunction& f,
                               std::span<const double> t_list, bool allow_positive) {
  if (samples.empty()) throw ValidationError("empirical Laplace needs at least one sample");
  if (!allow_positive) {
    for (double v : f.values()) {
      if (v > 0.0) {
        throw ValidationError("empirical Laplace needs f <= 0 (pass allow_positive to override)");
      }
    }
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (const auto& xi : samples) rows.push_back(laplace_row(xi, f, t_list));
  return summarize_rows(rows, t_list);
}

CumulantReport cumulants(const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu,
                         std::size_t n_max) {
  if (n_max == 0) throw ValidationError("cumulants need n_max >= 1");
  require_same_grid(f.grid(), mu.grid(), "cumulant f and mu");
  CumulantReport out{1, {}, series_terms(f, rho, n_max)};
  for (std::size_t n = 1; n <= n_max; ++n) {
    out.kappa.push_back(scaled(convolve(out.terms[n - 1], mu), factorial(n)));
  }
  return out;
}

CumulantReport partial_cumulants(const GridFunction& f0, const GridFunction& f,
                                 const GridMeasure& rho, const GridMeasure& mu,
                                 std::size_t n_max) {
  require_same_grid(f.grid(), mu.grid(), "cumulant f and mu");
  CumulantReport out{0, {}, solve_perturbation_system(f0, f, rho, n_max)};
  for (std::size_t n = 0; n < out.terms.size(); ++n) {
    out.kappa.push_back(scaled(convolve(out.terms[n], mu), factorial(n)));
  }
  return out;
}

std::vector<double> moments_from_cumulants(std::span<const double> kappa) {
  if (kappa.size() > 6) throw DomainError("moment conversion is implemented up to order 6");
  std::vector<double> m(kappa.size() + 1, 0.0);
  m[0] = 1.0;
  for (std::size_t n = 1; n <= kappa.size(); ++n) {
    double binom = 1.0;  // C(n-1, k)
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += binom * kappa[k] * m[n - 1 - k];
      binom = binom * static_cast<double>(n - 1 - k) / static_cast<double>(k + 1);
    }
    m[n] = s;
  }
  return {m.begin() + 1, m.end()};
}

std::vector<GridFunction> moments_from_cumulants(const std::vector<GridFunction>& kappa) {
  if (kappa.empty()) return {};
  const Grid& g = kappa.front().grid();
  std::vector<std::vector<double>> cols(kappa.size(), std::vector<double>(g.size()));
  std::vector<double> point(kappa.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (std::size_t n = 0; n < kappa.size(); ++n) point[n] = kappa[n][k];
    const auto m = moments_from_cumulants(point);
    for (std::size_t n = 0; n < m.size(); ++n) cols[n][k] = m[n];
  }
  std::vector<GridFunction> out;
  for (auto& c : cols) out.emplace_back(g, std::move(c));
  return out;
}

GridFunction first_moment(const GridFunction& f, double a, const GridMeasure& rho,
                          const GridMeasure& mu, bool include_prelimit_factor) {
  if (include_prelimit_factor && !(a >= 0.0 && a < 1.0)) {
    throw DomainError("branching ratio a must lie in [0, 1)");
  }
  const auto m = convolve(f, convolve(rho, mu));
  return include_prelimit_factor ? scaled(m, 1.0 / (1.0 - a)) : m;
}

CovarianceGrid covariance_kernel(const DensityKernel& rho, const GridMeasure& mu,
                                 std::size_t eval_stride) {
  if (eval_stride == 0) throw ValidationError("eval_stride must be positive");
  const Grid& g = mu.grid();
  const std::size_t n = g.n_cells();
  const double dt = g.dt();
  // Tables: F at multiples of dt, p at half-integer multiples, and the cell
  // increments of F centred on half-integers.
  std::vector<double> F(n + 2), p_half(n + 1), c(n + 1);
  for (std::size_t m = 0; m <= n + 1; ++m) F[m] = rho.cdf(static_cast<double>(m) * dt);
  for (std::size_t m = 0; m <= n; ++m) p_half[m] = rho.density((static_cast<double>(m) + 0.5) * dt);
  c[0] = rho.cdf(0.5 * dt);
  for (std::size_t m = 1; m <= n; ++m) {
    c[m] = rho.cdf((static_cast<double>(m) + 0.5) * dt) - rho.cdf((static_cast<double>(m) - 0.5) * dt);
  }
  // q[k] = (p * mu)(t_k - dt/2), cell masses of mu spread uniformly over their cells.
  auto lat = mu.lattice();
  std::vector<double> dens(n + 1, 0.0);
  for (std::size_t j = 1; j <= n; ++j) dens[j] = lat[j] / dt;
  const auto conv = causal_convolve(dens, c, n + 1);
  std::vector<double> q(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    q[k] = conv[k] + (lat[0] != 0.0 ? lat[0] * rho.density((static_cast<double>(k) - 0.5) * dt) : 0.0);
  }
  // int_0^dt p(x)^2 dx for the diagonal's last cell.
  double diag_cell = std::numeric_limits<double>::infinity();
  if (2.0 * rho.singular_exponent > -1.0) {
    boost::math::quadrature::tanh_sinh<double> ts;
    diag_cell = ts.integrate([&](double x) { const double v = rho.density(x); return v * v; },
                             0.0, dt);
  }

  CovarianceGrid out;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k <= n; k += eval_stride) idx.push_back(k);
  for (std::size_t k : idx) out.times.push_back(g.time(k));
  const std::size_t e = idx.size();
  out.sigma.assign(e * e, 0.0);
  parallel_for(e, default_threads(), [&](std::size_t i) {
    const std::size_t a = idx[i];
    for (std::size_t j = i; j < e; ++j) {
      const std::size_t b = idx[j];
      double s = 0.0;
      for (std::size_t k = 1; k <= a; ++k) {
        const double w = F[a - k + 1] - F[a - k];
        if (a == b && k == a) {
          s += diag_cell * q[k];
        } else {
          s += w * p_half[b - k] * q[k];
        }
      }
      out.sigma[i * e + j] = s;
    }
  });
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t j = 0; j < i; ++j) out.sigma[i * e + j] = out.sigma[j * e + i];
  }
  return out;
}

CovarianceGrid covariance_kernel(const KernelSpec& rho, const GridMeasure& mu,
                                 std::size_t eval_stride) {
  const auto dk = density_kernel(rho);
  if (!dk) {
    throw ValidationError("kernel " + describe(rho) +
                          " has no density; the measure-form covariance is not supported");
  }
  return covariance_kernel(*dk, mu, eval_stride);
}

double b_alpha_envelope(double alpha, double r, double s) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
  if (!(r > 0.0 && s > 0.0)) throw DomainError("B_alpha needs r, s > 0");
  if (r == s) throw DomainError("B_alpha is defined off the diagonal only");
  if (r > s) std::swap(r, s);
  const double base = std::pow(r, 2.0 * alpha) * std::pow(s, alpha - 1.0);
  const double x = r / s;
  if (alpha < 0.5) return base * std::pow(1.0 - x, 2.0 * alpha - 1.0);
  if (alpha == 0.5) return base * (1.0 - std::log1p(-x));
  return base;
}

EnvelopeFit envelope_ratio(const CovarianceGrid& cov, double alpha, double r_min, double gap) {
  EnvelopeFit fit{std::numeric_limits<double>::infinity(), 0.0, 0.0, 0};
  const std::size_t e = cov.size();
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t j = i + 1; j < e; ++j) {
      const double r = cov.times[i], s = cov.times[j];
      if (std::min(r, s) < r_min || std::fabs(r - s) < gap - 1e-12) continue;
      const double ratio = cov(i, j) / b_alpha_envelope(alpha, r, s);
      fit.min_ratio = std::min(fit.min_ratio, ratio);
      fit.max_ratio = std::max(fit.max_ratio, ratio);
      ++fit.pairs;
    }
  }
  if (fit.pairs == 0) throw ValidationError("no pairs satisfy the envelope window");
  fit.C = std::max(fit.max_ratio, 1.0 / fit.min_ratio);
  return fit;
}

std::string to_csv(const CumulantReport& report) {
  std::string out = "t";
  for (std::size_t i = 0; i < report.kappa.size(); ++i) {
    out += ",k" + std::to_string(report.first_order + i);
  }
  out += '\n';
  if (report.kappa.empty()) return out;
  const Grid& g = report.kappa.front().grid();
  for (std::size_t k = 0; k < g.size(); ++k) {
    out += io::format_double(g.time(k));
    for (const auto& kap : report.kappa) {
      out += ',';
      out += io::format_double(kap[k]);
    }
    out += '\n';
  }
  return out;
}

std::string to_csv(const CovarianceGrid& cov) {
  std::string out = "r";
  for (double s : cov.times) out += "," + io::format_double(s);
  out += '\n';
  for (std::size_t i = 0; i < cov.size(); ++i) {
    out += io::format_double(cov.times[i]);
    for (std::size_t j = 0; j < cov.size(); ++j) {
      out += ',';
      out += io::format_double(cov(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace feller
