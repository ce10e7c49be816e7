#pragma once

// Laplace functionals, cumulants, moments and covariance of the limit
// measure xi ~ F(mu, rho), plus Monte Carlo estimators for scaled samples.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feller/grid.hpp"
#include "feller/kernels.hpp"
#include "feller/simulator.hpp"

namespace feller {

struct LaplaceCurve {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> stderrs;  // empty for analytic curves

  // Value at the entry whose time is closest to t.
  double at(double t) const;
};

// log M(t) = (h[f] * mu)(t), h[f] from solve_marching.
GridFunction log_limit_laplace(const GridFunction& f, const GridMeasure& rho,
                               const GridMeasure& mu);
LaplaceCurve limit_laplace(const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu);

// (f * xi)(t) for the scaled point sample xi = eps^2 sum delta_{t_i}, using
// the same right-endpoint cell assignment as scaled_measure. t must be a grid
// time of f.
double scaled_functional(const PointSample& sample, double eps, const GridFunction& f, double t);

// exp((f * xi)(t)) for each t; one row of the empirical Laplace estimator.
std::vector<double> laplace_row(const GridMeasure& xi, const GridFunction& f,
                                std::span<const double> t_list);

// Mean and MC standard error over rows (rows[r][j] belongs to t_list[j]),
// accumulated in row order.
LaplaceCurve summarize_rows(const std::vector<std::vector<double>>& rows,
                            std::span<const double> t_list);

// Mean over samples of exp((f * xi)(t)). Refuses f > 0 unless allow_positive,
// since exponential moments are only finite for small positive f.
LaplaceCurve empirical_laplace(const std::vector<GridMeasure>& samples, const GridFunction& f,
                               std::span<const double> t_list, bool allow_positive = false);

struct CumulantReport {
  std::size_t first_order;          // 1 for cumulants, 0 for partial cumulants
  std::vector<GridFunction> kappa;  // kappa[i] is the order first_order + i
  std::vector<GridFunction> terms;  // K_n (or K'_n), same indexing
};

// kappa_n = n! (K_n * mu), K_n from series_terms.
CumulantReport cumulants(const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu,
                         std::size_t n_max);

// kappa'_n = n! (K'_n * mu) for n = 0..n_max, K'_n from the perturbation system
// around f0; kappa'_0 = log M[f0].
CumulantReport partial_cumulants(const GridFunction& f0, const GridFunction& f,
                                 const GridMeasure& rho, const GridMeasure& mu, std::size_t n_max);

// Raw moments m_1..m_n from cumulants kappa_1..kappa_n (n <= 6) by
// m_n = sum_{k=0}^{n-1} C(n-1, k) kappa_{k+1} m_{n-1-k}.
std::vector<double> moments_from_cumulants(std::span<const double> kappa);
std::vector<GridFunction> moments_from_cumulants(const std::vector<GridFunction>& kappa);

// (1/(1-a)) f * (rho * mu): the pre-limit Hawkes mean. With
// include_prelimit_factor = false, the limit mean kappa_1 = (f * rho) * mu.
GridFunction first_moment(const GridFunction& f, double a, const GridMeasure& rho,
                          const GridMeasure& mu, bool include_prelimit_factor = true);

struct CovarianceGrid {
  std::vector<double> times;  // evaluation points, shared by rows and columns
  std::vector<double> sigma;  // row-major, times.size()^2

  std::size_t size() const { return times.size(); }
  double operator()(std::size_t i, std::size_t j) const { return sigma[i * times.size() + j]; }
};

// Sigma(r, s) = int_0^{min(r,s)} p(r-u) p(s-u) (p*mu)(u) du by product
// integration on the cells of mu's grid: the factor with the smaller lag is
// integrated exactly through the CDF, the other factor and p*mu are taken at
// cell midpoints. eval_stride selects every stride-th grid time as an
// evaluation point. The diagonal is +inf when p^2 is not integrable.
CovarianceGrid covariance_kernel(const DensityKernel& rho, const GridMeasure& mu,
                                 std::size_t eval_stride = 1);
CovarianceGrid covariance_kernel(const KernelSpec& rho, const GridMeasure& mu,
                                 std::size_t eval_stride = 1);

// r^{2a} s^{a-1} times (1 - r/s)^{2a-1} (a < 1/2), 1 - log(1 - r/s) (a = 1/2),
// or 1 (a > 1/2), for r < s; symmetric. DomainError on r = s.
double b_alpha_envelope(double alpha, double r, double s);

struct EnvelopeFit {
  double min_ratio;
  double max_ratio;
  double C;  // max(max_ratio, 1 / min_ratio)
  std::size_t pairs;
};

// Sigma / B_alpha over off-diagonal pairs with min(r,s) >= r_min and
// |r - s| >= gap.
EnvelopeFit envelope_ratio(const CovarianceGrid& cov, double alpha, double r_min, double gap);

// CSV with header "t,k1,...,kn" (k0 first for partial cumulants).
std::string to_csv(const CumulantReport& report);
// CSV matrix with header "r,<s_0>,<s_1>,...".
std::string to_csv(const CovarianceGrid& cov);

}  // namespace feller
