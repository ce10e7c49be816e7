#include "feller/lambert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "feller/errors.hpp"

namespace feller {
namespace {

constexpr double kInvE = 0.36787944117144233;

// log(1 - y) + y, with the leading cancellation removed for small y.
double log1m_plus(double y) {
  if (y < 1e-2) {
    double term = y * y;
    double sum = 0.0;
    for (int k = 2; k < 40; ++k) {
      sum -= term / k;
      term *= y;
      if (term < 1e-18 * std::fabs(sum)) break;
    }
    return sum;
  }
  return std::log1p(-y) + y;
}

// sum_{k >= first} eps^k / k for small eps.
double log_tail_series(double eps, int first) {
  double term = std::pow(eps, first);
  double sum = 0.0;
  for (int k = first; k < 200; ++k) {
    sum += term / k;
    term *= eps;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double halley(double x, double w) {
  for (int it = 0; it < 100; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    w -= step;
    if (std::fabs(step) <= 1e-16 * (1.0 + std::fabs(w))) break;
  }
  return w;
}

void check_a(double a) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("branching ratio a must lie in (0, 1)");
}

}  // namespace

double lambert_w0_branch_offset(double d) {
  if (d > 0.0) throw DomainError("branch offset needs d <= 0");
  if (d == 0.0) return 0.0;
  // Solve g(y) = log(1-y) + y - d = 0 on [0, 1); g decreases from -d to -inf.
  const double s = std::sqrt(-2.0 * d);
  double y = std::min(s - s * s / 3.0 + s * s * s / 36.0, 0.999);
  if (!(y > 0.0)) y = std::min(s, 0.5);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double g = log1m_plus(y) - d;
    if (g > 0.0) lo = y; else hi = y;
    const double gp = -y / (1.0 - y);
    double next = y - g / gp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::fabs(next - y);
    y = next;
    if (step <= 4e-16 * y || hi - lo <= 4e-16 * y) break;
  }
  return y;
}

double lambert_w0(double x) {
  if (std::isnan(x)) throw DomainError("lambert_w0 of NaN");
  if (x < -kInvE - 1e-12) throw DomainError("lambert_w0 needs x >= -1/e");
  if (x <= -kInvE) return -1.0;
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;
  if (x < -0.3) {
    // x = -exp(-1 + d).
    return -1.0 + lambert_w0_branch_offset(std::min(1.0 + std::log(-x), 0.0));
  }
  double w;
  if (x < 0.0) {
    w = x * (1.0 - x);
  } else if (x <= std::numbers::e) {
    w = std::log1p(x) * (1.0 - std::log1p(std::log1p(x)) / (2.0 + std::log1p(x)));
  } else {
    const double l = std::log(x);
    w = l - std::log(l);
  }
  return halley(x, w);
}

double cluster_mgf_threshold(double a) {
  check_a(a);
  const double eps = 1.0 - a;
  if (eps < 0.5) return log_tail_series(eps, 2);
  return a - 1.0 - std::log(a);
}

double cluster_size_mgf(double a, double beta) {
  const double bmax = cluster_mgf_threshold(a);
  // Values within rounding of the threshold (e.g. a - 1 - log(a) evaluated
  // directly) count as the threshold itself.
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * bmax;
  if (beta > bmax + slack) return std::numeric_limits<double>::infinity();
  const double d = std::min(beta - bmax, 0.0);
  if (d > -0.5) return (1.0 - lambert_w0_branch_offset(d)) / a;
  return -lambert_w0(-std::exp(beta - a + std::log(a))) / a;
}

double cluster_size_tilted_moment(double a, double beta, int k) {
  const double bmax = cluster_mgf_threshold(a);
  if (!(beta < bmax)) throw DomainError("tilted moments need beta < a - 1 - log(a)");
  if (k != 1 && k != 2) throw DomainError("tilted moments are implemented for k = 1, 2");
  const double l = cluster_size_mgf(a, beta);
  // l' = l / (1 - a l), l'' = l' / (1 - a l)^2, with 1 - a l = y.
  const double d = beta - bmax;
  const double y = d > -0.5 ? lambert_w0_branch_offset(d) : 1.0 - a * l;
  const double first = l / y;
  return k == 1 ? first : first / (y * y);
}

double tail_limit_exact(double a, double delta) {
  check_a(a);
  if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("delta must lie in [0, 1)");
  const double eps = 1.0 - a;
  double d;
  if (eps < 0.5) {
    // beta - beta_max = -delta eps^2 / 2 - sum_{k >= 3} eps^k / k.
    d = -0.5 * delta * eps * eps - log_tail_series(eps, 3);
  } else {
    d = 0.5 * (1.0 - delta) * eps * eps - (a - 1.0 - std::log(a));
  }
  if (d > 0.0) throw DomainError("cluster MGF is infinite at this (a, delta)");
  const double y = lambert_w0_branch_offset(d);
  // l - 1 = (1 - y)/a - 1 = (eps - y)/a.
  return (eps - y) / (a * eps);
}

}  // namespace feller
