#pragma once

// Two-parameter Mittag-Leffler function on the negative half-line and the
// Mittag-Leffler probability law (Laplace transform 1/(1 + lambda^alpha)).
//
// E_{a,b}(-x) is evaluated by one of three routes:
//   * the power series sum (-x)^n / Gamma(a n + b) in long double while the
//     alternating sum is well conditioned (x^{1/a} <= 18), stopping once the
//     next term drops below 1e-15 of the partial sum (cap 400 terms);
//   * the algebraic asymptotic expansion for x > 30;
//   * in between, the completely-monotone integral representation
//       E_a(-t^a) = sin(a pi)/(a pi) * int_0^inf exp(-t u^{1/a}) / (u^2 + 2u cos(a pi) + 1) du
//     (and its t-derivative for b = a), integrated with exp-sinh quadrature.

namespace feller {

// E_{alpha,beta}(-x) for x >= 0, alpha in (0, 1], beta > 0. The integral
// route only covers beta in {alpha, 1}; other betas use series/asymptotics.
double mittag_leffler_neg(double alpha, double beta, double x);

// Density t^{alpha-1} E_{alpha,alpha}(-t^alpha) of the unit-scale law, t > 0.
double mittag_leffler_density(double alpha, double t);

// P(X > t) = E_alpha(-t^alpha) for the unit-scale law.
double mittag_leffler_survival(double alpha, double t);

// P(X <= t), accurate in relative terms for small t.
double mittag_leffler_cdf(double alpha, double t);

}  // namespace feller
