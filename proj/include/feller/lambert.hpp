#pragma once

// Principal-branch Lambert W and the closed-form moment generating function
// of the total size of a Poisson(a) Galton-Watson tree.

namespace feller {

// W0(x) for x >= -1/e (inputs up to 1e-12 below are clamped to -1/e).
double lambert_w0(double x);

// y in [0, 1) with W0(-exp(-1 + d)) = -1 + y, for d <= 0. Solving in y keeps
// full relative accuracy next to the branch point, where x + 1/e cancels.
double lambert_w0_branch_offset(double d);

// beta_max(a) = a - 1 - log(a), the largest beta with a finite cluster MGF.
double cluster_mgf_threshold(double a);

// E[exp(beta |H|)], +infinity for beta > beta_max(a).
double cluster_size_mgf(double a, double beta);

// E[|H|^k exp(beta |H|)] for k in {1, 2}, by implicit differentiation of the
// fixed-point equation l = exp(beta + a (l - 1)). Throws DomainError for
// other k or beta >= beta_max.
double cluster_size_tilted_moment(double a, double beta, int k);

// (1/(1-a)) (E[exp(((1-delta)/2)(1-a)^2 |H|)] - 1), which tends to
// 1 - sqrt(delta) as a -> 1.
double tail_limit_exact(double a, double delta);

}  // namespace feller
