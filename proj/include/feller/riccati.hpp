#pragma once

// Grid solvers for the convolutional Riccati equation h = (f + h^2/2) * rho.
// rho must carry no atom at zero, so the right-endpoint discretization is
// explicit: h(t_k) only needs h(t_0), ..., h(t_{k-1}).

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "feller/grid.hpp"

namespace feller {

inline constexpr double kBlowUpThreshold = 1e6;

struct RiccatiProblem {
  GridFunction f;
  GridMeasure rho;
};

// Throws ValidationError on grid mismatch, a signed rho, or rho({0}) != 0.
void validate(const RiccatiProblem& prob);

enum class RiccatiMethod { kMarching, kPicard, kSeries, kDough };

std::string to_string(RiccatiMethod method);

struct RiccatiSolution {
  GridFunction h;
  double residual;   // sup_k |h - (f + h^2/2) * rho|
  double tolerance;  // declared residual tolerance
  RiccatiMethod method;
  std::size_t n_terms = 0;     // series only
  std::size_t iterations = 0;  // Picard: total sweeps over all windows
  std::vector<std::string> warnings;
};

// Default residual tolerance 10 dt ||f||_sup, floored at 1e-12.
double default_tolerance(const RiccatiProblem& prob);

// sup over the grid of |h - (f + h^2/2) * rho|.
double fixed_point_residual(const GridFunction& h, const RiccatiProblem& prob);

// Single forward pass, O(n^2). Attaches a warning when sup f > 1/2 and throws
// BlowUpError once |h| exceeds kBlowUpThreshold.
RiccatiSolution solve_marching(const RiccatiProblem& prob);

// Windowed Picard iteration: inside each window the whole block is updated
// from the previous iterate until the sup change drops below tol. Throws
// NumericalRefusal when max|h| * rho(0, window] >= 1.
RiccatiSolution solve_picard(const RiccatiProblem& prob, double window, double tol,
                             std::size_t max_sweeps = 100000);

struct SeriesSolution {
  RiccatiSolution solution;
  std::vector<GridFunction> terms;  // K_1 .. K_{n_max}
  std::vector<double> term_norms;   // ||K_n||_sup
  bool truncated;                   // ||K_{n_max}||_sup > 1e-12
};

// K_1 = f * rho, K_n = (1/2 sum_{i=1}^{n-1} K_i K_{n-i}) * rho for any f.
std::vector<GridFunction> series_terms(const GridFunction& f, const GridMeasure& rho,
                                       std::size_t n_max);

// h = sum_{n <= n_max} K_n. Refuses ||f||_sup > 1/2.
SeriesSolution solve_series(const RiccatiProblem& prob, std::size_t n_max);

// K = F + (K^2/2) * rho. With F = f * rho this is the same discrete equation
// as solve_marching.
GridFunction solve_dough(const GridFunction& F, const GridMeasure& rho);

// Coefficients of h[f0 + e g] in powers of e: K'_0 = h[f0],
// K'_1 = (g + K'_0 K'_1) * rho, K'_n = (1/2 sum_{i=0}^{n} K'_i K'_{n-i}) * rho.
// Refuses ||f0|| + ||g|| > 1/2 and ||K'_0|| >= 1.
std::vector<GridFunction> solve_perturbation_system(const GridFunction& f0,
                                                    const GridFunction& g,
                                                    const GridMeasure& rho,
                                                    std::size_t n_max);

struct BoundsCertificate {
  bool passed;
  std::optional<std::size_t> first_violation;
  double lower = 0.0;  // envelope at the first violation
  double upper = 0.0;
  std::string message;
};

// Envelope -||f^-||_{[0,t]} <= h(t) <= 1 - sqrt(1 - 2 ||f^+||_{[0,t]}). The
// upper bound is only checked while ||f^+||_{[0,t]} <= 1/2.
BoundsCertificate check_bounds(const RiccatiSolution& sol, const RiccatiProblem& prob,
                               double slack = 1e-12);

struct ComparisonCertificate {
  bool applicable;  // f1 <= f2 and h1 + h2 >= 0 everywhere
  bool passed;
  std::optional<std::size_t> first_violation;
  std::string message;
};

// Given f1 <= f2 and h1 + h2 >= 0, checks h1 <= h2 pointwise.
ComparisonCertificate check_comparison(const RiccatiSolution& sol1,
                                       const RiccatiProblem& prob1,
                                       const RiccatiSolution& sol2,
                                       const RiccatiProblem& prob2, double slack = 1e-12);

struct StabilityGap {
  double lhs;    // int_0^T ||h2 - h1||_{[0,t]} dt
  double rhs_f;  // int_0^T ||f2 - f1||_{[0,t]} dt
  double rhs_F;  // same with F_i = f_i * rho
  double M;      // max(||h1||, ||h2||)
  double lambda0;
  double C;  // 2 exp(lambda0 T)
};

// Smallest lambda >= 0 with M * int_0^T e^{-lambda u} rho(du) <= 1/2.
double stability_lambda0(const GridMeasure& rho, double M);

StabilityGap stability_gap(const RiccatiProblem& prob1, const RiccatiProblem& prob2);

// GridFunction values plus {method, residual, tolerance, n_terms?, warnings}.
nlohmann::json to_json(const RiccatiSolution& sol);

}  // namespace feller
