#pragma once

// Excitation and limit kernels: probability laws on (0, inf) that can be
// discretized onto a Grid, sampled exactly, convolved and mixed.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "feller/grid.hpp"
#include "feller/random.hpp"

namespace feller {

struct Exponential {
  double rate;
};

struct MittagLeffler {
  double alpha;
  double scale = 1.0;
};

// Subordinator with drift L and finite jump measure nu, run up to an
// independent Exp(1) time. Laplace transform 1/(1 + L s + int (1-e^{-st}) nu(dt)).
// The jumps live on the lattice of nu's own grid.
struct GidTriplet {
  double drift;
  GridMeasure jumps;
};

struct Deterministic {
  double location;
};

// Probability law carried by the lattice points of a GridMeasure.
struct Empirical {
  GridMeasure measure;
};

// P(X >= t) = min(1, (t / x_min)^{-tail_index}).
struct Pareto {
  double tail_index;
  double x_min = 1.0;
};

using KernelSpec = std::variant<Exponential, MittagLeffler, GidTriplet,
                                Deterministic, Empirical, Pareto>;

// Throws ValidationError if the spec is not a probability law on (0, inf).
void validate(const KernelSpec& spec);
std::string describe(const KernelSpec& spec);

// P(X <= t).
double cdf(const KernelSpec& spec, double t);
// P(X >= t).
double tail(const KernelSpec& spec, double t);

// Law of X / n, i.e. B -> psi(n B).
KernelSpec scale_spec(const KernelSpec& spec, double n);

// Cell masses are exact CDF increments (quadrature-backed for
// Mittag-Leffler, series-backed for GID). Mass past T goes to tail_mass.
// A GID triplet with zero drift has an atom at zero, which is reported as
// atom_at_zero rather than hidden.
GridMeasure discretize_kernel(const KernelSpec& spec, const Grid& grid);

// Density bundle for kernels that have one (Exponential, MittagLeffler).
// Near zero the density behaves like t^{singular_exponent}.
struct DensityKernel {
  std::function<double(double)> density;
  std::function<double(double)> cdf;
  double singular_exponent;
};

std::optional<DensityKernel> density_kernel(const KernelSpec& spec);

class KernelSampler {
 public:
  explicit KernelSampler(const KernelSpec& spec);
  double operator()(Rng& rng) const;

 private:
  KernelSpec spec_;
  // Inverse-CDF tables for lattice laws (Empirical, GID jumps).
  std::vector<double> cumulative_;
  std::vector<double> support_;
  double jump_rate_ = 0.0;

  double sample_lattice(Rng& rng) const;
};

double sample_kernel(const KernelSpec& spec, Rng& rng);

// Positive alpha-stable variable with Laplace transform exp(-s^alpha),
// Kanter's representation. alpha = 1 returns 1.
double sample_positive_stable(double alpha, Rng& rng);

struct RowConstant {
  KernelSpec spec;
};

// Generation m uses specs[(m - 1) % d].
struct Periodic {
  std::vector<KernelSpec> specs;
};

// pi(B) = base(n B).
struct Scaled {
  KernelSpec base;
  double n;
};

class KernelFamily {
 public:
  using Mode = std::variant<RowConstant, Periodic, Scaled>;

  explicit KernelFamily(Mode mode);

  const Mode& mode() const { return mode_; }
  // Law of the lag between a generation m-1 parent and its child, m >= 1.
  const KernelSpec& generation(std::size_t m) const;
  std::size_t period() const { return resolved_.size(); }

 private:
  Mode mode_;
  std::vector<KernelSpec> resolved_;
};

// pi^{(m, m+j]}: delta_0 for j = 0, else pi^{m+1} * ... * pi^{m+j}.
GridMeasure convolution_power(const KernelFamily& family, std::size_t m,
                              std::size_t j, const Grid& grid);

struct GeometricMixture {
  GridMeasure rho;
  std::size_t terms;
  // a^{K+1}: mass of the omitted tail of the series.
  double truncation_mass;
};

// sum_k (1-a) a^k pi^{(m, m+k]}. The series stops at the first K with
// a^{K+1} < tol, or earlier once a^{K+1} * pi^{(m, m+K]}[0, T] < tol.
GeometricMixture geometric_mixture(double a, const KernelFamily& family,
                                   std::size_t m, const Grid& grid,
                                   double tol = 1e-12);

// sup_m pi^m_n[eps, inf). For Scaled families the given n replaces the
// family's own; RowConstant and Periodic ignore n.
double null_array_sup(const KernelFamily& family, double n, double eps);

// Tail-ratio diagnostics for a base law psi at large t:
//   exp_ratio   = psi[t, inf) / ((1/t) int_0^t psi[s, inf) ds), -> 0 in the
//                 exponential case;
//   alpha_hat   = log2(psi[t, inf) / psi[2t, inf)), -> alpha in the
//                 regularly varying case.
struct TailDiagnostic {
  double t;
  double exp_ratio;
  double alpha_hat;
};

std::vector<TailDiagnostic> tail_diagnostics(const KernelSpec& psi,
                                             double t_min, double t_max,
                                             std::size_t points);

}  // namespace feller
