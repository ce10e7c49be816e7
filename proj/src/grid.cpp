#include "feller/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <string>

#include "feller/errors.hpp"

namespace feller {

namespace {

// FFTW's planner is not re-entrant; execution with fresh arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::size_t nonzeros(std::span<const double> v, std::size_t limit) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size() && i < limit; ++i) n += v[i] != 0.0;
  return n;
}

std::vector<double> direct_convolve(std::span<const double> a,
                                    std::span<const double> b,
                                    std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < a.size() && i < out_len; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const std::size_t jmax = std::min(b.size(), out_len - i);
    double* dst = out.data() + i;
    for (std::size_t j = 0; j < jmax; ++j) dst[j] += ai * b[j];
  }
  return out;
}

std::vector<double> fft_convolve(std::span<const double> a,
                                 std::span<const double> b,
                                 std::size_t out_len) {
  const std::size_t na = std::min(a.size(), out_len);
  const std::size_t nb = std::min(b.size(), out_len);
  if (na == 0 || nb == 0) return std::vector<double>(out_len, 0.0);
  const std::size_t n = next_pow2(na + nb - 1);
  const std::size_t nc = n / 2 + 1;

  double* ra = fftw_alloc_real(n);
  double* rb = fftw_alloc_real(n);
  fftw_complex* ca = fftw_alloc_complex(nc);
  fftw_complex* cb = fftw_alloc_complex(nc);
  std::fill(ra, ra + n, 0.0);
  std::fill(rb, rb + n, 0.0);
  std::copy_n(a.begin(), na, ra);
  std::copy_n(b.begin(), nb, rb);

  fftw_plan fwd_a, fwd_b, inv;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    const int len = static_cast<int>(n);
    fwd_a = fftw_plan_dft_r2c_1d(len, ra, ca, FFTW_ESTIMATE);
    fwd_b = fftw_plan_dft_r2c_1d(len, rb, cb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(len, ca, ra, FFTW_ESTIMATE);
  }
  fftw_execute(fwd_a);
  fftw_execute(fwd_b);
  for (std::size_t k = 0; k < nc; ++k) {
    const double re = ca[k][0] * cb[k][0] - ca[k][1] * cb[k][1];
    const double im = ca[k][0] * cb[k][1] + ca[k][1] * cb[k][0];
    ca[k][0] = re;
    ca[k][1] = im;
  }
  fftw_execute(inv);

  std::vector<double> out(out_len, 0.0);
  const double scale = 1.0 / static_cast<double>(n);
  const std::size_t keep = std::min(out_len, na + nb - 1);
  for (std::size_t k = 0; k < keep; ++k) out[k] = ra[k] * scale;
  // Roundoff can leave tiny negatives where the exact result of two
  // nonnegative operands is zero.
  const auto nonneg = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; });
  };
  if (nonneg(a.first(na)) && nonneg(b.first(nb))) {
    for (double& x : out) x = std::max(x, 0.0);
  }

  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_a);
    fftw_destroy_plan(fwd_b);
    fftw_destroy_plan(inv);
  }
  fftw_free(ra);
  fftw_free(rb);
  fftw_free(ca);
  fftw_free(cb);
  return out;
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ValidationError(std::string(what) + ": non-finite value");
    }
  }
}

}  // namespace

Grid::Grid(double horizon, double dt) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ValidationError("grid horizon must be positive and finite");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError("grid step must be positive and finite");
  }
  const double ratio = horizon / dt;
  const double n = std::round(ratio);
  if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, n)) {
    throw ValidationError("grid step " + std::to_string(dt) +
                          " does not divide horizon " +
                          std::to_string(horizon));
  }
  if (n > 1e9) throw ValidationError("grid has too many cells");
  horizon_ = horizon;
  n_cells_ = static_cast<std::size_t>(n);
  dt_ = horizon / n;
}

Grid Grid::with_cells(double horizon, std::size_t n_cells) {
  if (n_cells == 0) throw ValidationError("grid needs at least one cell");
  return Grid(horizon, horizon / static_cast<double>(n_cells));
}

std::size_t Grid::cell_of(double t) const {
  if (!(t > 0.0)) return 0;
  if (t > horizon_) return n_cells_ + 1;
  auto k = static_cast<std::size_t>(std::ceil(t / dt_));
  k = std::clamp<std::size_t>(k, 1, n_cells_);
  while (k > 1 && time(k - 1) >= t) --k;
  while (k < n_cells_ && time(k) < t) ++k;
  return k;
}

std::size_t Grid::floor_index(double t) const {
  if (!(t > 0.0)) return 0;
  if (t >= horizon_) return n_cells_;
  auto k = static_cast<std::size_t>(std::floor(t / dt_));
  k = std::min(k, n_cells_);
  while (k > 0 && time(k) > t) --k;
  while (k < n_cells_ && time(k + 1) <= t) ++k;
  return k;
}

GridFunction::GridFunction(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw ValidationError("grid function length " +
                          std::to_string(values_.size()) +
                          " does not match grid size " +
                          std::to_string(grid_.size()));
  }
  require_finite(values_, "grid function");
}

GridFunction GridFunction::constant(const Grid& grid, double c) {
  return GridFunction(grid, std::vector<double>(grid.size(), c));
}

GridFunction GridFunction::from(const Grid& grid,
                                const std::function<double(double)>& fn) {
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(grid.time(k));
  return GridFunction(grid, std::move(v));
}

GridMeasure::GridMeasure(Grid grid, double atom_at_zero,
                         std::vector<double> cell_mass, bool is_signed,
                         double tail_mass)
    : grid_(grid), signed_(is_signed), tail_mass_(tail_mass) {
  if (cell_mass.size() != grid_.n_cells()) {
    throw ValidationError("cell mass length " +
                          std::to_string(cell_mass.size()) +
                          " does not match cell count " +
                          std::to_string(grid_.n_cells()));
  }
  lattice_.reserve(grid_.size());
  lattice_.push_back(atom_at_zero);
  lattice_.insert(lattice_.end(), cell_mass.begin(), cell_mass.end());
  require_finite(lattice_, "grid measure");
  if (!std::isfinite(tail_mass_)) {
    throw ValidationError("grid measure: non-finite tail mass");
  }
  if (!signed_) {
    for (double m : lattice_) {
      if (m < 0.0) throw ValidationError("unsigned grid measure has negative mass");
    }
    if (tail_mass_ < 0.0) throw ValidationError("negative tail mass");
  }
}

GridMeasure GridMeasure::from_lattice(Grid grid, std::vector<double> lattice,
                                      bool is_signed, double tail_mass) {
  if (lattice.size() != grid.size()) {
    throw ValidationError("lattice length does not match grid size");
  }
  const double atom = lattice[0];
  std::vector<double> cells(lattice.begin() + 1, lattice.end());
  return GridMeasure(grid, atom, std::move(cells), is_signed, tail_mass);
}

GridMeasure GridMeasure::zero(const Grid& grid) {
  return GridMeasure(grid, 0.0, std::vector<double>(grid.n_cells(), 0.0));
}

GridMeasure GridMeasure::dirac(const Grid& grid, double t) {
  std::vector<double> lattice(grid.size(), 0.0);
  const std::size_t k = grid.cell_of(t);
  double tail = 0.0;
  if (k > grid.n_cells()) {
    tail = 1.0;
  } else {
    lattice[k] = 1.0;
  }
  return from_lattice(grid, std::move(lattice), false, tail);
}

GridMeasure GridMeasure::lebesgue(const Grid& grid, double intensity) {
  if (!(intensity >= 0.0)) {
    throw ValidationError("Lebesgue intensity must be nonnegative");
  }
  return GridMeasure(grid, 0.0,
                     std::vector<double>(grid.n_cells(), intensity * grid.dt()));
}

double GridMeasure::total_mass() const {
  double s = 0.0;
  for (double m : lattice_) s += m;
  return s;
}

double GridMeasure::cdf_at(std::size_t k) const {
  double s = 0.0;
  const std::size_t last = std::min(k, lattice_.size() - 1);
  for (std::size_t j = 0; j <= last; ++j) s += lattice_[j];
  return s;
}

std::vector<double> causal_convolve(std::span<const double> a,
                                    std::span<const double> b,
                                    std::size_t out_len,
                                    ConvolutionMethod method) {
  if (method == ConvolutionMethod::kAuto) {
    const std::size_t shorter = std::min({a.size(), b.size(), out_len});
    // Sparse operands (Dirac-like kernels) are cheaper and exact directly.
    const std::size_t nnz_a = nonzeros(a, out_len);
    const std::size_t nnz_b = nonzeros(b, out_len);
    const double fft_cost = 2.0 * std::log2(static_cast<double>(out_len) + 1.0) + 16.0;
    if (static_cast<double>(std::min(nnz_a, nnz_b)) <= fft_cost) {
      return nnz_a <= nnz_b ? direct_convolve(a, b, out_len)
                            : direct_convolve(b, a, out_len);
    }
    method = shorter > 96 ? ConvolutionMethod::kFft : ConvolutionMethod::kDirect;
  }
  return method == ConvolutionMethod::kFft ? fft_convolve(a, b, out_len)
                                           : direct_convolve(a, b, out_len);
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) {
    throw GridMismatch(std::string(what) +
                       ": incompatible discretizations (horizon/dt differ)");
  }
}

GridFunction convolve(const GridFunction& f, const GridMeasure& mu,
                      ConvolutionMethod method) {
  require_same_grid(f.grid(), mu.grid(), "convolve(function, measure)");
  return GridFunction(f.grid(), causal_convolve(f.values(), mu.lattice(),
                                                f.size(), method));
}

GridMeasure convolve(const GridMeasure& mu, const GridMeasure& nu,
                     ConvolutionMethod method) {
  require_same_grid(mu.grid(), nu.grid(), "convolve(measure, measure)");
  auto lattice =
      causal_convolve(mu.lattice(), nu.lattice(), mu.grid().size(), method);
  const bool is_signed = mu.is_signed() || nu.is_signed();
  if (!is_signed) {
    // FFT round-off can leave tiny negative values where the exact result is 0.
    for (double& m : lattice) m = std::max(m, 0.0);
  }
  double kept = 0.0;
  for (double m : lattice) kept += m;
  const double full = (mu.total_mass() + mu.tail_mass()) *
                      (nu.total_mass() + nu.tail_mass());
  double tail = full - kept;
  if (!is_signed) tail = std::max(tail, 0.0);
  return GridMeasure::from_lattice(mu.grid(), std::move(lattice), is_signed,
                                   tail);
}

double wasserstein1_truncated(const GridMeasure& nu1, const GridMeasure& nu2,
                              double t_cut) {
  require_same_grid(nu1.grid(), nu2.grid(), "wasserstein1_truncated");
  if (nu1.is_signed() || nu2.is_signed()) {
    throw ValidationError("wasserstein1_truncated requires nonnegative measures");
  }
  const Grid& g = nu1.grid();
  if (!(t_cut >= 0.0) || t_cut > g.horizon() * (1.0 + 1e-12)) {
    throw ValidationError("t_cut must lie in [0, horizon]");
  }
  auto l1 = nu1.lattice();
  auto l2 = nu2.lattice();
  double f1 = 0.0, f2 = 0.0, w = 0.0;
  for (std::size_t k = 0; k < g.n_cells(); ++k) {
    f1 += l1[k];
    f2 += l2[k];
    const double lo = g.time(k);
    if (lo >= t_cut) break;
    const double width = std::min(g.time(k + 1), t_cut) - lo;
    w += std::abs(f1 - f2) * width;
  }
  return w;
}

double sup_norm(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

VariationNorms variation_norms(const GridFunction& f) {
  VariationNorms out{sup_norm(f.values()), 0.0};
  for (std::size_t k = 1; k < f.size(); ++k) {
    out.bv_norm += std::abs(f[k] - f[k - 1]);
  }
  return out;
}

double l1_norm(const GridFunction& f) {
  double s = 0.0;
  for (double v : f.values()) s += std::abs(v);
  return s * f.grid().dt();
}

}  // namespace feller
