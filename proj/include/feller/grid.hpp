#pragma once

// Uniform discretization of [0, T] and the lattice measures/functions that
// live on it. A GridMeasure keeps the mass of cell (t_{k-1}, t_k] at the
// right endpoint t_k, so measures are really weighted combs on the lattice
// {0, dt, 2dt, ..., T}. Convolutions of combs stay on the lattice, which
// makes f*(mu*nu) == (f*mu)*nu hold on the grid up to rounding.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace feller {

class Grid {
 public:
  // Throws ValidationError unless dt divides horizon (relative slack 1e-9).
  Grid(double horizon, double dt);

  static Grid with_cells(double horizon, std::size_t n_cells);

  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  std::size_t n_cells() const { return n_cells_; }
  // Number of lattice points, n_cells + 1.
  std::size_t size() const { return n_cells_ + 1; }

  double time(std::size_t k) const {
    return k == n_cells_ ? horizon_ : static_cast<double>(k) * dt_;
  }

  // 0 for t <= 0, k for t in (t_{k-1}, t_k], n_cells + 1 past the horizon.
  std::size_t cell_of(double t) const;

  // Largest k with t_k <= t, clamped to [0, n_cells].
  std::size_t floor_index(double t) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  Grid(double horizon, double dt, std::size_t n_cells)
      : horizon_(horizon), dt_(dt), n_cells_(n_cells) {}

  double horizon_;
  double dt_;
  std::size_t n_cells_;
};

class GridFunction {
 public:
  // values[k] is the value at t_k; length must be grid.size(), all finite.
  GridFunction(Grid grid, std::vector<double> values);

  static GridFunction constant(const Grid& grid, double c);
  static GridFunction from(const Grid& grid,
                           const std::function<double(double)>& fn);

  const Grid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }
  std::size_t size() const { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

class GridMeasure {
 public:
  // cell_mass[k-1] is the mass of (t_{k-1}, t_k]; length grid.n_cells().
  GridMeasure(Grid grid, double atom_at_zero, std::vector<double> cell_mass,
              bool is_signed = false, double tail_mass = 0.0);

  // lattice[0] is the atom at zero, lattice[k] the mass assigned to t_k.
  static GridMeasure from_lattice(Grid grid, std::vector<double> lattice,
                                  bool is_signed = false,
                                  double tail_mass = 0.0);

  static GridMeasure zero(const Grid& grid);
  // Unit point mass at t, placed in the cell containing t.
  static GridMeasure dirac(const Grid& grid, double t);
  // Lebesgue measure times intensity.
  static GridMeasure lebesgue(const Grid& grid, double intensity = 1.0);

  const Grid& grid() const { return grid_; }
  double atom_at_zero() const { return lattice_[0]; }
  std::span<const double> cell_mass() const {
    return std::span<const double>(lattice_).subspan(1);
  }
  std::span<const double> lattice() const { return lattice_; }
  bool is_signed() const { return signed_; }
  // Mass that belongs to the measure but lies beyond the horizon.
  double tail_mass() const { return tail_mass_; }

  // atom_at_zero + sum of cell masses (mass inside [0, T]).
  double total_mass() const;
  // Mass of [0, t_k].
  double cdf_at(std::size_t k) const;

 private:
  Grid grid_;
  std::vector<double> lattice_;
  bool signed_;
  double tail_mass_;
};

enum class ConvolutionMethod { kAuto, kDirect, kFft };

// Truncated causal convolution out[k] = sum_{i+j=k} a[i] b[j] for k < out_len.
std::vector<double> causal_convolve(std::span<const double> a,
                                    std::span<const double> b,
                                    std::size_t out_len,
                                    ConvolutionMethod method =
                                        ConvolutionMethod::kAuto);

// (f*mu)(t_k) = f(t_k) mu({0}) + sum_{j=1..k} f(t_k - t_j) mu_j.
GridFunction convolve(const GridFunction& f, const GridMeasure& mu,
                      ConvolutionMethod method = ConvolutionMethod::kAuto);

// Lattice convolution truncated to [0, T]; dropped mass goes to tail_mass.
GridMeasure convolve(const GridMeasure& mu, const GridMeasure& nu,
                     ConvolutionMethod method = ConvolutionMethod::kAuto);

// Integral over [0, t_cut] of |F_1 - F_2| by the rectangle rule on cells.
double wasserstein1_truncated(const GridMeasure& nu1, const GridMeasure& nu2,
                              double t_cut);

struct VariationNorms {
  double sup_norm;
  double bv_norm;
};

VariationNorms variation_norms(const GridFunction& f);

double sup_norm(std::span<const double> values);
// Grid L1 norm: sum over all lattice points of |v_k| dt.
double l1_norm(const GridFunction& f);

void require_same_grid(const Grid& a, const Grid& b, const char* what);

}  // namespace feller
