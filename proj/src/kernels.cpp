#include "feller/kernels.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "feller/errors.hpp"
#include "feller/mittag_leffler.hpp"

namespace feller {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_lattice_law(const GridMeasure& m, const char* what) {
  if (m.is_signed()) throw ValidationError(std::string(what) + " must be unsigned");
  for (double v : m.lattice()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(what) + " has a negative or non-finite mass");
    }
  }
  if (m.atom_at_zero() != 0.0) {
    throw ValidationError(std::string(what) + " must not charge 0");
  }
  if (m.tail_mass() != 0.0) {
    throw ValidationError(std::string(what) + " must lie inside its grid");
  }
}

// Lattice index of the largest point j dt <= t (inclusive) or < t.
std::ptrdiff_t last_index(double t, double dt, bool inclusive) {
  if (t < 0.0) return -1;
  const double x = t / dt;
  auto j = static_cast<std::ptrdiff_t>(std::floor(x + 1e-9));
  if (!inclusive && std::fabs(x - static_cast<double>(j)) <= 1e-9) --j;
  return j;
}

// P(X <= t) (or P(X < t)) for each t, by the geometric-compound series
//   law = sum_k (1-q) q^k Gamma(k+1, r) * nu1^{*k},
// q = c / (1 + c), r = (1 + c) / L, nu1 = nu / c. With L = 0 the Gamma
// factor is a point mass at 0.
std::vector<double> gid_cdf(const GidTriplet& g, const std::vector<double>& ts,
                            bool inclusive) {
  const double c = g.jumps.total_mass();
  const double L = g.drift;
  std::vector<double> out(ts.size(), 0.0);
  if (c == 0.0) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      out[i] = ts[i] <= 0.0 ? 0.0 : -std::expm1(-ts[i] / L);
    }
    return out;
  }
  const double dtn = g.jumps.grid().dt();
  const double q = c / (1.0 + c);
  const double r = L > 0.0 ? (1.0 + c) / L : 0.0;
  double t_max = 0.0;
  for (double t : ts) t_max = std::max(t_max, t);
  const std::size_t len = static_cast<std::size_t>(
      std::max<std::ptrdiff_t>(last_index(t_max, dtn, true), 0)) + 1;

  std::vector<double> nu1(len, 0.0);
  auto nl = g.jumps.lattice();
  for (std::size_t j = 0; j < std::min(len, nl.size()); ++j) nu1[j] = nl[j] / c;

  std::vector<double> power(len, 0.0);
  power[0] = 1.0;
  double w = 1.0 - q;
  for (std::size_t k = 0; k < 100000; ++k) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::ptrdiff_t jmax = last_index(ts[i], dtn, L > 0.0 || inclusive);
      double acc = 0.0;
      for (std::ptrdiff_t j = 0; j <= jmax && j < static_cast<std::ptrdiff_t>(len); ++j) {
        const double pj = power[j];
        if (pj == 0.0) continue;
        if (L > 0.0) {
          const double x = ts[i] - static_cast<double>(j) * dtn;
          if (x > 0.0) acc += pj * boost::math::gamma_p(static_cast<double>(k + 1), r * x);
        } else {
          acc += pj;
        }
      }
      out[i] += w * acc;
    }
    power = causal_convolve(power, nu1, len);
    double in_range = 0.0;
    for (double v : power) in_range += v;
    w *= q;
    if (w * in_range < 1e-17 || w < 1e-300) break;
  }
  return out;
}

double gid_cdf_at(const GidTriplet& g, double t, bool inclusive) {
  return gid_cdf(g, {t}, inclusive)[0];
}

GridMeasure from_cdf(const Grid& grid, const std::function<double(double)>& F) {
  std::vector<double> lattice(grid.size(), 0.0);
  double prev = F(0.0);
  lattice[0] = prev;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double cur = F(grid.time(k));
    lattice[k] = std::max(cur - prev, 0.0);
    prev = cur;
  }
  const double tail = std::max(1.0 - prev, 0.0);
  return GridMeasure::from_lattice(grid, std::move(lattice), false, tail);
}

// Exact lattice route for a GID law whose jumps share the target spacing.
GridMeasure discretize_gid_same_lattice(const GidTriplet& g, const Grid& grid) {
  const double c = g.jumps.total_mass();
  const double L = g.drift;
  const std::size_t len = grid.size();
  std::vector<double> nu1(len, 0.0);
  auto nl = g.jumps.lattice();
  for (std::size_t j = 0; j < std::min(len, nl.size()); ++j) nu1[j] = nl[j] / c;

  const double q = c / (1.0 + c);
  const double r = L > 0.0 ? (1.0 + c) / L : 0.0;
  std::vector<double> power(len, 0.0);
  power[0] = 1.0;
  std::vector<double> acc(len, 0.0);
  std::vector<double> cells(len, 0.0);
  double w = 1.0 - q;
  for (std::size_t k = 0; k < 100000; ++k) {
    if (L > 0.0) {
      // Gamma(k+1, r) cell increments, placed at right endpoints.
      const double shape = static_cast<double>(k + 1);
      double prev = 0.0;
      cells[0] = 0.0;
      for (std::size_t i = 1; i < len; ++i) {
        const double x = r * grid.time(i);
        const double cur = boost::math::gamma_p(shape, x);
        cells[i] = cur - prev;
        prev = cur;
      }
      auto term = causal_convolve(power, cells, len);
      for (std::size_t i = 0; i < len; ++i) acc[i] += w * term[i];
    } else {
      for (std::size_t i = 0; i < len; ++i) acc[i] += w * power[i];
    }
    power = causal_convolve(power, nu1, len);
    double in_range = 0.0;
    for (double v : power) in_range += v;
    w *= q;
    if (w * in_range < 1e-17 || w < 1e-300) break;
  }
  double total = 0.0;
  for (double& v : acc) {
    v = std::max(v, 0.0);
    total += v;
  }
  return GridMeasure::from_lattice(grid, std::move(acc), false,
                                   std::max(1.0 - total, 0.0));
}

double lattice_tail(const GridMeasure& m, double t) {
  double s = 0.0;
  auto lat = m.lattice();
  for (std::size_t k = 0; k < lat.size(); ++k) {
    if (m.grid().time(k) >= t) s += lat[k];
  }
  return s;
}

GridMeasure rescale_grid(const GridMeasure& m, double n) {
  const Grid g = Grid::with_cells(m.grid().horizon() / n, m.grid().n_cells());
  return GridMeasure::from_lattice(
      g, std::vector<double>(m.lattice().begin(), m.lattice().end()),
      m.is_signed(), m.tail_mass());
}

}  // namespace

void validate(const KernelSpec& spec) {
  std::visit(
      Overloaded{
          [](const Exponential& e) {
            if (!(e.rate > 0.0) || !std::isfinite(e.rate)) {
              throw ValidationError("exponential rate must be > 0");
            }
          },
          [](const MittagLeffler& m) {
            if (!(m.alpha > 0.0 && m.alpha <= 1.0)) {
              throw ValidationError("Mittag-Leffler alpha must lie in (0, 1]");
            }
            if (!(m.scale > 0.0) || !std::isfinite(m.scale)) {
              throw ValidationError("Mittag-Leffler scale must be > 0");
            }
          },
          [](const GidTriplet& g) {
            if (!(g.drift >= 0.0) || !std::isfinite(g.drift)) {
              throw ValidationError("GID drift must be >= 0");
            }
            check_lattice_law(g.jumps, "GID jump measure");
            const double c = g.jumps.total_mass();
            if (!std::isfinite(c)) throw ValidationError("GID jump mass must be finite");
            if (g.drift == 0.0 && c == 0.0) {
              throw ValidationError("GID triplet with L = 0 and nu = 0 is a point mass at 0");
            }
          },
          [](const Deterministic& d) {
            if (!(d.location > 0.0) || !std::isfinite(d.location)) {
              throw ValidationError("deterministic location must be > 0");
            }
          },
          [](const Empirical& e) {
            check_lattice_law(e.measure, "empirical kernel");
            if (std::fabs(e.measure.total_mass() - 1.0) > 1e-12) {
              throw ValidationError("empirical kernel must have total mass 1");
            }
          },
          [](const Pareto& p) {
            if (!(p.tail_index > 0.0) || !(p.x_min > 0.0)) {
              throw ValidationError("Pareto needs tail_index > 0 and x_min > 0");
            }
          }},
      spec);
}

std::string describe(const KernelSpec& spec) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const Exponential& e) { os << "Exponential(rate=" << e.rate << ")"; },
                 [&](const MittagLeffler& m) {
                   os << "MittagLeffler(alpha=" << m.alpha << ", scale=" << m.scale << ")";
                 },
                 [&](const GidTriplet& g) {
                   os << "GID(L=" << g.drift << ", |nu|=" << g.jumps.total_mass() << ")";
                 },
                 [&](const Deterministic& d) { os << "Deterministic(" << d.location << ")"; },
                 [&](const Empirical& e) {
                   os << "Empirical(" << e.measure.grid().n_cells() << " cells)";
                 },
                 [&](const Pareto& p) {
                   os << "Pareto(alpha=" << p.tail_index << ", x_min=" << p.x_min << ")";
                 }},
             spec);
  return os.str();
}

double cdf(const KernelSpec& spec, double t) {
  if (t < 0.0) return 0.0;
  return std::visit(
      Overloaded{
          [&](const Exponential& e) { return -std::expm1(-e.rate * t); },
          [&](const MittagLeffler& m) { return mittag_leffler_cdf(m.alpha, t / m.scale); },
          [&](const GidTriplet& g) { return gid_cdf_at(g, t, true); },
          [&](const Deterministic& d) { return t >= d.location ? 1.0 : 0.0; },
          [&](const Empirical& e) {
            double s = 0.0;
            auto lat = e.measure.lattice();
            for (std::size_t k = 0; k < lat.size(); ++k) {
              if (e.measure.grid().time(k) <= t) s += lat[k];
            }
            return s;
          },
          [&](const Pareto& p) {
            return t <= p.x_min ? 0.0 : 1.0 - std::pow(t / p.x_min, -p.tail_index);
          }},
      spec);
}

double tail(const KernelSpec& spec, double t) {
  if (t <= 0.0) {
    // Every law lives on [0, inf); only a GID atom at zero is excluded by t > 0.
    return 1.0;
  }
  return std::visit(
      Overloaded{
          [&](const Exponential& e) { return std::exp(-e.rate * t); },
          [&](const MittagLeffler& m) {
            return mittag_leffler_survival(m.alpha, t / m.scale);
          },
          [&](const GidTriplet& g) { return 1.0 - gid_cdf_at(g, t, false); },
          [&](const Deterministic& d) { return d.location >= t ? 1.0 : 0.0; },
          [&](const Empirical& e) { return lattice_tail(e.measure, t); },
          [&](const Pareto& p) {
            return t <= p.x_min ? 1.0 : std::pow(t / p.x_min, -p.tail_index);
          }},
      spec);
}

KernelSpec scale_spec(const KernelSpec& spec, double n) {
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw ValidationError("kernel scaling factor must be > 0");
  }
  return std::visit(
      Overloaded{
          [&](const Exponential& e) -> KernelSpec { return Exponential{e.rate * n}; },
          [&](const MittagLeffler& m) -> KernelSpec {
            return MittagLeffler{m.alpha, m.scale / n};
          },
          [&](const GidTriplet& g) -> KernelSpec {
            return GidTriplet{g.drift / n, rescale_grid(g.jumps, n)};
          },
          [&](const Deterministic& d) -> KernelSpec {
            return Deterministic{d.location / n};
          },
          [&](const Empirical& e) -> KernelSpec {
            return Empirical{rescale_grid(e.measure, n)};
          },
          [&](const Pareto& p) -> KernelSpec { return Pareto{p.tail_index, p.x_min / n}; }},
      spec);
}

GridMeasure discretize_kernel(const KernelSpec& spec, const Grid& grid) {
  validate(spec);
  return std::visit(
      Overloaded{
          [&](const Exponential& e) {
            std::vector<double> cells(grid.n_cells());
            for (std::size_t k = 1; k <= grid.n_cells(); ++k) {
              const double t0 = grid.time(k - 1);
              const double t1 = grid.time(k);
              cells[k - 1] = std::exp(-e.rate * t0) * -std::expm1(-e.rate * (t1 - t0));
            }
            return GridMeasure(grid, 0.0, std::move(cells), false,
                               std::exp(-e.rate * grid.horizon()));
          },
          [&](const MittagLeffler& m) {
            return from_cdf(grid, [&](double t) {
              return t <= 0.0 ? 0.0 : mittag_leffler_cdf(m.alpha, t / m.scale);
            });
          },
          [&](const GidTriplet& g) {
            if (g.jumps.total_mass() > 0.0 &&
                std::fabs(g.jumps.grid().dt() - grid.dt()) <= 1e-12 * grid.dt()) {
              return discretize_gid_same_lattice(g, grid);
            }
            std::vector<double> ts(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k) ts[k] = grid.time(k);
            const auto F = gid_cdf(g, ts, true);
            std::vector<double> lattice(grid.size());
            lattice[0] = F[0];
            for (std::size_t k = 1; k < grid.size(); ++k) {
              lattice[k] = std::max(F[k] - F[k - 1], 0.0);
            }
            return GridMeasure::from_lattice(grid, std::move(lattice), false,
                                             std::max(1.0 - F.back(), 0.0));
          },
          [&](const Deterministic& d) { return GridMeasure::dirac(grid, d.location); },
          [&](const Empirical& e) {
            std::vector<double> lattice(grid.size(), 0.0);
            double tail_mass = 0.0;
            auto lat = e.measure.lattice();
            for (std::size_t k = 0; k < lat.size(); ++k) {
              if (lat[k] == 0.0) continue;
              const std::size_t cell = grid.cell_of(e.measure.grid().time(k));
              if (cell > grid.n_cells()) {
                tail_mass += lat[k];
              } else {
                lattice[cell] += lat[k];
              }
            }
            return GridMeasure::from_lattice(grid, std::move(lattice), false, tail_mass);
          },
          [&](const Pareto& p) {
            return from_cdf(grid, [&](double t) { return cdf(p, t); });
          }},
      spec);
}

std::optional<DensityKernel> density_kernel(const KernelSpec& spec) {
  if (const auto* e = std::get_if<Exponential>(&spec)) {
    const double r = e->rate;
    return DensityKernel{[r](double t) { return t < 0.0 ? 0.0 : r * std::exp(-r * t); },
                         [r](double t) { return t <= 0.0 ? 0.0 : -std::expm1(-r * t); },
                         0.0};
  }
  if (const auto* m = std::get_if<MittagLeffler>(&spec)) {
    const double a = m->alpha;
    const double s = m->scale;
    return DensityKernel{
        [a, s](double t) { return t <= 0.0 ? 0.0 : mittag_leffler_density(a, t / s) / s; },
        [a, s](double t) { return t <= 0.0 ? 0.0 : mittag_leffler_cdf(a, t / s); },
        a - 1.0};
  }
  return std::nullopt;
}

double sample_positive_stable(double alpha, Rng& rng) {
  if (alpha == 1.0) return 1.0;
  const double u = std::numbers::pi * uniform_open(rng);
  const double e = standard_exponential(rng);
  const double a = std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha);
  const double b = std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
  return a * b;
}

KernelSampler::KernelSampler(const KernelSpec& spec) : spec_(spec) {
  validate(spec_);
  const GridMeasure* lattice_law = nullptr;
  if (const auto* g = std::get_if<GidTriplet>(&spec_)) {
    jump_rate_ = g->jumps.total_mass();
    lattice_law = &g->jumps;
  } else if (const auto* e = std::get_if<Empirical>(&spec_)) {
    lattice_law = &e->measure;
  }
  if (lattice_law != nullptr) {
    auto lat = lattice_law->lattice();
    double run = 0.0;
    for (std::size_t k = 0; k < lat.size(); ++k) {
      if (lat[k] <= 0.0) continue;
      run += lat[k];
      cumulative_.push_back(run);
      support_.push_back(lattice_law->grid().time(k));
    }
  }
}

double KernelSampler::sample_lattice(Rng& rng) const {
  const double u = uniform_open(rng) * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return support_[static_cast<std::size_t>(it - cumulative_.begin())];
}

double KernelSampler::operator()(Rng& rng) const {
  return std::visit(
      Overloaded{
          [&](const Exponential& e) { return standard_exponential(rng) / e.rate; },
          [&](const MittagLeffler& m) {
            const double e = standard_exponential(rng);
            if (m.alpha == 1.0) return m.scale * e;
            const double s = sample_positive_stable(m.alpha, rng);
            return m.scale * std::pow(e, 1.0 / m.alpha) * s;
          },
          [&](const GidTriplet& g) {
            const double tau = standard_exponential(rng);
            double x = g.drift * tau;
            if (jump_rate_ > 0.0) {
              std::poisson_distribution<long> jumps(jump_rate_ * tau);
              const long count = jumps(rng);
              for (long i = 0; i < count; ++i) x += sample_lattice(rng);
            }
            return x;
          },
          [&](const Deterministic& d) { return d.location; },
          [&](const Empirical&) { return sample_lattice(rng); },
          [&](const Pareto& p) {
            return p.x_min * std::pow(uniform_open(rng), -1.0 / p.tail_index);
          }},
      spec_);
}

double sample_kernel(const KernelSpec& spec, Rng& rng) {
  return KernelSampler(spec)(rng);
}

KernelFamily::KernelFamily(Mode mode) : mode_(std::move(mode)) {
  std::visit(Overloaded{
                 [&](const RowConstant& r) { resolved_.push_back(r.spec); },
                 [&](const Periodic& p) {
                   if (p.specs.empty()) {
                     throw ValidationError("periodic family needs at least one kernel");
                   }
                   resolved_ = p.specs;
                 },
                 [&](const Scaled& s) { resolved_.push_back(scale_spec(s.base, s.n)); }},
             mode_);
  for (const auto& s : resolved_) validate(s);
}

const KernelSpec& KernelFamily::generation(std::size_t m) const {
  if (m == 0) throw ValidationError("kernel generations start at 1");
  return resolved_[(m - 1) % resolved_.size()];
}

namespace {

class GenerationCache {
 public:
  GenerationCache(const KernelFamily& family, const Grid& grid)
      : family_(family), grid_(grid), cache_(family.period()) {}

  const GridMeasure& get(std::size_t m) {
    auto& slot = cache_[(m - 1) % cache_.size()];
    if (!slot) slot = discretize_kernel(family_.generation(m), grid_);
    return *slot;
  }

 private:
  const KernelFamily& family_;
  Grid grid_;
  std::vector<std::optional<GridMeasure>> cache_;
};

}  // namespace

GridMeasure convolution_power(const KernelFamily& family, std::size_t m,
                              std::size_t j, const Grid& grid) {
  GridMeasure acc = GridMeasure::dirac(grid, 0.0);
  GenerationCache cache(family, grid);
  for (std::size_t i = 1; i <= j; ++i) acc = convolve(acc, cache.get(m + i));
  return acc;
}

GeometricMixture geometric_mixture(double a, const KernelFamily& family,
                                   std::size_t m, const Grid& grid, double tol) {
  if (!(a > 0.0 && a < 1.0)) throw ValidationError("mixture weight a must lie in (0, 1)");
  if (!(tol > 0.0)) throw ValidationError("mixture tolerance must be > 0");
  GenerationCache cache(family, grid);
  std::vector<double> acc(grid.size(), 0.0);
  acc[0] = 1.0 - a;
  GridMeasure power = GridMeasure::dirac(grid, 0.0);
  // After K terms the omitted mass is at most a^{K+1}, and on [0, T] at most
  // a^{K+1} pi^{(m, m+K]}[0, T] since convolution powers only lose mass.
  double next_weight = a;
  std::size_t k = 0;
  double truncation = next_weight;
  while (truncation >= tol) {
    ++k;
    power = convolve(power, cache.get(m + k));
    const double w = (1.0 - a) * next_weight;
    auto lat = power.lattice();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * lat[i];
    next_weight *= a;
    truncation = std::min(next_weight, next_weight * power.total_mass());
  }
  double in_range = 0.0;
  for (double v : acc) in_range += v;
  GridMeasure rho = GridMeasure::from_lattice(grid, std::move(acc), false,
                                              std::max(1.0 - in_range, 0.0));
  return GeometricMixture{std::move(rho), k + 1, truncation};
}

double null_array_sup(const KernelFamily& family, double n, double eps) {
  if (!(eps > 0.0)) throw ValidationError("null-array eps must be > 0");
  return std::visit(Overloaded{
                        [&](const RowConstant& r) { return tail(r.spec, eps); },
                        [&](const Periodic& p) {
                          double s = 0.0;
                          for (const auto& spec : p.specs) s = std::max(s, tail(spec, eps));
                          return s;
                        },
                        [&](const Scaled& s) { return tail(s.base, n * eps); }},
                    family.mode());
}

std::vector<TailDiagnostic> tail_diagnostics(const KernelSpec& psi, double t_min,
                                             double t_max, std::size_t points) {
  if (!(t_min > 0.0 && t_max > t_min) || points < 2) {
    throw ValidationError("tail diagnostics need 0 < t_min < t_max and >= 2 points");
  }
  validate(psi);
  auto survival = [&](double s) { return tail(psi, s); };
  std::vector<TailDiagnostic> out;
  const double step = std::log(t_max / t_min) / static_cast<double>(points - 1);
  double integral = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double t = t_min * std::exp(step * static_cast<double>(i));
    integral += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        survival, last, t, 12, 1e-10);
    last = t;
    const double tail_t = survival(t);
    const double tail_2t = survival(2.0 * t);
    const double alpha_hat = (tail_t > 0.0 && tail_2t > 0.0)
                                 ? std::log2(tail_t / tail_2t)
                                 : std::numeric_limits<double>::infinity();
    out.push_back({t, tail_t / (integral / t), alpha_hat});
  }
  return out;
}

}  // namespace feller
