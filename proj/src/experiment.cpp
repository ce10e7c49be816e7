#include "feller/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "feller/analytics.hpp"
#include "feller/errors.hpp"

namespace feller {

namespace {

std::optional<double> common_ml_alpha(std::span<const KernelSpec> period) {
  std::optional<double> alpha;
  for (const auto& spec : period) {
    const auto* ml = std::get_if<MittagLeffler>(&spec);
    if (ml == nullptr || ml->alpha >= 1.0) return std::nullopt;
    if (alpha && *alpha != ml->alpha) return std::nullopt;
    alpha = ml->alpha;
  }
  return alpha;
}

std::optional<double> finite_mean(const KernelSpec& spec) {
  if (const auto* e = std::get_if<Exponential>(&spec)) return 1.0 / e->rate;
  if (const auto* d = std::get_if<Deterministic>(&spec)) return d->location;
  if (const auto* m = std::get_if<MittagLeffler>(&spec)) {
    if (m->alpha == 1.0) return m->scale;
    return std::nullopt;
  }
  if (const auto* p = std::get_if<Pareto>(&spec)) {
    if (p->tail_index <= 1.0) return std::nullopt;
    return p->tail_index * p->x_min / (p->tail_index - 1.0);
  }
  if (const auto* e = std::get_if<Empirical>(&spec)) {
    if (e->measure.tail_mass() != 0.0) return std::nullopt;
    const auto lat = e->measure.lattice();
    double m = 0.0, total = 0.0;
    for (std::size_t k = 0; k < lat.size(); ++k) {
      m += e->measure.grid().time(k) * lat[k];
      total += lat[k];
    }
    return m / total;
  }
  return std::nullopt;
}

}  // namespace

double natural_scale(std::span<const KernelSpec> period, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("eps must lie in (0, 1)");
  if (period.empty()) throw ValidationError("kernel period must not be empty");
  if (const auto alpha = common_ml_alpha(period)) return std::pow(eps, -1.0 / *alpha);
  return 1.0 / eps;
}

KernelFamily scaled_family(std::span<const KernelSpec> period, double n) {
  if (period.empty()) throw ValidationError("kernel period must not be empty");
  if (period.size() == 1) return KernelFamily(RowConstant{scale_spec(period[0], n)});
  std::vector<KernelSpec> specs;
  specs.reserve(period.size());
  for (const auto& spec : period) specs.push_back(scale_spec(spec, n));
  return KernelFamily(Periodic{std::move(specs)});
}

PrelimitModel natural_model(std::span<const KernelSpec> period, const GridMeasure& mu, double eps) {
  const double n = natural_scale(period, eps);
  std::vector<double> lat(mu.lattice().begin(), mu.lattice().end());
  for (double& x : lat) x /= eps;
  return PrelimitModel{eps, n,
                       HawkesParams{1.0 - eps, scaled_family(period, n),
                                    GridMeasure::from_lattice(mu.grid(), std::move(lat))}};
}

std::optional<KernelSpec> natural_limit_kernel(std::span<const KernelSpec> period) {
  if (period.empty()) return std::nullopt;
  if (const auto alpha = common_ml_alpha(period)) {
    double s = 0.0;
    for (const auto& spec : period) s += std::pow(std::get<MittagLeffler>(spec).scale, *alpha);
    s /= static_cast<double>(period.size());
    return MittagLeffler{*alpha, std::pow(s, 1.0 / *alpha)};
  }
  double mean = 0.0;
  for (const auto& spec : period) {
    const auto m = finite_mean(spec);
    if (!m || !(*m > 0.0)) return std::nullopt;
    mean += *m;
  }
  mean /= static_cast<double>(period.size());
  return Exponential{1.0 / mean};
}

GridMeasure prelimit_kernel_proxy(const PrelimitModel& model, const Grid& grid) {
  const auto mix = geometric_mixture(model.params.a, model.params.family, 0, grid);
  std::vector<double> lat(mix.rho.lattice().begin(), mix.rho.lattice().end());
  const double atom = lat[0];
  lat[0] = 0.0;
  for (double& x : lat) x /= 1.0 - atom;
  return GridMeasure::from_lattice(grid, std::move(lat));
}

std::size_t count_until(const PointSample& sample, double t) {
  std::size_t c = 0;
  for (const auto& p : sample.points) c += p.time <= t;
  return c;
}

SampleStats sample_stats(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw ValidationError("sample_stats needs at least two values");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  const double var = m2 / static_cast<double>(n - 1);
  m2 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  return SampleStats{mean, var, std::sqrt(var / static_cast<double>(n)),
                     std::sqrt(std::max(m4 - m2 * m2, 0.0) / static_cast<double>(n))};
}

std::vector<std::vector<double>> simulate_functionals(const PrelimitModel& model,
                                                      const GridFunction& f,
                                                      std::span<const double> t_list,
                                                      std::size_t reps, std::uint64_t seed,
                                                      std::uint64_t stream_base,
                                                      std::size_t threads) {
  const HawkesSimulator sim(model.params);
  std::vector<std::vector<double>> rows(reps, std::vector<double>(t_list.size()));
  for_each_replication(sim, reps, seed, stream_base, threads,
                       [&](std::size_t r, const PointSample& sample) {
                         for (std::size_t j = 0; j < t_list.size(); ++j) {
                           rows[r][j] = scaled_functional(sample, model.eps, f, t_list[j]);
                         }
                       });
  return rows;
}

std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t j) {
  std::vector<double> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r].at(j);
  return out;
}

}  // namespace feller
