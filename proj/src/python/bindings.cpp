#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <span>
#include <string>
#include <vector>

#include "feller/analytics.hpp"
#include "feller/errors.hpp"
#include "feller/experiment.hpp"
#include "feller/grid.hpp"
#include "feller/kernels.hpp"
#include "feller/lambert.hpp"
#include "feller/mittag_leffler.hpp"
#include "feller/random.hpp"
#include "feller/riccati.hpp"
#include "feller/simulator.hpp"

namespace py = pybind11;
using namespace feller;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(std::span<const double> v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw ValidationError("expected a one-dimensional array");
  return std::vector<double>(a.data(), a.data() + a.size());
}

py::dict solution_dict(const RiccatiSolution& sol) {
  py::dict d;
  d["h"] = to_numpy(sol.h.values());
  d["residual"] = sol.residual;
  d["tolerance"] = sol.tolerance;
  d["method"] = to_string(sol.method);
  d["n_terms"] = sol.n_terms;
  d["iterations"] = sol.iterations;
  d["warnings"] = sol.warnings;
  return d;
}

py::list functions_list(const std::vector<GridFunction>& fs) {
  py::list out;
  for (const auto& f : fs) out.append(to_numpy(f.values()));
  return out;
}

KernelFamily family_from(py::object obj) {
  if (py::isinstance<KernelFamily>(obj)) return obj.cast<KernelFamily>();
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    auto specs = obj.cast<std::vector<KernelSpec>>();
    if (specs.size() == 1) return KernelFamily(RowConstant{specs[0]});
    return KernelFamily(Periodic{std::move(specs)});
  }
  return KernelFamily(RowConstant{obj.cast<KernelSpec>()});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hawkes scaling limits: grids, kernels, simulation, Riccati solvers, analytics.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<GridMismatch>(m, "GridMismatch", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  auto refusal = py::register_exception<NumericalRefusal>(m, "NumericalRefusal", base.ptr());
  py::register_exception<BlowUpError>(m, "BlowUpError", refusal.ptr());
  py::register_exception<ClusterOverflow>(m, "ClusterOverflow", base.ptr());

  py::class_<Grid>(m, "Grid")
      .def(py::init<double, double>(), py::arg("horizon"), py::arg("dt"))
      .def_property_readonly("horizon", &Grid::horizon)
      .def_property_readonly("dt", &Grid::dt)
      .def_property_readonly("n_cells", &Grid::n_cells)
      .def("__len__", &Grid::size)
      .def("times", [](const Grid& g) {
        std::vector<double> t(g.size());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = g.time(k);
        return to_numpy(t);
      })
      .def("__repr__", [](const Grid& g) {
        return "Grid(horizon=" + std::to_string(g.horizon()) + ", dt=" + std::to_string(g.dt()) +
               ")";
      });

  py::class_<GridFunction>(m, "GridFunction")
      .def(py::init([](const Grid& g, const Array& v) { return GridFunction(g, to_vector(v)); }),
           py::arg("grid"), py::arg("values"))
      .def(py::init([](const Grid& g, const std::function<double(double)>& fn) {
             return GridFunction::from(g, fn);
           }),
           py::arg("grid"), py::arg("fn"))
      .def_static("constant", &GridFunction::constant, py::arg("grid"), py::arg("c"))
      .def_property_readonly("grid", &GridFunction::grid)
      .def_property_readonly("values", [](const GridFunction& f) { return to_numpy(f.values()); })
      .def("__len__", &GridFunction::size);

  py::class_<GridMeasure>(m, "GridMeasure")
      .def_static(
          "from_lattice",
          [](const Grid& g, const Array& lattice, bool is_signed, double tail) {
            return GridMeasure::from_lattice(g, to_vector(lattice), is_signed, tail);
          },
          py::arg("grid"), py::arg("lattice"), py::arg("is_signed") = false,
          py::arg("tail_mass") = 0.0)
      .def_static("zero", &GridMeasure::zero, py::arg("grid"))
      .def_static("dirac", &GridMeasure::dirac, py::arg("grid"), py::arg("t"))
      .def_static("lebesgue", &GridMeasure::lebesgue, py::arg("grid"), py::arg("intensity") = 1.0)
      .def_property_readonly("grid", &GridMeasure::grid)
      .def_property_readonly("lattice", [](const GridMeasure& mu) { return to_numpy(mu.lattice()); })
      .def_property_readonly("atom_at_zero", &GridMeasure::atom_at_zero)
      .def_property_readonly("tail_mass", &GridMeasure::tail_mass)
      .def_property_readonly("is_signed", &GridMeasure::is_signed)
      .def("total_mass", &GridMeasure::total_mass);

  py::enum_<ConvolutionMethod>(m, "ConvolutionMethod")
      .value("AUTO", ConvolutionMethod::kAuto)
      .value("DIRECT", ConvolutionMethod::kDirect)
      .value("FFT", ConvolutionMethod::kFft);
  m.def("convolve", py::overload_cast<const GridFunction&, const GridMeasure&, ConvolutionMethod>(
                        &feller::convolve),
        py::arg("f"), py::arg("mu"), py::arg("method") = ConvolutionMethod::kAuto);
  m.def("convolve_measures",
        py::overload_cast<const GridMeasure&, const GridMeasure&, ConvolutionMethod>(
            &feller::convolve),
        py::arg("mu"), py::arg("nu"), py::arg("method") = ConvolutionMethod::kAuto);
  m.def("wasserstein1_truncated", &wasserstein1_truncated, py::arg("nu1"), py::arg("nu2"),
        py::arg("t_cut"));

  // Special functions.
  m.def("lambert_w0", &lambert_w0, py::arg("x"));
  m.def("cluster_mgf_threshold", &cluster_mgf_threshold, py::arg("a"));
  m.def("cluster_size_mgf", &cluster_size_mgf, py::arg("a"), py::arg("beta"));
  m.def("tail_limit_exact", &tail_limit_exact, py::arg("a"), py::arg("delta"));
  m.def("mittag_leffler", &mittag_leffler_neg, py::arg("alpha"), py::arg("beta"), py::arg("x"),
        "E_{alpha,beta}(-x) for x >= 0.");
  m.def("mittag_leffler_density", py::vectorize(&mittag_leffler_density), py::arg("alpha"),
        py::arg("t"));
  m.def("mittag_leffler_survival", py::vectorize(&mittag_leffler_survival), py::arg("alpha"),
        py::arg("t"));

  // Kernels.
  py::class_<Exponential>(m, "Exponential")
      .def(py::init<double>(), py::arg("rate"))
      .def_readwrite("rate", &Exponential::rate);
  py::class_<MittagLeffler>(m, "MittagLeffler")
      .def(py::init<double, double>(), py::arg("alpha"), py::arg("scale") = 1.0)
      .def_readwrite("alpha", &MittagLeffler::alpha)
      .def_readwrite("scale", &MittagLeffler::scale);
  py::class_<Deterministic>(m, "Deterministic")
      .def(py::init<double>(), py::arg("location"))
      .def_readwrite("location", &Deterministic::location);
  py::class_<Pareto>(m, "Pareto")
      .def(py::init<double, double>(), py::arg("tail_index"), py::arg("x_min") = 1.0)
      .def_readwrite("tail_index", &Pareto::tail_index)
      .def_readwrite("x_min", &Pareto::x_min);
  py::class_<Empirical>(m, "Empirical")
      .def(py::init<GridMeasure>(), py::arg("measure"))
      .def_readonly("measure", &Empirical::measure);
  py::class_<GidTriplet>(m, "GidTriplet")
      .def(py::init<double, GridMeasure>(), py::arg("drift"), py::arg("jumps"))
      .def_readonly("drift", &GidTriplet::drift)
      .def_readonly("jumps", &GidTriplet::jumps);

  m.def("describe", &describe, py::arg("spec"));
  m.def("validate_kernel", py::overload_cast<const KernelSpec&>(&feller::validate),
        py::arg("spec"));
  m.def("kernel_cdf", [](const KernelSpec& s, double t) { return cdf(s, t); }, py::arg("spec"),
        py::arg("t"));
  m.def("kernel_tail", [](const KernelSpec& s, double t) { return tail(s, t); }, py::arg("spec"),
        py::arg("t"));
  m.def("scale_spec", &scale_spec, py::arg("spec"), py::arg("n"));
  m.def("discretize_kernel", &discretize_kernel, py::arg("spec"), py::arg("grid"));
  m.def(
      "sample_kernel",
      [](const KernelSpec& spec, std::size_t count, std::uint64_t seed, std::uint64_t stream) {
        const KernelSampler sampler(spec);
        Rng rng = make_stream(seed, stream);
        std::vector<double> out(count);
        {
          py::gil_scoped_release release;
          for (auto& x : out) x = sampler(rng);
        }
        return to_numpy(out);
      },
      py::arg("spec"), py::arg("count"), py::arg("seed"), py::arg("stream") = 0);

  py::class_<KernelFamily>(m, "KernelFamily")
      .def_static("row_constant", [](const KernelSpec& s) { return KernelFamily(RowConstant{s}); },
                  py::arg("spec"))
      .def_static(
          "periodic",
          [](std::vector<KernelSpec> specs) { return KernelFamily(Periodic{std::move(specs)}); },
          py::arg("specs"))
      .def_static("scaled",
                  [](const KernelSpec& s, double n) { return KernelFamily(Scaled{s, n}); },
                  py::arg("base"), py::arg("n"))
      .def("generation", &KernelFamily::generation, py::arg("m"))
      .def_property_readonly("period", &KernelFamily::period);

  m.def(
      "geometric_mixture",
      [](double a, py::object family, const Grid& grid, std::size_t m0, double tol) {
        return geometric_mixture(a, family_from(std::move(family)), m0, grid, tol).rho;
      },
      py::arg("a"), py::arg("family"), py::arg("grid"), py::arg("m") = 0,
      py::arg("tol") = 1e-12);

  // Simulation.
  m.def(
      "simulate",
      [](double a, py::object family, const GridMeasure& background, std::uint64_t seed,
         std::uint64_t stream) {
        HawkesParams params{a, family_from(std::move(family)), background};
        PointSample sample = [&] {
          py::gil_scoped_release release;
          Rng rng = make_stream(seed, stream);
          return sample_hawkes(params, rng, seed);
        }();
        const std::size_t n = sample.points.size();
        py::array_t<double> times(static_cast<py::ssize_t>(n));
        py::array_t<std::uint32_t> gen(static_cast<py::ssize_t>(n));
        py::array_t<std::uint64_t> cluster(static_cast<py::ssize_t>(n));
        for (std::size_t i = 0; i < n; ++i) {
          times.mutable_data()[i] = sample.points[i].time;
          gen.mutable_data()[i] = sample.points[i].generation;
          cluster.mutable_data()[i] = sample.points[i].cluster_id;
        }
        py::dict d;
        d["time"] = times;
        d["generation"] = gen;
        d["cluster_id"] = cluster;
        return d;
      },
      py::arg("a"), py::arg("family"), py::arg("background"), py::arg("seed"),
      py::arg("stream") = 0,
      "One Hawkes path on the background's horizon, as arrays time/generation/cluster_id.");

  m.def(
      "cluster_sizes",
      [](double a, std::size_t count, std::uint64_t seed) {
        const ClusterSampler sampler(a, KernelFamily(RowConstant{Exponential{1.0}}));
        std::vector<double> out(count);
        {
          py::gil_scoped_release release;
          Rng rng = make_stream(seed, 0);
          for (auto& x : out) x = static_cast<double>(sampler.sample_size(rng));
        }
        return to_numpy(out);
      },
      py::arg("a"), py::arg("count"), py::arg("seed"));

  py::class_<PrelimitModel>(m, "PrelimitModel")
      .def_readonly("eps", &PrelimitModel::eps)
      .def_readonly("n", &PrelimitModel::n)
      .def_property_readonly("a", [](const PrelimitModel& p) { return p.params.a; })
      .def_property_readonly("family", [](const PrelimitModel& p) { return p.params.family; })
      .def_property_readonly("background",
                             [](const PrelimitModel& p) { return p.params.background; });

  m.def(
      "natural_model",
      [](std::vector<KernelSpec> period, const GridMeasure& mu, double eps) {
        return natural_model(period, mu, eps);
      },
      py::arg("kernels"), py::arg("mu"), py::arg("eps"));
  m.def(
      "natural_limit_kernel",
      [](std::vector<KernelSpec> period) { return natural_limit_kernel(period); },
      py::arg("kernels"));
  m.def(
      "simulate_functionals",
      [](const PrelimitModel& model, const GridFunction& f, std::vector<double> t_list,
         std::size_t reps, std::uint64_t seed, std::size_t threads) {
        std::vector<std::vector<double>> rows;
        {
          py::gil_scoped_release release;
          rows = simulate_functionals(model, f, t_list, reps, seed, 0, threads);
        }
        py::array_t<double> out({static_cast<py::ssize_t>(reps),
                                 static_cast<py::ssize_t>(t_list.size())});
        auto w = out.mutable_unchecked<2>();
        for (std::size_t r = 0; r < reps; ++r)
          for (std::size_t j = 0; j < t_list.size(); ++j) w(r, j) = rows[r][j];
        return out;
      },
      py::arg("model"), py::arg("f"), py::arg("t"), py::arg("replications"), py::arg("seed"),
      py::arg("threads") = 1, "Matrix of (f * eps^2 H)(t_j), one row per replication.");

  // Riccati solvers.
  m.def(
      "solve_marching",
      [](const GridFunction& f, const GridMeasure& rho) {
        RiccatiSolution sol = [&] {
          py::gil_scoped_release release;
          return solve_marching(RiccatiProblem{f, rho});
        }();
        return solution_dict(sol);
      },
      py::arg("f"), py::arg("rho"));
  m.def(
      "solve_picard",
      [](const GridFunction& f, const GridMeasure& rho, double window, double tol) {
        RiccatiSolution sol = [&] {
          py::gil_scoped_release release;
          return solve_picard(RiccatiProblem{f, rho}, window, tol);
        }();
        return solution_dict(sol);
      },
      py::arg("f"), py::arg("rho"), py::arg("window") = 0.5, py::arg("tol") = 1e-12);
  m.def(
      "solve_series",
      [](const GridFunction& f, const GridMeasure& rho, std::size_t n_max) {
        SeriesSolution s = [&] {
          py::gil_scoped_release release;
          return solve_series(RiccatiProblem{f, rho}, n_max);
        }();
        py::dict d = solution_dict(s.solution);
        d["term_norms"] = s.term_norms;
        d["truncated"] = s.truncated;
        return d;
      },
      py::arg("f"), py::arg("rho"), py::arg("n_max") = 60);
  m.def(
      "fixed_point_residual",
      [](const GridFunction& h, const GridFunction& f, const GridMeasure& rho) {
        return fixed_point_residual(h, RiccatiProblem{f, rho});
      },
      py::arg("h"), py::arg("f"), py::arg("rho"));

  // Analytics.
  m.def(
      "limit_laplace",
      [](const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu) {
        const LaplaceCurve c = limit_laplace(f, rho, mu);
        return py::make_tuple(to_numpy(c.times), to_numpy(c.values));
      },
      py::arg("f"), py::arg("rho"), py::arg("mu"), "(times, exp((h[f] * mu)(t))).");
  m.def(
      "cumulants",
      [](const GridFunction& f, const GridMeasure& rho, const GridMeasure& mu, std::size_t n_max) {
        return functions_list(cumulants(f, rho, mu, n_max).kappa);
      },
      py::arg("f"), py::arg("rho"), py::arg("mu"), py::arg("n_max") = 4,
      "kappa_1..kappa_{n_max} as arrays over the grid.");
  m.def(
      "partial_cumulants",
      [](const GridFunction& f0, const GridFunction& f, const GridMeasure& rho,
         const GridMeasure& mu, std::size_t n_max) {
        return functions_list(partial_cumulants(f0, f, rho, mu, n_max).kappa);
      },
      py::arg("f0"), py::arg("f"), py::arg("rho"), py::arg("mu"), py::arg("n_max") = 4);
  m.def("moments_from_cumulants",
        [](std::vector<double> kappa) { return moments_from_cumulants(std::span<const double>(kappa)); },
        py::arg("kappa"));
  m.def(
      "first_moment",
      [](const GridFunction& f, double a, const GridMeasure& rho, const GridMeasure& mu,
         bool prelimit) { return to_numpy(first_moment(f, a, rho, mu, prelimit).values()); },
      py::arg("f"), py::arg("a"), py::arg("rho"), py::arg("mu"),
      py::arg("include_prelimit_factor") = true);
  m.def(
      "covariance_kernel",
      [](const KernelSpec& rho, const GridMeasure& mu, std::size_t stride) {
        CovarianceGrid cov = [&] {
          py::gil_scoped_release release;
          return covariance_kernel(rho, mu, stride);
        }();
        const auto n = static_cast<py::ssize_t>(cov.size());
        py::array_t<double> sigma({n, n});
        std::copy(cov.sigma.begin(), cov.sigma.end(), sigma.mutable_data());
        return py::make_tuple(to_numpy(cov.times), sigma);
      },
      py::arg("rho"), py::arg("mu"), py::arg("stride") = 1, "(times, Sigma matrix).");
  m.def(
      "envelope_ratio",
      [](const Array& times, const Array& sigma, double alpha, double r_min, double gap) {
        CovarianceGrid cov{to_vector(times), {}};
        const std::size_t n = cov.size();
        if (sigma.ndim() != 2 || sigma.shape(0) != static_cast<py::ssize_t>(n) ||
            sigma.shape(1) != static_cast<py::ssize_t>(n))
          throw ValidationError("sigma must be a square matrix matching times");
        cov.sigma.assign(sigma.data(), sigma.data() + n * n);
        const EnvelopeFit fit = envelope_ratio(cov, alpha, r_min, gap);
        py::dict d;
        d["min_ratio"] = fit.min_ratio;
        d["max_ratio"] = fit.max_ratio;
        d["C"] = fit.C;
        d["pairs"] = fit.pairs;
        return d;
      },
      py::arg("times"), py::arg("sigma"), py::arg("alpha"), py::arg("r_min") = 0.1,
      py::arg("gap") = 0.05);
}
