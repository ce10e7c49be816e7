import math

import numpy as np
import pytest

import feller


def test_grid_and_errors():
    g = feller.Grid(2.0, 0.01)
    assert len(g) == 201
    assert g.times()[-1] == pytest.approx(2.0)
    with pytest.raises(feller.ValidationError):
        feller.Grid(1.0, 0.3)
    assert issubclass(feller.BlowUpError, feller.NumericalRefusal)


def test_special_functions():
    assert feller.lambert_w0(math.e) == pytest.approx(1.0, abs=1e-14)
    for a in (0.3, 0.5, 0.8):
        beta = feller.cluster_mgf_threshold(a)
        assert feller.cluster_size_mgf(a, beta) == pytest.approx(1.0 / a, rel=1e-10)
    t = np.linspace(0.1, 3.0, 7)
    np.testing.assert_allclose(feller.mittag_leffler_density(1.0, t), np.exp(-t), rtol=1e-12)
    np.testing.assert_allclose(feller.mittag_leffler_survival(1.0, t), np.exp(-t), rtol=1e-12)


def test_kernel_discretization_and_sampling():
    g = feller.Grid(5.0, 0.01)
    rho = feller.discretize_kernel(feller.Exponential(1.0), g)
    assert rho.atom_at_zero == 0.0
    assert rho.total_mass() == pytest.approx(1.0 - math.exp(-5.0), abs=1e-12)
    assert rho.tail_mass == pytest.approx(math.exp(-5.0), abs=1e-12)
    x = feller.sample_kernel(feller.Exponential(2.0), 20000, seed=3)
    assert x.mean() == pytest.approx(0.5, abs=4 * 0.5 / math.sqrt(x.size))
    assert feller.describe(feller.MittagLeffler(0.5, 2.0))


def test_riccati_solvers_agree():
    g = feller.Grid(5.0, 0.005)
    rho = feller.discretize_kernel(feller.Exponential(1.0), g)
    f = feller.GridFunction(g, lambda t: 0.3 * math.sin(t))
    m = feller.solve_marching(f, rho)
    p = feller.solve_picard(f, rho, window=0.5, tol=1e-13)
    s = feller.solve_series(f, rho, n_max=100)
    assert m["residual"] <= m["tolerance"]
    np.testing.assert_allclose(p["h"], m["h"], atol=1e-9)
    np.testing.assert_allclose(s["h"], m["h"], atol=1e-9)
    h = feller.GridFunction(g, m["h"])
    assert feller.fixed_point_residual(h, f, rho) == pytest.approx(m["residual"])


def test_stationary_value():
    c = 0.18
    g = feller.Grid(20.0, 0.01)
    rho = feller.discretize_kernel(feller.Exponential(1.0), g)
    h = feller.solve_marching(feller.GridFunction.constant(g, c), rho)["h"]
    assert h[-1] == pytest.approx(1.0 - math.sqrt(1.0 - 2.0 * c), abs=2e-3)


def test_series_refuses_large_f():
    g = feller.Grid(1.0, 0.01)
    rho = feller.discretize_kernel(feller.Exponential(1.0), g)
    with pytest.raises(feller.NumericalRefusal):
        feller.solve_series(feller.GridFunction.constant(g, 0.6), rho, 20)


def test_first_cumulant_closed_form():
    g = feller.Grid(4.0, 0.001)
    rho = feller.discretize_kernel(feller.Exponential(1.0), g)
    mu = feller.GridMeasure.lebesgue(g)
    k = feller.cumulants(feller.GridFunction.constant(g, 1.0), rho, mu, 2)
    t = g.times()
    np.testing.assert_allclose(k[0], t - 1.0 + np.exp(-t), atol=5e-3)
    assert np.all(k[1] >= 0.0)
    times, lap = feller.limit_laplace(feller.GridFunction.constant(g, -0.2), rho, mu)
    assert lap[0] == pytest.approx(1.0)
    assert np.all(np.diff(lap) <= 1e-15)


def test_simulation_deterministic():
    g = feller.Grid(10.0, 0.01)
    mu = feller.GridMeasure.lebesgue(g, 2.0)
    s1 = feller.simulate(0.5, feller.Exponential(1.0), mu, seed=11)
    s2 = feller.simulate(0.5, [feller.Exponential(1.0)], mu, seed=11)
    np.testing.assert_array_equal(s1["time"], s2["time"])
    assert np.all((s1["time"] >= 0.0) & (s1["time"] <= 10.0))
    assert s1["time"].size == s1["generation"].size == s1["cluster_id"].size
    sizes = feller.cluster_sizes(0.5, 20000, seed=1)
    assert sizes.mean() == pytest.approx(2.0, rel=0.05)


def test_natural_model_and_functionals():
    kernels = [feller.Exponential(1.0), feller.Exponential(2.0)]
    lim = feller.natural_limit_kernel(kernels)
    assert isinstance(lim, feller.Exponential)
    assert lim.rate == pytest.approx(4.0 / 3.0)
    g = feller.Grid(2.0, 0.01)
    model = feller.natural_model(kernels, feller.GridMeasure.lebesgue(g), 0.1)
    assert model.a == pytest.approx(0.9)
    assert model.n == pytest.approx(10.0)
    f = feller.GridFunction.constant(g, -0.3)
    rows = feller.simulate_functionals(model, f, [1.0, 2.0], 50, seed=5, threads=2)
    again = feller.simulate_functionals(model, f, [1.0, 2.0], 50, seed=5, threads=1)
    assert rows.shape == (50, 2)
    np.testing.assert_array_equal(rows, again)
    assert np.all(rows <= 0.0)


def test_covariance_symmetric():
    g = feller.Grid(2.0, 0.01)
    times, sigma = feller.covariance_kernel(feller.MittagLeffler(0.7), feller.GridMeasure.lebesgue(g), 20)
    assert sigma.shape == (times.size, times.size)
    off = ~np.eye(times.size, dtype=bool)
    np.testing.assert_allclose(sigma[off], sigma.T[off], rtol=1e-12)
    fit = feller.envelope_ratio(times, sigma, 0.7, 0.2, 0.1)
    assert fit["pairs"] > 0 and math.isfinite(fit["C"])
