import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgtorus.fourier import FourierSeries
from mfgtorus.model import (
    ConfigError,
    ConvolutionCoupling,
    GridMeasure,
    Mechanical,
    QuadraticDrift,
    ScalarMap,
    SeparableCoupling,
    SolverConfig,
    TorusGrid,
    ZeroCoupling,
    torus_displacement,
)
from mfgtorus.wasserstein import wasserstein1

COS = FourierSeries.from_terms(1, [([1], 1.0, 0.0)])
SIN = FourierSeries.from_terms(1, [([1], 0.0, 1.0)])


def test_torus_displacement_examples():
    g = TorusGrid(1, 10)
    assert torus_displacement(0, 1, g)[0] == pytest.approx(0.1)
    assert torus_displacement(0, 9, g)[0] == pytest.approx(-0.1)
    g2 = TorusGrid(2, 4)
    y = g2.flat_index(np.array([2, 3]))
    np.testing.assert_allclose(torus_displacement(0, y, g2), [-0.5, -0.25])


@given(st.integers(2, 40), st.data())
def test_displacement_antisymmetric_and_bounded(n, data):
    g = TorusGrid(1, n)
    x = data.draw(st.integers(0, n - 1))
    y = data.draw(st.integers(0, n - 1))
    d = torus_displacement(x, y, g)
    assert np.all(d >= -0.5) and np.all(d < 0.5)
    back = torus_displacement(y, x, g)
    if d[0] != -0.5 and back[0] != -0.5:
        assert d[0] == -back[0]


def test_grid_coordinates_and_index_roundtrip():
    g = TorusGrid(2, 8)
    i = np.arange(g.size)
    assert np.array_equal(g.flat_index(g.multi_index(i)), i)
    np.testing.assert_array_equal(g.coords(np.array([9]))[0], [1 / 8, 1 / 8])
    assert g.h * g.n == 1.0
    with pytest.raises(ConfigError):
        TorusGrid(3, 8)


def test_lagrangian_examples():
    mech = Mechanical(COS)
    assert mech.L(np.array([[0.0]]), np.array([[0.0]]))[0] == -1.0
    flat = Mechanical(FourierSeries.constant(1, 0.0))
    xs = np.linspace(0, 1, 7)[:, None]
    np.testing.assert_array_equal(flat.L(xs, np.full_like(xs, 2.0)), 2.0)
    drift = QuadraticDrift((SIN,))
    x = np.array([[0.25]])
    v = np.array([[1.0]])
    assert drift.L(x, v)[0] == pytest.approx(0.0, abs=1e-15)
    assert drift.L_v(x, v)[0, 0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("dim", [1, 2])
def test_legendre_consistency(dim):
    rng = np.random.default_rng(3)
    if dim == 1:
        V = FourierSeries.from_terms(1, [([1], 0.7, -0.2), ([3], 0.1, 0.4)])
        b = (FourierSeries.from_terms(1, [([2], 0.5, 0.3)], const=0.4),)
    else:
        V = FourierSeries.from_terms(2, [([1, 0], 0.7, 0.0), ([1, -1], 0.0, 0.3)])
        b = (FourierSeries.from_terms(2, [([0, 1], 0.5, 0.0)], const=0.2),
             FourierSeries.from_terms(2, [([1, 1], 0.0, -0.4)]))
    x = rng.random((1000, dim))
    p = rng.normal(scale=3.0, size=(1000, dim))
    for lag in (Mechanical(V), QuadraticDrift(b)):
        hp = lag.H_p(x, p)
        defect = lag.L(x, hp) + lag.H(x, p) - np.sum(p * hp, axis=-1)
        assert np.max(np.abs(defect)) <= 1e-10
        # L_v inverts H_p
        np.testing.assert_allclose(lag.L_v(x, hp), p, atol=1e-12)


def test_coupling_examples():
    g = TorusGrid(1, 64)
    m = GridMeasure.random(g, np.random.default_rng(0))
    xs = g.coords()
    assert np.all(ZeroCoupling().values(xs, m) == 0)
    sep = SeparableCoupling(SIN, FourierSeries.constant(1, 1.0), ScalarMap())
    assert sep.values(np.array([[0.25]]), m)[0] == pytest.approx(1.0)


def test_convolution_against_dense_sum():
    g = TorusGrid(1, 64)
    rho = FourierSeries.gaussian_bump(1, 0.8, 0.1, 10)
    cpl = ConvolutionCoupling(rho, 1.0)
    # dirac at node 0 reproduces the kernel
    xs = np.linspace(0, 1, 50)[:, None]
    np.testing.assert_allclose(cpl.values(xs, GridMeasure.dirac(g, 0)), rho(xs), atol=1e-13)
    # general measure: dense sum_j rho(x - x_j) m_j
    m = GridMeasure.random(g, np.random.default_rng(5))
    dense = np.array([np.dot(m.weights, rho(x - g.coords())) for x in xs])
    np.testing.assert_allclose(cpl.values(xs, m), dense, atol=1e-13)


def _sampled_couplings(dim):
    if dim == 1:
        f = FourierSeries.from_terms(1, [([1], 0.5, 0.2)])
        phi = FourierSeries.from_terms(1, [([1], 1.0, 0.0), ([2], 0.0, 0.5)])
        rho = FourierSeries.gaussian_bump(1, 0.5, 0.15, 8)
    else:
        f = FourierSeries.from_terms(2, [([1, 0], 0.5, 0.0)])
        phi = FourierSeries.from_terms(2, [([0, 1], 1.0, 0.0)])
        rho = FourierSeries.gaussian_bump(2, 0.5, 0.25, 4)
    return [
        SeparableCoupling(f, phi, ScalarMap()),
        SeparableCoupling(f, phi, ScalarMap("clamp", 2.0, 0.1, -0.3, 0.3)),
        ConvolutionCoupling(rho, 1.0),
        ConvolutionCoupling(rho, -0.4),
    ]


@pytest.mark.parametrize("dim,n", [(1, 32), (2, 6)])
def test_declared_bounds_hold_on_samples(dim, n):
    g = TorusGrid(dim, n)
    rng = np.random.default_rng(11)
    xs = g.coords()
    for cpl in _sampled_couplings(dim):
        worst = 0.0
        for _ in range(100):
            m1 = GridMeasure.random(g, rng, sparsity=0.5)
            m2 = GridMeasure.random(g, rng, sparsity=0.5)
            d1 = wasserstein1(m1, m2)
            diff = np.max(np.abs(cpl.values(xs, m1) - cpl.values(xs, m2)))
            worst = max(worst, diff / d1)
            assert np.max(np.abs(cpl.values(xs, m1))) <= cpl.F_inf
            assert np.max(np.abs(cpl.grad(xs, m1))) <= cpl.F_inf
        assert worst <= cpl.lip_F * (1 + 1e-6)


def test_measure_normalization():
    g = TorusGrid(1, 5)
    m = GridMeasure(g, [1, 2, 3, 4, 0])
    assert abs(m.weights.sum() - 1) <= 1e-12
    with pytest.raises(ValueError):
        GridMeasure(g, [1, -1, 0, 0, 1])
    with pytest.raises(ValueError):
        m.weights[0] = 1.0


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(tau=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(tau=1.5)
    with pytest.raises(ConfigError):
        SolverConfig(window_D=0.5)
    with pytest.raises(ConfigError, match="2h"):
        SolverConfig(tau=0.01, window_D=1.0).check_grid(TorusGrid(1, 64))


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 2.0))
def test_scalar_map_clamp_lipschitz(shift, scale):
    G = ScalarMap("clamp", scale, shift, -0.5, 0.5)
    z = np.linspace(-2, 2, 101)
    vals = np.array([G(v) for v in z])
    assert np.all(np.abs(np.diff(vals)) <= G.lip * np.diff(z) + 1e-12)
