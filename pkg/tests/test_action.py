import numpy as np
import pytest

from mfgtorus.action import (
    build_action_table,
    build_edge_set,
    export_action_csv,
    one_step_action,
    refined_action,
    refined_actions_from,
    refinement_gaps,
)
from mfgtorus.fourier import FourierSeries
from mfgtorus.model import (
    ConfigError,
    GridMeasure,
    Mechanical,
    ScalarMap,
    SeparableCoupling,
    SolverConfig,
    TorusGrid,
    ZeroCoupling,
)

COS = FourierSeries.from_terms(1, [(1, 1.0, 0.0)])
FLAT = Mechanical(FourierSeries.constant(1, 0.0))


def edges(n, tau, D, dim=1):
    return build_edge_set(TorusGrid(dim, n), SolverConfig(tau=tau, window_D=D))


def test_edge_set_four_nodes():
    es = edges(4, 0.5, 1.0)
    assert es.E == 16
    disp = es.disp[es.tgt == 0, 0]
    assert sorted(disp) == [-0.5, -0.25, 0.0, 0.25]


def test_edge_set_eight_nodes_closed_ball():
    # the closed ball |d| <= 0.25 holds both -0.25 and +0.25 (neither is antipodal)
    es = edges(8, 0.25, 1.0)
    assert es.E == 40
    assert sorted(es.disp[es.tgt == 3, 0]) == [-0.25, -0.125, 0.0, 0.125, 0.25]


def test_edge_set_invariants():
    for dim, n in ((1, 50), (2, 12)):
        es = edges(n, 0.1, 3.0, dim)
        assert np.all(es.self_edges() >= 0)
        assert np.all(es.disp_norm <= 0.3 + 1e-12)
        # lexicographic by target then source
        key = es.tgt * es.grid.size + es.src
        assert np.all(np.diff(key) > 0)


def test_window_too_small():
    with pytest.raises(ConfigError, match="2h"):
        edges(10, 0.1, 1.0)


def test_action_table_examples():
    es = edges(8, 0.5, 1.0)
    g = es.grid
    t = build_action_table(es, FLAT, ZeroCoupling(), GridMeasure.uniform(g))
    e = es.edge_index(0, 2)[0]
    assert t.cost[e] == pytest.approx(0.0625, abs=1e-16)

    es = edges(64, 0.1, 3.0)
    t = build_action_table(es, Mechanical(COS), ZeroCoupling(), GridMeasure.uniform(es.grid))
    assert t.cost[es.edge_index(0, 0)[0]] == pytest.approx(-0.1, abs=1e-16)

    one = FourierSeries.constant(1, 1.0)
    sep = SeparableCoupling(one, one, ScalarMap())
    m = GridMeasure.random(es.grid, np.random.default_rng(0))
    a0 = build_action_table(es, Mechanical(COS), ZeroCoupling(), m)
    a1 = build_action_table(es, Mechanical(COS), sep, m)
    np.testing.assert_allclose(a1.cost - a0.cost, 0.1, atol=1e-15)


def test_action_table_rejects_mismatch():
    es = edges(16, 0.25, 1.0)
    with pytest.raises(ValueError):
        build_action_table(es, FLAT, ZeroCoupling(), GridMeasure.uniform(TorusGrid(1, 8)))
    with pytest.raises(ValueError):
        build_action_table(es, FLAT, ZeroCoupling(), GridMeasure.uniform(es.grid), tau=0.5)


def test_export_csv(tmp_path):
    es = edges(8, 0.5, 1.0)
    t = build_action_table(es, Mechanical(COS), ZeroCoupling(), GridMeasure.uniform(es.grid))
    p = tmp_path / "a.csv"
    export_action_csv(t, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "source,target,v0,cost"
    assert len(lines) == es.E + 1


def test_refined_action_k1_is_one_step():
    g = TorusGrid(1, 64)
    m = GridMeasure.uniform(g)
    lag = Mechanical(COS)
    for y in (5, 8, 1):
        r = refined_action(5, y, 0.25, 1, lag, ZeroCoupling(), m, 1.0)
        assert r == pytest.approx(one_step_action(5, y, 0.25, lag, ZeroCoupling(), m), abs=1e-15)


@pytest.mark.parametrize("k", [2, 4, 8])
def test_refined_action_pure_kinetic(k):
    n, tau = 64, 0.25
    g = TorusGrid(1, n)
    m = GridMeasure.uniform(g)
    h = g.h
    for off in range(-16, 17):
        y = off % n
        ref = refined_action(0, y, tau, k, FLAT, ZeroCoupling(), m, 1.0)
        one = one_step_action(0, y, tau, FLAT, ZeroCoupling(), m)
        r = off % k
        # sub-steps split the lattice displacement as evenly as the lattice allows
        excess = h * h * r * (k - r) / (2 * tau)
        assert ref - one == pytest.approx(excess, abs=1e-14)


def test_refined_action_requires_power_of_two_and_window():
    g = TorusGrid(1, 64)
    m = GridMeasure.uniform(g)
    with pytest.raises(ValueError):
        refined_action(0, 1, 0.25, 3, FLAT, ZeroCoupling(), m, 1.0)
    with pytest.raises(ValueError):
        refined_action(0, 20, 0.25, 2, FLAT, ZeroCoupling(), m, 1.0)


def test_refined_action_cos_quadratic_bound():
    # self-loop at the top of V: staying put is optimal at every refinement
    g = TorusGrid(1, 512)
    m = GridMeasure.uniform(g)
    lag, cpl, tau = Mechanical(COS), ZeroCoupling(), 0.2
    r16 = refined_action(0, 0, tau, 16, lag, cpl, m, 3.0)
    assert abs(r16 - one_step_action(0, 0, tau, lag, cpl, m)) <= 4 * np.pi**2 * tau**2
    # whole window from x=0 against the k=64 oracle
    gap, osc = refinement_gaps(tau, 16, lag, cpl, m, 1.0, [0, 128], k_oracle=64)
    assert gap + osc <= 4 * np.pi**2 * tau**2
    assert osc <= 0.25 * gap


def test_refined_actions_union_tube_matches_single():
    g = TorusGrid(1, 256)
    m = GridMeasure.uniform(g)
    lag = Mechanical(COS)
    tg = np.array([250, 0, 7, 20])
    both = refined_actions_from(3, tg, 0.1, 4, lag, ZeroCoupling(), m, 3.0)
    assert np.all(np.isfinite(both))
    single = refined_actions_from(3, tg, 0.1, 4, lag, ZeroCoupling(), m, 3.0, tube="single")
    # a larger region can only help
    assert np.all(both <= single + 1e-15)


TAUS = (0.4, 0.2, 0.1, 0.05)


def test_action_lower_bound_uniform_in_tau():
    # inf A/tau >= min_v |v|^2/2 - max V - F_inf = -1
    for tau in TAUS:
        es = edges(1024, tau, 1.0)
        t = build_action_table(es, Mechanical(COS), ZeroCoupling(), GridMeasure.uniform(es.grid))
        assert t.cost.min() / tau >= -1.0 - 1e-15
        assert t.cost.min() / tau == pytest.approx(-1.0, abs=1e-15)


def test_action_lipschitz_in_target_uniform_in_tau():
    # |A(x,z) - A(x,y)| <= D |z - y| for the kinetic part within the window
    D = 3.0
    for tau in TAUS:
        es = edges(1024, tau, D)
        t = build_action_table(es, Mechanical(COS), ZeroCoupling(), GridMeasure.uniform(es.grid))
        # within a target block sources ascend; regroup by source and sort by displacement
        order = np.lexsort((es.disp[:, 0], es.src))
        src, d, c = es.src[order], es.disp[order, 0], t.cost[order]
        same = src[1:] == src[:-1]
        ratio = np.abs(np.diff(c))[same] / np.abs(np.diff(d))[same]
        assert ratio.max() <= D * (1 + 1e-12)
