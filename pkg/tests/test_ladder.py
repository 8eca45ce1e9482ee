import numpy as np
import pytest

from mfgtorus.fixedpoint import MFGProblem, solve_fixed_point
from mfgtorus.fourier import FourierSeries
from mfgtorus.ladder import fit_rate, fit_rate_detail, reference_constant, run_ladder, semigroup_check
from mfgtorus.model import GridMeasure, Mechanical, SolverConfig, TorusGrid, ZeroCoupling

V = FourierSeries.from_terms(1, [(1, 1.0, 0.0)])
TAUS = [0.4, 0.2, 0.1, 0.05]


def base(n=64, lag=None, tau=0.4):
    return MFGProblem(TorusGrid(1, n), lag or Mechanical(V), ZeroCoupling(), SolverConfig(tau=tau))


def test_fit_rate_examples():
    t = np.array(TAUS)
    assert fit_rate(3 * t, t) == pytest.approx(1.0)
    assert fit_rate(t**2, t) == pytest.approx(2.0)
    s, kept, dropped = fit_rate_detail([0.4, 0.0, 0.1, 0.05], t)
    assert s == pytest.approx(1.0) and dropped == [1] and kept == [0, 2, 3]
    with pytest.raises(ValueError):
        fit_rate([1.0, 0.0, np.nan, 2.0], t)
    with pytest.raises(ValueError):
        fit_rate([1.0, 2.0], t)


def test_semigroup_flat_exact():
    ctx = base(64, Mechanical(FourierSeries.constant(1, 0.0)), tau=0.1)
    d = semigroup_check(np.zeros(64), GridMeasure.uniform(ctx.grid), 0.0, 1.0, 80, ctx)
    assert d <= 1e-10


def test_reference_constant():
    ctx = base(64)
    c, src = reference_constant(ctx, GridMeasure.uniform(ctx.grid))
    assert src == "analytic" and c == pytest.approx(1.0, abs=1e-14)


def test_single_rung_has_no_slopes():
    rep = run_ladder(base(64, tau=0.1), [0.1])
    assert all(v is None for v in rep.slopes.values())
    assert all("need >= 3" in rep.slope_notes[k] for k in rep.slopes)
    assert not rep.rungs[0].failed


def test_bad_tau_lists():
    with pytest.raises(ValueError):
        run_ladder(base(), [])
    with pytest.raises(ValueError):
        run_ladder(base(), [0.1, 0.2])
    with pytest.raises(ValueError):
        run_ladder(base(), [0.2, 0.1], [64])


def test_broken_rung_is_recorded():
    # tau * window_D < 2h on the last rung: recorded as failed, earlier rungs kept
    rep = run_ladder(base(32, tau=0.2), [0.2, 0.1, 0.01])
    assert [r.failed for r in rep.rungs] == [False, False, True]
    assert "2h" in rep.rungs[2].error
    assert rep.results[2] is None and rep.results[1] is not None
    # the fine semigroup step does not fit the coarse grid: skipped, not fatal
    assert np.isnan(rep.rungs[1].semigroup_defect)
    assert "semigroup check skipped" in rep.rungs[1].warnings[0]


def test_hj_residual_rate_at_fixed_h_over_tau_squared():
    rep = run_ladder(base(64), TAUS, [64, 256, 1024, 4096], cold_check=True)
    assert not any(r.failed for r in rep.rungs)
    hj = rep.column("residual_HJ")
    assert all(a > b for a, b in zip(hj, hj[1:]))
    assert rep.slopes["residual_HJ"] >= 0.7
    # warm starts reach the same constant as a cold start
    assert rep.cold_start_gap <= 1e-12
    assert rep.c_ref_source == "analytic"
    d = rep.to_dict()
    assert len(d["rungs"]) == 4 and d["c_ref"] == pytest.approx(1.0)


def test_warm_and_cold_agree_on_each_rung():
    rep = run_ladder(base(256), TAUS[:3])
    for res, ctx in zip(rep.results, rep.contexts):
        cold = solve_fixed_point(GridMeasure.uniform(ctx.grid), ctx)
        assert cold.c_est == res.c_est
        np.testing.assert_array_equal(cold.m_star.weights, res.m_star.weights)
