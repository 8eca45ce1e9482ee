"""tau-ladder experiments: convergence of the effective constant, potentials and densities."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .action import build_action_table, build_edge_set
from .fixedpoint import MFGProblem, certificates, mfg_residuals, solve_fixed_point
from .holonomic import measure_action
from .model import ConfigError, GridMeasure, Mechanical, TorusGrid
from .wasserstein import wasserstein1
from .weakkam import discrete_lipschitz, extract_N_tau, lax_oleinik_power

logger = logging.getLogger(__name__)


def fit_rate_detail(values, taus):
    """OLS slope of ``log(value)`` against ``log(tau)``.

    Nonpositive (or non-finite) values are dropped; returns
    ``(slope, kept_indices, dropped_indices)``. Raises ``ValueError`` when
    fewer than three usable points remain.
    """
    v = np.asarray(values, dtype=float)
    t = np.asarray(taus, dtype=float)
    if v.shape != t.shape:
        raise ValueError("values and taus must have the same length")
    ok = np.isfinite(v) & (v > 0) & (t > 0)
    kept, dropped = np.flatnonzero(ok), np.flatnonzero(~ok)
    if len(kept) < 3:
        raise ValueError(f"need >= 3 positive values for a rate fit, got {len(kept)}")
    slope = np.polyfit(np.log(t[kept]), np.log(v[kept]), 1)[0]
    return float(slope), kept.tolist(), dropped.tolist()


def fit_rate(values, taus) -> float:
    return fit_rate_detail(values, taus)[0]


def semigroup_check(u, m: GridMeasure, c_est: float, t: float, n_steps: int, ctx: MFGProblem
                    ) -> float:
    """``max |T_{tau_f}^{n_steps} u - (u - t c_est)|`` with ``tau_f = t / n_steps``.

    The fine-step operator is built on the same grid and window factor as
    ``ctx`` with the coupling frozen at ``m``.
    """
    tau_f = t / n_steps
    cfg = ctx.cfg.with_(tau=tau_f)
    edges = build_edge_set(ctx.grid, cfg)
    table = build_action_table(edges, ctx.lagrangian, ctx.coupling, m)
    u = np.asarray(u, dtype=float)
    out = lax_oleinik_power(u, table, n_steps)
    return float(np.max(np.abs(out - (u - t * c_est))))


def reference_constant(ctx: MFGProblem, m: GridMeasure):
    """Analytic critical value when available: ``max V - F(m)`` for mechanical
    Lagrangians with a coupling that is constant in space.
    """
    if isinstance(ctx.lagrangian, Mechanical) and ctx.coupling.is_constant_in_x():
        vmax, _ = ctx.lagrangian.potential.max_value()
        level = float(ctx.coupling.values(ctx.grid.coords(np.array([0])), m)[0])
        return vmax - level, "analytic"
    return None, "self-referential"


def _refine_to(u_coarse, n_coarse, n_fine, dim):
    """Sample a coarse-grid function at fine nodes when ``n_fine`` is a multiple."""
    if n_fine == n_coarse:
        return u_coarse
    r = n_fine // n_coarse
    shaped = u_coarse.reshape((n_coarse,) * dim)
    for ax in range(dim):
        shaped = np.repeat(shaped, r, axis=ax)
    return shaped.reshape(-1)


def _coarsen_measure(m: GridMeasure, n_coarse: int) -> GridMeasure:
    """Aggregate a fine measure onto a coarser nested grid (nearest lower node)."""
    g = m.grid
    if g.n == n_coarse:
        return m
    r = g.n // n_coarse
    w = m.weights.reshape((g.n,) * g.dim)
    for ax in range(g.dim):
        shape = list(w.shape)
        shape[ax:ax + 1] = [n_coarse, r]
        w = w.reshape(shape).sum(axis=ax + 1)
    return GridMeasure(TorusGrid(g.dim, n_coarse), w.reshape(-1))


@dataclass
class Rung:
    tau: float
    n: int
    failed: bool = False
    error: str | None = None
    converged: bool = False
    iterations: int = 0
    lbar: float = np.nan
    c_est: float = np.nan
    c_gap: float = np.nan
    u_sup_diff: float | None = None
    d1_prev: float | None = None
    residual_HJ: float = np.nan
    residual_continuity: float = np.nan
    closedness: float = np.nan
    closedness_discrete: float = np.nan
    semigroup_defect: float = np.nan
    semigroup_defect_2t: float = np.nan
    mather_defect: float = np.nan
    lip_u: float = np.nan
    max_speed_support: float = np.nan
    max_speed_contact: float = np.nan
    space_resolution_ok: bool = True
    certificates: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        # wall-clock time is kept out so reports stay byte-reproducible
        d = dict(self.__dict__)
        d.pop("seconds")
        return d


@dataclass
class LadderReport:
    rungs: list
    c_ref: float | None
    c_ref_source: str
    slopes: dict
    slope_notes: dict
    cold_start_gap: float | None = None
    results: list = field(default_factory=list, repr=False)  # FixedPointResult per rung
    contexts: list = field(default_factory=list, repr=False)

    @property
    def taus(self):
        return [r.tau for r in self.rungs]

    def column(self, name):
        return [getattr(r, name) for r in self.rungs]

    def to_dict(self) -> dict:
        return {
            "c_ref": self.c_ref,
            "c_ref_source": self.c_ref_source,
            "slopes": self.slopes,
            "slope_notes": self.slope_notes,
            "cold_start_gap": self.cold_start_gap,
            "rungs": [r.to_dict() for r in self.rungs],
        }


SLOPE_METRICS = ("c_gap", "u_sup_diff", "d1_prev", "residual_HJ", "closedness",
                 "semigroup_defect")


def run_ladder(base: MFGProblem, taus, grid_n=None, *, semigroup_t: float = 1.0,
               fine_factor: int = 8, cold_check: bool = False, m0: GridMeasure | None = None
               ) -> LadderReport:
    """Solve the fixed point on each rung (warm-started) and collect diagnostics.

    ``grid_n`` optionally gives one grid size per rung (nested, increasing);
    by default every rung uses ``base.grid``.
    """
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("empty tau list")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be strictly decreasing")
    ns = [base.grid.n] * len(taus) if grid_n is None else [int(n) for n in grid_n]
    if len(ns) != len(taus):
        raise ValueError("grid_n must match taus in length")
    rungs, results, ctxs = [], [], []
    prev = None  # (result, ctx) of last successful rung
    for tau, n in zip(taus, ns):
        t0 = time.perf_counter()
        grid = TorusGrid(base.grid.dim, n)
        rung = Rung(tau=tau, n=n, space_resolution_ok=bool(grid.h <= min(taus) ** 2 / 4))
        try:
            ctx = MFGProblem(grid, base.lagrangian, base.coupling, base.cfg.with_(tau=tau))
            if prev is not None:
                start = prev[0].m_star
                if start.grid != grid:
                    start = GridMeasure(grid, _refine_to(start.weights, start.grid.n, n, grid.dim))
            else:
                start = GridMeasure.uniform(grid) if m0 is None else m0
            res = solve_fixed_point(start, ctx)
            rep = mfg_residuals(res, ctx)
            table = res.table
            certs = certificates(res.wk, table, res.mu_star)
            rung.certificates = certs
            rung.converged = res.converged
            rung.iterations = res.iterations
            rung.lbar = res.lbar
            rung.c_est = res.c_est
            rung.residual_HJ = rep.residual_HJ
            rung.residual_continuity = rep.residual_continuity
            rung.closedness = rep.closedness
            rung.closedness_discrete = rep.closedness_discrete
            rung.lip_u = discrete_lipschitz(res.wk.u, table)
            es = table.edges
            speed = np.linalg.norm(es.vel, axis=1)
            rung.max_speed_support = float(speed[res.mu_star.support].max())
            rung.max_speed_contact = float(speed[extract_N_tau(res.wk, table)].max())
            n_steps = int(round(semigroup_t * fine_factor / tau))
            try:
                rung.semigroup_defect = semigroup_check(res.wk.u, res.m_star, res.c_est,
                                                        semigroup_t, n_steps, ctx)
                rung.semigroup_defect_2t = semigroup_check(res.wk.u, res.m_star, res.c_est,
                                                           2 * semigroup_t, 2 * n_steps, ctx)
            except ConfigError as exc:  # diagnostic only; the rung itself is fine
                rung.warnings.append(f"semigroup check skipped: {exc}")
            if prev is not None:
                pres, pctx = prev
                pn = pctx.grid.n
                if n % pn == 0:
                    u_prev = _refine_to(np.asarray(pres.wk.u), pn, n, grid.dim)
                    rung.u_sup_diff = float(np.max(np.abs(res.wk.u - u_prev)))
                    rung.d1_prev = wasserstein1(_coarsen_measure(res.m_star, pn), pres.m_star)
            gates = certs["subaction_ok"] and certs["holonomy_ok"] and certs["support_in_contact_set"]
            if not gates:
                rung.failed, rung.error = True, "certificate gate failed"
            elif not res.converged:
                rung.failed, rung.error = True, "fixed point not converged"
            results.append(res)
            ctxs.append(ctx)
            prev = (res, ctx)
        except Exception as exc:  # a broken rung is recorded, the ladder goes on
            logger.exception("rung tau=%g failed", tau)
            rung.failed, rung.error = True, f"{type(exc).__name__}: {exc}"
            results.append(None)
            ctxs.append(None)
        rung.seconds = time.perf_counter() - t0
        rungs.append(rung)

    c_ref, source = None, "self-referential"
    if prev is not None:
        c_ref, source = reference_constant(prev[1], prev[0].m_star)
        if c_ref is None:
            c_ref = prev[0].c_est
    for rung, res in zip(rungs, results):
        if res is not None and c_ref is not None:
            rung.c_gap = abs(rung.lbar + c_ref)
            rung.mather_defect = abs(measure_action(res.mu_star, res.table) + c_ref)

    slopes, notes = {}, {}
    for name in SLOPE_METRICS:
        vals = [np.nan if v is None else v for v in (getattr(r, name) for r in rungs)]
        try:
            s, _, dropped = fit_rate_detail(vals, [r.tau for r in rungs])
            slopes[name] = s
            if dropped:
                notes[name] = f"excluded rungs {dropped} (nonpositive or missing)"
        except ValueError as exc:
            slopes[name] = None
            notes[name] = str(exc)

    cold_gap = None
    if cold_check and prev is not None:
        cold = solve_fixed_point(GridMeasure.uniform(prev[1].grid), prev[1])
        cold_gap = abs(cold.c_est - prev[0].c_est)
    return LadderReport(rungs, c_ref, source, slopes, notes, cold_gap, results, ctxs)
