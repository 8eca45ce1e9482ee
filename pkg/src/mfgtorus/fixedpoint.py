"""Measure fixed point of the best-response map and MFG residual diagnostics.

The best response to a density ``m`` is the spatial projection of a
minimizing holonomic measure for ``L + F(., m)``. Equilibria are fixed
points; they are sought by damped Picard iteration

    m_{k+1} = (1 - theta) m_k + theta * Psi(m_k)

with an optional vertex probe: because ``Psi`` always returns a cycle
measure, the iteration also tests whether ``Psi(m_k)`` is itself a fixed
point and jumps there when it is.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .action import ActionTable, EdgeSet, build_action_table, build_edge_set
from .fourier import probe_modes
from .holonomic import (
    EdgeMeasure,
    closedness_residual,
    holonomy_residual,
    min_holonomic_measure,
    project_measure,
)
from .model import CouplingSpec, GridMeasure, LagrangianSpec, SolverConfig, TorusGrid
from .wasserstein import wasserstein1
from .weakkam import (
    WeakKamSolution,
    contact_gaps,
    solve_weak_kam,
    verify_subaction,
    window_hits,
)

logger = logging.getLogger(__name__)

SUBACTION_TOL = 1e-9
HOLONOMY_TOL = 1e-10
CONTACT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MFGProblem:
    """Everything the best-response map needs besides the density."""

    grid: TorusGrid
    lagrangian: LagrangianSpec
    coupling: CouplingSpec
    cfg: SolverConfig

    @cached_property
    def edges(self) -> EdgeSet:
        return build_edge_set(self.grid, self.cfg)

    def with_cfg(self, cfg: SolverConfig) -> "MFGProblem":
        out = MFGProblem(self.grid, self.lagrangian, self.coupling, cfg)
        if (cfg.tau, cfg.window_D) == (self.cfg.tau, self.cfg.window_D) and "edges" in self.__dict__:
            out.__dict__["edges"] = self.edges
        return out


@dataclass(frozen=True, eq=False)
class Response:
    mu: EdgeMeasure
    m: GridMeasure
    wk: WeakKamSolution
    table: ActionTable


def best_response(m: GridMeasure, ctx: MFGProblem) -> Response:
    table = build_action_table(ctx.edges, ctx.lagrangian, ctx.coupling, m)
    wk = solve_weak_kam(table, ctx.cfg)
    mu = min_holonomic_measure(table, wk.critical_cycle)
    return Response(mu, project_measure(mu), wk, table)


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    m_star: GridMeasure
    mu_star: EdgeMeasure
    wk: WeakKamSolution
    table: ActionTable
    iterations: int
    d1_history: list = field(default_factory=list)
    converged: bool = False
    d1_final: float = np.inf
    probes: int = 0

    @property
    def lbar(self) -> float:
        return self.wk.lbar

    @property
    def c_est(self) -> float:
        return 0.0 - self.wk.lbar  # no negative zero


def solve_fixed_point(m0: GridMeasure, ctx: MFGProblem, cfg: SolverConfig | None = None
                      ) -> FixedPointResult:
    """Damped iteration toward ``m = Psi(m)``. Never raises on non-convergence.

    On failure the iterate with the smallest residual ``d1(m, Psi(m))`` is
    returned with ``converged=False``.
    """
    if cfg is not None:
        ctx = ctx.with_cfg(cfg)
    cfg = ctx.cfg
    theta, tol = cfg.damping_theta, cfg.fp_tol
    hist: list[float] = []
    best = None
    probes = 0
    probed: dict = {}
    converged = False
    m = m0
    resp = best_response(m, ctx)
    while len(hist) < cfg.max_iters:
        d = wasserstein1(m, resp.m)
        hist.append(d)
        if best is None or d < best[2]:
            best = (m, resp, d)
        if d <= tol:
            converged = True
            break
        if cfg.probe_vertices and len(hist) < cfg.max_iters:
            key = resp.wk.critical_cycle  # Psi(m_k) is determined by this cycle
            if key not in probed:
                probes += 1
                cand = best_response(resp.m, ctx)
                probed[key] = (cand, wasserstein1(resp.m, cand.m))
            cand, dp = probed[key]
            if dp <= tol:
                hist.append(dp)
                best = (resp.m, cand, dp)
                converged = True
                break
        m = m.mix(resp.m, theta)
        resp = best_response(m, ctx)
    m_b, r_b, d_b = best
    if not converged:
        logger.info("fixed point not reached in %d iterations; best residual %.3e",
                    len(hist), d_b)
    return FixedPointResult(m_b, r_b.mu, r_b.wk, r_b.table, len(hist), hist, converged, d_b,
                            probes)


def multi_start(ctx: MFGProblem, n_random: int = 3, seed: int | None = None):
    """Fixed points from a uniform start and Dirac starts at random nodes."""
    rng = np.random.default_rng(ctx.cfg.rng_seed if seed is None else seed)
    starts = [GridMeasure.uniform(ctx.grid)]
    starts += [GridMeasure.dirac(ctx.grid, int(i))
               for i in rng.choice(ctx.grid.size, size=n_random, replace=False)]
    return [solve_fixed_point(s, ctx) for s in starts]


# ---------------------------------------------------------------------------
# residuals


def legendre_gradient(wk: WeakKamSolution, table: ActionTable) -> np.ndarray:
    """Per-node momentum ``p(y) = L_v(x*, (y - x*) / tau)`` along the minimizing in-edge."""
    es = table.edges
    e = np.asarray(wk.argmin_edge)
    xs = es.grid.coords(es.src[e])
    return np.asarray(table.lagrangian.L_v(xs, es.vel[e]), dtype=float).reshape(-1, es.grid.dim)


@dataclass(frozen=True)
class ResidualReport:
    residual_HJ: float
    residual_continuity: float
    residual_continuity_edge: float
    closedness: float
    closedness_discrete: float
    mass_defect: float
    order: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _divergence_battery(x, w, vfield, dim, order):
    """``max_f |sum_i w_i Df(x_i) . vfield_i|`` over cos/sin modes of order <= ``order``."""
    ks = probe_modes(dim, order).astype(float)
    th = 2 * np.pi * x @ ks.T
    kv = 2 * np.pi * vfield @ ks.T
    vals = np.concatenate([w @ (-np.sin(th) * kv), w @ (np.cos(th) * kv)])
    return float(np.max(np.abs(vals)))


def mfg_residuals(res: FixedPointResult, ctx: MFGProblem, order: int | None = None
                  ) -> ResidualReport:
    order = ctx.cfg.fourier_test_order if order is None else order
    grid = ctx.grid
    table = res.table
    xs = grid.coords()
    p = legendre_gradient(res.wk, table)
    lag = ctx.lagrangian
    F = np.asarray(ctx.coupling.values(xs, res.m_star), dtype=float)
    hj = np.abs(lag.H(xs, p) - F - res.c_est)
    sup = res.m_star.support()
    q = np.asarray(lag.H_p(xs[sup], p[sup]), dtype=float).reshape(-1, grid.dim)
    cont = _divergence_battery(xs[sup], res.m_star.weights[sup], q, grid.dim, order)
    cont_edge, disc = closedness_residual(res.mu_star, order)
    return ResidualReport(
        residual_HJ=float(hj.max()),
        residual_continuity=cont,
        residual_continuity_edge=cont_edge,
        closedness=cont_edge,
        closedness_discrete=disc,
        mass_defect=float(abs(res.m_star.weights.sum() - 1.0)),
        order=int(order),
    )


def certificates(wk: WeakKamSolution, table: ActionTable, mu: EdgeMeasure) -> dict:
    """Sub-action, holonomy and contact-set checks with their recorded tolerances."""
    sub = verify_subaction(wk, table)
    hol = holonomy_residual(mu)
    gaps = contact_gaps(wk, table)[mu.support]
    contact = float(gaps.max()) if len(gaps) else 0.0
    hits = window_hits(wk, table)
    return {
        "subaction_violation": sub,
        "subaction_ok": bool(sub <= SUBACTION_TOL),
        "holonomy_residual": hol,
        "holonomy_ok": bool(hol <= HOLONOMY_TOL),
        "support_contact_gap": contact,
        "support_in_contact_set": bool(contact <= CONTACT_TOL),
        "window_hits": hits,
        "window_ok": bool(hits == 0),
    }
