"""Bounded-window edge sets, one-step action tables and refined (sub-stepped) actions."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (
    ConfigError,
    CouplingSpec,
    GridMeasure,
    LagrangianSpec,
    SolverConfig,
    TorusGrid,
    torus_displacement,
)

logger = logging.getLogger(__name__)

_WINDOW_SLACK = 1e-12


def window_offsets(grid: TorusGrid, radius: float) -> np.ndarray:
    """Integer offsets ``o`` in ``[-n/2, n/2)^d`` with ``|o h| <= radius``."""
    half = grid.n // 2
    axis = np.arange(-half, grid.n - half)
    if grid.dim == 1:
        offs = axis[:, None]
    else:
        offs = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    keep = np.linalg.norm(offs * grid.h, axis=1) <= radius * (1 + _WINDOW_SLACK)
    return offs[keep]


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Edges ``x -> y`` with ``|torus_displacement(x, y)| <= tau * window_D``.

    Stored CSR by target; within a target, sources ascend.
    """

    grid: TorusGrid
    tau: float
    window_D: float
    indptr: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    offsets: np.ndarray  # integer displacement in lattice units, (E, d)
    truncated: bool  # window smaller than the torus

    @property
    def E(self) -> int:
        return len(self.src)

    @property
    def disp(self) -> np.ndarray:
        return self.offsets * self.grid.h

    @property
    def vel(self) -> np.ndarray:
        return self.disp / self.tau

    @property
    def disp_norm(self) -> np.ndarray:
        return np.linalg.norm(self.disp, axis=1)

    @property
    def boundary(self) -> np.ndarray:
        """Edges in the outermost lattice shell of a truncated window."""
        if not self.truncated:
            return np.zeros(self.E, dtype=bool)
        return self.disp_norm > self.tau * self.window_D - self.grid.h

    def edge_index(self, x, y) -> np.ndarray:
        """Edge ids for (source, target) pairs; ``-1`` where absent."""
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        out = np.full(len(x), -1, dtype=np.int64)
        for i, (a, b) in enumerate(zip(x, y)):
            lo, hi = self.indptr[b], self.indptr[b + 1]
            j = lo + np.searchsorted(self.src[lo:hi], a)
            if j < hi and self.src[j] == a:
                out[i] = j
        return out

    def self_edges(self) -> np.ndarray:
        return self.edge_index(np.arange(self.grid.size), np.arange(self.grid.size))


def build_edge_set(grid: TorusGrid, cfg: SolverConfig) -> EdgeSet:
    cfg.check_grid(grid)
    radius = cfg.tau * cfg.window_D
    offs = window_offsets(grid, radius)
    K = len(offs)
    tgt_mi = grid.multi_index(np.arange(grid.size))
    src_flat = grid.flat_index(tgt_mi[:, None, :] - offs[None, :, :])  # (N, K)
    order = np.argsort(src_flat, axis=1, kind="stable")
    src = np.take_along_axis(src_flat, order, axis=1).reshape(-1)
    offsets = offs[order].reshape(-1, grid.dim)
    tgt = np.repeat(np.arange(grid.size), K)
    indptr = np.arange(grid.size + 1, dtype=np.int64) * K
    max_disp = 0.5 * np.sqrt(grid.dim)
    truncated = bool(K < grid.size) or radius < max_disp
    es = EdgeSet(grid, cfg.tau, cfg.window_D, indptr, src.astype(np.int64), tgt,
                 offsets.astype(np.int64), truncated)
    for arr in (es.indptr, es.src, es.tgt, es.offsets):
        arr.setflags(write=False)
    return es


@dataclass(frozen=True, eq=False)
class ActionTable:
    """Per-edge cost ``tau * (L(x, (y - x) / tau) + F(x, m))``."""

    edges: EdgeSet
    cost: np.ndarray
    measure: GridMeasure
    lagrangian: LagrangianSpec
    coupling: CouplingSpec
    F_nodes: np.ndarray

    @property
    def tau(self) -> float:
        return self.edges.tau

    def shifted(self, c: float) -> "ActionTable":
        return ActionTable(self.edges, self.cost + c, self.measure, self.lagrangian,
                           self.coupling, self.F_nodes)


def build_action_table(edges: EdgeSet, lag: LagrangianSpec, cpl: CouplingSpec,
                       m: GridMeasure, tau: float | None = None) -> ActionTable:
    if tau is None:
        tau = edges.tau
    if abs(tau - edges.tau) > 0:
        raise ValueError(f"tau={tau} does not match the edge set's tau={edges.tau}")
    grid = edges.grid
    if m.grid != grid or lag.dim != grid.dim:
        raise ValueError("lagrangian, measure and edge set must share one grid")
    xs = grid.coords()
    F_nodes = np.asarray(cpl.values(xs, m), dtype=float)  # once per source node
    cost = tau * (lag.L(xs[edges.src], edges.vel) + F_nodes[edges.src])
    cost.setflags(write=False)
    F_nodes.setflags(write=False)
    return ActionTable(edges, cost, m, lag, cpl, F_nodes)


def export_action_csv(table: ActionTable, path) -> None:
    import csv

    es = table.edges
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target"] + [f"v{i}" for i in range(es.grid.dim)] + ["cost"])
        vel = es.vel
        for e in range(es.E):
            w.writerow([int(es.src[e]), int(es.tgt[e]), *map(float, vel[e]), float(table.cost[e])])


# ---------------------------------------------------------------------------
# refined action: k-fold sub-stepping restricted to a lattice region


def _box_region(grid: TorusGrid, reach: float):
    R = int(np.ceil(reach / grid.h))
    axis = np.arange(-R, R + 1)
    if grid.dim == 1:
        pts = axis[:, None]
    else:
        pts = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    return R, pts


def _substep_operator(grid, x, pts, inside, R, sub_tau, sub_radius, lag, cpl, m):
    """Neighbor table and per-(point, step) costs on the lifted lattice box."""
    axis = np.arange(-int(np.floor(sub_radius / grid.h)), int(np.floor(sub_radius / grid.h)) + 1)
    if grid.dim == 1:
        qs = axis[:, None]
    else:
        qs = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    qs = qs[np.linalg.norm(qs * grid.h, axis=1) <= sub_radius * (1 + _WINDOW_SLACK)]
    side = 2 * R + 1
    strides = np.array([side ** (grid.dim - 1 - i) for i in range(grid.dim)])

    def flat(p):
        return (p + R) @ strides

    M = len(pts)
    src_pts = pts[:, None, :] - qs[None, :, :]  # predecessor of b along step q
    ok = np.all(np.abs(src_pts) <= R, axis=-1)
    nbr = np.where(ok, flat(np.clip(src_pts, -R, R)), -1)
    nbr = np.where(ok & inside[np.clip(nbr, 0, M - 1)], nbr, -1)
    xs = np.mod(grid.coords(x) + pts * grid.h, 1.0)  # lifted points folded to the torus
    F = np.asarray(cpl.values(xs, m), dtype=float)
    vel = (qs * grid.h) / sub_tau
    L = lag.L(xs[:, None, :], vel[None, :, :])
    cost = sub_tau * (L + F[:, None])
    return np.ascontiguousarray(nbr, dtype=np.int64), np.ascontiguousarray(cost), qs


def _segment_distance(pts_h, end_h):
    """Distance of lifted points to the segment from 0 to ``end_h``."""
    L2 = float(end_h @ end_h)
    if L2 == 0:
        return np.linalg.norm(pts_h, axis=1)
    t = np.clip(pts_h @ end_h / L2, 0.0, 1.0)
    return np.linalg.norm(pts_h - t[:, None] * end_h[None, :], axis=1)


def refined_actions_from(x: int, targets, tau: float, k: int, lag: LagrangianSpec,
                         cpl: CouplingSpec, m: GridMeasure, window_D: float,
                         sub_window: float | None = None, tube: str = "union") -> np.ndarray:
    """Sub-stepped actions from node ``x`` to each target node.

    Minimizes the sum of ``k`` one-step actions at step ``tau / k`` over
    lattice chains (in the lifted lattice around ``x``) that stay within
    ``tau * window_D`` of the straight segments to the targets. With
    ``tube="union"`` a single sweep serves all targets over the union of
    their tubes.
    """
    grid = m.grid
    if k < 1 or (k & (k - 1)):
        raise ValueError(f"k must be a power of two, got {k}")
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if tube != "union" and len(targets) > 1:
        return np.array([refined_actions_from(x, [t], tau, k, lag, cpl, m, window_D,
                                              sub_window)[0] for t in targets])
    radius = tau * window_D
    ends = torus_displacement(np.full(len(targets), x), targets, grid)
    if np.any(np.linalg.norm(ends, axis=1) > radius * (1 + _WINDOW_SLACK)):
        raise ValueError("target displacement outside the window tau*window_D")
    sub_tau = tau / k
    sub_radius = sub_tau * (2 * window_D if sub_window is None else sub_window)
    if sub_radius < 2 * grid.h and k > 1:
        raise ConfigError(
            f"grid too coarse for k={k}: sub-step reach {sub_radius:g} < 2h = {2 * grid.h:g}")
    R, pts = _box_region(grid, 2 * radius)
    pts_h = pts * grid.h
    d_min = np.full(len(pts), np.inf)
    for end in ends:
        d_min = np.minimum(d_min, _segment_distance(pts_h, end))
    inside = d_min <= radius * (1 + _WINDOW_SLACK)
    nbr, cost, _ = _substep_operator(grid, x, pts, inside, R, sub_tau, sub_radius, lag, cpl, m)
    start = int(np.flatnonzero(np.all(pts == 0, axis=1))[0])
    val = _kernels.substep_dp(nbr, cost, start, k)
    side = 2 * R + 1
    strides = np.array([side ** (grid.dim - 1 - i) for i in range(grid.dim)])
    end_idx = (np.rint(ends / grid.h).astype(np.int64) + R) @ strides
    return val[end_idx]


def refined_action(x: int, y: int, tau: float, k: int, lag: LagrangianSpec,
                   cpl: CouplingSpec, m: GridMeasure, window_D: float,
                   sub_window: float | None = None) -> float:
    """k-fold sub-stepped action from ``x`` to ``y`` (approximates the minimal action)."""
    return float(refined_actions_from(x, [y], tau, k, lag, cpl, m, window_D, sub_window)[0])


def one_step_action(x: int, y: int, tau: float, lag: LagrangianSpec, cpl: CouplingSpec,
                    m: GridMeasure) -> float:
    grid = m.grid
    d = torus_displacement(x, y, grid)
    xs = grid.coords(np.array([x]))
    return float(tau * (lag.L(xs, (d / tau)[None, :]) + cpl.values(xs, m))[0])


def refinement_gaps(tau: float, k: int, lag: LagrangianSpec, cpl: CouplingSpec, m: GridMeasure,
                    window_D: float, sources, target_stride: int = 1, k_oracle: int | None = None):
    """Max over window edges from ``sources`` of ``|refined(k) - one-step|``.

    With ``k_oracle`` also returns the max of ``|refined(k) - refined(k_oracle)|``
    (``nan`` otherwise), which bounds how far the k-fold value is from the
    converged minimal action.
    """
    grid = m.grid
    offs = window_offsets(grid, tau * window_D)[::max(1, int(target_stride))]
    gap, osc = 0.0, np.nan if k_oracle is None else 0.0
    for x in np.atleast_1d(sources):
        x = int(x)
        tg = grid.flat_index(grid.multi_index(np.array([x]))[0] + offs)
        ref = refined_actions_from(x, tg, tau, k, lag, cpl, m, window_D)
        one = tau * (lag.L(np.repeat(grid.coords(np.array([x])), len(offs), axis=0),
                           offs * grid.h / tau) + cpl.values(grid.coords(np.array([x])), m)[0])
        gap = max(gap, float(np.max(np.abs(ref - one))))
        if k_oracle is not None:
            orc = refined_actions_from(x, tg, tau, k_oracle, lag, cpl, m, window_D)
            osc = max(osc, float(np.max(np.abs(ref - orc))))
    return gap, osc
