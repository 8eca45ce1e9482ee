"""Discrete Lax-Oleinik operator, effective constant and weak-KAM potentials.

The effective constant is the minimum cycle mean of the action graph
(Karp's recurrence); a potential ``u`` is the min-plus eigenvector built
from shortest reduced-cost walks out of the critical nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .action import ActionTable
from .model import SolverConfig

logger = logging.getLogger(__name__)

FIXPOINT_TOL = 1e-8


class WeakKamError(RuntimeError):
    """The computed potential fails the Lax-Oleinik fixed-point identity."""


@dataclass(frozen=True, eq=False)
class WeakKamSolution:
    u: np.ndarray
    abar: float
    tau: float
    argmin: np.ndarray  # minimizing source node per target
    argmin_edge: np.ndarray
    critical_cycle: tuple[int, ...]
    fixpoint_residual: float

    @property
    def lbar(self) -> float:
        return self.abar / self.tau


def lax_oleinik_apply(phi, table: ActionTable):
    """``(T phi)(y) = min_x phi(x) + A(x, y)`` and the minimizing sources."""
    es = table.edges
    out, arg = _kernels.minplus_apply(es.indptr, es.src, table.cost, np.asarray(phi, dtype=float))
    return out, es.src[arg]


def _apply_edges(phi, table: ActionTable):
    es = table.edges
    return _kernels.minplus_apply(es.indptr, es.src, table.cost, np.asarray(phi, dtype=float))


def lax_oleinik_power(phi, table: ActionTable, steps: int) -> np.ndarray:
    es = table.edges
    return _kernels.minplus_power(es.indptr, es.src, table.cost,
                                  np.asarray(phi, dtype=float), int(steps))


def _walk_cycles(nodes, edges):
    """Split a walk (node list, edge list) into its simple cycles."""
    cycles = []
    stack_nodes, stack_edges = [], []
    pos = {}
    for i, v in enumerate(nodes):
        if v in pos:
            j = pos[v]
            cyc_nodes = stack_nodes[j:]
            cyc_edges = stack_edges[j:]
            cycles.append((cyc_nodes, cyc_edges))
            for w in cyc_nodes[1:]:
                del pos[w]
            del stack_nodes[j + 1:]
            del stack_edges[j:]
        else:
            pos[v] = len(stack_nodes)
            stack_nodes.append(v)
        if i < len(edges):
            stack_edges.append(edges[i])
    return cycles


def _walk_best_cycle(table: ActionTable, P, k: int, head: int):
    """Best simple cycle inside the optimal k-edge walk ending at ``head``."""
    es = table.edges
    walk_nodes = [head]
    walk_edges = []
    v = head
    for level in range(k, 0, -1):
        e = int(P[level, v])
        walk_edges.append(e)
        v = int(es.src[e])
        walk_nodes.append(v)
    walk_nodes.reverse()
    walk_edges.reverse()
    best = None
    for cyc_nodes, cyc_edges in _walk_cycles(walk_nodes, walk_edges):
        mean = float(np.sum(table.cost[cyc_edges]) / len(cyc_edges))
        key = (mean, len(cyc_nodes), min(cyc_nodes))
        if best is None or key < best[0]:
            best = (key, cyc_nodes)
    if best is None:
        return None
    (mean, _, _), cyc = best
    i0 = int(np.argmin(cyc))
    return mean, tuple(int(c) for c in (cyc[i0:] + cyc[:i0]))


def effective_constant_karp(table: ActionTable, early_exit: bool = True):
    """Minimum mean cycle of the action graph.

    Returns ``(abar, cycle)`` where ``cycle`` lists the nodes of one
    minimizing cycle, rotated to start at its smallest node. ``abar`` is
    the exact mean of that cycle.

    With ``early_exit`` the recurrence is stopped at a checkpoint level
    ``k = 16, 32, ...`` once the best cycle of the cheapest k-edge walk is
    certified optimal: Bellman relaxation of ``A - mean`` settles within
    ``k`` sweeps, i.e. no cycle is cheaper (up to roundoff). Otherwise all
    ``N`` levels are filled and the cycle is recovered from the smallest
    head attaining Karp's min-max ratio.
    """
    es = table.edges
    n = es.grid.size
    D = np.empty((n + 1, n))
    P = np.empty((n + 1, n), dtype=np.int32)
    D[0, :] = 0.0
    P[0, :] = -1
    scale = 1.0 + float(np.abs(table.cost).max())
    done = 0
    if early_exit:
        k = 16
        while k < n:
            _kernels.karp_levels(es.indptr, es.src, table.cost, D, P, done + 1, k + 1)
            done = k
            cand = _walk_best_cycle(table, P, k, int(np.argmin(D[k])))
            if cand is not None:
                reduced = np.ascontiguousarray(table.cost - cand[0])
                phi = np.zeros(n)
                if _kernels.relax_to_fixpoint(es.indptr, es.src, reduced, phi,
                                              1e-14 * scale, k) > 0:
                    return cand
            k *= 2
    _kernels.karp_levels(es.indptr, es.src, table.cost, D, P, done + 1, n + 1)
    ratios = _kernels.karp_ratios(D)
    lam = float(ratios.min())
    ties = np.flatnonzero(ratios <= lam + 1e-12 * scale)
    mean, cyc = _walk_best_cycle(table, P, n, int(ties[0]))
    if abs(mean - lam) > 1e-9 * scale:
        logger.warning("Karp value %.17g and recovered cycle mean %.17g disagree", lam, mean)
    return mean, cyc


def cycle_edges(table: ActionTable, cycle) -> np.ndarray:
    cyc = np.asarray(cycle, dtype=np.int64)
    ids = table.edges.edge_index(cyc, np.roll(cyc, -1))
    if np.any(ids < 0):
        raise ValueError("cycle uses a pair that is not an edge")
    return ids


def _relax_from(table: ActionTable, reduced, sources, eps) -> np.ndarray:
    es = table.edges
    dist = np.full(es.grid.size, np.inf)
    dist[np.asarray(sources, dtype=np.int64)] = 0.0
    rounds = _kernels.relax_to_fixpoint(es.indptr, es.src, reduced, dist, eps, es.grid.size + 5)
    if rounds < 0 or not np.all(np.isfinite(dist)):
        raise WeakKamError("Bellman relaxation did not settle; graph not strongly connected?")
    return dist


def critical_nodes(table: ActionTable, abar: float, phi, tol: float) -> np.ndarray:
    """Nodes lying on some cycle of mean ``abar``.

    ``phi`` must be a sub-action. Reduced costs are then nonnegative, so a
    cycle has mean ``abar`` iff all its edges are tight; these are the tight
    self-loops plus the nontrivial strong components of the tight subgraph.
    """
    es = table.edges
    gap = table.cost - abar + phi[es.src] - phi[es.tgt]
    tight = gap <= tol
    n = es.grid.size
    s, t = es.src[tight], es.tgt[tight]
    loops = np.unique(s[s == t])
    g = coo_matrix((np.ones(len(s)), (s, t)), shape=(n, n)).tocsr()
    _, labels = connected_components(g, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=labels.max() + 1)
    return np.union1d(loops, np.flatnonzero(sizes[labels] > 1))


def solve_weak_kam(table: ActionTable, cfg: SolverConfig, karp=None) -> WeakKamSolution:
    """Min-plus eigenvector ``u = min_g d(g, .)`` over all critical nodes ``g``.

    ``d`` is the shortest-walk distance for the reduced costs ``A - abar``.
    """
    abar, cycle = effective_constant_karp(table) if karp is None else karp
    reduced = np.ascontiguousarray(table.cost - abar)
    scale = 1.0 + float(np.abs(table.cost).max())
    eps = 1e-14 * scale
    first = _relax_from(table, reduced, list(cycle), eps)
    crit = critical_nodes(table, abar, first, 1e-12 * scale)
    dist = _relax_from(table, reduced, np.union1d(crit, list(cycle)), eps)
    u = dist - dist[cfg.anchor_node]
    Tu, arg = _apply_edges(u, table)
    resid = float(np.max(np.abs(u + abar - Tu)))
    if resid > FIXPOINT_TOL:
        raise WeakKamError(f"Lax-Oleinik identity violated by {resid:.3e}")
    for arr in (u, arg):
        arr.setflags(write=False)
    es = table.edges
    argmin = es.src[arg]
    argmin.setflags(write=False)
    return WeakKamSolution(u, float(abar), es.tau, argmin, arg, tuple(cycle), resid)


def verify_subaction(sol: WeakKamSolution, table: ActionTable, u=None) -> float:
    """``max_e (abar - A(x, y) - u(x) + u(y))``; nonpositive for a sub-action."""
    es = table.edges
    u = sol.u if u is None else np.asarray(u, dtype=float)
    return float(np.max(sol.abar - table.cost - u[es.src] + u[es.tgt]))


def contact_gaps(sol: WeakKamSolution, table: ActionTable) -> np.ndarray:
    es = table.edges
    return table.cost + sol.u[es.src] - sol.u[es.tgt] - sol.abar


def extract_N_tau(sol: WeakKamSolution, table: ActionTable, tol: float = 1e-8) -> np.ndarray:
    """Edge ids on which the sub-action inequality is tight up to ``tol``."""
    ids = np.flatnonzero(contact_gaps(sol, table) <= tol)
    if len(ids) == 0:
        raise WeakKamError("contact set is empty; the Mather set must lie inside it")
    return ids


def discrete_lipschitz(u, table: ActionTable) -> float:
    es = table.edges
    d = es.disp_norm
    mask = d > 0
    return float(np.max(np.abs(u[es.tgt[mask]] - u[es.src[mask]]) / d[mask]))


def window_hits(sol: WeakKamSolution, table: ActionTable) -> int:
    """Number of nodes whose minimizing edge lies on the window boundary."""
    return int(np.count_nonzero(table.edges.boundary[sol.argmin_edge]))


def relative_value_iteration(table: ActionTable, iters: int, anchor: int = 0, u0=None):
    """Iterate ``u <- T u - (T u)(anchor)``.

    Returns ``(u, lo, hi)`` where ``[lo, hi]`` brackets the effective
    constant via the last increments ``T u - u``.
    """
    u = np.zeros(table.edges.grid.size) if u0 is None else np.asarray(u0, dtype=float).copy()
    lo = hi = np.nan
    for _ in range(int(iters)):
        Tu, _arg = _apply_edges(u, table)
        inc = Tu - u
        lo, hi = float(inc.min()), float(inc.max())
        u = Tu - Tu[anchor]
    return u, lo, hi
