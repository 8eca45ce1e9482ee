"""Compiled min-plus kernels over edge lists stored CSR-by-target.

All loops run in a fixed order so results do not depend on scheduling.
Ties resolve to the first edge in storage order, i.e. the smallest source
index within a target's segment.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def minplus_apply(indptr, src, cost, phi):
    n = indptr.shape[0] - 1
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    for y in range(n):
        best = np.inf
        be = -1
        for e in range(indptr[y], indptr[y + 1]):
            val = phi[src[e]] + cost[e]
            if val < best:
                best = val
                be = e
        out[y] = best
        arg[y] = be
    return out, arg


@numba.njit(cache=True)
def minplus_power(indptr, src, cost, phi, steps):
    cur = phi.copy()
    for _ in range(steps):
        cur, _arg = minplus_apply(indptr, src, cost, cur)
    return cur


@numba.njit(cache=True)
def karp_tables(indptr, src, cost):
    """Walk tables ``D[k, v]`` = min cost of a k-edge walk ending at v.

    Walks may start anywhere (virtual zero-cost super source), so ``D[0] = 0``.
    ``P[k, v]`` is the last edge of an optimal walk.
    """
    n = indptr.shape[0] - 1
    D = np.empty((n + 1, n))
    P = np.empty((n + 1, n), dtype=np.int32)
    D[0, :] = 0.0
    P[0, :] = -1
    karp_levels(indptr, src, cost, D, P, 1, n + 1)
    return D, P


@numba.njit(cache=True)
def karp_levels(indptr, src, cost, D, P, k0, k1):
    """Fill levels ``k0 <= k < k1`` of the Karp tables in place."""
    n = indptr.shape[0] - 1
    for k in range(k0, k1):
        for v in range(n):
            best = np.inf
            be = -1
            for e in range(indptr[v], indptr[v + 1]):
                val = D[k - 1, src[e]] + cost[e]
                if val < best:
                    best = val
                    be = e
            D[k, v] = best
            P[k, v] = be


@numba.njit(cache=True)
def karp_ratios(D):
    n = D.shape[1]
    out = np.empty(n)
    for v in range(n):
        mx = -np.inf
        for k in range(n):
            r = (D[n, v] - D[k, v]) / (n - k)
            if r > mx:
                mx = r
        out[v] = mx
    return out


@numba.njit(cache=True)
def relax_to_fixpoint(indptr, src, cost, dist, eps, max_rounds):
    """Gauss-Seidel Bellman relaxation ``dist(y) <- min(dist(y), dist(x) + cost)``.

    Returns the number of sweeps; ``-1`` if ``max_rounds`` was exhausted.
    """
    n = indptr.shape[0] - 1
    for r in range(max_rounds):
        changed = False
        for y in range(n):
            d = dist[y]
            for e in range(indptr[y], indptr[y + 1]):
                val = dist[src[e]] + cost[e]
                if val < d - eps:
                    d = val
            if d < dist[y]:
                dist[y] = d
                changed = True
        if not changed:
            return r + 1
    return -1


@numba.njit(cache=True)
def substep_dp(nbr, cost, start, steps):
    """``steps`` rounds of ``val(b) <- min_q val(nbr[b, q]) + cost[nbr[b, q], q]``."""
    M, S = nbr.shape
    val = np.full(M, np.inf)
    val[start] = 0.0
    new = np.empty(M)
    for _ in range(steps):
        for b in range(M):
            best = np.inf
            for q in range(S):
                a = nbr[b, q]
                if a >= 0:
                    c = val[a] + cost[a, q]
                    if c < best:
                        best = c
            new[b] = best
        val, new = new, val
    return val
