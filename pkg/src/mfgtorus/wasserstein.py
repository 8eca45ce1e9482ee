"""Exact Kantorovich-Rubinstein (order-1 Wasserstein) distance on the torus grid.

1D uses the circle formula: with ``D`` the cumulative difference of the
two measures,

    W1 = min_alpha  h * sum_i |D_i - alpha|

and the minimizing shift is a median of ``D``.

2D solves the transportation problem between the positive and negative
parts of ``m1 - m2`` with geodesic (flat-torus Euclidean) ground cost by
successive shortest paths with node potentials.
"""

from __future__ import annotations

import heapq

import numba
import numpy as np

from .model import GridMeasure, wrap_displacement

MASS_EPS = 1e-15


def wasserstein1(m1: GridMeasure, m2: GridMeasure) -> float:
    if m1.grid != m2.grid:
        raise ValueError(f"measures live on different grids: {m1.grid} vs {m2.grid}")
    if m1.grid.dim == 1:
        return circle_w1(m1.weights, m2.weights)
    return _w1_flow(m1, m2)


def circle_w1(w1: np.ndarray, w2: np.ndarray) -> float:
    n = len(w1)
    D = np.cumsum(np.asarray(w1, dtype=float) - np.asarray(w2, dtype=float))
    alpha = np.median(D)
    return float(np.abs(D - alpha).sum() / n)


def _w1_flow(m1: GridMeasure, m2: GridMeasure) -> float:
    diff = m1.weights - m2.weights
    src = np.flatnonzero(diff > MASS_EPS)
    dst = np.flatnonzero(diff < -MASS_EPS)
    if len(src) == 0 or len(dst) == 0:
        return 0.0
    supply = diff[src].copy()
    demand = -diff[dst].copy()
    # balance roundoff so total supply == total demand
    gap = supply.sum() - demand.sum()
    if gap > 0:
        supply[np.argmax(supply)] -= gap
    else:
        demand[np.argmax(demand)] += gap
    cost = transport_cost_matrix(m1.grid.coords(src), m1.grid.coords(dst))
    flow = ssp_transport(supply, demand, cost)
    return float((flow * cost).sum())


def transport_cost_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    d = wrap_displacement(ys[None, :, :] - xs[:, None, :])
    return np.sqrt(np.sum(d * d, axis=-1))


def ssp_transport(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Min-cost transport plan by successive shortest paths.

    ``cost`` must be nonnegative. Returns the flow matrix of shape
    ``(len(supply), len(demand))``.
    """
    return _ssp(
        np.ascontiguousarray(supply, dtype=np.float64),
        np.ascontiguousarray(demand, dtype=np.float64),
        np.ascontiguousarray(cost, dtype=np.float64),
    )


@numba.njit(cache=True)
def _ssp(supply, demand, cost):
    S, T = cost.shape
    # node ids: 0 = source, 1..S supply, S+1..S+T demand, S+T+1 = sink
    V = S + T + 2
    sink = V - 1
    flow = np.zeros((S, T))
    rem_s = supply.copy()
    rem_t = demand.copy()
    pot = np.zeros(V)
    dist = np.empty(V)
    parent = np.empty(V, dtype=np.int64)
    done = np.empty(V, dtype=np.bool_)
    total = supply.sum()
    eps = 1e-15 * max(1.0, total)
    for _ in range(100 * (S + T) + 100):
        if rem_s.sum() <= eps:
            break
        dist[:] = np.inf
        parent[:] = -1
        done[:] = False
        dist[0] = 0.0
        heap = [(0.0, 0)]
        while len(heap) > 0:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == 0:
                for i in range(S):
                    if rem_s[i] > eps and not done[1 + i]:
                        nd = d + pot[0] - pot[1 + i]
                        if nd < dist[1 + i]:
                            dist[1 + i] = nd
                            parent[1 + i] = 0
                            heapq.heappush(heap, (nd, 1 + i))
            elif u <= S:
                i = u - 1
                for j in range(T):
                    v = 1 + S + j
                    if done[v]:
                        continue
                    nd = d + cost[i, j] + pot[u] - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        parent[v] = u
                        heapq.heappush(heap, (nd, v))
            elif u < sink:
                j = u - 1 - S
                for i in range(S):
                    if flow[i, j] > eps and not done[1 + i]:
                        v = 1 + i
                        nd = d - cost[i, j] + pot[u] - pot[v]
                        if nd < dist[v]:
                            dist[v] = nd
                            parent[v] = u
                            heapq.heappush(heap, (nd, v))
                if rem_t[j] > eps:
                    nd = d + pot[u] - pot[sink]
                    if nd < dist[sink]:
                        dist[sink] = nd
                        parent[sink] = u
                        heapq.heappush(heap, (nd, sink))
        if not np.isfinite(dist[sink]):
            break
        dt = dist[sink]
        for v in range(V):
            pot[v] += min(dist[v], dt)
        # bottleneck along the path
        v = parent[sink]
        bott = rem_t[v - 1 - S]
        while True:
            u = parent[v]
            if u == 0:
                bott = min(bott, rem_s[v - 1])
                break
            if u > S:  # reverse arc demand -> supply
                bott = min(bott, flow[v - 1, u - 1 - S])
            v = u
        # augment
        v = parent[sink]
        rem_t[v - 1 - S] -= bott
        while True:
            u = parent[v]
            if u == 0:
                rem_s[v - 1] -= bott
                break
            if u <= S:
                flow[u - 1, v - 1 - S] += bott
            else:
                flow[v - 1, u - 1 - S] -= bott
            v = u
    return flow
