"""Holonomic (circulation) measures on the edge graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action import ActionTable, EdgeSet
from .fourier import probe_modes
from .model import GridMeasure
from .weakkam import cycle_edges, effective_constant_karp


@dataclass(frozen=True, eq=False)
class EdgeMeasure:
    """Probability weights on the edges ``(x, v)`` of an edge set."""

    edges: EdgeSet
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != self.edges.E:
            raise ValueError(f"expected {self.edges.E} edge weights, got {w.shape[0]}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("edge weights must be finite and nonnegative")
        s = w.sum()
        if s <= 0:
            raise ValueError("edge measure must have positive mass")
        w = w / s
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def on_edges(cls, edges: EdgeSet, ids, mass=None) -> "EdgeMeasure":
        w = np.zeros(edges.E)
        ids = np.asarray(ids, dtype=np.int64)
        np.add.at(w, ids, 1.0 if mass is None else np.asarray(mass, dtype=float))
        return cls(edges, w)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)


def min_holonomic_measure(table: ActionTable, cycle=None) -> EdgeMeasure:
    """Uniform measure on a minimum-mean cycle: a vertex of the circulation LP."""
    if cycle is None:
        _, cycle = effective_constant_karp(table)
    return EdgeMeasure.on_edges(table.edges, cycle_edges(table, cycle))


def node_balance(mu: EdgeMeasure) -> np.ndarray:
    es = mu.edges
    n = es.grid.size
    inflow = np.bincount(es.tgt, weights=mu.weights, minlength=n)
    outflow = np.bincount(es.src, weights=mu.weights, minlength=n)
    return inflow - outflow


def holonomy_residual(mu: EdgeMeasure) -> float:
    return float(np.max(np.abs(node_balance(mu))))


def project_measure(mu: EdgeMeasure) -> GridMeasure:
    es = mu.edges
    return GridMeasure(es.grid, np.bincount(es.src, weights=mu.weights, minlength=es.grid.size))


def measure_action(mu: EdgeMeasure, table: ActionTable) -> float:
    if mu.edges is not table.edges:
        raise ValueError("edge measure and action table use different edge sets")
    return float(np.dot(mu.weights, table.cost) / table.tau)


def closedness_residual(mu: EdgeMeasure, order: int) -> tuple[float, float]:
    """Max over trig test functions of order <= ``order`` of ``|int v . Dphi dmu|``.

    Also returns the same maximum for the difference quotient
    ``(phi(x + tau v) - phi(x)) / tau``, which vanishes for any holonomic
    measure; the gap between the two isolates the time-step error.
    """
    es = mu.edges
    sup = mu.support
    w = mu.weights[sup]
    x = es.grid.coords(es.src[sup])
    y = es.grid.coords(es.tgt[sup])
    v = es.vel[sup]
    ks = probe_modes(es.grid.dim, order).astype(float)
    thx = 2 * np.pi * x @ ks.T  # (S, K)
    thy = 2 * np.pi * y @ ks.T
    kv = 2 * np.pi * v @ ks.T
    # phi = cos: v.Dphi = -sin * kv ; phi = sin: v.Dphi = cos * kv
    cont = np.concatenate([w @ (-np.sin(thx) * kv), w @ (np.cos(thx) * kv)])
    disc = np.concatenate([w @ (np.cos(thy) - np.cos(thx)), w @ (np.sin(thy) - np.sin(thx))])
    disc = disc / es.tau
    return float(np.max(np.abs(cont))), float(np.max(np.abs(disc)))
