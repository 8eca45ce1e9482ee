"""Domain types: torus grid, Lagrangian and coupling families, measures, solver settings.

Everything here is immutable after construction. Downstream modules only
consume these types.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fourier import FourierSeries


class ConfigError(ValueError):
    """Invalid model or solver configuration."""


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice on the unit torus, ``n`` nodes per axis.

    Flat node index is row-major: ``i = i0 * n + i1`` in 2D.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        return self.n**self.dim

    def multi_index(self, i):
        i = np.asarray(i)
        if self.dim == 1:
            return i[..., None]
        return np.stack(np.divmod(i, self.n), axis=-1)

    def flat_index(self, mi):
        mi = np.mod(np.asarray(mi), self.n)
        if self.dim == 1:
            return mi[..., 0]
        return mi[..., 0] * self.n + mi[..., 1]

    def coords(self, i=None) -> np.ndarray:
        """Coordinates in ``[0, 1)^dim``, shape ``(..., dim)``."""
        if i is None:
            i = np.arange(self.size)
        return self.multi_index(i) * self.h

    def nearest_node(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return int(self.flat_index(np.rint(np.mod(x, 1.0) * self.n).astype(np.int64)))


def torus_displacement(x, y, grid: TorusGrid) -> np.ndarray:
    """Representative of ``y - x`` in ``[-1/2, 1/2)^dim`` for node indices."""
    off = grid.multi_index(y) - grid.multi_index(x)
    half = grid.n // 2
    off = np.mod(off + half, grid.n) - half
    return off * grid.h


def wrap_displacement(d):
    """Map real displacements into ``[-1/2, 1/2)`` componentwise."""
    d = np.asarray(d, dtype=float)
    return d - np.floor(d + 0.5)


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability weights on grid nodes (normalized on construction)."""

    grid: TorusGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != self.grid.size:
            raise ValueError(f"expected {self.grid.size} weights, got {w.shape[0]}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, grid: TorusGrid) -> "GridMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    @classmethod
    def dirac(cls, grid: TorusGrid, node: int) -> "GridMeasure":
        w = np.zeros(grid.size)
        w[node] = 1.0
        return cls(grid, w)

    @classmethod
    def random(cls, grid: TorusGrid, rng: np.random.Generator, sparsity: float = 0.0):
        w = rng.random(grid.size)
        if sparsity > 0:
            w[rng.random(grid.size) < sparsity] = 0.0
            if w.sum() == 0:
                w[rng.integers(grid.size)] = 1.0
        return cls(grid, w)

    def mix(self, other: "GridMeasure", theta: float) -> "GridMeasure":
        return GridMeasure(self.grid, (1 - theta) * self.weights + theta * other.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def support(self, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.weights > tol)


# ---------------------------------------------------------------------------
# Lagrangians


class LagrangianSpec:
    """Tonelli Lagrangian with closed-form Legendre dual.

    Subclasses implement ``L``, ``L_v``, ``H`` and ``H_p`` on arrays of
    points ``x`` of shape ``(..., d)`` and vectors of matching shape.
    """

    family: str
    dim: int

    def L(self, x, v):
        raise NotImplementedError

    def L_v(self, x, v):
        raise NotImplementedError

    def H(self, x, p):
        raise NotImplementedError

    def H_p(self, x, p):
        raise NotImplementedError

    def min_over_v(self, x):
        """``min_v L(x, v)`` pointwise."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Mechanical(LagrangianSpec):
    """``L(x, v) = |v|^2 / 2 - V(x)``, ``H(x, p) = |p|^2 / 2 + V(x)``."""

    potential: FourierSeries
    family: str = field(default="MECHANICAL", init=False)

    @property
    def dim(self) -> int:
        return self.potential.dim

    def L(self, x, v):
        return 0.5 * np.sum(np.square(v), axis=-1) - self.potential(x)

    def L_v(self, x, v):
        return np.array(v, dtype=float, copy=True)

    def H(self, x, p):
        return 0.5 * np.sum(np.square(p), axis=-1) + self.potential(x)

    def H_p(self, x, p):
        return np.array(p, dtype=float, copy=True)

    def min_over_v(self, x):
        return -self.potential(x)

    def to_dict(self):
        return {"family": self.family, "potential": self.potential.to_dict()}


@dataclass(frozen=True)
class QuadraticDrift(LagrangianSpec):
    """``L(x, v) = |v - b(x)|^2 / 2``, ``H(x, p) = |p|^2 / 2 + p . b(x)``."""

    drift: tuple[FourierSeries, ...]
    family: str = field(default="QUADRATIC_DRIFT", init=False)

    def __post_init__(self):
        object.__setattr__(self, "drift", tuple(self.drift))
        if any(b.dim != len(self.drift) for b in self.drift):
            raise ConfigError("drift needs one component per dimension")

    @property
    def dim(self) -> int:
        return len(self.drift)

    def b(self, x):
        return np.stack([c(x) for c in self.drift], axis=-1)

    def L(self, x, v):
        return 0.5 * np.sum(np.square(np.asarray(v) - self.b(x)), axis=-1)

    def L_v(self, x, v):
        return np.asarray(v, dtype=float) - self.b(x)

    def H(self, x, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p, axis=-1) + np.sum(p * self.b(x), axis=-1)

    def H_p(self, x, p):
        return np.asarray(p, dtype=float) + self.b(x)

    def min_over_v(self, x):
        return np.zeros(np.shape(x)[:-1])

    def to_dict(self):
        return {"family": self.family, "drift": [c.to_dict() for c in self.drift]}


def lagrangian_from_dict(dim: int, data: dict) -> LagrangianSpec:
    fam = str(data.get("family", "")).upper()
    if fam == "MECHANICAL":
        return Mechanical(FourierSeries.from_dict(dim, data.get("potential", 0.0)))
    if fam == "QUADRATIC_DRIFT":
        comps = data.get("drift")
        if not isinstance(comps, list) or len(comps) != dim:
            raise ConfigError(f"QUADRATIC_DRIFT needs a list of {dim} drift series")
        return QuadraticDrift(tuple(FourierSeries.from_dict(dim, c) for c in comps))
    raise ConfigError(f"unknown Lagrangian family {data.get('family')!r}")


# ---------------------------------------------------------------------------
# couplings


class CouplingSpec:
    """Mean-field coupling ``F(x, m)``.

    ``values(points, m)`` returns F at each point for a grid measure.
    ``F_inf`` bounds both ``|F|`` and ``|D_x F|``; ``lip_F`` bounds the
    Lipschitz constant with respect to the Kantorovich-Rubinstein distance.
    """

    family: str

    def values(self, x, m: GridMeasure):
        raise NotImplementedError

    def grad(self, x, m: GridMeasure):
        raise NotImplementedError

    @property
    def F_inf(self) -> float:
        raise NotImplementedError

    @property
    def lip_F(self) -> float:
        raise NotImplementedError

    def is_constant_in_x(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroCoupling(CouplingSpec):
    family: str = field(default="ZERO", init=False)

    def values(self, x, m):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x, m):
        return np.zeros(np.shape(x))

    @property
    def F_inf(self):
        return 0.0

    @property
    def lip_F(self):
        return 0.0

    def is_constant_in_x(self):
        return True

    def to_dict(self):
        return {"family": self.family}


@dataclass(frozen=True)
class ScalarMap:
    """``G(z) = z`` or ``G(z) = clip(scale * z + shift, lo, hi)``."""

    kind: str = "identity"
    scale: float = 1.0
    shift: float = 0.0
    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        if self.kind not in ("identity", "clamp"):
            raise ConfigError(f"unknown scalar map {self.kind!r}")
        if self.kind == "clamp" and not self.lo <= self.hi:
            raise ConfigError("clamp requires lo <= hi")

    def __call__(self, z: float) -> float:
        if self.kind == "identity":
            return float(z)
        return float(np.clip(self.scale * z + self.shift, self.lo, self.hi))

    def range_bound(self, z_bound: float) -> float:
        if self.kind == "identity":
            return z_bound
        lo = max(self.lo, -abs(self.scale) * z_bound + self.shift)
        hi = min(self.hi, abs(self.scale) * z_bound + self.shift)
        return max(abs(lo), abs(hi))

    @property
    def lip(self) -> float:
        return 1.0 if self.kind == "identity" else abs(self.scale)

    def to_dict(self):
        if self.kind == "identity":
            return {"kind": "identity"}
        return {"kind": "clamp", "scale": self.scale, "shift": self.shift,
                "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class SeparableCoupling(CouplingSpec):
    """``F(x, m) = f(x) * G(int phi dm)``."""

    f: FourierSeries
    phi: FourierSeries
    G: ScalarMap = ScalarMap()
    declared_F_inf: float | None = None
    declared_lip_F: float | None = None
    family: str = field(default="SEPARABLE", init=False)

    def level(self, m: GridMeasure) -> float:
        return self.G(m.integrate(self.phi(m.grid.coords())))

    def values(self, x, m):
        return self.f(x) * self.level(m)

    def grad(self, x, m):
        return self.f.grad(x) * self.level(m)

    @property
    def F_inf(self):
        if self.declared_F_inf is not None:
            return self.declared_F_inf
        g = self.G.range_bound(self.phi.sup_bound())
        return g * max(self.f.sup_bound(), self.f.grad_bound())

    @property
    def lip_F(self):
        if self.declared_lip_F is not None:
            return self.declared_lip_F
        # |int phi d(m1 - m2)| <= Lip(phi) d1(m1, m2)
        return self.f.sup_bound() * self.G.lip * self.phi.grad_bound()

    def is_constant_in_x(self):
        return self.f.is_constant

    def to_dict(self):
        d = {"family": self.family, "f": self.f.to_dict(), "phi": self.phi.to_dict(),
             "G": self.G.to_dict()}
        if self.declared_F_inf is not None:
            d["F_inf"] = self.declared_F_inf
        if self.declared_lip_F is not None:
            d["lip_F"] = self.declared_lip_F
        return d


@dataclass(frozen=True)
class ConvolutionCoupling(CouplingSpec):
    """``F(x, m) = kappa * sum_j rho(x - x_j) m_j``.

    Evaluated through the Fourier moments of ``m``, which is exact for a
    trigonometric kernel.
    """

    kernel: FourierSeries
    kappa: float = 1.0
    declared_F_inf: float | None = None
    declared_lip_F: float | None = None
    family: str = field(default="CONVOLUTION", init=False)

    def _moments(self, m: GridMeasure):
        th = 2 * np.pi * (m.grid.coords() @ self.kernel.modes.T)
        return m.weights @ np.cos(th), m.weights @ np.sin(th)

    def _convolved(self, m: GridMeasure) -> FourierSeries:
        # cos(k(x - y)) = cos kx cos ky + sin kx sin ky ; sin(k(x - y)) = sin kx cos ky - cos kx sin ky
        C, S = self._moments(m)
        a, b = self.kernel.cos, self.kernel.sin
        return FourierSeries(
            self.kernel.dim,
            self.kappa * self.kernel.const,
            self.kernel.modes,
            self.kappa * (a * C - b * S),
            self.kappa * (a * S + b * C),
        )

    def values(self, x, m):
        return self._convolved(m)(x)

    def grad(self, x, m):
        return self._convolved(m).grad(x)

    @property
    def F_inf(self):
        if self.declared_F_inf is not None:
            return self.declared_F_inf
        return abs(self.kappa) * max(self.kernel.sup_bound(), self.kernel.grad_bound())

    @property
    def lip_F(self):
        if self.declared_lip_F is not None:
            return self.declared_lip_F
        return abs(self.kappa) * self.kernel.grad_bound()

    def is_constant_in_x(self):
        return self.kernel.is_constant or self.kappa == 0

    def to_dict(self):
        d = {"family": self.family, "kappa": self.kappa, "kernel": self.kernel.to_dict()}
        if self.declared_F_inf is not None:
            d["F_inf"] = self.declared_F_inf
        if self.declared_lip_F is not None:
            d["lip_F"] = self.declared_lip_F
        return d


def coupling_from_dict(dim: int, data: dict) -> CouplingSpec:
    fam = str(data.get("family", "")).upper()
    decl = {}
    if "F_inf" in data:
        decl["declared_F_inf"] = float(data["F_inf"])
    if "lip_F" in data:
        decl["declared_lip_F"] = float(data["lip_F"])
    if fam == "ZERO":
        return ZeroCoupling()
    if fam == "SEPARABLE":
        g = dict(data.get("G", {"kind": "identity"}))
        G = ScalarMap(
            kind=g.get("kind", "identity"),
            scale=float(g.get("scale", 1.0)),
            shift=float(g.get("shift", 0.0)),
            lo=float(g.get("lo", -np.inf)),
            hi=float(g.get("hi", np.inf)),
        )
        return SeparableCoupling(
            FourierSeries.from_dict(dim, data.get("f", 0.0)),
            FourierSeries.from_dict(dim, data.get("phi", 1.0)),
            G,
            **decl,
        )
    if fam == "CONVOLUTION":
        return ConvolutionCoupling(
            FourierSeries.from_dict(dim, data.get("kernel", 0.0)),
            float(data.get("kappa", 1.0)),
            **decl,
        )
    raise ConfigError(f"unknown coupling family {data.get('family')!r}")


# ---------------------------------------------------------------------------
# solver settings


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 0.1
    window_D: float = 3.0
    anchor_node: int = 0
    damping_theta: float = 0.5
    fp_tol: float = 1e-4
    wk_tol: float = 1e-9
    max_iters: int = 500
    rng_seed: int = 0
    fourier_test_order: int = 8
    probe_vertices: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.window_D < 1:
            raise ConfigError(f"window_D must be >= 1, got {self.window_D}")
        if not 0 < self.damping_theta <= 1:
            raise ConfigError(f"damping_theta must lie in (0, 1], got {self.damping_theta}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.fourier_test_order < 1:
            raise ConfigError("fourier_test_order must be >= 1")

    def check_grid(self, grid: TorusGrid):
        need = 2 * grid.h
        if self.tau * self.window_D < need - 1e-15:
            raise ConfigError(
                f"tau*window_D = {self.tau * self.window_D:g} is below the required "
                f"minimum 2h = {need:g} (window must contain a nonzero displacement per axis)"
            )
        if not 0 <= self.anchor_node < grid.size:
            raise ConfigError(f"anchor_node {self.anchor_node} outside grid of {grid.size} nodes")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)
