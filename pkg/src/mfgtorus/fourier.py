"""Real trigonometric polynomials on the flat torus.

A series is stored as a constant plus a list of integer wave vectors ``k``
with cosine/sine coefficients::

    f(x) = const + sum_j  a_j cos(2 pi k_j . x) + b_j sin(2 pi k_j . x)

Potentials, drifts, coupling kernels and moment functions are all
expressed this way so that values, gradients and sup-norm bounds are
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class FourierSeries:
    dim: int
    const: float = 0.0
    modes: np.ndarray = field(default_factory=lambda: np.zeros((0, 1), dtype=np.int64))
    cos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.int64).reshape(-1, self.dim)
        a = np.asarray(self.cos, dtype=float).reshape(-1)
        b = np.asarray(self.sin, dtype=float).reshape(-1)
        if not (len(modes) == len(a) == len(b)):
            raise ValueError("modes, cos and sin must have the same length")
        for arr in (modes, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "cos", a)
        object.__setattr__(self, "sin", b)
        object.__setattr__(self, "const", float(self.const))

    @classmethod
    def constant(cls, dim: int, value: float) -> "FourierSeries":
        return cls(dim, value)

    @classmethod
    def from_terms(cls, dim: int, terms, const: float = 0.0) -> "FourierSeries":
        """Build from ``[(k, a, b), ...]`` with ``k`` an int or int tuple."""
        modes, a, b = [], [], []
        for k, ca, sb in terms:
            modes.append(np.atleast_1d(k))
            a.append(ca)
            b.append(sb)
        return cls(dim, const, np.array(modes, dtype=np.int64).reshape(-1, dim), a, b)

    @classmethod
    def gaussian_bump(cls, dim: int, amplitude: float, width: float, order: int) -> "FourierSeries":
        """Periodized Gaussian ``amplitude * exp(-|x|^2 / (2 width^2))`` truncated at ``order``.

        Coefficients are the exact Fourier coefficients of the periodization,
        so only the truncation tail is lost.
        """
        if width <= 0 or order < 0:
            raise ValueError("width must be positive and order nonnegative")
        ghat = width * np.sqrt(2 * np.pi)
        c0 = amplitude * ghat**dim
        ks = probe_modes(dim, order) if order > 0 else np.zeros((0, dim), dtype=np.int64)
        decay = np.exp(-2 * np.pi**2 * width**2 * (ks.astype(float) ** 2).sum(axis=1))
        return cls(dim, c0, ks, 2 * c0 * decay, np.zeros(len(ks)))

    # -- evaluation ---------------------------------------------------------

    def _phase(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x, TWO_PI * (x @ self.modes.T)

    def __call__(self, x):
        x, th = self._phase(x)
        return self.const + np.cos(th) @ self.cos + np.sin(th) @ self.sin

    def grad(self, x):
        """Gradient, shape ``(..., dim)``."""
        x, th = self._phase(x)
        w = -np.sin(th) * self.cos + np.cos(th) * self.sin
        return TWO_PI * (w @ self.modes)

    def hessian(self, x):
        x, th = self._phase(x)
        w = -(np.cos(th) * self.cos + np.sin(th) * self.sin)
        kk = np.einsum("ji,jk->jik", self.modes, self.modes)
        return TWO_PI**2 * np.einsum("...j,jik->...ik", w, kk)

    # -- bounds -------------------------------------------------------------

    @property
    def is_constant(self) -> bool:
        return not np.any((self.cos != 0) | (self.sin != 0))

    @property
    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.cos, self.sin)

    def sup_bound(self) -> float:
        return abs(self.const) + float(self.amplitudes.sum())

    def grad_bound(self) -> float:
        norms = np.linalg.norm(self.modes, axis=1) if len(self.modes) else np.zeros(0)
        return TWO_PI * float((norms * self.amplitudes).sum())

    def max_value(self, samples: int = 4096) -> tuple[float, np.ndarray]:
        """Global maximum by dense sampling plus Newton polishing.

        Returns ``(value, argmax)``. Accurate to roundoff for smooth
        low-order series; used as an analytic reference level.
        """
        if self.is_constant:
            return self.const, np.zeros(self.dim)
        per_axis = samples if self.dim == 1 else int(np.sqrt(samples * 16))
        axes = [np.arange(per_axis) / per_axis] * self.dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        vals = self(pts)
        best = np.argsort(vals)[-8:]
        top_val, top_x = -np.inf, None
        for i in best:
            x = pts[i].copy()
            for _ in range(50):
                g = self.grad(x)
                hs = self.hessian(x)
                try:
                    step = np.linalg.solve(hs, g)
                except np.linalg.LinAlgError:
                    break
                if np.linalg.norm(step) > 1.0 / per_axis:
                    break
                x = x - step
                if np.linalg.norm(step) < 1e-15:
                    break
            v = float(self(x))
            if v < vals[i]:
                x, v = pts[i], float(vals[i])
            if v > top_val:
                top_val, top_x = v, np.mod(x, 1.0)
        return top_val, top_x

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "const": self.const,
            "terms": [
                {"k": [int(v) for v in k], "cos": float(a), "sin": float(b)}
                for k, a, b in zip(self.modes, self.cos, self.sin)
            ],
        }

    @classmethod
    def from_dict(cls, dim: int, data) -> "FourierSeries":
        if isinstance(data, (int, float)):
            return cls.constant(dim, float(data))
        if not isinstance(data, dict):
            raise ValueError("Fourier series must be a number or an object")
        if "gaussian" in data:
            g = data["gaussian"]
            return cls.gaussian_bump(dim, float(g.get("amplitude", 1.0)), float(g["width"]),
                                     int(g.get("order", 8)))
        terms = []
        for t in data.get("terms", []):
            k = t["k"] if isinstance(t["k"], list) else [t["k"]]
            if len(k) != dim:
                raise ValueError(f"wave vector {k} does not match dim={dim}")
            terms.append((k, float(t.get("cos", 0.0)), float(t.get("sin", 0.0))))
        return cls.from_terms(dim, terms, float(data.get("const", 0.0)))


def probe_modes(dim: int, order: int) -> np.ndarray:
    """Wave vectors with max-norm in ``1..order``, one of each +/- pair."""
    if dim == 1:
        return np.arange(1, order + 1, dtype=np.int64)[:, None]
    ks = []
    r = range(-order, order + 1)
    for k1 in r:
        for k2 in r:
            if (k1, k2) > (0, 0):
                ks.append((k1, k2))
    return np.array(ks, dtype=np.int64)
