"""Config parsing and artifact (JSON / CSV) writers and readers.

Config document::

    {
      "grid": {"dim": 1, "n": 128},
      "lagrangian": {"family": "MECHANICAL", "potential": <series>},
      "coupling": {"family": "ZERO" | "SEPARABLE" | "CONVOLUTION", ...},
      "solver": {"tau": 0.1, "window_D": 3.0, ...},      # SolverConfig fields
      "initial_measure": "uniform" | {"dirac": node} | {"random": {"sparsity": 0.0}},
      "ladder": {"taus": [...], "grid_n": [...], "semigroup_t": 1.0,
                 "fine_factor": 8, "cold_check": false}
    }

A ``<series>`` is a number or ``{"const": c, "terms": [{"k": [..], "cos": a, "sin": b}]}``
or ``{"gaussian": {"amplitude": A, "width": s, "order": K}}``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    ConfigError,
    GridMeasure,
    SolverConfig,
    TorusGrid,
    coupling_from_dict,
    lagrangian_from_dict,
)

KNOWN_SECTIONS = {"grid", "lagrangian", "coupling", "solver", "initial_measure", "ladder",
                  "name", "description"}


class InputError(ConfigError):
    """Malformed or inconsistent input document; carries a line number when known."""

    def __init__(self, msg: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None and line else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line = line


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    grid: TorusGrid
    lagrangian: object
    coupling: object
    solver: SolverConfig
    initial: object
    ladder: dict | None
    digest: str

    def problem(self, cfg: SolverConfig | None = None, grid: TorusGrid | None = None):
        from .fixedpoint import MFGProblem

        return MFGProblem(grid or self.grid, self.lagrangian, self.coupling, cfg or self.solver)

    def initial_measure(self, grid: TorusGrid | None = None) -> GridMeasure:
        grid = grid or self.grid
        init = self.initial
        if init == "uniform":
            return GridMeasure.uniform(grid)
        if "dirac" in init:
            return GridMeasure.dirac(grid, int(init["dirac"]))
        rng = np.random.default_rng(self.solver.rng_seed)
        return GridMeasure.random(grid, rng, float(init["random"].get("sparsity", 0.0)))


def config_digest(raw: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_config(raw: dict, text: str = "", path=None, seed: int | None = None) -> RunConfig:
    def fail(msg, key=None):
        raise InputError(msg, path, _line_of(text, key) if key else None)

    if not isinstance(raw, dict):
        fail("config must be a JSON object")
    for key in raw:
        if key not in KNOWN_SECTIONS:
            fail(f"unknown section {key!r}", key)
    for key in ("grid", "lagrangian", "coupling"):
        if key not in raw:
            fail(f"missing required section {key!r}")
    section = None
    try:
        section = "grid"
        g = raw["grid"]
        grid = TorusGrid(int(g["dim"]), int(g["n"]))
        section = "lagrangian"
        lag = lagrangian_from_dict(grid.dim, raw["lagrangian"])
        section = "coupling"
        cpl = coupling_from_dict(grid.dim, raw["coupling"])
        section = "solver"
        s = dict(raw.get("solver", {}))
        fields = {f.name for f in dataclasses.fields(SolverConfig)}
        for k in s:
            if k not in fields:
                fail(f"unknown solver field {k!r}", k)
        if seed is not None:
            s["rng_seed"] = int(seed)
        solver = SolverConfig(**s)
        if "tau" in s or "ladder" not in raw:
            section = "tau"
            solver.check_grid(grid)
        section = "initial_measure"
        init = raw.get("initial_measure", "uniform")
        if not (init == "uniform" or (isinstance(init, dict) and
                                      ("dirac" in init or "random" in init))):
            fail("initial_measure must be 'uniform', {'dirac': i} or {'random': {...}}",
                 "initial_measure")
        if isinstance(init, dict) and "dirac" in init and not 0 <= int(init["dirac"]) < grid.size:
            fail("dirac node outside the grid", "initial_measure")
        section = "ladder"
        ladder = raw.get("ladder")
        if ladder is not None:
            if not isinstance(ladder, dict) or not isinstance(ladder.get("taus"), list):
                fail("ladder.taus must be a list", "ladder")
            if not ladder["taus"]:
                fail("ladder.taus is empty", "taus")
            taus = [float(t) for t in ladder["taus"]]
            if any(b >= a for a, b in zip(taus, taus[1:])):
                fail("ladder.taus must be strictly decreasing", "taus")
            ns = ladder.get("grid_n")
            if ns is not None and len(ns) != len(taus):
                fail("ladder.grid_n must match ladder.taus in length", "grid_n")
            for i, t in enumerate(taus):
                n = grid.n if ns is None else int(ns[i])
                solver.with_(tau=t).check_grid(TorusGrid(grid.dim, n))
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        raise InputError(f"[{section}] {msg}", path, _line_of(text, section)) from exc
    return RunConfig(raw, grid, lag, cpl, solver, init, ladder, config_digest(raw))


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config: {exc.strerror}", path) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg} (column {exc.colno})", path, exc.lineno) from exc
    return parse_config(raw, text, path, seed)


# ---------------------------------------------------------------------------
# JSON


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, repr floats, NaN/inf as null."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV (floats written with repr, so they round-trip exactly)


def _coord_names(dim):
    return ["x"] if dim == 1 else ["x", "y"]


def write_measure_csv(path, m: GridMeasure) -> None:
    g = m.grid
    xs = g.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *_coord_names(g.dim), "weight"])
        for i in range(g.size):
            w.writerow([i, *map(float, xs[i]), float(m.weights[i])])


def write_potential_csv(path, grid: TorusGrid, u, argmin) -> None:
    xs = grid.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *_coord_names(grid.dim), "u", "argmin"])
        for i in range(grid.size):
            w.writerow([i, *map(float, xs[i]), float(u[i]), int(argmin[i])])


def write_edge_measure_csv(path, mu) -> None:
    es = mu.edges
    vel = es.vel
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target", *[f"v{i}" for i in range(es.grid.dim)], "weight"])
        for e in mu.support:
            w.writerow([int(es.src[e]), int(es.tgt[e]), *map(float, vel[e]), float(mu.weights[e])])


def _read_rows(path, required):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InputError("empty CSV", path)
    missing = [c for c in required if c not in rows[0]]
    if missing:
        raise InputError(f"missing columns {missing}", path, 1)
    return rows


def read_measure_csv(path, grid: TorusGrid) -> np.ndarray:
    """Raw (unnormalized) node weights."""
    rows = _read_rows(path, ["node", "weight"])
    if len(rows) != grid.size:
        raise InputError(f"expected {grid.size} rows, got {len(rows)}", path)
    w = np.zeros(grid.size)
    for r in rows:
        w[int(r["node"])] = float(r["weight"])
    return w


def read_potential_csv(path, grid: TorusGrid):
    rows = _read_rows(path, ["node", "u", "argmin"])
    if len(rows) != grid.size:
        raise InputError(f"expected {grid.size} rows, got {len(rows)}", path)
    u = np.zeros(grid.size)
    arg = np.zeros(grid.size, dtype=np.int64)
    for r in rows:
        i = int(r["node"])
        u[i] = float(r["u"])
        arg[i] = int(r["argmin"])
    return u, arg


def read_edge_measure_csv(path):
    rows = _read_rows(path, ["source", "target", "weight"])
    src = np.array([int(r["source"]) for r in rows], dtype=np.int64)
    tgt = np.array([int(r["target"]) for r in rows], dtype=np.int64)
    w = np.array([float(r["weight"]) for r in rows])
    return src, tgt, w


def write_long_csv(path, records) -> None:
    """Plotting-ready long format: ``rung, tau, metric, value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rung", "tau", "metric", "value"])
        for i, rec in enumerate(records):
            for k in sorted(rec):
                v = rec[k]
                if k in ("tau", "certificates", "error") or isinstance(v, (dict, list, str)):
                    continue
                if v is None:
                    v = float("nan")
                w.writerow([i, float(rec["tau"]), k, float(v)])
