"""Figures for solve and ladder runs. Files only (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}  # keep PNG bytes free of version stamps


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_solution(out_dir, grid, u, m_weights, title="") -> list:
    out_dir = Path(out_dir)
    files = []
    if grid.dim == 1:
        x = grid.coords()[:, 0]
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        a1.plot(x, u, lw=1.2)
        a1.set_ylabel("u")
        a2.bar(x, m_weights, width=grid.h, color="C1")
        a2.set_ylabel("m")
        a2.set_xlabel("x")
        fig.suptitle(title)
        files.append(_save(fig, out_dir / "solution.png"))
    else:
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
        shape = (grid.n, grid.n)
        for ax, data, name in ((a1, u, "u"), (a2, m_weights, "m")):
            im = ax.imshow(np.reshape(data, shape).T, origin="lower", extent=(0, 1, 0, 1))
            ax.set_title(name)
            fig.colorbar(im, ax=ax, shrink=0.8)
        fig.suptitle(title)
        files.append(_save(fig, out_dir / "solution.png"))
    return files


def plot_ladder(out_dir, report) -> list:
    out_dir = Path(out_dir)
    files = []
    taus = np.array(report.taus)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for name in ("c_gap", "residual_HJ", "u_sup_diff", "semigroup_defect", "d1_prev"):
        vals = np.array([np.nan if v is None else v for v in report.column(name)], dtype=float)
        ok = np.isfinite(vals) & (vals > 0)
        if ok.any():
            slope = report.slopes.get(name)
            label = name if slope is None else f"{name} (slope {slope:.2f})"
            ax.loglog(taus[ok], vals[ok], "o-", label=label)
    ax.set_xlabel("tau")
    ax.set_title("ladder diagnostics")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    files.append(_save(fig, out_dir / "ladder_rates.png"))

    res = [r for r in report.results if r is not None]
    if res and res[0].m_star.grid.dim == 1:
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
        for tau, r in zip(report.taus, report.results):
            if r is None:
                continue
            g = r.m_star.grid
            x = g.coords()[:, 0]
            a1.plot(x, r.wk.u, lw=1, label=f"tau={tau:g}")
            a2.plot(x, r.m_star.weights, lw=1, label=f"tau={tau:g}")
        a1.set_ylabel("u")
        a2.set_ylabel("m")
        a2.set_xlabel("x")
        a1.legend(fontsize=8)
        files.append(_save(fig, out_dir / "ladder_profiles.png"))
    return files
