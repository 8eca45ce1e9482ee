"""Command-line front end.

Exit codes: 0 ok, 1 input error, 2 completed without convergence,
3 certificate failure.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .action import build_action_table
from .fixedpoint import (
    CONTACT_TOL,
    HOLONOMY_TOL,
    SUBACTION_TOL,
    FixedPointResult,
    MFGProblem,
    best_response,
    certificates,
    mfg_residuals,
    solve_fixed_point,
)
from .ladder import run_ladder
from .model import ConfigError, GridMeasure
from .wasserstein import wasserstein1
from .weakkam import FIXPOINT_TOL, effective_constant_karp, lax_oleinik_apply

logger = logging.getLogger("mfgtorus")

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_CERT = 0, 1, 2, 3
MASS_TOL = 1e-12


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _set_threads(n):
    import numba

    numba.config.THREADING_LAYER = "workqueue"  # always available; kernels are serial anyway
    n = numba.config.NUMBA_NUM_THREADS if n is None else max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------------------
# artifacts of one solved problem


def solution_summary(res: FixedPointResult, ctx: MFGProblem, rep, certs: dict, digest: str) -> dict:
    return {
        "tau": ctx.cfg.tau,
        "n": ctx.grid.n,
        "dim": ctx.grid.dim,
        "lagrangian": ctx.lagrangian.family,
        "coupling": ctx.coupling.family,
        "iterations": res.iterations,
        "probes": res.probes,
        "converged": res.converged,
        "c_est": res.c_est,
        "lbar": res.lbar,
        "abar": res.wk.abar,
        "critical_cycle": list(res.wk.critical_cycle),
        "residual_HJ": rep.residual_HJ,
        "residual_continuity": rep.residual_continuity,
        "d1_final": res.d1_final,
        "d1_history": list(res.d1_history),
        "residuals": rep.to_dict(),
        "certificates": certs,
        "tolerances": {
            "fp_tol": ctx.cfg.fp_tol,
            "subaction": SUBACTION_TOL,
            "holonomy": HOLONOMY_TOL,
            "contact": CONTACT_TOL,
            "fixpoint": FIXPOINT_TOL,
            "mass": MASS_TOL,
        },
        "config_digest": digest,
    }


def write_solution(out: Path, raw_cfg: dict, res, ctx, rep, certs, digest, plots=True) -> list:
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "config.json", raw_cfg)
    io.write_json(out / "summary.json", solution_summary(res, ctx, rep, certs, digest))
    io.write_measure_csv(out / "measure.csv", res.m_star)
    io.write_potential_csv(out / "potential.csv", ctx.grid, res.wk.u, res.wk.argmin)
    io.write_edge_measure_csv(out / "edge_measure.csv", res.mu_star)
    files = ["config.json", "summary.json", "measure.csv", "potential.csv", "edge_measure.csv"]
    if plots:
        from .plotting import plot_solution

        title = f"tau={ctx.cfg.tau:g}, n={ctx.grid.n}, c_est={res.c_est:.6g}"
        files += [Path(p).name for p in plot_solution(out, ctx.grid, res.wk.u,
                                                      res.m_star.weights, title)]
    return files


def _write_manifest(out: Path, cfg: io.RunConfig, files, started, command, threads, **extra):
    io.write_json(out / "manifest.json", {
        **extra,
        "config_digest": cfg.digest,
        "tool_version": _version(),
        "command": command,
        "seed": cfg.solver.rng_seed,
        "threads": threads,
        "started": started,
        "finished": _now(),
        "outputs": sorted(files) + ["manifest.json"],
    })


def _rung_config(raw: dict, tau: float, n: int) -> dict:
    d = copy.deepcopy(raw)
    d.pop("ladder", None)
    d["grid"]["n"] = n
    d.setdefault("solver", {})["tau"] = tau
    return d


# ---------------------------------------------------------------------------
# commands


def cmd_solve(config, out, threads=None, seed=None, plots=True) -> int:
    started = _now()
    cfg = io.load_config(config, seed)
    nthreads = _set_threads(threads)
    ctx = cfg.problem()
    res = solve_fixed_point(cfg.initial_measure(), ctx)
    rep = mfg_residuals(res, ctx)
    certs = certificates(res.wk, res.table, res.mu_star)
    out = Path(out)
    raw = copy.deepcopy(cfg.raw)
    raw.setdefault("solver", {})["rng_seed"] = cfg.solver.rng_seed
    files = write_solution(out, raw, res, ctx, rep, certs, cfg.digest, plots)
    _write_manifest(out, cfg, files, started, "solve", nthreads)
    print(f"c_est={res.c_est:.12g} iterations={res.iterations} converged={res.converged} "
          f"residual_HJ={rep.residual_HJ:.3e} d1_final={res.d1_final:.3e}")
    if not (certs["subaction_ok"] and certs["holonomy_ok"] and certs["support_in_contact_set"]):
        return EXIT_CERT
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_ladder(config, out, threads=None, seed=None, plots=True) -> int:
    started = _now()
    cfg = io.load_config(config, seed)
    if not cfg.ladder:
        raise io.InputError("config has no 'ladder' section", config)
    nthreads = _set_threads(threads)
    lad = cfg.ladder
    rep = run_ladder(cfg.problem(), lad["taus"], lad.get("grid_n"),
                     semigroup_t=float(lad.get("semigroup_t", 1.0)),
                     fine_factor=int(lad.get("fine_factor", 8)),
                     cold_check=bool(lad.get("cold_check", False)),
                     m0=cfg.initial_measure())
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, (rung, res, ctx) in enumerate(zip(rep.rungs, rep.results, rep.contexts)):
        if res is None:
            continue
        sub = f"rung_{i:02d}"
        raw = _rung_config(cfg.raw, rung.tau, rung.n)
        raw["solver"]["rng_seed"] = cfg.solver.rng_seed
        r_rep = mfg_residuals(res, ctx)
        sf = write_solution(out / sub, raw, res, ctx, r_rep, rung.certificates,
                            io.config_digest(raw), plots=False)
        files += [f"{sub}/{f}" for f in sf]
    doc = rep.to_dict()
    doc["config_digest"] = cfg.digest
    io.write_json(out / "ladder.json", doc)
    io.write_long_csv(out / "ladder_long.csv", [r.to_dict() for r in rep.rungs])
    files += ["ladder.json", "ladder_long.csv"]
    if plots:
        from .plotting import plot_ladder

        files += [Path(p).name for p in plot_ladder(out, rep)]
    _write_manifest(out, cfg, files, started, "ladder", nthreads,
                    rung_seconds=[round(r.seconds, 3) for r in rep.rungs])
    for r in rep.rungs:
        print(f"tau={r.tau:g} n={r.n} lbar={r.lbar:.10g} c_gap={r.c_gap:.3e} "
              f"residual_HJ={r.residual_HJ:.3e} failed={r.failed}")
    print("slopes:", {k: (None if v is None else round(v, 4)) for k, v in rep.slopes.items()})
    return EXIT_OK if not any(r.failed for r in rep.rungs) else EXIT_NOCONV


def verify_solution_dir(d: Path) -> dict:
    """Re-check certificates of one solve output. Returns ``{name: (ok, detail)}``."""
    for name in ("config.json", "summary.json", "measure.csv", "potential.csv",
                 "edge_measure.csv"):
        if not (d / name).is_file():
            raise io.InputError(f"missing file {name}", d)
    cfg = io.load_config(d / "config.json")
    summ = io.read_json(d / "summary.json")
    tol = summ["tolerances"]
    ctx = cfg.problem()
    grid = ctx.grid
    checks = {}

    w_raw = io.read_measure_csv(d / "measure.csv", grid)
    mass = abs(w_raw.sum() - 1.0)
    checks["mass"] = (bool(mass <= tol["mass"] and np.all(w_raw >= 0)), mass)
    m = GridMeasure(grid, np.clip(w_raw, 0, None))
    table = build_action_table(ctx.edges, ctx.lagrangian, ctx.coupling, m)

    u, argmin = io.read_potential_csv(d / "potential.csv", grid)
    abar, _ = effective_constant_karp(table)
    checks["effective_constant"] = (abar == summ["abar"], abs(abar - summ["abar"]))
    Tu, src = lax_oleinik_apply(u, table)
    fix = float(np.max(np.abs(u + abar - Tu)))
    checks["lax_oleinik"] = (bool(fix <= tol["fixpoint"]), fix)
    es = table.edges
    sub = float(np.max(abar - table.cost - u[es.src] + u[es.tgt]))
    checks["subaction"] = (bool(sub <= tol["subaction"]), sub)
    checks["argmin"] = (bool(np.array_equal(src, argmin)), int(np.sum(src != argmin)))

    s, t, w = io.read_edge_measure_csv(d / "edge_measure.csv")
    ids = es.edge_index(s, t)
    if np.any(ids < 0):
        checks["edge_measure"] = (False, "pairs outside the edge set")
        return checks
    n = grid.size
    bal = np.bincount(t, weights=w, minlength=n) - np.bincount(s, weights=w, minlength=n)
    hol = float(np.max(np.abs(bal)) + abs(w.sum() - 1.0))
    checks["holonomy"] = (bool(hol <= tol["holonomy"]), hol)
    gaps = table.cost[ids] + u[s] - u[t] - abar
    contact = float(gaps.max())
    checks["contact_set"] = (bool(contact <= tol["contact"]), contact)

    resp = best_response(m, ctx)
    # raw file weights against the recomputed vertex, without renormalizing
    sup = resp.mu.support
    same = np.array_equal(np.sort(ids), sup) and np.array_equal(
        w[np.argsort(ids)], resp.mu.weights[sup])
    checks["selection"] = (bool(same), "recomputed best response differs" if not same else 0.0)
    d1 = wasserstein1(m, resp.m)
    ok = d1 == summ["d1_final"] and (not summ["converged"] or d1 <= tol["fp_tol"])
    checks["fixed_point"] = (bool(ok), d1)
    res = FixedPointResult(m, resp.mu, resp.wk, resp.table, summ["iterations"],
                           summ["d1_history"], summ["converged"], d1)
    rep = mfg_residuals(res, ctx, summ["residuals"]["order"])
    again = all(rep.to_dict()[k] == summ["residuals"][k] for k in summ["residuals"])
    checks["residuals"] = (bool(again), "recomputed residuals differ" if not again else 0.0)
    return checks


def cmd_verify(out) -> int:
    out = Path(out)
    if not out.is_dir():
        raise io.InputError("output directory not found", out)
    if (out / "ladder.json").is_file():
        dirs = sorted(p for p in out.iterdir() if p.is_dir() and p.name.startswith("rung_"))
        if not dirs:
            raise io.InputError("ladder output has no rung directories", out)
    else:
        dirs = [out]
    failed = []
    for d in dirs:
        for name, (ok, detail) in verify_solution_dir(d).items():
            tag = "ok  " if ok else "FAIL"
            print(f"{tag} {d.name}/{name}: {detail}")
            if not ok:
                failed.append(f"{d.name}/{name}")
    if failed:
        print("failed certificates: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfgtorus", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "solve the measure fixed point for one tau"),
                           ("ladder", "run a tau-ladder and write convergence diagnostics")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", required=True, type=Path)
        s.add_argument("--threads", type=int, default=None)
        s.add_argument("--seed", type=int, default=None, help="overrides solver.rng_seed")
        s.add_argument("--no-plots", action="store_true")
    v = sub.add_parser("verify", help="re-check certificates of a solve/ladder output directory")
    v.add_argument("--out", required=True, type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out, args.threads, args.seed, not args.no_plots)
        if args.command == "ladder":
            return cmd_ladder(args.config, args.out, args.threads, args.seed, not args.no_plots)
        return cmd_verify(args.out)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
