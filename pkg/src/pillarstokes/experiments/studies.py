"""Study runners: one CSV row per sweep entry plus a JSON run manifest.

CSV files hold only deterministic quantities (floats written with ``repr``)
so that repeated runs of one configuration produce identical bytes; wall
times and residual histories go to the manifest.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from ..fem.assembly import apply_bcs, assemble
from ..fem.dofmap import build_dofmap
from ..fem.elements import TAYLOR_HOOD
from ..fem.errors import export_fields
from ..geometry import enumerate_pillars
from ..infsup import discrete_infsup, fit_slope
from ..linalg.krylov import KrylovConfig
from ..linalg.sparse import write_matrix_market
from ..mesher import mesh_domain, quality_report, write_mesh
from ..saddle import PrecondKind, PreconditionerSpec, build_system, factorize, report_to_json, solve
from .config import ExperimentConfig, Study
from .pipeline import compare_pairs, orders

ERROR_KEYS = ("rel_p_L2", "rel_u_L2", "rel_u_H1", "abs_p_L2", "abs_u_L2", "abs_u_H1", "norm_p_ref", "norm_u_ref")
ORDER_KEYS = ("rel_p_L2", "rel_u_L2", "rel_u_H1")


@dataclass
class StudyResult:
    study: Study
    rows: list[dict]
    csv_path: Path | None = None
    manifest_path: Path | None = None
    extra: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if r.get("status") != "ok")

    @property
    def ok(self) -> bool:
        return bool(self.rows) and self.failures == 0


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """Rows to CSV; the column order is the first-seen key order."""
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(k for k in r if k not in columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def _stamp() -> str:
    return _dt.datetime.now().strftime("%Y%m%dT%H%M%S")


def _unique(out: Path, stem: str, suffix: str) -> Path:
    path = out / f"{stem}{suffix}"
    k = 1
    while path.exists():
        path = out / f"{stem}_{k}{suffix}"
        k += 1
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def finish(cfg: ExperimentConfig, result: StudyResult, timings: list[dict], files: list[Path]) -> StudyResult:
    """Write ``<study>_<timestamp>.csv`` and its ``.json`` manifest."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp()
    csv_path = write_csv(_unique(out, f"{cfg.study.value}_{stamp}", ".csv"), result.rows)
    manifest = {
        "study": cfg.study.value,
        "version": __version__,
        "created": stamp,
        "config": cfg.to_dict(),
        "csv": csv_path.name,
        "files": [Path(f).name for f in files],
        "rows": len(result.rows),
        "failures": result.failures,
        "status": [r.get("status") for r in result.rows],
        "timings": timings,
        **result.extra,
    }
    man_path = csv_path.with_suffix(".json")
    man_path.write_text(json.dumps(_jsonable(manifest), indent=2))
    result.csv_path, result.manifest_path = csv_path, man_path
    return result


def _guard(fn: Callable[[], dict], row: dict) -> tuple[dict, float]:
    """Run one sweep entry; failures are recorded in ``status`` and the sweep goes on."""
    t0 = time.perf_counter()
    try:
        row.update(fn())
        row["status"] = "ok"
    except Exception as exc:  # noqa: BLE001 - every failure becomes a row
        row["status"] = f"failed: {type(exc).__name__}: {exc}".replace("\n", " ")
        row["traceback"] = traceback.format_exc(limit=3)
    return row, time.perf_counter() - t0


def _add_orders(rows: list[dict], h_key: str = "h") -> None:
    """Order columns between successive successful rows of one group."""
    for key in ORDER_KEYS:
        errs = [r.get(key, math.nan) if r.get("status") == "ok" else math.nan for r in rows]
        hs = [r[h_key] for r in rows]
        for r, o in zip(rows, orders(errs, hs)):
            r[f"order_{key}"] = o


def _pop_tracebacks(rows: list[dict]) -> list[dict]:
    return [{"row": i, "traceback": r.pop("traceback")} for i, r in enumerate(rows) if "traceback" in r]


# ---------------------------------------------------------------- studies


def run_infsup_sweep(cfg: ExperimentConfig) -> StudyResult:
    """beta_h per density on the enclosed lattice, with a log-log slope fit."""
    rows, timings = [], []
    for m in cfg.m_list:
        spec = cfg.domain(m)

        def entry(spec=spec, m=m):
            mesh = mesh_domain(spec, cfg.N_g, cfg.min_angle)
            res = discrete_infsup(mesh, cfg.mu, TAYLOR_HOOD, m, cfg.eig_tol, block=cfg.eig_block, seed=cfg.seed)
            return res.row()

        row = {"m": m, "L_x": cfg.L_x, "L_y": cfg.L_y, "delta": cfg.delta, "rho": cfg.rho, "N_g": cfg.N_g, "mu": cfg.mu}
        row, dt = _guard(entry, row)
        rows.append(row)
        timings.append({"m": m, "seconds": dt})
    errors = _pop_tracebacks(rows)
    good = [(r["m"], r["beta_h"]) for r in rows if r["status"] == "ok"]
    try:
        fit = fit_slope(good)
        extra = {"slope_fit": {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}}
    except ValueError as exc:
        extra = {"slope_fit": {"error": str(exc)}}
    return finish(cfg, StudyResult(Study.INFSUP, rows, extra={**extra, "errors": errors}), timings, [])


def _pair_row(mesh, spec, setup, tol: float) -> dict:
    cmp = compare_pairs(mesh, spec, setup, tol=tol)
    out = {
        "h_max": mesh.h_max,
        "n_u": cmp.low.info["n_u"],
        "n_p": cmp.low.info["n_p"],
        "n_u_ref": cmp.high.info["n_u"],
        "n_p_ref": cmp.high.info["n_p"],
    }
    out.update({k: getattr(cmp.errors, k) for k in ERROR_KEYS})
    out["n_inner_elements"] = cmp.errors.n_elements
    return out


def _pair_sweep(cfg: ExperimentConfig, entries, group_key: str) -> tuple[list[dict], list[dict]]:
    """entries: (group, echo row, DomainSpec, N_g, h, setup name)."""
    rows, timings = [], []
    for _, echo, spec, N_g, h, setup_name in entries:
        setup = cfg.bc(setup_name)

        def entry(spec=spec, N_g=N_g, setup=setup):
            mesh = mesh_domain(spec, N_g, cfg.min_angle)
            return _pair_row(mesh, spec, setup, cfg.ref_tol)

        row = {**echo, "setup": setup_name, "N_g": N_g, "h": h}
        row, dt = _guard(entry, row)
        rows.append(row)
        timings.append({**echo, "setup": setup_name, "seconds": dt})
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in group_key.split(",")), []).append(r)
    for g in groups.values():
        _add_orders(g)
    return rows, timings


def run_baseline_convergence(cfg: ExperimentConfig) -> StudyResult:
    """P2-P1 against P3-P2 at fixed density over decreasing target mesh sizes."""
    spec = cfg.domain()
    entries = [
        (s, {"m": spec.m, "L_x": cfg.L_x, "rho": cfg.rho}, spec, spec.eps / h, h, s)
        for s in cfg.setups
        for h in cfg.h_list
    ]
    rows, timings = _pair_sweep(cfg, entries, "setup")
    return finish(cfg, StudyResult(Study.CONVERGENCE, rows, extra={"errors": _pop_tracebacks(rows)}), timings, [])


def run_amplification_sweep(cfg: ExperimentConfig) -> StudyResult:
    """P2-P1 against P3-P2 at fixed cells-per-pillar resolution over increasing m."""
    entries = []
    for s in cfg.setups:
        for m in cfg.m_list:
            spec = cfg.domain(m)
            entries.append((s, {"m": m, "L_x": cfg.L_x, "rho": cfg.rho}, spec, cfg.N_g, spec.eps / cfg.N_g, s))
    rows, timings = _pair_sweep(cfg, entries, "setup")
    prev: dict = {}
    for r in rows:
        last = prev.get(r["setup"])
        ok = r["status"] == "ok" and last is not None and last["status"] == "ok"
        r["ratio_norm_p_ref"] = r["norm_p_ref"] / last["norm_p_ref"] if ok else math.nan
        prev[r["setup"]] = r
    return finish(cfg, StudyResult(Study.AMPLIFY, rows, extra={"errors": _pop_tracebacks(rows)}), timings, [])


def run_buffer_study(cfg: ExperimentConfig) -> StudyResult:
    """Velocity-driven runs with patterned or empty inlet/outlet buffers."""
    entries = []
    for kind in cfg.buffer_list:
        for s in cfg.setups:
            for m in cfg.m_list:
                spec = cfg.domain(m, buffer_kind=kind)
                echo = {"buffer_kind": kind, "L_b": cfg.L_b, "m": m, "n_pillars": len(enumerate_pillars(spec))}
                entries.append((kind, echo, spec, cfg.N_g, spec.eps / cfg.N_g, s))
    rows, timings = _pair_sweep(cfg, entries, "buffer_kind,setup")
    return finish(cfg, StudyResult(Study.BUFFERS, rows, extra={"errors": _pop_tracebacks(rows)}), timings, [])


def _rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a - b))


def _mean_free(sys, p: np.ndarray) -> np.ndarray:
    w = sys.M_p @ np.ones(sys.n_p)
    return p - (w @ p) / w.sum()


def _bench_entry(cfg: ExperimentConfig, m: int, delta: float, setup_name: str, out: Path, histories: dict, files: list):
    spec = cfg.domain(m, delta=delta)
    mesh = mesh_domain(spec, cfg.N_g, cfg.min_angle)
    dm = build_dofmap(mesh, TAYLOR_HOOD)
    asm = apply_bcs(assemble(mesh, dm, mu=cfg.mu), cfg.bc(setup_name), mesh, m)
    krylov = cfg.krylov()
    tight = KrylovConfig(abs_tol=1e-300, rel_tol=cfg.consistency_rel_tol, max_iter=cfg.max_iter, restart=cfg.restart)
    row: dict = {"h_max": mesh.h_max}
    sols = {}
    for kind in cfg.precond:
        sys = build_system(asm, PreconditionerSpec(PrecondKind(kind), gamma0=cfg.gamma0), m=m)
        factors = factorize(sys)
        rep = solve(sys, krylov, factors=factors)
        x = rep.solution
        res = float(np.linalg.norm(sys.residual(x)))
        bn = float(np.linalg.norm(sys.rhs))
        row.update({"n_u": sys.n_u, "n_p": sys.n_p})
        row.update(
            {
                f"{kind}_gamma": sys.gamma,
                f"{kind}_iterations": rep.iterations,
                f"{kind}_converged": rep.converged,
                f"{kind}_abs_residual": res,
                f"{kind}_rel_residual": res / bn if bn > 0 else res,
            }
        )
        histories[f"{kind}_m{m}_delta{delta:.6g}"] = report_to_json(rep, sys)
        tight_rep = solve(sys, tight, factors=factors)
        sols[kind] = (sys, tight_rep)
        row[f"{kind}_tight_iterations"] = tight_rep.iterations
        if m in cfg.field_m:
            path = out / f"field_{kind}_m{m}_delta{delta:.6g}.csv"
            files.append(export_fields(mesh, dm, (asm.expand_velocity(x[: sys.n_u]), x[sys.n_u :]), path))
        if cfg.export_matrices and kind == cfg.precond[0]:
            base = out / f"matrices_m{m}_delta{delta:.6g}"
            for name, mat in (("A", sys.A), ("B", sys.B), ("Mp", sys.M_p)):
                write_matrix_market(f"{base}_{name}.mtx", mat)
                files.append(Path(f"{base}_{name}.mtx"))
    if "std" in sols and "al" in sols:
        (s_std, r_std), (_, r_al) = sols["std"], sols["al"]
        n = s_std.n_u
        xs, xa = r_std.solution, r_al.solution
        row["consistency_u"] = _rel_diff(xa[:n], xs[:n])
        row["consistency_p"] = _rel_diff(_mean_free(s_std, xa[n:]), _mean_free(s_std, xs[n:]))
    if "al" in cfg.precond:
        for g0 in cfg.gamma0_list:
            sys = build_system(asm, PreconditionerSpec(PrecondKind.AL, gamma0=g0), m=m)
            row[f"al_iterations_gamma0_{g0:g}"] = solve(sys, krylov).iterations
    return row


def run_solver_benchmark(cfg: ExperimentConfig) -> StudyResult:
    """Std against AL FGMRES iteration counts on square and shifted arrays."""
    out = Path(cfg.output_dir)
    rows, timings, files = [], [], []
    histories: dict = {}
    for delta in cfg.delta_list or (cfg.delta,):
        for s in cfg.setups:
            for m in cfg.m_list:
                row = {"delta": delta, "m": m, "rho": cfg.rho, "N_g": cfg.N_g, "setup": s, "rel_tol": cfg.rel_tol}
                row, dt = _guard(lambda: _bench_entry(cfg, m, delta, s, out, histories, files), row)
                if row["status"] == "ok" and not all(row.get(f"{k}_converged", False) for k in cfg.precond):
                    row["status"] = "not_converged"
                rows.append(row)
                timings.append({"delta": delta, "m": m, "setup": s, "seconds": dt})
    extra = {"residual_histories": histories, "errors": _pop_tracebacks(rows)}
    return finish(cfg, StudyResult(Study.BENCH, rows, extra=extra), timings, files)


def run_mesh_export(cfg: ExperimentConfig) -> StudyResult:
    """Mesh every density and write Triangle-format files."""
    out = Path(cfg.output_dir)
    rows, timings, files = [], [], []
    for m in cfg.m_list or (cfg.m,):
        spec = cfg.domain(m)

        def entry(spec=spec, m=m):
            mesh = mesh_domain(spec, cfg.N_g, cfg.min_angle)
            base = out / f"mesh_m{m}"
            write_mesh(mesh, base)
            files.extend(base.with_suffix(s) for s in (".node", ".ele", ".edge"))
            q = quality_report(mesh)
            return {
                "n_pillars": len(enumerate_pillars(spec)),
                "n_vertices": q.n_vertices,
                "n_triangles": q.n_triangles,
                "h_max": q.h_max,
                "h_min": q.h_min,
                "min_angle": q.min_angle,
                "fluid_area": q.fluid_area,
            }

        row = {"m": m, "L_x": cfg.L_x, "L_y": cfg.L_y, "delta": cfg.delta, "rho": cfg.rho, "N_g": cfg.N_g}
        row, dt = _guard(entry, row)
        rows.append(row)
        timings.append({"m": m, "seconds": dt})
    return finish(cfg, StudyResult(Study.MESH, rows, extra={"errors": _pop_tracebacks(rows)}), timings, files)


RUNNERS = {
    Study.INFSUP: run_infsup_sweep,
    Study.CONVERGENCE: run_baseline_convergence,
    Study.AMPLIFY: run_amplification_sweep,
    Study.BUFFERS: run_buffer_study,
    Study.BENCH: run_solver_benchmark,
    Study.MESH: run_mesh_export,
}


def run_study(cfg: ExperimentConfig) -> StudyResult:
    return RUNNERS[cfg.study](cfg)
