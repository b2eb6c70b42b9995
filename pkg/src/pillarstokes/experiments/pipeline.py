"""Geometry -> mesh -> assembly -> solve -> error evaluation for one configuration."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..fem.assembly import BcSetup, apply_bcs, assemble
from ..fem.dofmap import DofMap, build_dofmap
from ..fem.elements import TAYLOR_HOOD, TAYLOR_HOOD_P3, ElementPair
from ..fem.errors import ErrorReport, evaluate_errors
from ..geometry import DomainSpec
from ..mesher import Mesh
from ..saddle import STD, SaddleSystem, build_system, solve_schur_cg


@dataclass
class Solution:
    dofmap: DofMap
    system: SaddleSystem
    u: np.ndarray  # full velocity vector including prescribed values
    p: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def pair(self):
        return self.u, self.p


def inner_box(spec: DomainSpec) -> tuple[float, float, float, float]:
    """Central evaluation window (0.25 L_x, 0.75 L_x) x (0, L_y)."""
    return 0.25 * spec.L_x, 0.75 * spec.L_x, 0.0, spec.L_y


def build(mesh: Mesh, pair: ElementPair, setup: BcSetup, m: int, precond=STD) -> SaddleSystem:
    dm = build_dofmap(mesh, pair)
    asm = apply_bcs(assemble(mesh, dm, mu=setup.mu), setup, mesh, m)
    return build_system(asm, precond, m=m)


def reference_solve(mesh: Mesh, pair: ElementPair, setup: BcSetup, m: int, tol: float = 1e-12) -> Solution:
    """Accurate solve by pressure Schur-complement CG with exact inner solves."""
    t0 = time.perf_counter()
    sys = build(mesh, pair, setup, m)
    t1 = time.perf_counter()
    res = solve_schur_cg(sys, tol=tol)
    t2 = time.perf_counter()
    info = {
        "n_u": sys.n_u,
        "n_p": sys.n_p,
        "cg_iterations": res.iterations,
        "rel_residual": res.rel_residual,
        "t_assemble": t1 - t0,
        "t_solve": t2 - t1,
    }
    return Solution(sys.assembled.dofmap, sys, sys.assembled.expand_velocity(res.u), res.p, info)


@dataclass
class PairComparison:
    errors: ErrorReport
    low: Solution
    high: Solution


def compare_pairs(mesh: Mesh, spec: DomainSpec, setup: BcSetup, tol: float = 1e-12) -> PairComparison:
    """P2-P1 solution against the P3-P2 reference on the same mesh."""
    lo = reference_solve(mesh, TAYLOR_HOOD, setup, spec.m, tol)
    hi = reference_solve(mesh, TAYLOR_HOOD_P3, setup, spec.m, tol)
    rep = evaluate_errors(mesh, lo.dofmap, lo.pair, hi.dofmap, hi.pair, inner_box(spec))
    return PairComparison(rep, lo, hi)


def order(e_prev: float, e_curr: float, h_prev: float, h_curr: float) -> float:
    """log(e_prev / e_curr) / log(h_prev / h_curr); NaN when undefined."""
    if not (e_prev > 0 and e_curr > 0 and h_prev > 0 and h_curr > 0) or h_prev == h_curr:
        return math.nan
    return math.log(e_prev / e_curr) / math.log(h_prev / h_curr)


def orders(errors, hs) -> list[float]:
    """Order column for a sequence of rows; the first entry is NaN."""
    out = [math.nan]
    for k in range(1, len(errors)):
        out.append(order(errors[k - 1], errors[k], hs[k - 1], hs[k]))
    return out


def fitted_order(errors, hs) -> float:
    """Least-squares slope of log(error) against log(h)."""
    x, y = np.log(np.asarray(hs, float)), np.log(np.asarray(errors, float))
    return float(np.polyfit(x, y, 1)[0])
