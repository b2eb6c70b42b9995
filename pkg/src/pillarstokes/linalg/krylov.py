"""Restarted flexible GMRES with right preconditioning.

Convergence is judged on the explicitly recomputed residual of a reference
operator (by default the iterated operator itself) at every step, so the
reported iteration count is the first step at which the true residual meets
the tolerance.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KrylovConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 1000
    restart: int = 500

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.restart < 1:
            raise ValueError("max_iter and restart must be positive")


class StopReason(str, enum.Enum):
    ABS_TOL = "abs_tol"
    REL_TOL = "rel_tol"
    BREAKDOWN = "breakdown"
    MAX_ITER = "max_iter"


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    stop_reason: StopReason
    b_norm: float = 0.0
    timings: dict = field(default_factory=dict)
    orthogonality_loss: float | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _stop_reason(res: float, b_norm: float, cfg: KrylovConfig) -> StopReason | None:
    if res <= cfg.abs_tol:
        return StopReason.ABS_TOL
    if b_norm > 0 and res / b_norm <= cfg.rel_tol:
        return StopReason.REL_TOL
    return None


def fgmres(
    apply_A: Operator,
    b: np.ndarray,
    apply_P: Operator | None = None,
    cfg: KrylovConfig = KrylovConfig(),
    x0: np.ndarray | None = None,
    residual: Operator | None = None,
    track_orthogonality: bool = False,
    b_norm: float | None = None,
) -> SolveReport:
    """Solve A x = b with the flexible right preconditioner ``apply_P`` (~A^{-1}).

    ``residual(x)`` returns the residual vector used for stopping; it defaults
    to ``b - A x``, and ``b_norm`` (default ``||b||``) is the reference for
    the relative test when that residual belongs to a different system.  Classical Gram-Schmidt is applied twice per step.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.size
    P = apply_P if apply_P is not None else (lambda v: v)
    res_fn = residual if residual is not None else (lambda x: b - apply_A(x))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b_norm = float(np.linalg.norm(b)) if b_norm is None else float(b_norm)
    history: list[float] = []
    ortho = 0.0 if track_orthogonality else None

    r_true = res_fn(x)
    res = float(np.linalg.norm(r_true))
    history.append(res)
    reason = _stop_reason(res, b_norm, cfg)
    total = 0
    while reason is None and total < cfg.max_iter:
        r = b - apply_A(x)
        beta = float(np.linalg.norm(r))
        if beta == 0.0:
            reason = StopReason.BREAKDOWN
            break
        k_max = min(cfg.restart, cfg.max_iter - total)
        # basis vectors stored as rows; capacity grows on demand
        V = _Basis(n, min(k_max + 1, 32))
        Z = _Basis(n, min(k_max, 32))
        H = np.zeros((k_max + 1, k_max))
        cs, sn = np.zeros(k_max), np.zeros(k_max)
        s = np.zeros(k_max + 1)
        s[0] = beta
        V.append(r / beta)
        x_base = x
        breakdown = False
        for j in range(k_max):
            Z.append(P(V.rows[j]))
            w = apply_A(Z.rows[j])
            Vj = V.rows[: j + 1]
            h = Vj @ w
            w = w - h @ Vj
            h2 = Vj @ w
            w = w - h2 @ Vj
            h += h2
            h_next = float(np.linalg.norm(w))
            H[: j + 1, j] = h
            H[j + 1, j] = h_next
            breakdown = h_next <= 1e-14 * max(np.abs(h).max(), 1e-300)
            if not breakdown:
                V.append(w / h_next)
            for i in range(j):
                H[i, j], H[i + 1, j] = cs[i] * H[i, j] + sn[i] * H[i + 1, j], -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            s[j + 1] = -sn[j] * s[j]
            s[j] = cs[j] * s[j]
            total += 1
            y = _back_substitute(H[: j + 1, : j + 1], s[: j + 1])
            x = x_base + y @ Z.rows[: j + 1]
            res = float(np.linalg.norm(res_fn(x)))
            history.append(res)
            reason = _stop_reason(res, b_norm, cfg)
            if reason is None and breakdown:
                reason = StopReason.BREAKDOWN
            if reason is not None or total >= cfg.max_iter:
                break
        if track_orthogonality:
            Vm = V.rows[: V.size]
            G = Vm @ Vm.T
            ortho = max(ortho, float(np.abs(G - np.eye(V.size)).max()))
    if reason is None:
        reason = StopReason.MAX_ITER
    converged = reason is not StopReason.MAX_ITER
    return SolveReport(
        solution=x,
        iterations=total,
        residual_history=history,
        converged=converged,
        stop_reason=reason,
        b_norm=b_norm,
        timings={"fgmres": time.perf_counter() - t0},
        orthogonality_loss=ortho,
    )


def _back_substitute(R: np.ndarray, s: np.ndarray) -> np.ndarray:
    n = len(s)
    y = np.zeros(n)
    for i in range(n - 1, -1, -1):
        y[i] = (s[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y


class _Basis:
    """Row-stacked vectors with amortized growth."""

    def __init__(self, n: int, capacity: int):
        self._buf = np.empty((max(capacity, 1), n))
        self.size = 0

    @property
    def rows(self) -> np.ndarray:
        return self._buf

    def append(self, v: np.ndarray) -> None:
        if self.size == len(self._buf):
            grown = np.empty((2 * len(self._buf), self._buf.shape[1]))
            grown[: self.size] = self._buf
            self._buf = grown
        self._buf[self.size] = v
        self.size += 1
