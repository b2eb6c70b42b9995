"""Extreme eigenpairs of symmetric pencils (S, M) with M symmetric positive definite.

Both routines run simultaneous (block) iteration with a Rayleigh-Ritz step on
the block; with ``block=1`` this is plain inverse or power iteration with
M-normalization.  Operators may act on a single vector or on an (n, k) block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

Operator = Callable[[np.ndarray], np.ndarray]


class EigenConvergenceError(RuntimeError):
    def __init__(self, last_lambda: float, iterations: int, residual: float):
        self.last_lambda, self.iterations, self.residual = last_lambda, iterations, residual
        super().__init__(
            f"eigen-iteration did not converge in {iterations} steps "
            f"(last lambda {last_lambda:.10g}, relative residual {residual:.3e})"
        )


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float  # ||S x - lambda M x||_{M^-1} / (lambda ||x||_M)


def _columns(op: Operator, X: np.ndarray) -> np.ndarray:
    """Apply ``op`` to every column, batching when the operator allows it."""
    try:
        Y = np.asarray(op(X))
        if Y.shape == X.shape:
            return Y
    except ValueError:
        pass
    return np.column_stack([op(X[:, j]) for j in range(X.shape[1])])


class _Deflation:
    def __init__(self, d: np.ndarray | None, apply_M: Operator):
        self.d = d
        if d is not None:
            self.Md = apply_M(d)
            self.dMd = self.Md @ d

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self.d is None:
            return X
        return X - np.outer(self.d, (self.Md @ X) / self.dMd)


def _start_block(n: int, k: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal((n, k))


def _m_transform(X: np.ndarray, MX: np.ndarray) -> np.ndarray:
    """T with (X T)^T M (X T) = I, dropping numerically dependent directions."""
    G = X.T @ MX
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    keep = w > w.max() * 1e-14
    return V[:, keep] / np.sqrt(w[keep])


def _m_orthonormalize(X: np.ndarray, MX: np.ndarray):
    """Rotate/scale X so that X^T M X = I (eigen-decomposition of the Gram matrix)."""
    T = _m_transform(X, MX)
    return X @ T, MX @ T


def eig_smallest_pencil(
    apply_Sinv_M: Operator,
    apply_M: Operator,
    n: int,
    deflate: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
    block: int = 1,
) -> EigenResult:
    """Smallest eigenvalue of S x = lambda M x outside span(deflate), by inverse iteration.

    Each step applies S^{-1} M to the block and M-orthogonalizes against
    ``deflate``.  Since S Y = M X for Y = S^{-1} M X, the projected pencil
    (Y^T M X, Y^T M Y) is available without applying S, and so is the
    residual of the leading Ritz pair.  Stops once the leading Ritz value
    changes by less than ``tol`` (relative) and its relative residual is
    below ``tol``.
    """
    k = max(1, min(block, n - (deflate is not None)))
    defl = _Deflation(deflate, apply_M)
    X = defl(_start_block(n, k, seed))
    X, MX = _m_orthonormalize(X, _columns(apply_M, X))
    lam_prev = np.inf
    lam, res = np.nan, np.inf
    for it in range(1, max_iter + 1):
        Y = defl(_columns(apply_Sinv_M, X))
        MY = _columns(apply_M, Y)
        H = Y.T @ MX  # Y^T S Y
        G = Y.T @ MY
        theta, C = scipy.linalg.eigh(0.5 * (H + H.T), 0.5 * (G + G.T))
        lam = float(theta[0])
        c = C[:, 0]
        y, My, x = Y @ c, MY @ c, X @ c
        # residual S y - lam M y = M (x - lam y); C is G-orthonormal so ||y||_M = 1
        diff = x - lam * y
        res = float(np.sqrt(max(diff @ (MX @ c - lam * My), 0.0)) / abs(lam))
        if abs(lam - lam_prev) <= tol * abs(lam) and res <= tol:
            return EigenResult(lam, y, it, res)
        lam_prev = lam
        X, MX = Y @ C, MY @ C
    raise EigenConvergenceError(float(lam), max_iter, float(res))


def eig_largest_pencil(
    apply_Minv_S: Operator,
    apply_M: Operator,
    n: int,
    deflate: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
    block: int = 1,
) -> EigenResult:
    """Largest eigenvalue of S x = lambda M x by locally optimal block iteration on M^{-1} S.

    Each step runs Rayleigh-Ritz on span(X, R, P): the current block, its
    residual R = M^{-1} S X - X Theta and the previous update direction.
    For any block Z the projected matrix Z^T S Z equals Z^T M (M^{-1} S Z),
    so S itself is never needed.  Stops when the leading Ritz value changes
    by less than ``tol`` (relative); the residual is reported but not
    required to reach ``tol`` because the top of the spectrum may be
    clustered.
    """
    k = max(1, min(block, n - (deflate is not None)))
    defl = _Deflation(deflate, apply_M)
    X = defl(_start_block(n, k, seed))
    X, MX = _m_orthonormalize(X, _columns(apply_M, X))
    AX = defl(_columns(apply_Minv_S, X))
    P = AP = None
    lam_prev = np.inf
    lam, res = np.nan, np.inf
    for it in range(1, max_iter + 1):
        H = MX.T @ AX
        theta, C = np.linalg.eigh(0.5 * (H + H.T))
        order = np.argsort(theta)[::-1]
        theta, C = theta[order], C[:, order]
        X, MX, AX = X @ C, MX @ C, AX @ C
        lam = float(theta[0])
        R = AX - X * theta
        MR = _columns(apply_M, R)
        res = float(np.sqrt(max(R[:, 0] @ MR[:, 0], 0.0)) / abs(lam))
        if abs(lam - lam_prev) <= tol * abs(lam) or res <= 1e-14:
            return EigenResult(lam, X[:, 0], it, res)
        lam_prev = lam
        W = defl(R)
        AW = defl(_columns(apply_Minv_S, W))
        Z = np.hstack([X, W] + ([P] if P is not None else []))
        AZ = np.hstack([AX, AW] + ([AP] if AP is not None else []))
        MZ = _columns(apply_M, Z)
        T = _m_transform(Z, MZ)
        H = (MZ @ T).T @ (AZ @ T)
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        coef = T @ V[:, np.argsort(w)[::-1][:k]]
        X, MX, AX = Z @ coef, MZ @ coef, AZ @ coef
        P, AP = Z[:, k:] @ coef[k:], AZ[:, k:] @ coef[k:]
    raise EigenConvergenceError(float(lam), max_iter, float(res))
