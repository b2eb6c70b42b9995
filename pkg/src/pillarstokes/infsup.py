"""Discrete inf-sup constant from the Schur-complement pencil and its decay rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .fem.assembly import BcKind, BcSetup, apply_bcs, assemble
from .fem.dofmap import build_dofmap
from .fem.elements import TAYLOR_HOOD, ElementPair
from .mesher import Mesh
from .saddle import STD, NullspacePolicy, SaddleSystem, build_system, smallest_schur_eigenpair


@dataclass(frozen=True)
class InfSupResult:
    m: int | None
    h_max: float
    n_u: int  # free velocity DoFs
    n_p: int
    lambda_min_nonzero: float
    beta_h: float
    eig_iterations: int
    eig_residual: float
    pressure_mode: np.ndarray | None = None

    def row(self) -> dict:
        return {
            "m": self.m,
            "h_max": self.h_max,
            "n_u": self.n_u,
            "n_p": self.n_p,
            "lambda_min": self.lambda_min_nonzero,
            "beta_h": self.beta_h,
            "eig_iterations": self.eig_iterations,
        }


def enclosed_system(mesh: Mesh, mu: float = 1.0, pair: ElementPair = TAYLOR_HOOD, m: int | None = None) -> SaddleSystem:
    """Stokes blocks with no-slip velocity on the whole boundary."""
    dm = build_dofmap(mesh, pair)
    asm = apply_bcs(assemble(mesh, dm, mu=mu), BcSetup(BcKind.ENCLOSED, mu=mu), mesh, m)
    return build_system(asm, STD, m=m, nullspace=NullspacePolicy.CONSTANT_PRESSURE)


def discrete_infsup(
    mesh: Mesh,
    mu: float = 1.0,
    pair: ElementPair = TAYLOR_HOOD,
    m: int | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    block: int = 8,
    seed: int = 0,
) -> InfSupResult:
    """beta_h = sqrt of the smallest nonzero eigenvalue of (B A^{-1} B^T, M_p)."""
    sys = enclosed_system(mesh, mu, pair, m)
    eig = smallest_schur_eigenpair(sys, tol=tol, max_iter=max_iter, seed=seed, block=block)
    if eig.value <= 0:
        raise ArithmeticError(f"nonpositive Schur eigenvalue {eig.value:.3e}")
    return InfSupResult(
        m=m,
        h_max=mesh.h_max,
        n_u=sys.n_u,
        n_p=sys.n_p,
        lambda_min_nonzero=eig.value,
        beta_h=float(np.sqrt(eig.value)),
        eig_iterations=eig.iterations,
        eig_residual=eig.residual,
        pressure_mode=eig.vector,
    )


def dense_schur_spectrum(sys: SaddleSystem) -> np.ndarray:
    """All eigenvalues of (B A^{-1} B^T, M_p) from dense factorizations (small systems only)."""
    A = sys.A.toarray()
    B = sys.B.toarray()
    S = B @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), B.T)
    return scipy.linalg.eigh(0.5 * (S + S.T), sys.M_p.toarray(), eigvals_only=True)


def dense_infsup(mesh: Mesh, mu: float = 1.0, pair: ElementPair = TAYLOR_HOOD, max_pressure_dofs: int = 2000) -> float:
    """Reference beta_h; the zero eigenvalue of the constant mode is skipped."""
    sys = enclosed_system(mesh, mu, pair)
    if sys.n_p > max_pressure_dofs:
        raise ValueError(f"{sys.n_p} pressure DoFs exceed the dense limit {max_pressure_dofs}")
    w = dense_schur_spectrum(sys)
    return float(np.sqrt(w[1]))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    points: list[tuple[float, float]]


def fit_slope(points) -> SlopeFit:
    """Least-squares line through (log m, log beta) for (m, beta) pairs."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("slope fit needs at least 3 (m, beta) points")
    if (pts <= 0).any() or not np.isfinite(pts).all():
        raise ValueError("slope fit needs positive finite values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("slope fit needs at least two distinct m values")
    fit = scipy.stats.linregress(x, y)
    r2 = float(fit.rvalue**2) if np.ptp(y) > 0 else 1.0
    return SlopeFit(float(fit.slope), float(fit.intercept), min(max(r2, 0.0), 1.0), list(zip(x.tolist(), y.tolist())))
