"""Block-preconditioned FGMRES for the Stokes saddle-point system, with the
grad-div augmented Lagrangian variant and Schur-pencil conditioning."""
from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .fem.assembly import AssembledStokes
from .linalg.eigen import EigenResult, eig_largest_pencil, eig_smallest_pencil
from .linalg.krylov import KrylovConfig, SolveReport, StopReason, fgmres
from .linalg.lu import LuFactorization


class NullspacePolicy(str, enum.Enum):
    NONE = "none"
    CONSTANT_PRESSURE = "constant_pressure"


class PrecondKind(str, enum.Enum):
    STD = "std"
    AL = "al"


@dataclass(frozen=True)
class PreconditionerSpec:
    """``gamma=None`` means gamma0 * m**2 for AL and 0 for Std."""

    kind: PrecondKind = PrecondKind.STD
    gamma0: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PrecondKind(self.kind))
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def resolve_gamma(self, m: int | None) -> float:
        if self.gamma is not None:
            return float(self.gamma)
        if self.kind is PrecondKind.STD:
            return 0.0
        if m is None:
            raise ValueError("AL preconditioner with default gamma needs the density m")
        return float(self.gamma0) * float(m) ** 2


STD = PreconditionerSpec(PrecondKind.STD)
AL = PreconditionerSpec(PrecondKind.AL)


@dataclass
class SaddleSystem:
    """Free-DoF blocks of [[A, B^T], [B, 0]] (u, p) = (f, g) plus the augmented block.

    ``A`` and ``f`` are always the unaugmented blocks; ``A_gamma`` and
    ``f_gamma`` carry the grad-div term.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    M_p: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    nullspace: NullspacePolicy
    mu: float
    gamma: float
    A_gamma: sp.csr_matrix
    f_gamma: np.ndarray
    assembled: AssembledStokes | None = None
    m: int | None = None
    scalar_nodes: np.ndarray | None = None  # shared free node set of both components

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.B.shape[0]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])

    def apply(self, x: np.ndarray, augmented: bool = False) -> np.ndarray:
        u, p = x[: self.n_u], x[self.n_u :]
        A = self.A_gamma if augmented else self.A
        return np.concatenate([A @ u + self.B.T @ p, self.B @ u])

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Residual of the unaugmented system."""
        return self.rhs - self.apply(x)

    def project_pressure(self, p: np.ndarray) -> np.ndarray:
        if self.nullspace is NullspacePolicy.NONE:
            return p
        w = self.M_p @ np.ones(self.n_p)
        return p - (w @ p) / w.sum()

    def monolithic(self, augmented: bool = False) -> sp.csr_matrix:
        A = self.A_gamma if augmented else self.A
        return sp.bmat([[A, self.B.T], [self.B, None]], format="csr")


def nullspace_for(assembled: AssembledStokes) -> NullspacePolicy:
    setup = assembled.setup
    if setup is not None and setup.has_neumann():
        return NullspacePolicy.NONE
    return NullspacePolicy.CONSTANT_PRESSURE


def _graddiv(B: sp.csr_matrix, M_p: sp.csr_matrix) -> sp.csr_matrix:
    G = (B.T @ sp.diags(1.0 / M_p.diagonal()) @ B).tocsr()
    return (0.5 * (G + G.T)).tocsr()


def build_system(
    assembled: AssembledStokes,
    precond: PreconditionerSpec = STD,
    m: int | None = None,
    nullspace: NullspacePolicy | None = None,
) -> SaddleSystem:
    """Eliminate Dirichlet DoFs and form A_gamma = A + gamma B^T diag(M_p)^{-1} B.

    The momentum right-hand side gains gamma B^T diag(M_p)^{-1} g so that the
    augmentation stays consistent when prescribed boundary velocities make
    g nonzero.
    """
    m = m if m is not None else assembled.meta.get("m")
    gamma = precond.resolve_gamma(m)
    A, B, f, g = assembled.reduced()
    if gamma > 0:
        A_gamma = (A + gamma * _graddiv(B, assembled.M_p)).tocsr()
        f_gamma = f + gamma * (B.T @ (g / assembled.M_p.diagonal()))
    else:
        A_gamma, f_gamma = A, f
    return SaddleSystem(
        A=A,
        B=B,
        M_p=assembled.M_p.tocsr(),
        f=f,
        g=g,
        nullspace=nullspace if nullspace is not None else nullspace_for(assembled),
        mu=assembled.mu,
        gamma=gamma,
        A_gamma=A_gamma,
        f_gamma=f_gamma,
        assembled=assembled,
        m=m,
        scalar_nodes=assembled.scalar_free_nodes(),
    )


def mass_lu(M: sp.spmatrix) -> LuFactorization:
    """Factorization of a pressure mass matrix.

    Minimum-degree ordering on A^T + A is extremely slow on higher-order
    mass graphs, so column AMD is used here.
    """
    return LuFactorization(M, symmetric_mode=True, ordering="COLAMD")


class VelocitySolver:
    """Exact inverse of the (possibly augmented) velocity block.

    Without augmentation the block is mu * blockdiag(K, K) on a shared node
    set, so a single scalar factorization serves both components.
    """

    def __init__(self, sys: SaddleSystem, augmented: bool):
        self._split = None
        if (not augmented or sys.gamma == 0) and sys.scalar_nodes is not None and sys.assembled is not None:
            nodes = sys.scalar_nodes
            K = sys.assembled.K[nodes][:, nodes]
            self._split = len(nodes)
            self._scale = sys.mu
            self._lu = LuFactorization(K, symmetric_mode=True)
        else:
            self._lu = LuFactorization(sys.A_gamma if augmented else sys.A, symmetric_mode=True)

    @property
    def nnz(self) -> int:
        return self._lu.nnz

    def solve(self, r: np.ndarray) -> np.ndarray:
        if self._split is None:
            return self._lu.solve(r)
        n = self._split
        rx, ry = r[:n].reshape(n, -1), r[n:].reshape(n, -1)
        k = rx.shape[1]
        out = self._lu.solve(np.hstack([rx, ry]) / self._scale)
        return np.vstack([out[:, :k], out[:, k:]]).reshape(r.shape)

    __call__ = solve


def block_preconditioner(sys: SaddleSystem, vel: VelocitySolver, mass: LuFactorization):
    """Upper block-triangular P^{-1} with S^{-1} ~ -(mu + gamma) M_p^{-1}."""
    n_u = sys.n_u
    BT = sys.B.T.tocsr()
    scale = sys.mu + sys.gamma

    def apply(r: np.ndarray) -> np.ndarray:
        p = -scale * mass.solve(r[n_u:])
        p = sys.project_pressure(p)
        u = vel.solve(r[:n_u] - BT @ p)
        return np.concatenate([u, p])

    return apply


@dataclass
class Factors:
    velocity: VelocitySolver
    mass: LuFactorization


def factorize(sys: SaddleSystem) -> Factors:
    """Factorizations used by the block preconditioner of ``sys``."""
    return Factors(VelocitySolver(sys, sys.gamma > 0), mass_lu(sys.M_p))


def solve(
    sys: SaddleSystem,
    cfg: KrylovConfig = KrylovConfig(),
    track_orthogonality: bool = False,
    factors: Factors | None = None,
) -> SolveReport:
    """FGMRES on the (augmented when gamma > 0) coupled operator.

    Stopping always uses the residual of the unaugmented system.  Pass
    ``factors`` from :func:`factorize` to reuse them across solves.
    """
    t0 = time.perf_counter()
    augmented = sys.gamma > 0
    if factors is None:
        factors = factorize(sys)
    vel, mass = factors.velocity, factors.mass
    t_factor = time.perf_counter() - t0
    P = block_preconditioner(sys, vel, mass)
    b = np.concatenate([sys.f_gamma, sys.g])
    report = fgmres(
        lambda x: sys.apply(x, augmented=augmented),
        b,
        apply_P=P,
        cfg=cfg,
        residual=sys.residual,
        track_orthogonality=track_orthogonality,
        b_norm=float(np.linalg.norm(sys.rhs)),
    )
    x = report.solution.copy()
    x[sys.n_u :] = sys.project_pressure(x[sys.n_u :])
    report.solution = x
    report.timings = {"factorize": t_factor, **report.timings, "total": time.perf_counter() - t0}
    return report


def _border(sys: SaddleSystem, K: sp.spmatrix) -> sp.csr_matrix:
    """Append a multiplier enforcing zero M_p-weighted pressure mean."""
    w = sys.M_p @ np.ones(sys.n_p)
    col = sp.csr_matrix(np.concatenate([np.zeros(sys.n_u), w])[:, None])
    return sp.bmat([[K, col], [col.T, None]], format="csr")


def solve_direct(sys: SaddleSystem) -> tuple[np.ndarray, np.ndarray]:
    """Monolithic sparse LU of the unaugmented system (reference oracle)."""
    K = sys.monolithic()
    b = sys.rhs
    if sys.nullspace is NullspacePolicy.CONSTANT_PRESSURE:
        K = _border(sys, K)
        b = np.concatenate([b, [0.0]])
    x = LuFactorization(K, ordering="COLAMD").solve(b)
    return x[: sys.n_u], sys.project_pressure(x[sys.n_u : sys.n_u + sys.n_p])


@dataclass
class SchurCgResult:
    u: np.ndarray
    p: np.ndarray
    iterations: int
    residual: float  # final unaugmented residual, absolute
    rel_residual: float
    history: list[float] = field(default_factory=list)


def solve_schur_cg(sys: SaddleSystem, tol: float = 1e-13, max_iter: int = 5000) -> SchurCgResult:
    """Pressure Schur-complement CG with exact inner velocity solves.

    Solves B A^{-1} B^T p = B A^{-1} f - g by M_p-preconditioned conjugate
    gradients, then recovers u = A^{-1}(f - B^T p).  Memory stays at one
    velocity factorization, which makes it the reference solver for large
    elevated systems.  ``tol`` is relative to the initial Schur residual.
    """
    vel = VelocitySolver(sys, augmented=False)
    mass = mass_lu(sys.M_p)
    BT = sys.B.T.tocsr()
    S = lambda q: sys.B @ vel.solve(BT @ q)  # noqa: E731
    prec = lambda r: sys.project_pressure(sys.mu * mass.solve(r))  # noqa: E731

    rhs = sys.B @ vel.solve(sys.f) - sys.g
    p = np.zeros(sys.n_p)
    r = rhs.copy()
    z = prec(r)
    d = z.copy()
    rz = r @ z
    r0 = np.sqrt(abs(rz)) if rz != 0 else 0.0
    history = [r0]
    it = 0
    while it < max_iter and r0 > 0 and np.sqrt(abs(rz)) > tol * r0:
        Sd = S(d)
        alpha = rz / (d @ Sd)
        p += alpha * d
        r -= alpha * Sd
        z = prec(r)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
        history.append(np.sqrt(abs(rz)))
    p = sys.project_pressure(p)
    u = vel.solve(sys.f - BT @ p)
    res = float(np.linalg.norm(sys.residual(np.concatenate([u, p]))))
    bn = float(np.linalg.norm(sys.rhs))
    return SchurCgResult(u, p, it, res, res / bn if bn > 0 else res, history)


class SchurInverse:
    """Apply (S + shift M_p)^{-1} through one factorization of the
    quasi-definite matrix [[A, B^T], [B, -shift M_p]].

    Solving it with right-hand side (0, -r) gives (S + shift M_p) z = r.
    The pencil (S + shift M_p, M_p) has the eigenvectors of (S, M_p) with
    every eigenvalue moved by exactly ``shift``, and the matrix admits a
    symmetric factorization without pivoting.  The constant pressure mode,
    singular for S on enclosed domains, becomes the isolated eigenvalue
    ``shift`` and is removed by deflation.
    """

    def __init__(self, sys: SaddleSystem, augmented: bool = False, shift: float | None = None):
        self.sys = sys
        # small against the pencil scale, which is bounded by 1 / mu
        self.shift = 1e-4 / sys.mu if shift is None else float(shift)
        if self.shift <= 0:
            raise ValueError("shift must be positive")
        A = sys.A_gamma if augmented else sys.A
        K = sp.bmat([[A, sys.B.T], [sys.B, -self.shift * sys.M_p]], format="csc")
        self._lu = LuFactorization(K, symmetric_mode=True, ordering="COLAMD")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        s = self.sys
        rhs = np.zeros((s.n_u + s.n_p,) + r.shape[1:])
        rhs[s.n_u :] = -r
        return self._lu.solve(rhs)[s.n_u :]


def smallest_schur_eigenpair(
    sys: SaddleSystem,
    augmented: bool = False,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
    block: int = 8,
) -> EigenResult:
    """Smallest eigenpair of (B A^{-1} B^T, M_p), constant mode excluded under
    the constant-pressure policy."""
    M = sys.M_p
    deflate = np.ones(sys.n_p) if sys.nullspace is NullspacePolicy.CONSTANT_PRESSURE else None
    Sinv = SchurInverse(sys, augmented)
    res = eig_smallest_pencil(lambda x: Sinv(M @ x), lambda x: M @ x, sys.n_p, deflate, tol, max_iter, seed, block)
    return replace(res, value=res.value - Sinv.shift)


@dataclass(frozen=True)
class SchurSpectrum:
    kappa: float
    lambda_min: float
    lambda_max: float
    iterations_min: int
    iterations_max: int


def schur_condition(
    sys: SaddleSystem,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed: int = 0,
    block: int = 8,
    tol_max: float = 1e-6,
) -> SchurSpectrum:
    """Extreme eigenvalues of (B A_gamma^{-1} B^T, M_p) and their ratio.

    The top of the spectrum is a dense cluster just below its supremum, so
    the largest eigenvalue uses the looser ``tol_max``; the ratio needs only
    a few digits.
    """
    augmented = sys.gamma > 0
    ones = np.ones(sys.n_p)
    deflate = ones if sys.nullspace is NullspacePolicy.CONSTANT_PRESSURE else None
    M = sys.M_p
    mass = mass_lu(M)
    BT = sys.B.T.tocsr()
    A_lu = VelocitySolver(sys, augmented)
    lo = smallest_schur_eigenpair(sys, augmented, tol, max_iter, seed, block)
    hi = eig_largest_pencil(
        lambda x: mass.solve(sys.B @ A_lu.solve(BT @ x)), lambda x: M @ x, sys.n_p, deflate, tol_max, max_iter, seed, block
    )
    return SchurSpectrum(hi.value / lo.value, lo.value, hi.value, lo.iterations, hi.iterations)


def report_to_json(report: SolveReport, sys: SaddleSystem | None = None, path=None, **extra) -> dict:
    """Serializable summary of a solve; written to ``path`` when given."""
    data = {
        "iterations": report.iterations,
        "converged": report.converged,
        "stop_reason": StopReason(report.stop_reason).value,
        "final_residual": report.final_residual,
        "b_norm": report.b_norm,
        "residual_history": [float(r) for r in report.residual_history],
        "timings": report.timings,
    }
    if sys is not None:
        data.update({"gamma": sys.gamma, "m": sys.m, "n_u": sys.n_u, "n_p": sys.n_p, "mu": sys.mu})
    data.update(extra)
    if path is not None:
        Path(path).write_text(json.dumps(data, indent=2))
    return data
