"""Taylor-Hood Stokes assembly, boundary conditions and the grad-div operator."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..geometry import BoundaryLabel
from ..linalg.sparse import coo_to_csr
from ..mesher import Mesh
from .dofmap import DofMap, edge_index
from .elements import EDGE_POINTS, EDGE_WEIGHTS, QUAD_POINTS, QUAD_WEIGHTS, lagrange

log = logging.getLogger(__name__)


class DegenerateElementError(ValueError):
    def __init__(self, index: int, area: float):
        self.index = index
        super().__init__(f"triangle {index} is degenerate (signed area {area:.3e})")


@dataclass(frozen=True)
class ElementGeometry:
    """Affine maps of all triangles evaluated at the volume quadrature points."""

    det: np.ndarray  # (nt,) Jacobian determinants (twice the area)
    inv: np.ndarray  # (nt, 2, 2) inverse Jacobians
    points: np.ndarray  # (nt, nq, 2) physical quadrature points
    weights: np.ndarray  # (nt, nq) physical quadrature weights

    def physical_gradients(self, ref_grads: np.ndarray) -> np.ndarray:
        """(nt, nq, n_local, 2) from reference gradients (nq, n_local, 2)."""
        return np.einsum("qid,edk->eqik", ref_grads, self.inv)


def element_geometry(mesh: Mesh, elements: np.ndarray | None = None) -> ElementGeometry:
    tris = mesh.triangles if elements is None else mesh.triangles[elements]
    p = mesh.vertices[tris]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    scale = np.abs(p).max() if len(p) else 1.0
    bad = np.flatnonzero(det <= 1e-14 * scale**2)
    if len(bad):
        idx = int(bad[0]) if elements is None else int(np.asarray(elements)[bad[0]])
        raise DegenerateElementError(idx, 0.5 * float(det[bad[0]]))
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    pts = p[:, None, 0, :] + np.einsum("qd,ekd->eqk", QUAD_POINTS, J)
    w = 0.5 * det[:, None] * QUAD_WEIGHTS[None, :]
    return ElementGeometry(det, inv, pts, w)


def _scatter(cell_rows, cell_cols, local, shape):
    """Global CSR from per-element blocks local[e, i, j] -> (cell_rows[e, i], cell_cols[e, j])."""
    nt, ni, nj = local.shape
    rows = np.broadcast_to(cell_rows[:, :, None], (nt, ni, nj))
    cols = np.broadcast_to(cell_cols[:, None, :], (nt, ni, nj))
    return coo_to_csr(rows, cols, local, shape)


def _sym(local):
    return 0.5 * (local + local.transpose(0, 2, 1))


def scalar_stiffness_local(geo: ElementGeometry, order: int) -> np.ndarray:
    g = geo.physical_gradients(lagrange(order).gradients(QUAD_POINTS))
    return _sym(np.einsum("eq,eqik,eqjk->eij", geo.weights, g, g))


def scalar_mass_local(geo: ElementGeometry, order: int) -> np.ndarray:
    phi = lagrange(order).values(QUAD_POINTS)
    return _sym(np.einsum("eq,qi,qj->eij", geo.weights, phi, phi))


@dataclass
class AssembledStokes:
    """Full (unconstrained) Stokes blocks plus boundary-condition bookkeeping.

    ``free`` indexes unconstrained velocity DoFs; ``u_dirichlet`` is a full
    velocity vector holding the prescribed values (zero on free DoFs).
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    M_p: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    mu: float
    dofmap: DofMap
    K: sp.csr_matrix  # scalar stiffness (mu = 1); A = mu * blockdiag(K, K)
    free: np.ndarray | None = None
    u_dirichlet: np.ndarray | None = None
    setup: "BcSetup | None" = None
    meta: dict = field(default_factory=dict)

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.M_p.shape[0]

    @property
    def constrained(self) -> np.ndarray:
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.free_dofs] = False
        return np.flatnonzero(mask)

    @property
    def free_dofs(self) -> np.ndarray:
        return np.arange(self.n_u) if self.free is None else self.free

    @property
    def dirichlet_values(self) -> np.ndarray:
        return np.zeros(self.n_u) if self.u_dirichlet is None else self.u_dirichlet

    @property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.free_dofs] = False
        return mask

    def reduced(self):
        """Symmetrically eliminated blocks (A_ff, B_f, f_f, g).

        Prescribed values move to the right-hand sides; for homogeneous
        constraints g stays zero.
        """
        fr, ud = self.free_dofs, self.dirichlet_values
        A_ff = self.A[fr][:, fr].tocsr()
        B_f = self.B[:, fr].tocsr()
        f_f = self.f[fr] - self.A[fr] @ ud
        g = self.g - self.B @ ud
        return A_ff, B_f, f_f, g

    def scalar_free_nodes(self) -> np.ndarray | None:
        """Scalar node set when both velocity components share it, else None."""
        n = self.dofmap.velocity.n_nodes
        fr = self.free_dofs
        x, y = fr[fr < n], fr[fr >= n] - n
        if len(x) == len(y) and np.array_equal(x, y):
            return x
        return None

    def expand_velocity(self, u_free: np.ndarray) -> np.ndarray:
        u = self.dirichlet_values.copy()
        u[self.free_dofs] = u_free
        return u


def assemble(
    mesh: Mesh,
    dofmap: DofMap,
    mu: float = 1.0,
    body_force: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> AssembledStokes:
    """Viscous stiffness, divergence and pressure-mass blocks (no boundary conditions).

    ``body_force(x, y) -> (fx, fy)`` is sampled at quadrature points; the
    load is zero when omitted.
    """
    geo = element_geometry(mesh)
    vel, pre = dofmap.velocity, dofmap.pressure
    nn = vel.n_nodes
    K = _scatter(vel.cell_nodes, vel.cell_nodes, scalar_stiffness_local(geo, vel.order), (nn, nn))
    A = mu * sp.block_diag([K, K], format="csr")

    phi_v = lagrange(vel.order)
    psi = lagrange(pre.order).values(QUAD_POINTS)
    grads = geo.physical_gradients(phi_v.gradients(QUAD_POINTS))
    # B[q, (c, j)] = -int psi_q d_c phi_j
    Bx = -np.einsum("eq,qa,eqj->eaj", geo.weights, psi, grads[..., 0])
    By = -np.einsum("eq,qa,eqj->eaj", geo.weights, psi, grads[..., 1])
    cols = np.concatenate([vel.cell_nodes, vel.cell_nodes + nn], axis=1)
    B = _scatter(pre.cell_nodes, cols, np.concatenate([Bx, By], axis=2), (pre.n_nodes, 2 * nn))
    M_p = _scatter(pre.cell_nodes, pre.cell_nodes, scalar_mass_local(geo, pre.order), (pre.n_nodes, pre.n_nodes))

    f = np.zeros(2 * nn)
    if body_force is not None:
        fx, fy = body_force(geo.points[..., 0], geo.points[..., 1])
        phi = phi_v.values(QUAD_POINTS)
        for comp, val in ((0, fx), (1, fy)):
            loc = np.einsum("eq,eq,qi->ei", geo.weights, np.broadcast_to(val, geo.weights.shape), phi)
            np.add.at(f, vel.cell_nodes + comp * nn, loc)
    return AssembledStokes(A=A, B=B, M_p=M_p, f=f, g=np.zeros(pre.n_nodes), mu=mu, dofmap=dofmap, K=K)


class BcKind(str, enum.Enum):
    PRESSURE_DRIVEN = "pressure"
    VELOCITY_DRIVEN = "velocity"
    ENCLOSED = "enclosed"


@dataclass(frozen=True)
class BcSetup:
    """Driving conditions.  ``p_in=None`` means the density-scaled default m**2."""

    kind: BcKind = BcKind.ENCLOSED
    p_in: float | None = None
    p_out: float = 0.0
    U_max: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BcKind(self.kind))

    def inlet_pressure(self, m: int) -> float:
        return float(m) ** 2 if self.p_in is None else float(self.p_in)

    def has_neumann(self) -> bool:
        return self.kind is BcKind.PRESSURE_DRIVEN


def setup_a(m: int, **kw) -> BcSetup:
    """Pressure-driven channel with p_in = m**2, p_out = 0."""
    return BcSetup(BcKind.PRESSURE_DRIVEN, p_in=float(m) ** 2, **kw)


def setup_b(**kw) -> BcSetup:
    """Parabolic inflow/outflow profile with peak ``U_max``."""
    return BcSetup(BcKind.VELOCITY_DRIVEN, **kw)


def parabolic_profile(y: np.ndarray, y0: float, y1: float, U_max: float) -> np.ndarray:
    H = y1 - y0
    return 4.0 * U_max * (y - y0) * (y1 - y) / H**2


def _edges_with(mesh: Mesh, label: BoundaryLabel) -> np.ndarray:
    return np.flatnonzero(mesh.boundary_labels == int(label))


def traction_load(mesh: Mesh, dofmap: DofMap, label: BoundaryLabel, pressure: float) -> np.ndarray:
    """Load vector of -pressure * int_{edges} (n . v) ds, 3-point Gauss per edge."""
    vel = dofmap.velocity
    nn = vel.n_nodes
    load = np.zeros(2 * nn)
    ids = _edges_with(mesh, label)
    if len(ids) == 0 or pressure == 0.0:
        return load
    edges = mesh.boundary_edges[ids]
    a, b = edges[:, 0], edges[:, 1]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    tangent = pb - pa
    length = np.linalg.norm(tangent, axis=1)
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / length[:, None]
    # orient outward: away from the third vertex of the adjacent triangle
    third = _opposite_vertex(mesh, np.sort(edges, axis=1))
    flip = ((mesh.vertices[third] - pa) * normal).sum(axis=1) > 0
    normal[flip] *= -1
    k = vel.order
    t_nodes = np.concatenate([[0.0, 1.0], np.arange(1, k) / k])
    # 1-D Lagrange basis on the edge nodes, evaluated at the Gauss points
    V = np.vander(t_nodes, k + 1, increasing=True)
    C = np.linalg.solve(V, np.eye(k + 1))
    vals = np.vander(EDGE_POINTS, k + 1, increasing=True) @ C  # (3, k+1)
    integ = EDGE_WEIGHTS @ vals  # int_0^1 phi_i dt
    gid = edge_index(vel.edges, np.sort(edges, axis=1), mesh.n_vertices)
    enodes = vel.edge_nodes[gid]
    forward = a < b
    inner = np.where(forward[:, None], enodes, enodes[:, ::-1])
    nodes = np.concatenate([a[:, None], b[:, None], inner], axis=1)
    for comp in (0, 1):
        contrib = -pressure * normal[:, comp, None] * length[:, None] * integ[None, :]
        np.add.at(load, nodes + comp * nn, contrib)
    return load


def _opposite_vertex(mesh: Mesh, sorted_pairs: np.ndarray) -> np.ndarray:
    t = mesh.triangles
    nv = mesh.n_vertices
    out = np.full(len(sorted_pairs), -1, dtype=np.int64)
    want = sorted_pairs[:, 0] * nv + sorted_pairs[:, 1]
    lookup = {int(k): i for i, k in enumerate(want)}
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        lo, hi = np.minimum(t[:, a], t[:, b]), np.maximum(t[:, a], t[:, b])
        keys = lo * nv + hi
        hit = np.isin(keys, want)
        for e, k in zip(np.flatnonzero(hit), keys[hit]):
            out[lookup[int(k)]] = t[e, c]
    return out


def apply_bcs(sys: AssembledStokes, setup: BcSetup, mesh: Mesh, m: int | None = None) -> AssembledStokes:
    """Constrain velocity DoFs and add traction loads; returns a new system.

    Wall nodes are always no-slip.  Where a Wall edge meets an Inlet/Outlet
    edge the shared vertex keeps the Wall value.
    """
    dm = sys.dofmap
    vel = dm.velocity
    nn = vel.n_nodes
    wall_nodes = vel.boundary_nodes(mesh, _edges_with(mesh, BoundaryLabel.WALL))
    io_ids = np.concatenate([_edges_with(mesh, BoundaryLabel.INLET), _edges_with(mesh, BoundaryLabel.OUTLET)])
    io_nodes = vel.boundary_nodes(mesh, io_ids) if len(io_ids) else np.zeros(0, dtype=np.int64)
    ud = np.zeros(2 * nn)
    f = sys.f.copy()
    kind = setup.kind
    if kind is BcKind.PRESSURE_DRIVEN:
        constrained_nodes = wall_nodes
        p_in = setup.inlet_pressure(m if m is not None else 1)
        if setup.p_in is None and m is None:
            raise ValueError("pressure-driven setup with default p_in needs the density m")
        f += traction_load(mesh, dm, BoundaryLabel.INLET, p_in)
        f += traction_load(mesh, dm, BoundaryLabel.OUTLET, setup.p_out)
    else:
        constrained_nodes = np.union1d(wall_nodes, io_nodes)
        if kind is BcKind.VELOCITY_DRIVEN:
            profile_nodes = np.setdiff1d(io_nodes, wall_nodes)
            clash = np.intersect1d(io_nodes, wall_nodes)
            if len(clash):
                log.info("%d inlet/outlet nodes also on walls: wall value kept", len(clash))
            y = vel.coords[profile_nodes, 1]
            y0, y1 = mesh.vertices[:, 1].min(), mesh.vertices[:, 1].max()
            ud[profile_nodes] = parabolic_profile(y, y0, y1, setup.U_max)
    mask = np.zeros(2 * nn, dtype=bool)
    mask[constrained_nodes] = True
    mask[constrained_nodes + nn] = True
    free = np.flatnonzero(~mask)
    f[mask] = 0.0
    return replace(sys, f=f, free=free, u_dirichlet=ud, setup=setup, meta={**sys.meta, "m": m})


def graddiv_operator(sys: AssembledStokes, gamma: float) -> sp.csr_matrix:
    """gamma * B^T diag(M_p)^{-1} B on the full velocity space."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0:
        return sp.csr_matrix((sys.n_u, sys.n_u))
    dinv = sp.diags(1.0 / sys.M_p.diagonal())
    G = (sys.B.T @ dinv @ sys.B).tocsr()
    G = 0.5 * (G + G.T)
    return (gamma * G).tocsr()
