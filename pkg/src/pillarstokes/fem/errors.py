"""Interior-subdomain error norms, interpolation between spaces, field export."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..mesher import Mesh
from .assembly import element_geometry
from .dofmap import DofMap, ScalarSpace
from .elements import QUAD_POINTS, lagrange


@dataclass(frozen=True)
class ErrorReport:
    rel_p_L2: float
    rel_u_L2: float
    rel_u_H1: float
    abs_p_L2: float
    abs_u_L2: float
    abs_u_H1: float
    norm_p_ref: float
    norm_u_ref: float
    norm_grad_u_ref: float
    n_elements: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class _Samples:
    u: np.ndarray  # (ne, nq, 2)
    grad_u: np.ndarray  # (ne, nq, 2, 2) grad_u[..., c, k] = d u_c / d x_k
    p: np.ndarray  # (ne, nq)
    weights: np.ndarray  # (ne, nq)
    points: np.ndarray  # (ne, nq, 2)


def select_elements(mesh: Mesh, box: tuple[float, float, float, float] | None) -> np.ndarray:
    """Triangles whose centroid lies strictly inside ``(x0, x1, y0, y1)``."""
    if box is None:
        return np.arange(mesh.n_triangles)
    x0, x1, y0, y1 = box
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    sel = np.flatnonzero((c[:, 0] > x0) & (c[:, 0] < x1) & (c[:, 1] > y0) & (c[:, 1] < y1))
    if len(sel) == 0:
        raise ValueError(f"no element centroid inside {box}")
    return sel


def _sample(mesh: Mesh, dofmap: DofMap, u: np.ndarray, p: np.ndarray, elements: np.ndarray) -> _Samples:
    geo = element_geometry(mesh, elements)
    vel, pre = dofmap.velocity, dofmap.pressure
    nn = vel.n_nodes
    el_v, el_p = lagrange(vel.order), lagrange(pre.order)
    phi = el_v.values(QUAD_POINTS)
    grads = geo.physical_gradients(el_v.gradients(QUAD_POINTS))  # (ne, nq, nloc, 2)
    cn = vel.cell_nodes[elements]
    uc = np.stack([u[cn], u[cn + nn]], axis=-1)  # (ne, nloc, 2)
    u_q = np.einsum("qi,eic->eqc", phi, uc)
    gu_q = np.einsum("eqik,eic->eqck", grads, uc)
    p_q = np.einsum("qi,ei->eq", el_p.values(QUAD_POINTS), p[pre.cell_nodes[elements]])
    return _Samples(u_q, gu_q, p_q, geo.weights, geo.points)


def _report(approx: _Samples, ref: _Samples) -> ErrorReport:
    w = approx.weights
    area = w.sum()
    p_h = approx.p - (w * approx.p).sum() / area
    p_r = ref.p - (w * ref.p).sum() / area
    norm = lambda a: float(np.sqrt((w * a).sum()))  # noqa: E731
    e_p = norm((p_h - p_r) ** 2)
    e_u = norm(((approx.u - ref.u) ** 2).sum(axis=-1))
    e_g = norm(((approx.grad_u - ref.grad_u) ** 2).sum(axis=(-1, -2)))
    n_p = norm(p_r**2)
    n_u = norm((ref.u**2).sum(axis=-1))
    n_g = norm((ref.grad_u**2).sum(axis=(-1, -2)))
    rel = lambda e, n: e / n if n > 0 else (0.0 if e == 0 else np.inf)  # noqa: E731
    return ErrorReport(
        rel_p_L2=rel(e_p, n_p),
        rel_u_L2=rel(e_u, n_u),
        rel_u_H1=rel(e_g, n_g),
        abs_p_L2=e_p,
        abs_u_L2=e_u,
        abs_u_H1=e_g,
        norm_p_ref=n_p,
        norm_u_ref=n_u,
        norm_grad_u_ref=n_g,
        n_elements=int(w.shape[0]),
    )


def evaluate_errors(mesh, dofmap_lo, sol_lo, dofmap_hi, sol_hi, inner_box=None) -> ErrorReport:
    """Errors of ``sol_lo`` against ``sol_hi`` on one shared mesh.

    Solutions are ``(u_full, p)`` pairs.  Pressures are compared after
    removing each field's mean over the selected elements.
    """
    elems = select_elements(mesh, inner_box)
    lo = _sample(mesh, dofmap_lo, *sol_lo, elems)
    hi = _sample(mesh, dofmap_hi, *sol_hi, elems)
    return _report(lo, hi)


def errors_against_exact(
    mesh: Mesh,
    dofmap: DofMap,
    sol,
    u_exact: Callable,
    grad_u_exact: Callable,
    p_exact: Callable,
    inner_box=None,
) -> ErrorReport:
    """Errors against analytic fields.

    ``u_exact(x, y) -> (ux, uy)``, ``grad_u_exact(x, y) -> ((dux/dx, dux/dy), (duy/dx, duy/dy))``,
    ``p_exact(x, y) -> p``, all vectorized.
    """
    elems = select_elements(mesh, inner_box)
    approx = _sample(mesh, dofmap, *sol, elems)
    x, y = approx.points[..., 0], approx.points[..., 1]
    ux, uy = u_exact(x, y)
    (gxx, gxy), (gyx, gyy) = grad_u_exact(x, y)
    grad = np.stack([np.stack([gxx, gxy], -1), np.stack([gyx, gyy], -1)], -2)
    ref = _Samples(np.stack([ux, uy], -1), grad, np.broadcast_to(p_exact(x, y), x.shape), approx.weights, approx.points)
    return _report(approx, ref)


def interpolate(space: ScalarSpace, func: Callable) -> np.ndarray:
    """Nodal interpolant of a scalar function ``func(x, y)``."""
    return np.asarray(func(space.coords[:, 0], space.coords[:, 1]), dtype=float)


def transfer(src: ScalarSpace, dst: ScalarSpace, values: np.ndarray) -> np.ndarray:
    """Interpolate a scalar field from ``src`` into ``dst`` on the same mesh.

    Exact whenever the field lies in ``dst`` (e.g. elevation P2 -> P3, or a
    quadratic P3 field back to P2).
    """
    phi = lagrange(src.order).values(lagrange(dst.order).nodes)  # (n_dst_local, n_src_local)
    local = np.einsum("ji,ei->ej", phi, values[src.cell_nodes])
    out = np.empty(dst.n_nodes)
    out[dst.cell_nodes.ravel()] = local.ravel()
    return out


def elevate(dm_lo: DofMap, dm_hi: DofMap, u: np.ndarray, p: np.ndarray):
    """Express a (u, p) pair of the low-order space in the high-order space."""
    n = dm_lo.velocity.n_nodes
    ux = transfer(dm_lo.velocity, dm_hi.velocity, u[:n])
    uy = transfer(dm_lo.velocity, dm_hi.velocity, u[n:])
    return np.concatenate([ux, uy]), transfer(dm_lo.pressure, dm_hi.pressure, p)


FIELD_COLUMNS = ("x", "y", "speed", "u_x", "u_y", "p")


def vertex_fields(mesh: Mesh, dofmap: DofMap, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """(n_vertices, 6) array of x, y, |u|, u_x, u_y, p at mesh vertices."""
    nv = mesh.n_vertices
    nn = dofmap.velocity.n_nodes
    ux, uy = u[:nv], u[nn : nn + nv]
    # vertex nodes come first in every scalar space
    pv = p[:nv]
    return np.column_stack([mesh.vertices[:, 0], mesh.vertices[:, 1], np.hypot(ux, uy), ux, uy, pv])


def export_fields(mesh: Mesh, dofmap: DofMap, sol, path) -> Path:
    u, p = sol
    data = vertex_fields(mesh, dofmap, u, p)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    return path
