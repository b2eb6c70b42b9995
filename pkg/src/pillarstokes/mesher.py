"""Quality triangulation of pillar-array domains and Triangle-style mesh files.

Constrained Delaunay triangulation and Ruppert refinement are delegated to
Shewchuk's Triangle (``triangle`` package).  Triangle bounds element areas,
not edge lengths, so :func:`triangulate` wraps it in a loop that tightens the
per-element area bound until every edge is no longer than ``h_target``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import triangle as _tri

from .geometry import BoundaryLabel, Pslg

log = logging.getLogger(__name__)

DEFAULT_MIN_ANGLE = 25.0
DEFAULT_VERTEX_BUDGET = 5_000_000


class MeshError(RuntimeError):
    pass


class MeshFormatError(ValueError):
    """Malformed mesh file; carries the file, line number and offending token."""

    def __init__(self, path, lineno: int, token: str, reason: str):
        self.path, self.lineno, self.token = str(path), lineno, token
        super().__init__(f"{path}:{lineno}: {reason} (token {token!r})")


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (nv, 2) float
    triangles: np.ndarray  # (nt, 3) int, counter-clockwise
    boundary_edges: np.ndarray  # (ne, 2) int
    boundary_labels: np.ndarray  # (ne,) int, BoundaryLabel values

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        """(nt, 3) edge lengths in local order (0,1), (1,2), (2,0)."""
        p = self.vertices[self.triangles]
        return np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths().max())

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs, lexicographically ordered."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def label_length(self, label: BoundaryLabel) -> float:
        sel = self.boundary_edges[self.boundary_labels == int(label)]
        v = self.vertices
        return float(np.linalg.norm(v[sel[:, 1]] - v[sel[:, 0]], axis=1).sum())


@dataclass(frozen=True)
class MeshQualityReport:
    min_angle: float
    h_max: float
    h_min: float
    n_vertices: int
    n_triangles: int
    fluid_area: float


def triangle_angles(mesh: Mesh) -> np.ndarray:
    """Interior angles in degrees, (nt, 3)."""
    p = mesh.vertices[mesh.triangles]
    out = np.empty(mesh.triangles.shape)
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        out[:, k] = np.degrees(np.arctan2(np.abs(cross), (a * b).sum(axis=1)))
    return out


def quality_report(mesh: Mesh) -> MeshQualityReport:
    lengths = mesh.edge_lengths()
    return MeshQualityReport(
        min_angle=float(triangle_angles(mesh).min()),
        h_max=float(lengths.max()),
        h_min=float(lengths.min()),
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
        fluid_area=mesh.area,
    )


def _to_mesh(out: dict) -> Mesh:
    verts = np.ascontiguousarray(out["vertices"], dtype=float)
    tris = np.ascontiguousarray(out["triangles"], dtype=np.int64)
    p = verts[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    cw = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris[cw] = tris[cw][:, [0, 2, 1]]
    segs = np.ascontiguousarray(out["segments"], dtype=np.int64)
    marks = np.asarray(out["segment_markers"], dtype=np.int64).ravel()
    if not np.isin(marks, [int(b) for b in BoundaryLabel]).all():
        raise MeshError("Triangle produced an unlabeled boundary segment")
    return Mesh(verts, tris, segs, marks)


def triangulate(
    pslg: Pslg,
    h_target: float,
    min_angle: float = DEFAULT_MIN_ANGLE,
    vertex_budget: int = DEFAULT_VERTEX_BUDGET,
) -> Mesh:
    """Constrained Delaunay refinement with min-angle and max-edge-length bounds."""
    if h_target <= 0:
        raise ValueError("h_target must be positive")
    if not 0 < min_angle <= 30:
        raise ValueError("min_angle must lie in (0, 30] degrees")
    x = pslg.points
    bbox_area = float(np.ptp(x[:, 0]) * np.ptp(x[:, 1]))
    # Ruppert guarantees a lower bound on local feature size, so vertex count
    # scales with area / h^2; refuse requests that obviously cannot fit.
    estimate = 4 * bbox_area / h_target**2
    if estimate > vertex_budget:
        raise MeshError(
            f"h_target={h_target:g} would need ~{estimate:.3g} vertices, over the budget {vertex_budget}"
        )
    data = {
        "vertices": pslg.points,
        "segments": pslg.segments,
        "segment_markers": pslg.labels.reshape(-1, 1),
    }
    if len(pslg.holes):
        data["holes"] = pslg.holes
    # Loose initial area cap; the edge-length sweeps below do the real work.
    area0 = 0.8 * h_target**2
    opts = f"pq{min_angle:.6g}a{area0:.17g}QS{vertex_budget}"
    out = _tri.triangulate(data, opts)
    for sweep in range(60):
        mesh = _to_mesh(out)
        if mesh.n_vertices >= vertex_budget:
            raise MeshError(f"refinement exceeded the vertex budget ({vertex_budget})")
        longest = mesh.edge_lengths().max(axis=1)
        bad = longest > h_target
        if not bad.any():
            return mesh
        areas = mesh.signed_areas()
        max_area = np.full(mesh.n_triangles, -1.0)
        max_area[bad] = 0.5 * areas[bad]
        refine = {
            "vertices": out["vertices"],
            "triangles": out["triangles"],
            "segments": out["segments"],
            "segment_markers": out["segment_markers"],
            "triangle_max_area": max_area,
        }
        if len(pslg.holes):
            refine["holes"] = pslg.holes
        out = _tri.triangulate(refine, f"rpq{min_angle:.6g}aQS{vertex_budget}")
        log.debug("edge-length sweep %d: %d oversized triangles", sweep, int(bad.sum()))
    raise MeshError("edge-length refinement did not terminate")


def structured_rectangle(nx: int, ny: int, L_x: float = 1.0, L_y: float = 1.0) -> Mesh:
    """Right-diagonal structured mesh with inlet at x=0 and outlet at x=L_x."""
    xs = np.linspace(0.0, L_x, nx + 1)
    ys = np.linspace(0.0, L_y, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    edges, labels = [], []
    for row, lab in ((idx[0], BoundaryLabel.WALL), (idx[-1], BoundaryLabel.WALL)):
        edges += list(zip(row[:-1], row[1:]))
        labels += [lab] * nx
    for col, lab in ((idx[:, 0], BoundaryLabel.INLET), (idx[:, -1], BoundaryLabel.OUTLET)):
        edges += list(zip(col[:-1], col[1:]))
        labels += [lab] * ny
    return Mesh(verts, tris.astype(np.int64), np.asarray(edges, dtype=np.int64), np.asarray(labels, dtype=np.int64))


# ----------------------------------------------------------------------------
# Triangle-style text files (.node / .ele / .edge, one-based indices)


def write_mesh(mesh: Mesh, path) -> None:
    """Write ``<path>.node``, ``<path>.ele`` and ``<path>.edge``."""
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(base.with_suffix(".node"), "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 0\n")
        for k, (x, y) in enumerate(mesh.vertices, start=1):
            fh.write(f"{k} {float(x)!r} {float(y)!r}\n")
    with open(base.with_suffix(".ele"), "w") as fh:
        fh.write(f"{mesh.n_triangles} 3 0\n")
        for k, t in enumerate(mesh.triangles + 1, start=1):
            fh.write(f"{k} {t[0]} {t[1]} {t[2]}\n")
    with open(base.with_suffix(".edge"), "w") as fh:
        fh.write(f"{len(mesh.boundary_edges)} 1\n")
        for k, (e, lab) in enumerate(zip(mesh.boundary_edges + 1, mesh.boundary_labels), start=1):
            fh.write(f"{k} {e[0]} {e[1]} {lab}\n")


def _records(path: Path, n_fields: int, parse):
    """Yield (lineno, parsed fields) for a header-counted Triangle file."""
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise MeshFormatError(path, 0, "", f"cannot read file: {exc}") from exc
    lines = [(n, ln.split("#", 1)[0].split()) for n, ln in enumerate(text, start=1)]
    lines = [(n, toks) for n, toks in lines if toks]
    if not lines:
        raise MeshFormatError(path, 0, "", "empty file")
    hline, header = lines[0]
    try:
        count = int(header[0])
    except ValueError:
        raise MeshFormatError(path, hline, header[0], "bad record count") from None
    body = lines[1:]
    if len(body) != count:
        raise MeshFormatError(path, hline, header[0], f"header announces {count} records, found {len(body)}")
    out = []
    for expect, (n, toks) in enumerate(body, start=1):
        if len(toks) < n_fields + 1:
            raise MeshFormatError(path, n, toks[-1], f"expected {n_fields + 1} fields")
        try:
            idx = int(toks[0])
        except ValueError:
            raise MeshFormatError(path, n, toks[0], "bad record index") from None
        if idx != expect:
            raise MeshFormatError(path, n, toks[0], f"expected record index {expect}")
        vals = []
        for tok in toks[1 : n_fields + 1]:
            try:
                vals.append(parse(tok))
            except ValueError:
                raise MeshFormatError(path, n, tok, "unparsable value") from None
        out.append((n, toks, vals))
    return out


def read_mesh(path) -> Mesh:
    base = Path(path)
    node_path, ele_path, edge_path = (base.with_suffix(s) for s in (".node", ".ele", ".edge"))
    nodes = _records(node_path, 2, float)
    verts = np.array([v for _, _, v in nodes], dtype=float).reshape(-1, 2)
    nv = len(verts)

    def vertex_ref(p, n, tok):
        k = int(tok)
        if not 1 <= k <= nv:
            raise MeshFormatError(p, n, tok, f"vertex index out of range 1..{nv}")
        return k - 1

    tris = []
    for n, toks, vals in _records(ele_path, 3, int):
        tris.append([vertex_ref(ele_path, n, t) for t in toks[1:4]])
    edges, labels = [], []
    for n, toks, vals in _records(edge_path, 3, int):
        edges.append([vertex_ref(edge_path, n, t) for t in toks[1:3]])
        if vals[2] not in {int(b) for b in BoundaryLabel}:
            raise MeshFormatError(edge_path, n, toks[3], "unknown boundary label")
        labels.append(vals[2])
    return Mesh(
        verts,
        np.asarray(tris, dtype=np.int64).reshape(-1, 3),
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        np.asarray(labels, dtype=np.int64),
    )


def mesh_io(mesh: Mesh | None, direction: str, path):
    """Dispatch to :func:`write_mesh` (``"write"``) or :func:`read_mesh` (``"read"``)."""
    if direction == "write":
        if mesh is None:
            raise ValueError("write needs a mesh")
        write_mesh(mesh, path)
        return None
    if direction == "read":
        return read_mesh(path)
    raise ValueError(f"unknown direction {direction!r}")


def mesh_domain(spec, N_g: float, min_angle: float = DEFAULT_MIN_ANGLE, n_seg="auto") -> Mesh:
    """Mesh a :class:`~pillarstokes.geometry.DomainSpec` at h_target = eps / N_g."""
    from .geometry import build_pslg

    h = spec.eps / N_g
    return triangulate(build_pslg(spec, n_seg, h_target=h), h, min_angle)
