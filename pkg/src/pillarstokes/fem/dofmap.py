"""Global numbering of Lagrange nodes and Taylor-Hood degrees of freedom.

Scalar nodes are numbered vertices first, then edge nodes (edges in
lexicographic order of their sorted vertex pairs, nodes on an edge walking
from its lower-indexed vertex), then cell nodes.  Velocity DoFs are
component-major: all x-components, then all y-components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mesher import Mesh
from .elements import LOCAL_EDGES, ElementPair, lagrange


@dataclass(frozen=True)
class ScalarSpace:
    order: int
    n_nodes: int
    cell_nodes: np.ndarray  # (nt, n_local) global node per local node
    coords: np.ndarray  # (n_nodes, 2)
    edges: np.ndarray  # (ne, 2) sorted vertex pairs shared by all spaces on the mesh
    edge_nodes: np.ndarray  # (ne, order - 1) global nodes on each edge

    def boundary_nodes(self, mesh: Mesh, edge_ids: np.ndarray) -> np.ndarray:
        """Nodes lying on the given boundary edges (by index into ``mesh.boundary_edges``)."""
        be = np.sort(mesh.boundary_edges[edge_ids], axis=1)
        gid = edge_index(self.edges, be, mesh.n_vertices)
        return np.unique(np.concatenate([be.ravel(), self.edge_nodes[gid].ravel()]))


def edge_index(edges: np.ndarray, pairs: np.ndarray, n_vertices: int) -> np.ndarray:
    """Position of each sorted vertex pair in the sorted edge list."""
    keys = edges[:, 0] * n_vertices + edges[:, 1]
    want = pairs[:, 0] * n_vertices + pairs[:, 1]
    pos = np.searchsorted(keys, want)
    if (pos >= len(keys)).any() or (keys[np.minimum(pos, len(keys) - 1)] != want).any():
        raise ValueError("pair is not an edge of the mesh")
    return pos


def scalar_space(mesh: Mesh, order: int) -> ScalarSpace:
    tris = mesh.triangles
    nv, nt = mesh.n_vertices, mesh.n_triangles
    edges = mesh.edges()
    ne = len(edges)
    k = order
    per_edge = k - 1
    n_cell = 1 if k == 3 else 0
    n_nodes = nv + per_edge * ne + n_cell * nt
    el = lagrange(k)
    cell_nodes = np.empty((nt, el.n_local), dtype=np.int64)
    cell_nodes[:, :3] = tris
    edge_nodes = nv + per_edge * np.arange(ne)[:, None] + np.arange(per_edge)[None, :]
    col = 3
    for a, b in LOCAL_EDGES:
        va, vb = tris[:, a], tris[:, b]
        gid = edge_index(edges, np.sort(np.stack([va, vb], 1), axis=1), nv)
        forward = va < vb
        for j in range(per_edge):
            # local node j walks from local vertex a; global numbering walks from the lower vertex
            slot = np.where(forward, j, per_edge - 1 - j)
            cell_nodes[:, col + j] = edge_nodes[gid, slot] if per_edge else 0
        col += per_edge
    if n_cell:
        cell_nodes[:, col] = nv + per_edge * ne + np.arange(nt)
    coords = np.empty((n_nodes, 2))
    ref = el.nodes
    p = mesh.vertices[tris]
    phys = p[:, :1] + np.einsum("qd,edk->eqk", ref, np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=1))
    coords[cell_nodes.ravel()] = phys.reshape(-1, 2)
    coords[:nv] = mesh.vertices
    return ScalarSpace(k, n_nodes, cell_nodes, coords, edges, edge_nodes.reshape(ne, per_edge))


@dataclass(frozen=True)
class DofMap:
    pair: ElementPair
    velocity: ScalarSpace
    pressure: ScalarSpace

    @property
    def n_u(self) -> int:
        return 2 * self.velocity.n_nodes

    @property
    def n_p(self) -> int:
        return self.pressure.n_nodes

    @property
    def n_dofs(self) -> int:
        return self.n_u + self.n_p

    def velocity_dofs(self, nodes: np.ndarray) -> np.ndarray:
        """x- and y-component DoFs of scalar velocity nodes."""
        nodes = np.asarray(nodes)
        return np.concatenate([nodes, nodes + self.velocity.n_nodes])


def build_dofmap(mesh: Mesh, pair: ElementPair) -> DofMap:
    return DofMap(pair, scalar_space(mesh, pair.velocity_order), scalar_space(mesh, pair.pressure_order))
