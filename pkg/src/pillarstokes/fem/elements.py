"""Reference Lagrange elements on the unit triangle and the quadrature rules used everywhere."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Symmetric 12-point rule, exact to degree 6. Weights sum to 1 (scale by the
# triangle area).
_A1, _W1 = 0.24928674517091042129, 0.11678627572637936603
_A2, _W2 = 0.06308901449150222834, 0.05084490637020681692
_B3, _C3, _W3 = 0.05314504984481694735, 0.31035245103378440542, 0.08285107561837357519


def _volume_rule():
    bary, w = [], []
    for a, wt in ((_A1, _W1), (_A2, _W2)):
        b = 1.0 - 2.0 * a
        bary += [(b, a, a), (a, b, a), (a, a, b)]
        w += [wt] * 3
    c3 = 1.0 - _B3 - _C3
    for perm in ((_B3, _C3, c3), (_C3, c3, _B3), (c3, _B3, _C3), (_C3, _B3, c3), (_B3, c3, _C3), (c3, _C3, _B3)):
        bary.append(perm)
        w.append(_W3)
    bary = np.array(bary)
    # reference coordinates (xi, eta) = (lambda_1, lambda_2)
    return bary[:, 1:].copy(), np.array(w)


QUAD_POINTS, QUAD_WEIGHTS = _volume_rule()

# 3-point Gauss-Legendre on [0, 1]
EDGE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# local edges in the order used by every per-element node list
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def reference_nodes(order: int) -> np.ndarray:
    """Nodal points: vertices, then per local edge the interior points walking
    from its first vertex, then interior (cell) points."""
    pts = [*_REF_VERTS]
    for a, b in LOCAL_EDGES:
        for j in range(1, order):
            t = j / order
            pts.append((1 - t) * _REF_VERTS[a] + t * _REF_VERTS[b])
    if order == 3:
        pts.append(_REF_VERTS.mean(axis=0))
    elif order > 3:
        raise ValueError(f"order {order} not supported")
    return np.array(pts)


def _monomials(order: int):
    return [(a, k - a) for k in range(order + 1) for a in range(k, -1, -1)]


@dataclass(frozen=True)
class LagrangeElement:
    order: int
    nodes: np.ndarray
    coeffs: np.ndarray  # monomial coefficients, (n_mono, n_nodes)

    @property
    def n_local(self) -> int:
        return len(self.nodes)

    def _mono(self, pts, dx=0, dy=0):
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        cols = []
        for a, b in _monomials(self.order):
            if a < dx or b < dy:
                cols.append(np.zeros_like(x))
                continue
            ca = np.prod(np.arange(a, a - dx, -1)) if dx else 1.0
            cb = np.prod(np.arange(b, b - dy, -1)) if dy else 1.0
            cols.append(ca * cb * x ** (a - dx) * y ** (b - dy))
        return np.stack(cols, axis=1)

    def values(self, pts) -> np.ndarray:
        """(n_pts, n_local) basis values at reference points."""
        return self._mono(pts) @ self.coeffs

    def gradients(self, pts) -> np.ndarray:
        """(n_pts, n_local, 2) reference gradients."""
        return np.stack([self._mono(pts, 1, 0) @ self.coeffs, self._mono(pts, 0, 1) @ self.coeffs], axis=-1)


@lru_cache(maxsize=None)
def lagrange(order: int) -> LagrangeElement:
    if order not in (1, 2, 3):
        raise ValueError(f"Lagrange order {order} not supported")
    nodes = reference_nodes(order)
    el = LagrangeElement(order, nodes, np.eye(len(nodes)))
    vander = el._mono(nodes)
    coeffs = np.linalg.solve(vander, np.eye(len(nodes)))
    return LagrangeElement(order, nodes, coeffs)


@dataclass(frozen=True)
class ElementPair:
    """Taylor-Hood pair: continuous P_k velocity with continuous P_(k-1) pressure."""

    velocity_order: int = 2

    def __post_init__(self):
        if self.velocity_order not in (2, 3):
            raise ValueError("only P2-P1 and P3-P2 Taylor-Hood pairs are supported")

    @property
    def pressure_order(self) -> int:
        return self.velocity_order - 1

    @property
    def name(self) -> str:
        return f"P{self.velocity_order}-P{self.pressure_order}"


TAYLOR_HOOD = ElementPair(2)
TAYLOR_HOOD_P3 = ElementPair(3)
