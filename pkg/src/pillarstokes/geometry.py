"""Pillar-array geometry: lattice enumeration and planar boundary description.

Cells of the (possibly shifted) lattice have side vectors eps*(1, delta) and
eps*(0, 1), anchored at eps*(i, i*delta + j).  A pillar of radius rho*eps sits
at eps*(i + 0.5, i*delta + j + 0.5) whenever its closed cell fits inside the
channel rectangle.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class BoundaryLabel(enum.IntEnum):
    """Boundary tag; integer values are the ones written to ``.edge`` files."""

    INLET = 1
    OUTLET = 2
    WALL = 3


class BufferKind(str, enum.Enum):
    NONE = "none"
    PATTERNED = "patterned"
    EMPTY = "empty"


@dataclass(frozen=True)
class BufferConfig:
    kind: BufferKind = BufferKind.NONE
    L_b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BufferKind(self.kind))
        if self.L_b < 0:
            raise ValueError(f"buffer length must be >= 0, got {self.L_b}")
        if self.kind is BufferKind.NONE and self.L_b != 0:
            raise ValueError("buffer kind 'none' requires L_b = 0")

    @property
    def extent(self) -> float:
        """Length added at each channel end."""
        return 0.0 if self.kind is BufferKind.NONE else self.L_b


@dataclass(frozen=True)
class DomainSpec:
    """Channel, lattice and pillar parameters.

    ``rho`` is the pillar radius as a fraction of the cell size ``eps = 1/m``.
    """

    L_x: float = 1.0
    L_y: float = 1.0
    m: int = 1
    delta: float = 0.0
    rho: float = 0.25
    buffer: BufferConfig = field(default_factory=BufferConfig)

    def __post_init__(self):
        if self.L_x <= 0 or self.L_y <= 0:
            raise ValueError("channel dimensions must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    @property
    def eps(self) -> float:
        return 1.0 / self.m

    @property
    def radius(self) -> float:
        return self.rho * self.eps

    @property
    def x_range(self) -> tuple[float, float]:
        """Horizontal extent of the meshed channel including buffers."""
        ext = self.buffer.extent
        return -ext, self.L_x + ext

    def to_dict(self) -> dict:
        return {
            "L_x": self.L_x,
            "L_y": self.L_y,
            "m": self.m,
            "delta": self.delta,
            "rho": self.rho,
            "buffer_kind": self.buffer.kind.value,
            "L_b": self.buffer.L_b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        buf = BufferConfig(BufferKind(d.get("buffer_kind", "none")), float(d.get("L_b", 0.0)))
        return cls(
            L_x=float(d.get("L_x", 1.0)),
            L_y=float(d.get("L_y", 1.0)),
            m=int(d.get("m", 1)),
            delta=float(d.get("delta", 0.0)),
            rho=float(d.get("rho", 0.25)),
            buffer=buf,
        )


@dataclass(frozen=True)
class PillarPlacement:
    center: tuple[float, float]
    radius: float


@dataclass
class Pslg:
    """Planar straight-line graph handed to the mesher."""

    points: np.ndarray  # (n, 2)
    segments: np.ndarray  # (s, 2) point indices
    labels: np.ndarray  # (s,) BoundaryLabel values
    holes: np.ndarray  # (h, 2) one seed per pillar

    @property
    def n_loops(self) -> int:
        return 1 + len(self.holes)


# Relative slack for the closed-cell containment test; cells whose edges
# coincide with the channel boundary are kept.
_CONTAIN_TOL = 1e-12


def _cell_corners(i: np.ndarray, j: np.ndarray, eps: float, delta: float) -> np.ndarray:
    x0 = eps * i
    y0 = eps * (i * delta + j)
    xs = np.stack([x0, x0 + eps, x0 + eps, x0], axis=-1)
    ys = np.stack([y0, y0 + eps * delta, y0 + eps * (delta + 1), y0 + eps], axis=-1)
    return np.stack([xs, ys], axis=-1)  # (..., 4, 2)


def _pattern_extent(spec: DomainSpec) -> tuple[float, float]:
    if spec.buffer.kind is BufferKind.PATTERNED:
        return spec.x_range
    return 0.0, spec.L_x


def enumerate_pillars(spec: DomainSpec) -> list[PillarPlacement]:
    """Return every pillar whose closed lattice cell fits in the patterned channel.

    The candidate scan covers all index pairs whose cells could touch the
    patterned region; results are sorted by (x, y) of the center.
    """
    if spec.rho >= 0.5:
        raise ValueError(f"rho = {spec.rho} >= 0.5: pillar would meet its cell boundary")
    eps, delta = spec.eps, spec.delta
    x_lo, x_hi = _pattern_extent(spec)
    i_lo = math.floor(x_lo / eps) - 1
    i_hi = math.ceil(x_hi / eps) + 1
    # y-offset of a column is i*delta*eps; bound j accordingly
    shift = max(abs(i_lo), abs(i_hi)) * delta
    j_lo = math.floor(-shift) - 2
    j_hi = math.ceil(spec.L_y / eps + shift) + 2
    ii, jj = np.meshgrid(np.arange(i_lo, i_hi + 1), np.arange(j_lo, j_hi + 1), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    corners = _cell_corners(ii, jj, eps, delta)
    tol_x = _CONTAIN_TOL * max(1.0, abs(x_lo), abs(x_hi))
    tol_y = _CONTAIN_TOL * max(1.0, spec.L_y)
    inside = (
        (corners[..., 0] >= x_lo - tol_x).all(axis=1)
        & (corners[..., 0] <= x_hi + tol_x).all(axis=1)
        & (corners[..., 1] >= -tol_y).all(axis=1)
        & (corners[..., 1] <= spec.L_y + tol_y).all(axis=1)
    )
    ii, jj = ii[inside], jj[inside]
    cx = eps * (ii + 0.5)
    cy = eps * (ii * delta + jj + 0.5)
    order = np.lexsort((cy, cx))
    r = spec.radius
    return [PillarPlacement((float(cx[k]), float(cy[k])), r) for k in order]


def asymptotic_parameter(spec: DomainSpec) -> float:
    """eps * |log(rho)|^(1/2), the obstacle-array Poincare scale."""
    if not 0 < spec.rho < 1:
        raise ValueError("asymptotic parameter needs 0 < rho < 1")
    return spec.eps * math.sqrt(abs(math.log(spec.rho)))


def auto_segments(radius: float, h_target: float) -> int:
    return max(16, math.ceil(2 * math.pi * radius / h_target))


def build_pslg(spec: DomainSpec, n_seg: int | str = "auto", h_target: float | None = None) -> Pslg:
    """Outer rectangle plus one inscribed regular polygon per pillar.

    With ``n_seg="auto"`` the polygon resolution follows the target edge
    length (``h_target``, required) with a floor of 16 sides.
    """
    pillars = enumerate_pillars(spec)
    x0, x1 = spec.x_range
    Ly = spec.L_y
    points = [(x0, 0.0), (x1, 0.0), (x1, Ly), (x0, Ly)]
    segments = [(0, 1), (1, 2), (2, 3), (3, 0)]
    labels = [BoundaryLabel.WALL, BoundaryLabel.OUTLET, BoundaryLabel.WALL, BoundaryLabel.INLET]
    holes = []
    if pillars:
        r = pillars[0].radius
        if n_seg == "auto":
            if h_target is None:
                raise ValueError("n_seg='auto' needs h_target")
            n = auto_segments(r, h_target)
        else:
            n = int(n_seg)
            if n < 3:
                raise ValueError("a pillar polygon needs at least 3 sides")
        theta = 2 * np.pi * np.arange(n) / n
        ring = np.stack([np.cos(theta), np.sin(theta)], axis=1) * r
        for p in pillars:
            base = len(points)
            points.extend(map(tuple, ring + np.asarray(p.center)))
            segments.extend((base + k, base + (k + 1) % n) for k in range(n))
            labels.extend([BoundaryLabel.WALL] * n)
            holes.append(p.center)
        _check_clearance(pillars, x0, x1, Ly)
    return Pslg(
        points=np.asarray(points, dtype=float),
        segments=np.asarray(segments, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        holes=np.asarray(holes, dtype=float).reshape(-1, 2),
    )


def _check_clearance(pillars: list[PillarPlacement], x0: float, x1: float, Ly: float) -> None:
    centers = np.array([p.center for p in pillars])
    r = pillars[0].radius
    if (
        (centers[:, 0] - r <= x0).any()
        or (centers[:, 0] + r >= x1).any()
        or (centers[:, 1] - r <= 0).any()
        or (centers[:, 1] + r >= Ly).any()
    ):
        raise ValueError("a pillar polygon touches the outer boundary")
    pairs = cKDTree(centers).query_pairs(2 * r)
    if pairs:
        a, b = sorted(pairs)[0]
        raise ValueError(f"pillars {a} and {b} overlap")
