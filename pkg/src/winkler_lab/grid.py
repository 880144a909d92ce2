"""Lattice geometry for rectangular plates with optional rectangular holes.

Nodes live on a uniform lattice ``x = x0 + i*dx``, ``y = y0 + j*dx``; every
per-node array in the package has shape ``(nx, ny)`` and is indexed ``[i, j]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INTERIOR = 0
BOUNDARY = 1
EXTERIOR = 2

_SNAP = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    origin: tuple[float, float]
    extents: tuple[float, float]
    spacing: float
    node_class: np.ndarray
    rho0: float
    holes: tuple[tuple[int, int, int, int], ...] = ()
    M0: float | None = None
    M1: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.node_class.shape

    @property
    def nx(self) -> int:
        return self.node_class.shape[0]

    @property
    def ny(self) -> int:
        return self.node_class.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return self.node_class == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.node_class == BOUNDARY

    @property
    def active(self) -> np.ndarray:
        """Non-exterior nodes (interior or boundary)."""
        return self.node_class != EXTERIOR

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + self.spacing * np.arange(self.nx)
        y = self.origin[1] + self.spacing * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def node_xy(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.spacing, self.origin[1] + j * self.spacing)

    def area(self) -> float:
        """Discrete area (#interior + #boundary) * dx**2."""
        return float(np.count_nonzero(self.active)) * self.spacing**2

    def cell_mask(self) -> np.ndarray:
        """Cells (lower-left node index) lying inside the plate, shape (nx-1, ny-1)."""
        cells = np.ones((self.nx - 1, self.ny - 1), dtype=bool)
        for i0, j0, i1, j1 in self.holes:
            cells[i0:i1, j0:j1] = False
        return cells

    def trapezoid_weights(self) -> np.ndarray:
        """Fraction of the four cells around each node that lie in the plate."""
        cells = self.cell_mask().astype(float)
        w = np.zeros(self.shape)
        w[:-1, :-1] += cells
        w[1:, :-1] += cells
        w[:-1, 1:] += cells
        w[1:, 1:] += cells
        return w / 4.0

    def nearest_node(self, point) -> tuple[int, int]:
        """Nearest lattice node; ties go to the lexicographically smallest (i, j)."""
        px = (point[0] - self.origin[0]) / self.spacing
        py = (point[1] - self.origin[1]) / self.spacing
        best = None
        for i in (math.floor(px), math.floor(px) + 1):
            for j in (math.floor(py), math.floor(py) + 1):
                if not (0 <= i < self.nx and 0 <= j < self.ny):
                    continue
                d2 = (i - px) ** 2 + (j - py) ** 2
                key = (round(d2, 12), i, j)
                if best is None or key < best:
                    best = key
        if best is None:
            raise GeometryError(f"point {tuple(point)} lies outside the lattice")
        return best[1], best[2]

    def boundary_distance(self) -> np.ndarray:
        """Euclidean distance from each node to the nearest boundary node."""
        return _distance_to_nodes(self, self.boundary)

    def contains_point(self, point) -> bool:
        x0, y0 = self.origin
        lx, ly = self.extents
        return x0 <= point[0] <= x0 + lx and y0 <= point[1] <= y0 + ly


@dataclass(frozen=True, eq=False)
class NodeRegion:
    parent: DiscreteDomain
    mask: np.ndarray
    label: str = ""
    center: tuple[int, int] | None = None
    bounds: tuple[int, int, int, int] | None = field(default=None)

    def __post_init__(self):
        if self.mask.shape != self.parent.shape:
            raise GeometryError("region mask does not match its domain")
        if np.any(self.mask & ~self.parent.interior):
            raise GeometryError(f"region {self.label!r} contains non-interior nodes")

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __len__(self) -> int:
        return self.size

    def indices(self) -> np.ndarray:
        """Flat (row-major over [i, j]) indices of the members."""
        return np.flatnonzero(self.mask)

    def is_empty(self) -> bool:
        return not self.mask.any()

    def __and__(self, other: "NodeRegion") -> "NodeRegion":
        return NodeRegion(self.parent, self.mask & other.mask, f"{self.label}&{other.label}")

    def __sub__(self, other: "NodeRegion") -> "NodeRegion":
        return NodeRegion(self.parent, self.mask & ~other.mask, f"{self.label}-{other.label}")

    def __or__(self, other: "NodeRegion") -> "NodeRegion":
        return NodeRegion(self.parent, self.mask | other.mask, f"{self.label}|{other.label}")

    def issubset(self, other: "NodeRegion") -> bool:
        return not np.any(self.mask & ~other.mask)


def _to_index(value: float, spacing: float) -> float:
    return value / spacing


def build_rectangle(Lx: float, Ly: float, n: int, rho0: float | None = None, holes=(),
                    origin=(0.0, 0.0), M0: float | None = None,
                    M1: float | None = None) -> DiscreteDomain:
    """Uniform lattice over ``[x0, x0+Lx] x [y0, y0+Ly]`` with ``n`` nodes on the shorter side.

    Holes are given as ``(x0, y0, x1, y1)`` in absolute coordinates and are
    snapped inward to the lattice: nodes strictly inside the snapped hole are
    exterior, its rim is boundary.
    """
    if not (Lx > 0 and Ly > 0):
        raise GeometryError(f"degenerate extents Lx={Lx}, Ly={Ly}")
    if n < 9:
        raise GeometryError(f"need at least 9 nodes on the shortest side, got n={n}")
    spacing = min(Lx, Ly) / (n - 1)
    cx, cy = Lx / spacing, Ly / spacing
    nxm, nym = round(cx), round(cy)
    if abs(cx - nxm) > 1e-6 or abs(cy - nym) > 1e-6:
        raise GeometryError(f"extents {Lx}x{Ly} are not commensurate with spacing {spacing}")
    nx, ny = nxm + 1, nym + 1
    ox, oy = float(origin[0]), float(origin[1])

    node_class = np.full((nx, ny), INTERIOR, dtype=np.int8)
    node_class[0, :] = node_class[-1, :] = BOUNDARY
    node_class[:, 0] = node_class[:, -1] = BOUNDARY

    snapped = []
    for hole in holes:
        if isinstance(hole, dict):
            hole = (hole["x0"], hole["y0"], hole["x1"], hole["y1"])
        hx0, hy0, hx1, hy1 = (float(v) for v in hole)
        if not (hx1 > hx0 and hy1 > hy0):
            raise GeometryError(f"degenerate hole {hole}")
        if hx0 <= ox or hy0 <= oy or hx1 >= ox + Lx or hy1 >= oy + Ly:
            raise GeometryError(f"hole {hole} touches or crosses the outer boundary")
        i0 = math.ceil(_to_index(hx0 - ox, spacing) - _SNAP)
        j0 = math.ceil(_to_index(hy0 - oy, spacing) - _SNAP)
        i1 = math.floor(_to_index(hx1 - ox, spacing) + _SNAP)
        j1 = math.floor(_to_index(hy1 - oy, spacing) + _SNAP)
        if i1 - i0 < 2 or j1 - j0 < 2:
            raise GeometryError(f"hole {hole} is narrower than two lattice cells")
        if i0 < 2 or j0 < 2 or i1 > nx - 3 or j1 > ny - 3:
            raise GeometryError(f"hole {hole} leaves no interior layer next to the outer boundary")
        snapped.append((i0, j0, i1, j1))

    in_hole = np.zeros((nx, ny), dtype=bool)
    for a, (i0, j0, i1, j1) in enumerate(snapped):
        block = np.zeros((nx, ny), dtype=bool)
        block[i0:i1 + 1, j0:j1 + 1] = True
        if np.any(block & in_hole):
            raise GeometryError("holes overlap or touch")
        # keep at least one interior layer between holes
        grown = np.zeros((nx, ny), dtype=bool)
        grown[i0 - 1:i1 + 2, j0 - 1:j1 + 2] = True
        if np.any(grown & in_hole):
            raise GeometryError("holes are too close to each other")
        in_hole |= block
        node_class[i0:i1 + 1, j0:j1 + 1] = EXTERIOR
        node_class[i0, j0:j1 + 1] = node_class[i1, j0:j1 + 1] = BOUNDARY
        node_class[i0:i1 + 1, j0] = node_class[i0:i1 + 1, j1] = BOUNDARY

    domain = DiscreteDomain(
        origin=(ox, oy), extents=(float(Lx), float(Ly)), spacing=spacing,
        node_class=node_class, rho0=float(rho0) if rho0 is not None else min(Lx, Ly),
        holes=tuple(snapped), M0=M0, M1=M1,
    )
    if domain.rho0 <= 0:
        raise GeometryError("rho0 must be positive")
    if M1 is not None and domain.area() > M1 * domain.rho0**2:
        raise GeometryError(f"|Omega|={domain.area():.6g} exceeds M1*rho0^2={M1 * domain.rho0**2:.6g}")
    return domain


def _distance_to_nodes(domain: DiscreteDomain, targets: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exact min distance from every lattice node to the nodes flagged in ``targets``."""
    X, Y = domain.coords()
    px, py = X.ravel(), Y.ravel()
    tx, ty = X[targets], Y[targets]
    out = np.full(px.size, np.inf)
    if tx.size == 0:
        return out.reshape(domain.shape)
    for s in range(0, px.size, chunk):
        dx = px[s:s + chunk, None] - tx[None, :]
        dy = py[s:s + chunk, None] - ty[None, :]
        out[s:s + chunk] = np.sqrt(np.min(dx * dx + dy * dy, axis=1))
    return out.reshape(domain.shape)


def full_region(domain: DiscreteDomain, label: str = "Omega") -> NodeRegion:
    return NodeRegion(domain, domain.interior.copy(), label)


def interior_offset(domain: DiscreteDomain, r: float) -> NodeRegion:
    """Interior nodes farther than ``r`` from every boundary node."""
    if r < 0:
        raise GeometryError("offset radius must be non-negative")
    if r == 0:
        return full_region(domain, "Omega_0")
    dist = domain.boundary_distance()
    return NodeRegion(domain, domain.interior & (dist > r), f"Omega_{r:g}")


def _radius_from(domain: DiscreteDomain, center) -> np.ndarray:
    if not domain.contains_point(center):
        raise GeometryError(f"center {tuple(center)} lies outside the domain bounding box")
    X, Y = domain.coords()
    return np.hypot(X - center[0], Y - center[1])


def disc_region(domain: DiscreteDomain, center, radius: float) -> NodeRegion:
    """Interior nodes with ``|x - center| < radius``."""
    if radius <= 0:
        raise GeometryError("disc radius must be positive")
    r = _radius_from(domain, center)
    return NodeRegion(domain, domain.interior & (r < radius), f"B_{radius:g}")


def annulus_region(domain: DiscreteDomain, center, r1: float, r2: float) -> NodeRegion:
    """Interior nodes with ``r1 <= |x - center| < r2``."""
    if not (r2 > r1 > 0):
        raise GeometryError("annulus needs r2 > r1 > 0")
    r = _radius_from(domain, center)
    return NodeRegion(domain, domain.interior & (r >= r1) & (r < r2), f"A_{r1:g}_{r2:g}")


def cover_with_squares(region: NodeRegion, side: float) -> list[NodeRegion]:
    """Closed lattice-aligned squares with disjoint interiors covering ``region``.

    The side is rounded to an even number of lattice steps so that each square
    has a lattice node at its geometric center.  Squares are anchored at the
    lattice origin and returned in lexicographic order of their lower-left corner.
    """
    domain = region.parent
    if side < 2 * domain.spacing * (1 - 1e-12):
        raise GeometryError(f"square side {side} is below 2*spacing")
    if region.is_empty():
        return []
    half = max(1, round(side / (2 * domain.spacing)))
    m = 2 * half
    ii, jj = np.nonzero(region.mask)
    blocks = sorted(set(zip((ii // m).tolist(), (jj // m).tolist())))
    # nodes on a shared edge belong to the lower block by floor division; also
    # add blocks for members sitting exactly on an upper edge (already covered).
    squares = []
    for bi, bj in blocks:
        i0, j0 = bi * m, bj * m
        i1, j1 = min(i0 + m, domain.nx - 1), min(j0 + m, domain.ny - 1)
        mask = np.zeros(domain.shape, dtype=bool)
        mask[i0:i1 + 1, j0:j1 + 1] = True
        mask &= domain.interior
        squares.append(NodeRegion(domain, mask, f"Q[{i0},{j0}]",
                                  center=(i0 + half, j0 + half), bounds=(i0, j0, i0 + m, j0 + m)))
    return squares
