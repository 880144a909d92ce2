"""Winkler coefficients and perturbation directions for sweeps.

Piecewise-constant coefficients come from a seeded guillotine partition of
the lattice bounding box.  Pieces are half-open in index space,
``[i0, i1) x [j0, j1)``, except that the last row and column of nodes belong
to the pieces touching them, so every node has exactly one owner.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..expr import compile_expr
from ..fields import ScalarField
from ..grid import DiscreteDomain


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    bounds: tuple[int, int, int, int]  # i0, j0, i1, j1 (node indices of the cut lines)
    level: float
    perimeter: float


@dataclass
class Partition:
    pieces: list[Piece]
    perimeter_bound: float | None = None
    seed: int | None = None
    attempts: int = 1

    @property
    def max_perimeter(self) -> float:
        return max(p.perimeter for p in self.pieces)


def _owner_mask(domain: DiscreteDomain, bounds) -> np.ndarray:
    i0, j0, i1, j1 = bounds
    hi_i = i1 + 1 if i1 == domain.nx - 1 else i1
    hi_j = j1 + 1 if j1 == domain.ny - 1 else j1
    mask = np.zeros(domain.shape, dtype=bool)
    mask[i0:hi_i, j0:hi_j] = True
    return mask


def piecewise_from_rectangles(domain: DiscreteDomain, rects, levels, units="rho0^-4",
                              label="k") -> ScalarField:
    """``sum_j k_j chi_{E_j}`` for index rectangles ``(i0, j0, i1, j1)`` tiling the lattice."""
    if len(rects) != len(levels):
        raise PartitionError("one level per rectangle is required")
    vals = np.full(domain.shape, np.nan)
    owned = np.zeros(domain.shape, dtype=int)
    for rect, level in zip(rects, levels):
        m = _owner_mask(domain, rect)
        vals[m] = level
        owned += m
    if np.any(owned != 1):
        raise PartitionError("rectangles do not tile the lattice exactly once")
    return ScalarField(domain, vals, units, label)


def guillotine(nx: int, ny: int, J: int, rng: np.random.Generator) -> list[tuple[int, int, int, int]]:
    """Random guillotine partition of ``[0, nx-1] x [0, ny-1]`` into ``J`` lattice rectangles."""
    if J < 1:
        raise PartitionError("J must be at least 1")
    if J > (nx - 1) * (ny - 1):
        raise PartitionError(f"cannot split {nx - 1}x{ny - 1} cells into {J} pieces")
    pieces = [(0, 0, nx - 1, ny - 1)]
    while len(pieces) < J:
        sizes = np.array([(p[2] - p[0]) * (p[3] - p[1]) for p in pieces], dtype=float)
        splittable = np.array([(p[2] - p[0]) > 1 or (p[3] - p[1]) > 1 for p in pieces])
        weights = np.where(splittable, sizes, 0.0)
        k = int(rng.choice(len(pieces), p=weights / weights.sum()))
        i0, j0, i1, j1 = pieces.pop(k)
        wi, wj = i1 - i0, j1 - j0
        # choose an axis in proportion to the number of admissible cut lines
        ci, cj = max(wi - 1, 0), max(wj - 1, 0)
        if rng.random() < ci / (ci + cj):
            c = int(rng.integers(i0 + 1, i1))
            pieces[k:k] = [(i0, j0, c, j1), (c, j0, i1, j1)]
        else:
            c = int(rng.integers(j0 + 1, j1))
            pieces[k:k] = [(i0, j0, i1, c), (i0, c, i1, j1)]
    return pieces


def piecewise_k(domain: DiscreteDomain, J: int, levels=None, seed: int | None = None,
                kbar: float = 1.0, perimeter_bound: float | None = None,
                max_attempts: int = 100) -> tuple[ScalarField, Partition]:
    """Seeded piecewise-constant Winkler coefficient on a guillotine partition.

    ``levels`` defaults to uniform draws in ``[0.1, 1] kbar / rho0^4``.  With a
    ``perimeter_bound`` the partition is redrawn until every piece has
    perimeter at most ``perimeter_bound * rho0``.
    """
    kmax = kbar / domain.rho0**4
    rng = np.random.default_rng(seed)
    if levels is not None:
        levels = [float(v) for v in levels]
        if len(levels) != J:
            raise PartitionError(f"expected {J} levels, got {len(levels)}")
        if any(not (0 <= v <= kmax) for v in levels):
            raise PartitionError(f"levels must lie in [0, kbar/rho0^4] = [0, {kmax:g}]")
    h = domain.spacing
    for attempt in range(1, max_attempts + 1):
        rects = guillotine(domain.nx, domain.ny, J, rng)
        perims = [2 * h * ((r[2] - r[0]) + (r[3] - r[1])) for r in rects]
        if perimeter_bound is None or max(perims) <= perimeter_bound * domain.rho0 * (1 + 1e-12):
            break
    else:
        raise PartitionError(
            f"infeasible perimeter bound {perimeter_bound} after {max_attempts} draws")
    lv = levels if levels is not None else list(rng.uniform(0.1 * kmax, kmax, size=J))
    k = piecewise_from_rectangles(domain, rects, lv)
    part = Partition([Piece(tuple(r), float(v), float(p)) for r, v, p in zip(rects, lv, perims)],
                     perimeter_bound, seed, attempt)
    return k, part


# ---------------------------------------------------------------------------
# perturbation directions
# ---------------------------------------------------------------------------

def bump(domain: DiscreteDomain, center=None, width: float | None = None,
         amplitude: float = 1.0) -> ScalarField:
    """Gaussian bump ``amplitude * exp(-|x - c|^2 / (2 width^2))``."""
    x0, y0 = domain.origin
    Lx, Ly = domain.extents
    c = center if center is not None else (x0 + Lx / 2, y0 + Ly / 2)
    wd = width if width is not None else 0.15 * min(Lx, Ly)
    X, Y = domain.coords()
    vals = amplitude * np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * wd * wd))
    return ScalarField(domain, vals, label="bump")


def random_smooth(domain: DiscreteDomain, seed: int | None, modes: int = 3,
                  amplitude: float = 1.0) -> ScalarField:
    """Seeded low-frequency sine series scaled so that ``max |dk| = |amplitude|``."""
    rng = np.random.default_rng(seed)
    x0, y0 = domain.origin
    Lx, Ly = domain.extents
    X, Y = domain.coords()
    vals = np.zeros(domain.shape)
    coef = rng.normal(size=(modes, modes))
    for p in range(modes):
        for q in range(modes):
            vals += coef[p, q] / ((p + 1) * (q + 1)) * \
                np.sin((p + 1) * np.pi * (X - x0) / Lx) * np.sin((q + 1) * np.pi * (Y - y0) / Ly)
    vals *= amplitude / np.max(np.abs(vals[domain.active]))
    return ScalarField(domain, vals, label="random_smooth")


def direction_field(domain: DiscreteDomain, spec: dict, seed: int | None = None,
                    kbar: float = 1.0) -> ScalarField:
    """Perturbation direction in units of ``kbar / rho0^4``.

    ``spec["kind"]`` is one of ``bump``, ``random_smooth``, ``piecewise`` or ``expr``.
    An ``expr`` sees ``kbar`` and ``rho0`` and is taken as is, like the
    coefficient expression of the forward problem.
    """
    scale = kbar / domain.rho0**4
    kind = spec.get("kind", "bump")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "bump":
        f = bump(domain, spec.get("center"), spec.get("width"), amp)
    elif kind == "random_smooth":
        f = random_smooth(domain, seed, int(spec.get("modes", 3)), amp)
    elif kind == "piecewise":
        J = int(spec.get("J", 4))
        rng = np.random.default_rng(seed)
        rects = guillotine(domain.nx, domain.ny, J, rng)
        f = piecewise_from_rectangles(domain, rects, list(amp * rng.uniform(-1.0, 1.0, size=J)))
    elif kind == "expr":
        fn = compile_expr(spec["expr"], {"kbar": kbar, "rho0": domain.rho0})
        f = ScalarField.from_function(domain, fn) * amp
        return f.copy(label="dk[expr]")
    else:
        raise ValueError(f"unknown direction kind {kind!r}")
    return f.copy(f.values * scale, label=f"dk[{kind}]")
