"""Node fields, finite-difference derivatives and rho0-normalized Sobolev norms.

All norms follow the dimensional convention

    ||u||_{L2}    = rho0^-1 (int u^2)^(1/2)
    ||u||_{H^k}   = rho0^-1 (sum_i rho0^(2i) int |D^i u|^2)^(1/2)
    ||u||_{H^k+s} = ||u||_{H^k} + rho0^(k+s-1) [D^k u]_s

where ``|D^i u|^2`` counts each mixed derivative with its multinomial
multiplicity and ``[.]_s`` is the Gagliardo double integral.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import DiscreteDomain, NodeRegion


class StencilError(ValueError):
    """Raised when a region is too close to missing nodes for a stencil."""


@dataclass(eq=False)
class ScalarField:
    domain: DiscreteDomain
    values: np.ndarray
    units: str = ""
    label: str = ""

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.shape != self.domain.shape:
            raise ValueError(f"field shape {self.values.shape} != domain shape {self.domain.shape}")
        self.values[~self.domain.active] = np.nan

    @classmethod
    def from_function(cls, domain, func, units="", label=""):
        X, Y = domain.coords()
        return cls(domain, func(X, Y), units, label)

    @classmethod
    def constant(cls, domain, value, units="", label=""):
        return cls(domain, np.full(domain.shape, float(value)), units, label)

    def copy(self, values=None, label=None):
        return ScalarField(self.domain, self.values.copy() if values is None else values,
                           self.units, self.label if label is None else label)

    def __mul__(self, c: float):
        return self.copy(self.values * c)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return self.copy(self.values + other.values)
        return self.copy(self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return self.copy(self.values - other.values)
        return self.copy(self.values - other)

    def at(self, region: NodeRegion) -> np.ndarray:
        return self.values[region.mask]

    def max_abs(self) -> float:
        return float(np.nanmax(np.abs(self.values)))

    # -- serialization -------------------------------------------------
    def to_csv(self, path):
        X, Y = self.domain.coords()
        act = self.domain.active
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["x", "y", "value"])
            for x, y, v in zip(X[act], Y[act], self.values[act]):
                out.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, domain, path, units="", label=""):
        values = np.full(domain.shape, np.nan)
        with open(path, newline="") as fh:
            rows = csv.DictReader(fh)
            for row in rows:
                i = round((float(row["x"]) - domain.origin[0]) / domain.spacing)
                j = round((float(row["y"]) - domain.origin[1]) / domain.spacing)
                values[i, j] = float(row["value"])
        return cls(domain, values, units, label)

    def dump_binary(self, path):
        """Header ``<qqdd`` (nx, ny, spacing, rho0) then nx*ny little-endian doubles, i slowest."""
        d = self.domain
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qqdd", d.nx, d.ny, d.spacing, d.rho0))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load_binary(cls, domain, path, units="", label=""):
        with open(path, "rb") as fh:
            nx, ny, spacing, rho0 = struct.unpack("<qqdd", fh.read(32))
            if (nx, ny) != domain.shape or not math.isclose(spacing, domain.spacing):
                raise ValueError("binary dump does not match the domain lattice")
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(nx, ny)
        return cls(domain, data.copy(), units, label)


def _same_grid(a: ScalarField, b: ScalarField):
    if a.domain is not b.domain and (a.domain.shape != b.domain.shape
                                     or a.domain.spacing != b.domain.spacing):
        raise ValueError("fields live on different grids")


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------

def _shift(u: np.ndarray, k: int, axis: int) -> np.ndarray:
    """``out[i] = u[i + k]`` along ``axis`` with NaN beyond the lattice."""
    out = np.full_like(u, np.nan)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    n = u.shape[axis]
    if k >= 0:
        src[axis], dst[axis] = slice(k, n), slice(0, n - k)
    else:
        src[axis], dst[axis] = slice(0, n + k), slice(-k, n)
    out[tuple(dst)] = u[tuple(src)]
    return out


def _d1(u, h, axis):
    return (_shift(u, 1, axis) - _shift(u, -1, axis)) / (2 * h)


def _d2(u, h, axis):
    return (_shift(u, 1, axis) - 2 * u + _shift(u, -1, axis)) / (h * h)


def _axis_derivative(u, order, h, axis):
    for _ in range(order // 2):
        u = _d2(u, h, axis)
    if order % 2:
        u = _d1(u, h, axis)
    return u


def stencil_reach(order: int) -> int:
    """Chebyshev radius (in nodes) of the composed central stencil of a given order."""
    return (order + 1) // 2


def raw_diff(values: np.ndarray, alpha: tuple[int, int], h: float) -> np.ndarray:
    """Central-difference ``d^alpha`` on a full node array; NaN where the stencil is incomplete."""
    out = _axis_derivative(values, alpha[0], h, 0)
    return _axis_derivative(out, alpha[1], h, 1)


def diff(field: ScalarField, alpha: tuple[int, int], region: NodeRegion | None = None) -> ScalarField:
    """``d^alpha u`` with second-order central stencils composed per axis."""
    a1, a2 = int(alpha[0]), int(alpha[1])
    if a1 < 0 or a2 < 0 or a1 + a2 > 4:
        raise ValueError(f"multi-index {alpha} must be non-negative with order <= 4")
    vals = raw_diff(field.values, (a1, a2), field.domain.spacing)
    if region is not None:
        sub = vals[region.mask]
        if not np.all(np.isfinite(sub)):
            raise StencilError(
                f"region {region.label!r} is too close to missing nodes for order {a1 + a2}")
        out = np.full(field.domain.shape, np.nan)
        out[region.mask] = sub
        vals = out
    return ScalarField(field.domain, vals, label=f"d{a1}{a2}({field.label})")


def multi_indices(order: int):
    """``((a1, a2), multiplicity)`` for all derivatives of a given order."""
    return [((order - b, b), math.comb(order, b)) for b in range(order + 1)]


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _region_mask(field, region):
    return field.domain.interior if region is None else region.mask


def _sq_integral(values, mask, h):
    v = values[mask]
    if not np.all(np.isfinite(v)):
        raise StencilError("field is not finite on the requested region")
    return float(np.sum(v * v)) * h * h


def norm_L2(field: ScalarField, region: NodeRegion | None = None) -> float:
    d = field.domain
    return math.sqrt(_sq_integral(field.values, _region_mask(field, region), d.spacing)) / d.rho0


def gradient_sq_integral(field: ScalarField, order: int, region: NodeRegion | None = None) -> float:
    """``int |D^order u|^2`` over the region, multiplicities included."""
    d = field.domain
    mask = _region_mask(field, region)
    total = 0.0
    for alpha, mult in multi_indices(order):
        vals = raw_diff(field.values, alpha, d.spacing)
        if not np.all(np.isfinite(vals[mask])):
            raise StencilError(f"region too close to missing nodes for order {order}")
        total += mult * _sq_integral(vals, mask, d.spacing)
    return total


def norm_Hk(field: ScalarField, region: NodeRegion | None = None, k: int = 2) -> float:
    if not 0 <= k <= 4:
        raise ValueError("k must be between 0 and 4")
    rho0 = field.domain.rho0
    acc = sum(rho0 ** (2 * i) * gradient_sq_integral(field, i, region) for i in range(k + 1))
    return math.sqrt(acc) / rho0


def _distance_table(nx, ny, s):
    di = np.arange(nx)[:, None].astype(float)
    dj = np.arange(ny)[None, :].astype(float)
    r2 = di * di + dj * dj
    r2[0, 0] = 1.0
    table = r2 ** (-(1.0 + s))
    table[0, 0] = 0.0
    return np.ascontiguousarray(table)


def subsample_stride(count: int, max_nodes: int | None) -> int:
    if max_nodes is None or count <= max_nodes:
        return 1
    return math.ceil(math.sqrt(count / max_nodes))


def _near_pair_sums(mask, vals, radius, s):
    """Ordered-pair sums over all node pairs with ``0 < |i - j|_inf <= radius``, in lattice units."""
    nx, ny = mask.shape
    grid = np.zeros((nx, ny, vals.shape[1]))
    grid[mask] = vals
    out = np.zeros(vals.shape[1])
    for a in range(0, radius + 1):
        for b in range(-radius, radius + 1):
            if a == 0 and b <= 0:
                continue  # each unordered offset once; doubled below
            if a >= nx or abs(b) >= ny:
                continue
            sa, sb = slice(0, nx - a), slice(max(0, -b), ny - max(0, b))
            ta, tb = slice(a, nx), slice(max(0, b), ny + min(0, b))
            both = mask[sa, sb] & mask[ta, tb]
            d = grid[sa, sb][both] - grid[ta, tb][both]
            out += 2.0 * (a * a + b * b) ** (-(1.0 + s)) * np.sum(d * d, axis=0)
    return out


NEAR_FIELD_STEPS = 4  # near field radius in units of the subsampling stride


def stratified_representatives(mask: np.ndarray, stride: int):
    """One node per ``stride x stride`` block of ``mask`` and the block's node count.

    The representative is the mask node closest to the block center, ties
    broken by index, so every block that meets the region is represented.
    """
    ii, jj = np.nonzero(mask)
    bi, bj = ii // stride, jj // stride
    c = 0.5 * (stride - 1)
    dist = (ii - bi * stride - c) ** 2 + (jj - bj * stride - c) ** 2
    order = np.lexsort((jj, ii, dist, bj, bi))
    key = bi[order] * (mask.shape[1] // stride + 1) + bj[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = key[1:] != key[:-1]
    starts = np.flatnonzero(first)
    counts = np.diff(np.append(starts, order.size)).astype(float)
    pick = order[starts]
    return ii[pick], jj[pick], counts


def gagliardo_sq(domain: DiscreteDomain, mask: np.ndarray, columns, s: float,
                 max_nodes: int | None = 20000, stride: int | None = None) -> tuple[np.ndarray, int]:
    """Squared Gagliardo seminorms of several node arrays on ``mask``.

    Returns per-column ``[u]_s^2`` and the subsampling stride used (1 = none).
    With ``stride > 1`` pairs within ``NEAR_FIELD_STEPS * stride`` lattice
    steps (max norm) are summed exactly over every node.  The smooth far field
    uses one representative per ``stride x stride`` block weighted by the
    number of region nodes in the block.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty region for seminorm")
    if stride is None:
        stride = subsample_stride(int(mask.sum()), max_nodes)
    vals = np.column_stack([np.asarray(c)[mask] for c in columns])
    if not np.all(np.isfinite(vals)):
        raise StencilError("field is not finite on the seminorm region")
    table = _distance_table(domain.nx, domain.ny, s)
    near = 0.0
    if stride > 1:
        radius = NEAR_FIELD_STEPS * stride
        near = _near_pair_sums(mask, vals, radius, s)
        table[:radius + 1, :radius + 1] = 0.0
        ii, jj, weights = stratified_representatives(mask, stride)
        grid = np.zeros(mask.shape + (vals.shape[1],))
        grid[mask] = vals
        vals = grid[ii, jj]
    else:
        ii, jj = np.nonzero(mask)
        weights = np.ones(ii.size)
    sums = kernels.pair_sums(np.ascontiguousarray(ii, dtype=np.int64),
                             np.ascontiguousarray(jj, dtype=np.int64),
                             np.ascontiguousarray(vals, dtype=np.float64), table,
                             np.ascontiguousarray(weights, dtype=np.float64))
    return (np.asarray(sums) + near) * domain.spacing ** (2.0 - 2.0 * s), stride


def frac_seminorm(field: ScalarField, region: NodeRegion | None = None, s: float = 0.5,
                  max_nodes: int | None = 20000) -> float:
    """Gagliardo seminorm ``[u]_s`` by midpoint quadrature with the diagonal excluded.

    ``region=None`` integrates over every non-exterior node.
    """
    mask = field.domain.active if region is None else region.mask
    sq, _ = gagliardo_sq(field.domain, mask, [field.values], s, max_nodes)
    return math.sqrt(sq[0])


def derivative_seminorm(field: ScalarField, order: int, region: NodeRegion | None, s: float,
                        max_nodes: int | None = 20000) -> float:
    """``[D^order u]_s``: componentwise seminorms summed in quadrature with multiplicity."""
    d = field.domain
    mask = _region_mask(field, region)
    cols, weights = [], []
    for alpha, mult in multi_indices(order):
        cols.append(raw_diff(field.values, alpha, d.spacing))
        weights.append(mult)
    sq, _ = gagliardo_sq(d, mask, cols, s, max_nodes)
    return math.sqrt(float(np.dot(weights, sq)))


def norm_Hks(field: ScalarField, region: NodeRegion | None = None, k: int = 0, s: float = 0.5,
             max_nodes: int | None = 20000) -> float:
    rho0 = field.domain.rho0
    semi = derivative_seminorm(field, k, region, s, max_nodes) if k else \
        math.sqrt(gagliardo_sq(field.domain, _region_mask(field, region), [field.values], s, max_nodes)[0][0])
    return norm_Hk(field, region, k) + rho0 ** (k + s - 1.0) * semi


@dataclass
class NormReport:
    label: str
    rho0: float
    L2: float
    Hk: dict = field(default_factory=dict)
    s: float | None = None
    seminorm: float | None = None
    Hks: float | None = None
    stride: int = 1


def norm_report(field: ScalarField, region: NodeRegion | None = None, ks=(0, 1, 2),
                s: float | None = None, max_nodes: int | None = 20000) -> NormReport:
    rep = NormReport(label=region.label if region is not None else "Omega",
                     rho0=field.domain.rho0, L2=norm_L2(field, region))
    for k in ks:
        rep.Hk[k] = norm_Hk(field, region, k)
    if s is not None:
        mask = _region_mask(field, region)
        sq, stride = gagliardo_sq(field.domain, mask, [field.values], s, max_nodes)
        rep.s, rep.seminorm, rep.stride = s, math.sqrt(sq[0]), stride
        rep.Hks = rep.L2 + field.domain.rho0 ** (s - 1.0) * rep.seminorm
    return rep


# ---------------------------------------------------------------------------
# total variation and the BV -> H^s bound
# ---------------------------------------------------------------------------

def total_variation(field: ScalarField) -> float:
    """Anisotropic discrete TV over the plate: sum of |jumps| times dual-face length.

    A lattice edge carries the dual face of length ``h * (cells inside)/2``, so
    indicators of lattice-aligned half-open rectangles return their perimeter
    inside the plate.  No extension outside the plate is applied.
    """
    d = field.domain
    u = field.values
    cells = d.cell_mask().astype(float)
    h = d.spacing
    # edges along x: (i, j)-(i+1, j); cells (i, j-1) and (i, j)
    fx = np.zeros((d.nx - 1, d.ny))
    fx[:, :-1] += cells
    fx[:, 1:] += cells
    jx = np.abs(u[1:, :] - u[:-1, :])
    fy = np.zeros((d.nx, d.ny - 1))
    fy[:-1, :] += cells
    fy[1:, :] += cells
    jy = np.abs(u[:, 1:] - u[:, :-1])
    tv = np.nansum(np.where(fx > 0, jx * fx, 0.0)) + np.nansum(np.where(fy > 0, jy * fy, 0.0))
    return float(tv) * h / 2.0


def bv_embedding_check(field: ScalarField, s: float = 0.25, max_nodes: int | None = 20000):
    """Return ``([k]_s^2, ||k||_inf^2s (int k^2)^(1-2s) TV^2s, ratio)`` over the plate."""
    if not 0 < s < 0.5:
        raise ValueError("the BV bound needs 0 < s < 1/2")
    d = field.domain
    act = d.active
    vals = field.values[act]
    sup = float(np.max(np.abs(vals)))
    if sup == 0.0:
        return 0.0, 0.0, 0.0
    lhs = gagliardo_sq(d, act, [field.values], s, max_nodes)[0][0]
    l2sq = float(np.sum(d.trapezoid_weights()[act] * vals**2)) * d.spacing**2
    tv = total_variation(field)
    rhs = sup ** (2 * s) * l2sq ** (1 - 2 * s) * tv ** (2 * s)
    return float(lhs), float(rhs), float(lhs / rhs) if rhs > 0 else 0.0
