"""Pointwise recovery of the Winkler coefficient from interior deflections.

Away from the load point the plate equation gives

    k = - div div (P grad^2 w) / w,

which is evaluated with central stencils on nodes where ``|w|`` is not too
small.  This is a transparent reference inverse, not a regularized solver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import ScalarField, norm_L2
from .forward import plate_operator
from .grid import GeometryError, NodeRegion, disc_region, interior_offset
from .material import PlateTensorField


class ReconstructionError(ValueError):
    pass


@dataclass(eq=False)
class Measurement:
    w_obs: ScalarField
    noise_level: float = 0.0
    seed: int | None = None
    source: str = ""


def measure(w: ScalarField, noise_level: float = 0.0, seed: int | None = None,
            source: str = "") -> Measurement:
    """Add i.i.d. Gaussian noise of std ``noise_level * max|w|`` on interior nodes."""
    vals = w.values.copy()
    if noise_level > 0:
        rng = np.random.default_rng(seed)
        inter = w.domain.interior
        vals[inter] += rng.normal(0.0, noise_level * w.max_abs(), size=int(inter.sum()))
    return Measurement(w.copy(vals, label="w_obs"), noise_level, seed, source)


@dataclass
class ReconstructionConfig:
    w_min_rel: float = 1e-3
    exclude_radius: float | None = None
    mollify_width: float = 0.0
    sigma: float = 0.1
    w_min: float | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.mollify_width < 0:
            raise ValueError("mollify_width must be non-negative")


def default_exclude_radius(domain, d: float, mollify_width: float = 0.0,
                           truncate: float = 3.0) -> float:
    """``max(4h, d rho0 / 4)``, widened by the mollifier support when smoothing.

    The discrete delta spoils fourth differences within a few cells of the
    load, and the singular part of w decays on a physical length scale, so
    the radius is fixed in physical units rather than in grid steps.  A
    mollifier smears the delta over its support (``truncate * width``), and
    the plate stencil reaches two more nodes.
    """
    r = max(4 * domain.spacing, 0.25 * d * domain.rho0)
    if mollify_width > 0:
        r += truncate * mollify_width + 2 * domain.spacing
    return r


def mollify(w: ScalarField, width: float, truncate: float = 3.0) -> ScalarField:
    """Truncated Gaussian smoothing renormalized over the available nodes."""
    if width < 0:
        raise ValueError("width must be non-negative")
    if width == 0:
        return w.copy()
    dom = w.domain
    act = dom.active
    sig = width / dom.spacing
    r = int(math.ceil(truncate * sig))
    ax = np.arange(-r, r + 1)
    g = np.exp(-0.5 * (ax / sig) ** 2)
    kernel = np.outer(g, g)
    vals = np.where(act, w.values, 0.0)
    num = ndimage.correlate(vals, kernel, mode="constant", cval=0.0)
    den = ndimage.correlate(act.astype(float), kernel, mode="constant", cval=0.0)
    out = np.where(act, num / np.where(den > 0, den, 1.0), np.nan)
    return w.copy(out, label=f"mollified({w.label})")


def mollifier_l2_sq(width: float, spacing: float, truncate: float = 3.0) -> float:
    """Sum of squared normalized kernel weights (variance factor for white noise)."""
    sig = width / spacing
    r = int(math.ceil(truncate * sig))
    ax = np.arange(-r, r + 1)
    g = np.exp(-0.5 * (ax / sig) ** 2)
    kernel = np.outer(g, g)
    kernel /= kernel.sum()
    return float(np.sum(kernel**2))


@dataclass(eq=False)
class ReconstructionResult:
    k_hat: ScalarField
    valid_mask: NodeRegion
    clamped: int
    w_min: float
    exclude_radius: float
    metrics: dict = field(default_factory=dict)


def reconstruct(measurement: Measurement, P: PlateTensorField, P0, f: float,
                config: ReconstructionConfig, d: float | None = None,
                k_true: ScalarField | None = None) -> ReconstructionResult:
    w = measurement.w_obs
    dom = w.domain
    ws = mollify(w, config.mollify_width)
    op = plate_operator(ws, P)
    w_min = config.w_min if config.w_min is not None else config.w_min_rel * ws.max_abs()
    excl = config.exclude_radius
    if excl is None:
        excl = default_exclude_radius(dom, d if d is not None else 0.4, config.mollify_width)
    if excl < 2 * dom.spacing:
        raise ReconstructionError("exclusion radius must be at least 2h")
    inner = interior_offset(dom, config.sigma * dom.rho0)
    if inner.is_empty():
        raise ReconstructionError("interior offset region is empty")
    center = dom.node_xy(*dom.nearest_node(P0))
    hole = disc_region(dom, center, excl)
    if inner.issubset(hole):
        raise ReconstructionError("load exclusion swallows the reporting region")
    if config.mollify_width > 0:
        # near the edge the renormalized kernel is one-sided and biases fourth differences
        reach = interior_offset(dom, 3.0 * config.mollify_width + 2 * dom.spacing)
        inner = NodeRegion(dom, inner.mask & reach.mask, inner.label)
    good = inner.mask & ~hole.mask & np.isfinite(op) & (np.abs(ws.values) > w_min)
    mask = NodeRegion(dom, good, "valid")
    if mask.is_empty():
        raise ReconstructionError(f"empty valid mask (w_min = {w_min:.3g} too large?)")
    k = np.full(dom.shape, np.nan)
    k[good] = -op[good] / ws.values[good]
    neg = good & (k < 0)
    k[neg] = 0.0
    res = ReconstructionResult(ScalarField(dom, k, "rho0^-4", "k_hat"), mask, int(neg.sum()),
                               w_min, excl)
    if k_true is not None:
        diff = k[good] - k_true.values[good]
        ref = np.linalg.norm(k_true.values[good])
        res.metrics["rel_l2_error"] = float(np.linalg.norm(diff) / ref) if ref > 0 else float(np.linalg.norm(diff))
        res.metrics["abs_l2_error"] = float(np.linalg.norm(diff)) * dom.spacing / dom.rho0
        res.metrics["max_abs_error"] = float(np.max(np.abs(diff)))
    res.metrics["valid_nodes"] = mask.size
    res.metrics["clamped"] = res.clamped
    return res


def discrepancy(w1: ScalarField, w2: ScalarField, f: float) -> float:
    """``||w1 - w2||_{L2(Omega)} / f``."""
    if w1.domain.shape != w2.domain.shape or w1.domain.spacing != w2.domain.spacing:
        raise ValueError("fields live on different grids")
    return norm_L2(w1 - w2) / f


def coefficient_error(k1: ScalarField, k2: ScalarField, sigma: float) -> float:
    """``||k1 - k2||_{L2(Omega_{sigma rho0})}``."""
    if k1.domain.shape != k2.domain.shape or k1.domain.spacing != k2.domain.spacing:
        raise ValueError("fields live on different grids")
    region = interior_offset(k1.domain, sigma * k1.domain.rho0)
    if region.is_empty():
        raise GeometryError(f"Omega_{sigma} is empty")
    return norm_L2(k1 - k2, region)
