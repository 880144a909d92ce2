"""Numerical audits of the inequalities used in the stability argument.

Every scalar returned here is invariant under ``w -> c w`` for ``c > 0``.
Constants that are only known to exist (``c1``, ``c2``, ``p``) are inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..fields import ScalarField, gagliardo_sq, norm_Hk, norm_Hks, norm_L2
from ..forward import plate_operator
from ..grid import DiscreteDomain, GeometryError, NodeRegion, cover_with_squares, disc_region, interior_offset
from ..material import PlateTensorField


# ---------------------------------------------------------------------------
# proof terms
# ---------------------------------------------------------------------------

@dataclass
class ProofAudit:
    residual: float        # ||r||_{L2(Omega_sigma)}
    residual_ratio: float  # ||r|| / ||(k2 - k1) w1||
    I1: float
    I2: float
    lhs: float
    holds: bool
    nodes: int


def proof_audit(w1: ScalarField, w2: ScalarField, k1: ScalarField, k2: ScalarField,
                P: PlateTensorField, sigma: float, tol: float = 1e-6) -> ProofAudit:
    """Residual of the difference equation and the split ``lhs <= 2 (I1 + I2)`` on Omega_sigma.

    ``r = L w + k2 w - (k2 - k1) w1`` with ``w = w1 - w2`` and ``L`` the
    central-difference ``div div (P grad^2 .)``; nodes where ``L`` has no
    complete stencil are skipped.
    """
    dom = w1.domain
    region = interior_offset(dom, sigma * dom.rho0)
    w = (w1 - w2).values
    op = plate_operator(w1 - w2, P)
    mask = region.mask & np.isfinite(op)
    if not mask.any():
        raise GeometryError("no node of Omega_sigma admits the plate stencil")
    h2 = dom.spacing**2
    dk = k2.values - k1.values
    src = dk * w1.values
    r = op + k2.values * w - src
    I1 = float(np.sum((k2.values * w)[mask] ** 2)) * h2
    I2 = float(np.sum(op[mask] ** 2)) * h2
    lhs = float(np.sum(src[mask] ** 2)) * h2
    res = math.sqrt(float(np.sum(r[mask] ** 2)) * h2)
    ratio = res / math.sqrt(lhs) if lhs > 0 else 0.0
    return ProofAudit(res, ratio, I1, I2, lhs, lhs <= 2 * (I1 + I2) * (1 + tol), int(mask.sum()))


# ---------------------------------------------------------------------------
# unique-continuation audits
# ---------------------------------------------------------------------------

def load_complement(domain: DiscreteDomain, P0, radius: float) -> NodeRegion:
    """``U = Omega \\ B_radius(P0)`` as a node region."""
    center = domain.node_xy(*domain.nearest_node(P0))
    return NodeRegion(domain, domain.interior & ~disc_region(domain, center, radius).mask,
                      f"Omega\\B_{radius:g}")


def depth_in(region: NodeRegion) -> np.ndarray:
    """Euclidean distance from each node to the nearest node outside ``region``."""
    return ndimage.distance_transform_edt(region.mask) * region.parent.spacing


@dataclass
class DiscSamples:
    centers: list[tuple[int, int]]
    values: np.ndarray
    excluded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def sample_centers(U: NodeRegion, tau: float, c: float) -> list[tuple[int, int]]:
    """One node of ``U_{c tau rho0}`` per covering square of side ``2 tau rho0``.

    The sample is the admissible node nearest the square's center node.
    """
    dom = U.parent
    r = tau * dom.rho0
    if r < 3 * dom.spacing * (1 - 1e-12):
        raise GeometryError(f"tau*rho0 = {r:.4g} is below 3 lattice steps")
    deep = U.mask & (depth_in(U) > c * r)
    if not deep.any():
        raise GeometryError(f"U_(c tau rho0) is empty for c={c}, tau={tau}")
    out = []
    for sq in cover_with_squares(NodeRegion(dom, deep, "U_deep"), 2 * r):
        ii, jj = np.nonzero(sq.mask & deep)
        ci, cj = sq.center
        k = int(np.argmin((ii - ci) ** 2 + (jj - cj) ** 2))
        out.append((int(ii[k]), int(jj[k])))
    return out


def _disc_mask(dom: DiscreteDomain, node, radius: float) -> np.ndarray:
    return disc_region(dom, dom.node_xy(*node), radius).mask


def lps_audit(w: ScalarField, U: NodeRegion, tau: float, c1: float = 4.0) -> DiscSamples:
    """``int_{B_{tau rho0}(x)} w^2 / int_U w^2`` at sampled ``x`` in ``U_{c1 tau rho0}``."""
    dom = w.domain
    total = float(np.sum(w.values[U.mask] ** 2))
    if total == 0:
        raise ValueError("w vanishes on U")
    centers = sample_centers(U, tau, c1)
    vals = np.array([np.sum(w.values[_disc_mask(dom, x, tau * dom.rho0)] ** 2) / total
                     for x in centers])
    return DiscSamples(centers, vals)


def ap_audit(w: ScalarField, U: NodeRegion, tau: float, p: float = 2.0,
             c2: float = 4.0) -> DiscSamples:
    """``(avg_B w^2) (avg_B |w|^(-2/(p-1)))^(p-1)`` at sampled discs in ``U_{c2 tau rho0}``.

    Nodes with ``w = 0`` are left out of the negative-power average and
    counted in ``excluded``; a disc with no nonzero node gives NaN.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    dom = w.domain
    centers = sample_centers(U, tau, c2)
    q = 2.0 / (p - 1.0)
    vals = np.empty(len(centers))
    excl = np.zeros(len(centers), dtype=int)
    for n, x in enumerate(centers):
        v = np.abs(w.values[_disc_mask(dom, x, tau * dom.rho0)])
        nz = v[v > 0]
        excl[n] = v.size - nz.size
        if nz.size == 0:
            vals[n] = np.nan
            continue
        # normalize by the disc maximum so extreme powers stay in range
        m = nz.max()
        vals[n] = np.mean((v / m) ** 2) * np.mean((nz / m) ** -q) ** (p - 1.0)
    return DiscSamples(centers, vals, excl)


def frequency_ratio(w: ScalarField, U: NodeRegion, max_nodes: int | None = 20000,
                    stride: int | None = None) -> float:
    """``||w||_{H^1/2(U)} / ||w||_{L2(U)}`` with ``H^1/2 = L2 + rho0^-1/2 [.]_1/2``."""
    if U.is_empty():
        raise GeometryError("U is empty")
    l2 = norm_L2(w, U)
    if l2 == 0:
        raise ValueError("w vanishes on U")
    sq, _ = gagliardo_sq(w.domain, U.mask, [w.values], 0.5, max_nodes, stride)
    return 1.0 + w.domain.rho0 ** -0.5 * math.sqrt(sq[0]) / l2


@dataclass
class InterpolationAudit:
    ratio: float
    H4: float
    H4s: float
    L2: float
    degenerate: bool = False


def interpolation_audit(w: ScalarField, sigma: float, s: float,
                        max_nodes: int | None = 20000) -> InterpolationAudit:
    """``||w||_H4 / (||w||_{H4+s}^(4/(4+s)) ||w||_L2^(s/(4+s)))`` on Omega_sigma."""
    region = interior_offset(w.domain, sigma * w.domain.rho0)
    if region.is_empty():
        raise GeometryError("Omega_sigma is empty")
    l2 = norm_L2(w, region)
    h4 = norm_Hk(w, region, 4)
    if l2 == 0 or h4 == 0:
        return InterpolationAudit(0.0, h4, h4, l2, True)
    h4s = norm_Hks(w, region, 4, s, max_nodes)
    ratio = h4 / (h4s ** (4 / (4 + s)) * l2 ** (s / (4 + s)))
    return InterpolationAudit(ratio, h4, h4s, l2)
