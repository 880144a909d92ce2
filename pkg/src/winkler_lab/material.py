"""Elasticity and plate tensor fields with convexity and structural checks.

Only the six independent components of a tensor with minor and major
symmetries are stored, in the order ``COMPONENTS``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import compile_expr
from .fields import ScalarField, raw_diff, gagliardo_sq, multi_indices, norm_Hk
from .grid import DiscreteDomain

COMPONENTS = ("C1111", "C1122", "C1112", "C1212", "C2212", "C2222")


class ConvexityError(ValueError):
    pass


def _as_node_array(domain: DiscreteDomain, value) -> np.ndarray:
    if callable(value):
        X, Y = domain.coords()
        arr = np.asarray(value(X, Y), dtype=float)
        return np.broadcast_to(arr, domain.shape).copy()
    if isinstance(value, str):
        return _as_node_array(domain, compile_expr(value))
    arr = np.asarray(value, dtype=float)
    return np.broadcast_to(arr, domain.shape).copy()


def convexity_matrices(c: np.ndarray) -> np.ndarray:
    """Orthonormal-basis 3x3 matrices of ``A -> CA`` on symmetric 2x2 matrices.

    ``c`` has shape ``(6, ...)``; the basis is diag(1,0), diag(0,1) and the
    off-diagonal symmetric unit matrix scaled by 1/sqrt(2).
    """
    c1111, c1122, c1112, c1212, c2212, c2222 = c
    r2 = math.sqrt(2.0)
    m = np.empty(c.shape[1:] + (3, 3))
    m[..., 0, 0] = c1111
    m[..., 1, 1] = c2222
    m[..., 2, 2] = 2.0 * c1212
    m[..., 0, 1] = m[..., 1, 0] = c1122
    m[..., 0, 2] = m[..., 2, 0] = r2 * c1112
    m[..., 1, 2] = m[..., 2, 1] = r2 * c2212
    return m


@dataclass(eq=False)
class ElasticityTensorField:
    domain: DiscreteDomain
    c: np.ndarray  # (6, nx, ny)
    h: float
    xi0: float = field(init=False)
    xi1: float = field(init=False)
    M2: float | None = None
    M3: float | None = None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("plate thickness h must be positive")
        act = self.domain.active
        eig = np.linalg.eigvalsh(convexity_matrices(self.c[:, act]))
        lo = eig[:, 0]
        if np.any(lo <= 0):
            bad = int(np.argmin(lo))
            i, j = np.argwhere(act)[bad]
            raise ConvexityError(
                f"strong convexity fails at node ({i}, {j}): smallest eigenvalue {lo[bad]:.6g}")
        self.xi0 = float(lo.min())
        self.xi1 = float(eig[:, -1].max())

    def component(self, name: str) -> np.ndarray:
        return self.c[COMPONENTS.index(name)]


@dataclass(eq=False)
class PlateTensorField:
    domain: DiscreteDomain
    p: np.ndarray  # (6, nx, ny)
    source: ElasticityTensorField | None = None

    def component(self, name: str) -> np.ndarray:
        return self.p[COMPONENTS.index(name.replace("P", "C"))]

    def scaled(self, factor: float) -> "PlateTensorField":
        return PlateTensorField(self.domain, self.p * factor, None)


def make_general(components: dict, h: float, domain: DiscreteDomain) -> ElasticityTensorField:
    """Build C from per-component constants, node arrays, callables or expressions."""
    c = np.empty((6,) + domain.shape)
    for k, name in enumerate(COMPONENTS):
        c[k] = _as_node_array(domain, components.get(name, 0.0))
    c[:, ~domain.active] = np.nan
    return ElasticityTensorField(domain, c, float(h))


def make_isotropic(lam: float, mu: float, h: float, domain: DiscreteDomain) -> ElasticityTensorField:
    if not (mu > 0 and lam + mu > 0):
        raise ConvexityError(f"Lame parameters lambda={lam}, mu={mu} are not positive definite")
    return make_general({"C1111": lam + 2 * mu, "C2222": lam + 2 * mu, "C1122": lam,
                         "C1212": mu}, h, domain)


def make_orthotropic(C1111, C1122, C1212, C2222, h, domain) -> ElasticityTensorField:
    return make_general({"C1111": C1111, "C1122": C1122, "C1212": C1212, "C2222": C2222},
                        h, domain)


def plate_tensor(C: ElasticityTensorField) -> PlateTensorField:
    """P = (h^3 / 12) C at every node."""
    return PlateTensorField(C.domain, C.c * (C.h**3 / 12.0), C)


# ---------------------------------------------------------------------------
# structural condition
# ---------------------------------------------------------------------------

def symbol_coefficients(c: np.ndarray) -> np.ndarray:
    """``(a0, ..., a4)`` of the quartic symbol, stacked along axis 0."""
    c1111, c1122, c1112, c1212, c2212, c2222 = c
    return np.stack([c1111, 4 * c1112, 2 * c1122 + 4 * c1212, 4 * c2212, c2222])


def structural_matrix(a) -> np.ndarray:
    """The 7x7 matrix S built from ``a = (a0, ..., a4)``; leading dims are kept."""
    a = np.asarray(a, dtype=float)
    a0, a1, a2, a3, a4 = a
    S = np.zeros(a0.shape + (7, 7))
    top = (a0, a1, a2, a3, a4)
    der = (4 * a0, 3 * a1, 2 * a2, a3)
    for r in range(3):
        for k, v in enumerate(top):
            S[..., r, r + k] = v
    for r in range(4):
        for k, v in enumerate(der):
            S[..., 3 + r, r + k] = v
    return S


@dataclass
class StructuralReport:
    a: np.ndarray          # (5, nx, ny)
    D: np.ndarray          # (nx, ny), NaN off the plate
    normalized: np.ndarray  # D / a0**6
    tol: float
    max_D: float
    max_normalized: float
    passed: bool


def structural_condition(C: ElasticityTensorField, tol: float = 1e-9) -> StructuralReport:
    """D(x) = |det S(x)| / a0 with pass iff D <= tol * a0^6 at every node."""
    act = C.domain.active
    a = symbol_coefficients(C.c)
    if np.any(a[0][act] <= 0):
        raise ConvexityError("a0 = C1111 must be positive")
    D = np.full(C.domain.shape, np.nan)
    dets = np.linalg.det(structural_matrix(a[:, act]))
    D[act] = np.abs(dets) / a[0][act]
    norm = np.full(C.domain.shape, np.nan)
    norm[act] = D[act] / a[0][act] ** 6
    mx = float(np.nanmax(norm))
    return StructuralReport(a=a, D=D, normalized=norm, tol=tol, max_D=float(np.nanmax(D)),
                            max_normalized=mx, passed=bool(mx <= tol))


# ---------------------------------------------------------------------------
# regularity metadata
# ---------------------------------------------------------------------------

@dataclass
class RegularityBounds:
    sup0: float
    sup1: float
    sup2: float
    M2_est: float
    M3_est: float
    s: float
    norm: str = "componentwise sup"


def regularity_bounds(C: ElasticityTensorField, s: float = 0.5,
                      max_nodes: int | None = 4000) -> RegularityBounds:
    """Discrete W^{2,inf} and H^{2+s} sizes of C (max over the six components).

    Derivatives are central differences on the interior nodes; the H^{2+s}
    seminorm runs on a stratified subsample when the plate has many nodes.
    """
    d = C.domain
    mask = d.interior
    rho0 = d.rho0
    sups = [0.0, 0.0, 0.0]
    m3 = 0.0
    for comp in C.c:
        sups[0] = max(sups[0], float(np.max(np.abs(comp[d.active]))))
        for order in (1, 2):
            for alpha, _ in multi_indices(order):
                sups[order] = max(sups[order], float(np.max(np.abs(raw_diff(comp, alpha, d.spacing)[mask]))))
        f = ScalarField(d, comp)
        cols, mults = [], []
        for alpha, mult in multi_indices(2):
            cols.append(raw_diff(comp, alpha, d.spacing))
            mults.append(mult)
        if all(np.allclose(col[mask], col[mask].flat[0]) for col in cols):
            semi = 0.0
        else:
            sq, _ = gagliardo_sq(d, mask, cols, s, max_nodes)
            semi = math.sqrt(float(np.dot(mults, sq)))
        m3 = max(m3, norm_Hk(f, None, 2) + rho0 ** (1.0 + s) * semi)
    M2 = sups[0] + rho0 * sups[1] + rho0**2 * sups[2]
    C.M2, C.M3 = M2, m3
    return RegularityBounds(sups[0], sups[1], sups[2], M2, m3, s)
