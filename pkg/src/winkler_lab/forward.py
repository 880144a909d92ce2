"""Clamped Kirchhoff plate on a Winkler foundation under a point load.

The discrete problem is the Galerkin-like quadratic form

    B(u, v) = sum_nodes w_n  P(x_n) H_n u . H_n v  h^2  +  sum_nodes k u v h^2

where ``H_n`` is the discrete Hessian at node ``n`` and ``w_n`` the trapezoid
weight (fraction of the node's four cells inside the plate).  Second
differences at boundary nodes use a mirror ghost value, which encodes
``dw/dn = 0``; ``w = 0`` is imposed by dropping boundary nodes from the
unknowns.  The mixed derivative enters the ``P1212`` term through the cell
centred difference ``d1+ d2+`` (so the isotropic constant case reproduces the
13-point biharmonic exactly) and the ``P1112``/``P2212`` couplings through
the node-centred average of the four surrounding cell values.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import ScalarField, norm_Hk, raw_diff
from .grid import INTERIOR, DiscreteDomain, GeometryError, annulus_region, disc_region
from .material import COMPONENTS, PlateTensorField

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(eq=False)
class ForwardProblem:
    domain: DiscreteDomain
    P: PlateTensorField
    k: ScalarField
    P0: tuple[float, float]
    f: float
    d: float
    kbar: float | None = None

    def __post_init__(self):
        dom = self.domain
        if not self.f > 0:
            raise ValueError(f"point load must be positive, got f={self.f}")
        kv = self.k.values[dom.active]
        if np.any(~np.isfinite(kv)) or np.any(kv < 0):
            raise ValueError("Winkler coefficient must be finite and non-negative")
        if self.kbar is not None and np.any(kv > self.kbar / dom.rho0**4 * (1 + 1e-12)):
            raise ValueError(f"Winkler coefficient exceeds kbar/rho0^4 = {self.kbar / dom.rho0**4:g}")
        i, j = dom.nearest_node(self.P0)
        if dom.node_class[i, j] != INTERIOR:
            raise GeometryError(f"load point {self.P0} maps to a non-interior node")
        dist = float(dom.boundary_distance()[i, j])
        if dist < self.d * dom.rho0 * (1 - 1e-9):
            raise GeometryError(
                f"load point is {dist:.4g} from the boundary, below the standoff d*rho0 = {self.d * dom.rho0:.4g}")

    @property
    def load_node(self) -> tuple[int, int]:
        return self.domain.nearest_node(self.P0)

    def with_k(self, k: ScalarField) -> "ForwardProblem":
        return ForwardProblem(self.domain, self.P, k, self.P0, self.f, self.d, self.kbar)

    def with_load(self, f: float) -> "ForwardProblem":
        return ForwardProblem(self.domain, self.P, self.k, self.P0, f, self.d, self.kbar)


@dataclass(eq=False)
class PlateSystem:
    """``K u = b`` on the interior unknowns; ``B(u, v) = h^2 u.K v``."""
    domain: DiscreteDomain
    K: sp.csr_matrix
    K_bending: sp.csr_matrix
    index: np.ndarray  # (nx, ny) -> unknown number or -1

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def to_field(self, u: np.ndarray, label="w", units="length") -> ScalarField:
        vals = np.zeros(self.domain.shape)
        mask = self.index >= 0
        vals[mask] = u[self.index[mask]]
        return ScalarField(self.domain, vals, units, label)

    def from_field(self, field: ScalarField) -> np.ndarray:
        mask = self.index >= 0
        out = np.empty(self.n)
        out[self.index[mask]] = field.values[mask]
        return out

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.K @ u)) * self.domain.spacing**2


def _unknown_index(domain: DiscreteDomain) -> np.ndarray:
    index = np.full(domain.shape, -1, dtype=np.int64)
    mask = domain.interior
    index[mask] = np.arange(np.count_nonzero(mask))
    return index


def _check_thickness(domain: DiscreteDomain, min_run: int = 5):
    inter = domain.interior
    for arr in (inter, inter.T):
        for line in arr:
            padded = np.concatenate(([0], line.astype(np.int8), [0]))
            edges = np.flatnonzero(np.diff(padded))
            runs = edges[1::2] - edges[::2]
            if runs.size and runs.min() < min_run:
                raise AssemblyError(
                    f"domain too thin: a lattice line has only {runs.min()} interior nodes across "
                    f"(need {min_run})")


class _OpBuilder:
    """Accumulates rows = lattice nodes, cols = unknowns, for a sparse operator."""

    def __init__(self, domain, index):
        self.domain = domain
        self.index = index
        self.rows, self.cols, self.vals = [], [], []

    def add(self, node_mask, di, dj, coef):
        nx, ny = self.domain.shape
        ii, jj = np.nonzero(node_mask)
        coef = np.broadcast_to(coef, node_mask.shape)[ii, jj]
        ti, tj = ii + di, jj + dj
        ok = (ti >= 0) & (ti < nx) & (tj >= 0) & (tj < ny)
        ii, jj, ti, tj, coef = ii[ok], jj[ok], ti[ok], tj[ok], coef[ok]
        col = self.index[ti, tj]
        keep = (col >= 0) & (coef != 0)
        self.rows.append((ii * ny + jj)[keep])
        self.cols.append(col[keep])
        self.vals.append(coef[keep])

    def matrix(self, nrows, ncols):
        if not self.rows:
            return sp.csr_matrix((nrows, ncols))
        return sp.csr_matrix((np.concatenate(self.vals),
                              (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(nrows, ncols))


def _available(domain, di, dj):
    """Mask of nodes whose neighbour at offset (di, dj) exists and is not exterior."""
    nx, ny = domain.shape
    act = domain.active
    out = np.zeros(domain.shape, dtype=bool)
    src_i = slice(max(0, -di), nx - max(0, di))
    src_j = slice(max(0, -dj), ny - max(0, dj))
    dst_i = slice(max(0, di), nx - max(0, -di))
    dst_j = slice(max(0, dj), ny - max(0, -dj))
    out[src_i, src_j] = act[dst_i, dst_j]
    return out & act


def hessian_operators(domain: DiscreteDomain, index: np.ndarray):
    """Sparse maps from unknowns to node values of d11, d22 (mirror ghosts), node d12, cell d12."""
    h2 = domain.spacing**2
    nnodes = domain.nx * domain.ny
    nu = int(index.max()) + 1
    act = domain.active
    ops = []
    for axis in (0, 1):
        e = (1, 0) if axis == 0 else (0, 1)
        plus = _available(domain, *e)
        minus = _available(domain, -e[0], -e[1])
        if np.any(act & ~plus & ~minus):
            raise AssemblyError("a boundary node has no neighbour on either side along an axis")
        b = _OpBuilder(domain, index)
        b.add(act & plus, e[0], e[1], (1.0 + (~minus)) / h2)
        b.add(act & minus, -e[0], -e[1], (1.0 + (~plus)) / h2)
        b.add(act, 0, 0, -2.0 / h2)
        ops.append(b.matrix(nnodes, nu))
    # node-centred mixed derivative, zero on boundary nodes
    inter = domain.interior
    b = _OpBuilder(domain, index)
    q = 1.0 / (4.0 * h2)
    b.add(inter, 1, 1, q)
    b.add(inter, -1, -1, q)
    b.add(inter, 1, -1, -q)
    b.add(inter, -1, 1, -q)
    ops.append(b.matrix(nnodes, nu))
    # cell-centred mixed derivative on cells inside the plate (rows = cells)
    cells = domain.cell_mask()
    ncx, ncy = cells.shape
    rows, cols, vals = [], [], []
    ci, cj = np.nonzero(cells)
    cell_id = ci * ncy + cj
    for di, dj, s in ((1, 1, 1.0), (0, 0, 1.0), (1, 0, -1.0), (0, 1, -1.0)):
        col = index[ci + di, cj + dj]
        keep = col >= 0
        rows.append(cell_id[keep])
        cols.append(col[keep])
        vals.append(np.full(keep.sum(), s / h2))
    cell_op = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(ncx * ncy, nu))
    return ops[0], ops[1], ops[2], cell_op


def assemble(problem: ForwardProblem) -> PlateSystem:
    """Symmetric positive-definite stiffness ``K`` (strong-form scaling) for the clamped plate."""
    dom = problem.domain
    _check_thickness(dom)
    index = _unknown_index(dom)
    D11, D22, X, Cc = hessian_operators(dom, index)
    w = dom.trapezoid_weights().ravel()
    P = {name: np.nan_to_num(problem.P.p[k]).ravel() for k, name in enumerate(COMPONENTS)}

    def diag(v):
        return sp.diags(v)

    K = (D11.T @ diag(w * P["C1111"]) @ D11
         + D22.T @ diag(w * P["C2222"]) @ D22
         + D11.T @ diag(w * P["C1122"]) @ D22
         + D22.T @ diag(w * P["C1122"]) @ D11
         + 2.0 * (D11.T @ diag(w * P["C1112"]) @ X + X.T @ diag(w * P["C1112"]) @ D11)
         + 2.0 * (D22.T @ diag(w * P["C2212"]) @ X + X.T @ diag(w * P["C2212"]) @ D22))
    p1212 = problem.P.p[COMPONENTS.index("C1212")]
    pbar = 0.25 * (p1212[:-1, :-1] + p1212[1:, :-1] + p1212[:-1, 1:] + p1212[1:, 1:])
    pbar = np.where(dom.cell_mask(), np.nan_to_num(pbar), 0.0).ravel()
    K = K + Cc.T @ diag(4.0 * pbar) @ Cc
    K = sp.csr_matrix(K)
    K = ((K + K.T) * 0.5).tocsr()
    return with_coefficient(PlateSystem(dom, K, K, index), problem.k)


def with_coefficient(system: PlateSystem, k: ScalarField) -> PlateSystem:
    """Same plate, new Winkler coefficient (reuses the bending part)."""
    mask = system.index >= 0
    kdiag = np.empty(system.n)
    kdiag[system.index[mask]] = k.values[mask]
    full = (system.K_bending + sp.diags(kdiag)).tocsr()
    full.sort_indices()
    return PlateSystem(system.domain, full, system.K_bending, system.index)


def point_load_rhs(problem: ForwardProblem, system: PlateSystem | None = None) -> np.ndarray:
    """Discrete delta: ``f / (rho0^2 h^2)`` at the node nearest the load point."""
    dom = problem.domain
    index = system.index if system is not None else _unknown_index(dom)
    i, j = problem.load_node
    if index[i, j] < 0:
        raise GeometryError("load point maps to a boundary or exterior node")
    b = np.zeros(int(index.max()) + 1)
    b[index[i, j]] = problem.f / (dom.rho0**2 * dom.spacing**2)
    return b


@dataclass
class Factorization:
    lu: object
    method: str
    seconds: float

    def solve(self, b):
        return self.lu.solve(b)


def factorize(system: PlateSystem) -> Factorization:
    """Sparse LU in symmetric mode with diagonal pivots; positive pivots certify SPD."""
    t0 = time.perf_counter()
    try:
        lu = spla.splu(system.K.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise AssemblyError(f"factorization failed: {exc}") from None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise AssemblyError("factorization needed off-diagonal pivoting; matrix is not SPD")
    piv = lu.U.diagonal()
    if np.any(piv <= 0):
        raise AssemblyError(f"indefinite stiffness: {np.count_nonzero(piv <= 0)} non-positive pivots")
    return Factorization(lu, "splu-symmetric", time.perf_counter() - t0)


@dataclass
class SolveReport:
    w: ScalarField
    energy: float
    energy_residual: float
    apriori_constant: float
    w_at_P0: float
    min_w_near_P0: float | None
    residual: float
    method: str
    iterations: int
    seconds: float
    sigma_bar: float | None = None
    extras: dict = field(default_factory=dict)


def solve_system(system: PlateSystem, b: np.ndarray, tol: float = 1e-10, method: str = "direct",
                 factor: Factorization | None = None) -> tuple[np.ndarray, dict]:
    t0 = time.perf_counter()
    if method == "direct":
        factor = factor or factorize(system)
        u = factor.solve(b)
        info = {"method": factor.method, "iterations": 0}
    elif method == "cg":
        d = system.K.diagonal()
        M = sp.diags(1.0 / d)
        iters = [0]

        def cb(_):
            iters[0] += 1

        u, flag = spla.cg(system.K, b, rtol=tol, atol=0.0, M=M, maxiter=20 * system.n, callback=cb)
        if flag != 0:
            raise SolverError(f"CG did not converge (flag {flag})")
        info = {"method": "cg-jacobi", "iterations": iters[0]}
    else:
        raise ValueError(f"unknown solver {method!r}")
    res = float(np.linalg.norm(system.K @ u - b) / max(np.linalg.norm(b), 1e-300))
    if res > max(tol, 1e-8) and method == "direct":
        raise SolverError(f"relative residual {res:.3g} above tolerance")
    info["residual"] = res
    info["seconds"] = time.perf_counter() - t0
    return u, info


def solve(problem: ForwardProblem, tol: float = 1e-10, method: str = "direct",
          system: PlateSystem | None = None, factor: Factorization | None = None,
          c0: float = 1.0) -> SolveReport:
    system = system or assemble(problem)
    b = point_load_rhs(problem, system)
    u, info = solve_system(system, b, tol, method, factor)
    w = system.to_field(u)
    dom = problem.domain
    i, j = problem.load_node
    wP0 = float(w.values[i, j])
    if wP0 <= 0:
        raise SolverError(f"w(P0) = {wP0:.3g} is not positive; refine the grid")
    energy = system.energy(u)
    work = problem.f * wP0 / dom.rho0**2
    sb = sigma_bar(problem.d, c0)
    near = disc_region(dom, dom.node_xy(i, j), 2 * sb * dom.rho0)
    return SolveReport(
        w=w, energy=energy, energy_residual=abs(energy - work) / energy,
        apriori_constant=norm_Hk(w, None, 2) / problem.f, w_at_P0=wP0,
        min_w_near_P0=float(w.values[near.mask].min()) if near.size else None,
        residual=info["residual"], method=info["method"], iterations=info["iterations"],
        seconds=info["seconds"], sigma_bar=sb)


# ---------------------------------------------------------------------------
# strong-form operator used by reconstruction and audits
# ---------------------------------------------------------------------------

def bending_moments(w_values: np.ndarray, P: PlateTensorField, h: float):
    """``M = P grad^2 w`` from central differences (``d12`` node-centred)."""
    w11 = raw_diff(w_values, (2, 0), h)
    w22 = raw_diff(w_values, (0, 2), h)
    w12 = raw_diff(w_values, (1, 1), h)
    p = dict(zip(COMPONENTS, P.p))
    M11 = p["C1111"] * w11 + p["C1122"] * w22 + 2 * p["C1112"] * w12
    M22 = p["C1122"] * w11 + p["C2222"] * w22 + 2 * p["C2212"] * w12
    M12 = p["C1112"] * w11 + p["C2212"] * w22 + 2 * p["C1212"] * w12
    return M11, M12, M22


def plate_operator(w: ScalarField, P: PlateTensorField) -> np.ndarray:
    """``div div (P grad^2 w)`` on every node where the reach-2 stencil is available (NaN elsewhere)."""
    h = w.domain.spacing
    M11, M12, M22 = bending_moments(w.values, P, h)
    return raw_diff(M11, (2, 0), h) + 2 * raw_diff(M12, (1, 1), h) + raw_diff(M22, (0, 2), h)


# ---------------------------------------------------------------------------
# near-load diagnostics
# ---------------------------------------------------------------------------

def sigma_bar(d: float, c0: float = 1.0, alpha: float = 0.5) -> float:
    """``min(d/4, (c0 d / 2)^(1/alpha) / 2)``."""
    if not (d > 0 and c0 > 0 and 0 < alpha <= 1):
        raise ValueError("sigma_bar needs d > 0, c0 > 0, 0 < alpha <= 1")
    return min(d / 4.0, 0.5 * (c0 * d / 2.0) ** (1.0 / alpha))


def positivity_audit(report: SolveReport, problem: ForwardProblem, sbar: float):
    """Return ``(min of w on B_{2 sbar rho0}(P0), min / (d^2 f))``."""
    dom = problem.domain
    center = dom.node_xy(*problem.load_node)
    disc = disc_region(dom, center, 2 * sbar * dom.rho0)
    if disc.is_empty():
        raise GeometryError("positivity disc contains no nodes")
    m = float(report.w.values[disc.mask].min())
    return m, m / (problem.d**2 * problem.f)


def annulus_energy_audit(report: SolveReport, problem: ForwardProblem, sigma: float) -> float:
    """``int_{B_2s \\ B_s} w^2 / (s^2 d^2 rho0^2 ||w||_{H^2}^2)`` with ``s = sigma rho0``."""
    dom = problem.domain
    if sigma * dom.rho0 < 2 * dom.spacing * (1 - 1e-12):
        raise GeometryError(f"annulus under-resolved: sigma*rho0 = {sigma * dom.rho0:.4g} < 2h")
    center = dom.node_xy(*problem.load_node)
    ann = annulus_region(dom, center, sigma * dom.rho0, 2 * sigma * dom.rho0)
    wv = report.w.values
    num = float(np.sum(wv[ann.mask] ** 2)) * dom.spacing**2
    h2 = norm_Hk(report.w, None, 2)
    return num / (sigma**2 * problem.d**2 * dom.rho0**2 * h2**2)
