"""Perturbation sweeps ``k2 = k1 + t dk`` and the power-law fit of delta against epsilon."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..fields import ScalarField
from ..forward import (ForwardProblem, PlateSystem, SolveReport, assemble, factorize, sigma_bar,
                       solve, with_coefficient)
from ..inverse import coefficient_error, discrepancy
from . import audits as au

log = logging.getLogger(__name__)


@dataclass
class AuditOptions:
    proof: bool = True
    lps: bool = True
    ap: bool = True
    frequency: bool = True
    interpolation: bool = True
    tau: float = 0.05
    c1: float = 4.0
    c2: float = 4.0
    p: float = 2.0
    max_nodes: int | None = 20000
    tol: float = 1e-6


@dataclass
class StabilityRecord:
    t: float
    epsilon: float = math.nan
    delta: float = math.nan
    solver_residual: float = math.nan
    clipped_nodes: int = 0
    I1: float = math.nan
    I2: float = math.nan
    lhs: float = math.nan
    residual_102: float = math.nan
    proof_holds: bool | None = None
    lps_min: float = math.nan
    ap_max: float = math.nan
    ap_excluded: int = 0
    freq_ratio: float = math.nan
    interp_ratio: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def perturbed_k(k1: ScalarField, dk: ScalarField, t: float, kbar: float) -> tuple[ScalarField, int]:
    """``clip(k1 + t dk, 0, kbar / rho0^4)`` and the number of clipped nodes."""
    kmax = kbar / k1.domain.rho0**4
    raw = k1.values + t * dk.values
    act = k1.domain.active
    clipped = int(np.count_nonzero(act & ((raw < 0) | (raw > kmax))))
    return k1.copy(np.clip(raw, 0.0, kmax), label=f"k2(t={t:g})"), clipped


def run_audits(rec: StabilityRecord, problem: ForwardProblem, w1, w2, k1, k2, sigma: float,
               s: float, opts: AuditOptions, U=None):
    """Attach audit scalars to ``rec``: proof terms and interpolation on ``w1 - w2``,
    unique-continuation audits on ``w2`` in ``U = Omega \\ B_{sbar rho0}(P0)``."""
    if opts.proof:
        pa = au.proof_audit(w1, w2, k1, k2, problem.P, sigma, opts.tol)
        rec.I1, rec.I2, rec.lhs = pa.I1, pa.I2, pa.lhs
        rec.residual_102, rec.proof_holds = pa.residual_ratio, pa.holds
    if U is None and (opts.lps or opts.ap or opts.frequency):
        U = au.load_complement(problem.domain, problem.P0, sigma_bar(problem.d) * problem.domain.rho0)
    if opts.lps:
        rec.lps_min = float(np.min(au.lps_audit(w2, U, opts.tau, opts.c1).values))
    if opts.ap:
        ap = au.ap_audit(w2, U, opts.tau, opts.p, opts.c2)
        rec.ap_max = float(np.nanmax(ap.values)) if np.isfinite(ap.values).any() else math.nan
        rec.ap_excluded = int(ap.excluded.sum())
    if opts.frequency:
        rec.freq_ratio = au.frequency_ratio(w2, U, opts.max_nodes)
    if opts.interpolation:
        rec.interp_ratio = au.interpolation_audit(w1 - w2, sigma, s, opts.max_nodes).ratio


@dataclass
class Baseline:
    problem: ForwardProblem
    system: PlateSystem
    report: SolveReport


def baseline_solve(problem: ForwardProblem, tol: float = 1e-10, method: str = "direct",
                   c0: float = 1.0) -> Baseline:
    system = assemble(problem)
    return Baseline(problem, system, solve(problem, tol, method, system, c0=c0))


def sweep_point(base: Baseline, dk: ScalarField, t: float, sigma: float, s: float,
                opts: AuditOptions | None, tol: float = 1e-10, method: str = "direct") -> StabilityRecord:
    """One record; failures are stored on the record instead of raised."""
    rec = StabilityRecord(t=float(t))
    pb = base.problem
    try:
        kbar = pb.kbar if pb.kbar is not None else float(np.nanmax(pb.k.values)) * pb.domain.rho0**4
        k2, rec.clipped_nodes = perturbed_k(pb.k, dk, t, kbar)
        p2 = pb.with_k(k2)
        sys2 = with_coefficient(base.system, k2)
        factor = factorize(sys2) if method == "direct" else None
        r2 = solve(p2, tol, method, sys2, factor)
        rec.solver_residual = r2.residual
        rec.epsilon = discrepancy(base.report.w, r2.w, pb.f)
        rec.delta = coefficient_error(pb.k, k2, sigma)
        if opts is not None:
            run_audits(rec, pb, base.report.w, r2.w, pb.k, k2, sigma, s, opts)
    except Exception as exc:  # soft failure: keep the sweep going
        log.warning("sweep point t=%g failed: %s", t, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def stability_sweep(base: Baseline, dk: ScalarField, ts, sigma: float = 0.1, s: float = 0.25,
                    opts: AuditOptions | None = None, workers: int = 1, tol: float = 1e-10,
                    method: str = "direct") -> list[StabilityRecord]:
    """Records for every ``t``, ordered by ``t`` regardless of ``workers``."""
    ts = sorted(float(t) for t in ts)

    def job(t):
        return sweep_point(base, dk, t, sigma, s, opts, tol, method)

    if workers <= 1:
        return [job(t) for t in ts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, ts))


# ---------------------------------------------------------------------------
# power-law fit
# ---------------------------------------------------------------------------

class FitError(ValueError):
    pass


@dataclass
class HolderFit:
    beta: float
    logC: float
    r2: float
    fit_range: tuple[float, float]
    n_used: int
    monotone: bool
    shape_exponent: float | None = None  # s / (p (4 + s)) for the supplied p
    notes: list[str] = field(default_factory=list)


def middle_range(eps: np.ndarray, frac: float = 0.6) -> tuple[float, float]:
    """Epsilon interval covering the middle ``frac`` of the log-decades spanned."""
    lo, hi = np.log10(eps.min()), np.log10(eps.max())
    cut = 0.5 * (1 - frac) * (hi - lo)
    return 10 ** (lo + cut), 10 ** (hi - cut)


def fit_holder(records, fit_range=None, min_records: int = 5, s: float | None = None,
               p: float | None = None) -> HolderFit:
    """Least squares of ``log delta`` on ``log epsilon``; the slope is ``beta``.

    Without ``fit_range`` the middle 60% of the epsilon decades is used.
    """
    pts = [(r.epsilon, r.delta) for r in records
           if r.ok and np.isfinite(r.epsilon) and np.isfinite(r.delta) and r.epsilon > 0 and r.delta > 0]
    if len(pts) < min_records:
        raise FitError(f"need at least {min_records} records with epsilon, delta > 0, got {len(pts)}")
    eps, dl = np.array(pts).T
    order = np.argsort(eps, kind="stable")
    eps, dl = eps[order], dl[order]
    if np.log10(eps.max() / eps.min()) < 1.0:
        raise FitError(f"epsilon spans only {np.log10(eps.max() / eps.min()):.2f} decades (need >= 1)")
    lo, hi = (float(v) for v in fit_range) if fit_range is not None else middle_range(eps)
    sel = (eps >= lo * (1 - 1e-12)) & (eps <= hi * (1 + 1e-12))
    if sel.sum() < min_records:
        raise FitError(f"only {int(sel.sum())} records inside the fit range [{lo:.3g}, {hi:.3g}]")
    x, y = np.log(eps[sel]), np.log(dl[sel])
    A = np.column_stack([x, np.ones_like(x)])
    (beta, logC), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (beta * x + logC)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
    shape = s / (p * (4 + s)) if s is not None and p is not None else None
    mono = bool(np.all(np.diff(dl) > 0))
    return HolderFit(float(beta), float(logC), r2, (float(lo), float(hi)), int(sel.sum()), mono, shape)
