"""Build the objects described by a config, run a command and write its artifacts.

Artifacts in the output directory:

- ``records.csv``: one row per sweep amplitude, columns ``RECORD_COLUMNS``.
- ``loglog.csv``: ``log10(epsilon), log10(delta)`` and the fitted line.
- ``summary.json``: resolved config, a priori data, fit, audit tables.
- ``fields/*.csv``: node fields as ``x, y, value``.

Nothing time-dependent is written, so equal configs give equal bytes.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..expr import compile_expr
from ..fields import ScalarField
from ..forward import ForwardProblem, positivity_audit, sigma_bar
from ..grid import build_rectangle
from ..inverse import ReconstructionConfig, measure, reconstruct
from ..kernels import BACKEND
from ..material import (make_general, make_isotropic, make_orthotropic, plate_tensor,
                        regularity_bounds, structural_condition)
from . import audits as au
from .coefficients import direction_field, piecewise_k
from .config import ExperimentConfig
from .sweep import AuditOptions, Baseline, FitError, baseline_solve, fit_holder, stability_sweep

log = logging.getLogger(__name__)

RECORD_COLUMNS = ("t", "epsilon", "delta", "I1", "I2", "residual_102", "lps_min", "ap_max",
                  "freq_ratio", "interp_ratio")

# independent random streams derived from the config seed
STREAM_K, STREAM_DIRECTION, STREAM_NOISE = 1, 2, 3


def _stream(cfg: ExperimentConfig, tag: int):
    return [int(cfg.seed), tag]


def build_domain(cfg: ExperimentConfig):
    d = cfg.domain
    return build_rectangle(d["Lx"], d["Ly"], d["n"], d["rho0"], d["holes"], tuple(d["origin"]),
                           cfg.metadata.get("M0"), cfg.metadata.get("M1"))


def build_material(cfg: ExperimentConfig, domain):
    m = cfg.material
    if m["kind"] == "isotropic":
        return make_isotropic(m["lam"], m["mu"], m["h"], domain)
    if m["kind"] == "orthotropic":
        return make_orthotropic(m["C1111"], m["C1122"], m["C1212"], m["C2222"], m["h"], domain)
    return make_general(m["components"], m["h"], domain)


def build_k(cfg: ExperimentConfig, domain):
    """Winkler coefficient ``k1`` and optional partition metadata."""
    spec, kbar = cfg.forward["k"], cfg.forward["kbar"]
    if spec["kind"] == "constant":
        return ScalarField.constant(domain, spec["value"], "rho0^-4", "k1"), None
    if spec["kind"] == "piecewise":
        k, part = piecewise_k(domain, spec["J"], spec.get("levels"), _stream(cfg, STREAM_K), kbar,
                              spec.get("perimeter_bound"))
        return k.copy(label="k1"), part
    fn = compile_expr(spec["expr"], {"kbar": kbar, "rho0": domain.rho0})
    return ScalarField.from_function(domain, fn, "rho0^-4", "k1"), None


def build_problem(cfg: ExperimentConfig):
    domain = build_domain(cfg)
    C = build_material(cfg, domain)
    k1, part = build_k(cfg, domain)
    fw = cfg.forward
    problem = ForwardProblem(domain, plate_tensor(C), k1, tuple(fw["P0"]), fw["f"], fw["d"], fw["kbar"])
    return problem, C, part


def audit_options(cfg: ExperimentConfig) -> AuditOptions:
    a = cfg.audits
    return AuditOptions(a["proof"], a["lps"], a["ap"], a["frequency"], a["interpolation"],
                        a["tau"], a["c1"], a["c2"], a["p"], a["max_nodes"], a["tol"])


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt(v) -> str:
    return repr(float(v))


def write_records(path: Path, records):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(RECORD_COLUMNS)
        for r in records:
            out.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])


def write_loglog(path: Path, records, fit):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["log10_epsilon", "log10_delta", "in_fit", "fit_log10_delta"])
        for r in records:
            if not (r.ok and r.epsilon > 0 and r.delta > 0):
                continue
            le, ld = math.log10(r.epsilon), math.log10(r.delta)
            inside = fit is not None and fit.fit_range[0] * (1 - 1e-12) <= r.epsilon <= fit.fit_range[1] * (1 + 1e-12)
            line = (fit.beta * le + fit.logC / math.log(10)) if fit is not None else math.nan
            out.writerow([_fmt(le), _fmt(ld), int(inside), _fmt(line)])


def write_summary(path: Path, summary: dict):
    with open(path, "w") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# report pieces
# ---------------------------------------------------------------------------

def apriori_data(cfg: ExperimentConfig, problem: ForwardProblem, C) -> dict:
    rb = regularity_bounds(C, cfg.s)
    sc = structural_condition(C)
    return {
        "h": C.h, "d": problem.d, "kbar": problem.kbar, "s": cfg.s, "sigma": cfg.sigma,
        "rho0": problem.domain.rho0, "M0": cfg.metadata.get("M0"), "M1": cfg.metadata.get("M1"),
        "xi0": C.xi0, "xi1": C.xi1, "M2_estimate": rb.M2_est, "M3_estimate": rb.M3_est,
        "regularity_norm": rb.norm,
        "structural": {"max_D_over_a0_6": sc.max_normalized, "tol": sc.tol, "passed": sc.passed},
    }


def baseline_summary(base: Baseline, c0: float) -> dict:
    rep, pb = base.report, base.problem
    sb = sigma_bar(pb.d, c0)
    wmin, c_lower = positivity_audit(rep, pb, sb)
    return {
        "energy": rep.energy, "energy_residual": rep.energy_residual, "w_at_P0": rep.w_at_P0,
        "apriori_constant": rep.apriori_constant, "solver_residual": rep.residual,
        "method": rep.method, "iterations": rep.iterations, "sigma_bar": sb,
        "min_w_near_P0": wmin, "c_lower": c_lower,
        "unknowns": base.system.n, "spacing": pb.domain.spacing,
    }


def baseline_audits(cfg: ExperimentConfig, base: Baseline) -> dict:
    """Audit tables on the baseline deflection (one table per enabled audit)."""
    opts = audit_options(cfg)
    pb, w = base.problem, base.report.w
    dom = pb.domain
    sb = sigma_bar(pb.d, cfg.forward["c0"])
    U = au.load_complement(dom, pb.P0, sb * dom.rho0)
    out = {"inputs": {"tau": opts.tau, "c1": opts.c1, "c2": opts.c2, "p": opts.p,
                      "U": f"Omega minus B(P0, {sb * dom.rho0:g})"}}

    def table(samples):
        rows = []
        for n, (i, j) in enumerate(samples.centers):
            x, y = dom.node_xy(i, j)
            row = {"x": x, "y": y, "value": float(samples.values[n])}
            if samples.excluded.size:
                row["excluded_zero_nodes"] = int(samples.excluded[n])
            rows.append(row)
        return rows

    if opts.lps:
        s = au.lps_audit(w, U, opts.tau, opts.c1)
        out["lps"] = {"min": float(s.values.min()), "passed": bool(s.values.min() > 0),
                      "samples": table(s)}
    if opts.ap:
        s = au.ap_audit(w, U, opts.tau, opts.p, opts.c2)
        finite = np.isfinite(s.values)
        out["ap"] = {"max": float(np.max(s.values[finite])) if finite.any() else None,
                     "all_zero_discs": int((~finite).sum()),
                     "excluded_zero_nodes": int(s.excluded.sum()), "samples": table(s)}
    if opts.frequency:
        F = au.frequency_ratio(w, U, opts.max_nodes)
        out["frequency"] = {"ratio": F, "bound_shape_1_over_sigma_bar_d": 1.0 / (sb * pb.d)}
    if opts.interpolation:
        ia = au.interpolation_audit(w, cfg.sigma, cfg.s, opts.max_nodes)
        out["interpolation"] = asdict(ia)
    return out


def _write_fields(outdir: Path, fields: dict):
    fdir = outdir / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    for name, f in fields.items():
        f.to_csv(fdir / f"{name}.csv")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _setup(cfg: ExperimentConfig):
    problem, C, part = build_problem(cfg)
    fw = cfg.forward
    base = baseline_solve(problem, fw["tol"], fw["solver"], fw["c0"])
    summary = {"config": cfg.to_dict(), "backend": BACKEND,
               "apriori": apriori_data(cfg, problem, C),
               "baseline": baseline_summary(base, fw["c0"])}
    if part is not None:
        summary["partition"] = {"pieces": [asdict(p) for p in part.pieces],
                                "perimeter_bound": part.perimeter_bound}
    return problem, C, base, summary


def command_solve(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem, _, base, summary = _setup(cfg)
    summary["command"] = "solve"
    _write_fields(out, {"w": base.report.w, "k": problem.k})
    write_summary(out / "summary.json", summary)
    return summary


def command_audit(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem, _, base, summary = _setup(cfg)
    summary["command"] = "audit"
    summary["audits"] = baseline_audits(cfg, base)
    _write_fields(out, {"w": base.report.w, "k": problem.k})
    write_summary(out / "summary.json", summary)
    return summary


def command_reconstruct(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem, _, base, summary = _setup(cfg)
    rc = cfg.reconstruction
    meas = measure(base.report.w, rc["noise"], _stream(cfg, STREAM_NOISE), "forward solve")
    rcfg = ReconstructionConfig(rc["w_min_rel"], rc["exclude_radius"], rc["mollify_width"], cfg.sigma)
    res = reconstruct(meas, problem.P, problem.P0, problem.f, rcfg, problem.d, problem.k)
    summary["command"] = "reconstruct"
    summary["reconstruction"] = {"w_min": res.w_min, "exclude_radius": res.exclude_radius,
                                 "noise": rc["noise"], **res.metrics}
    _write_fields(out, {"w_obs": meas.w_obs, "k_true": problem.k, "k_hat": res.k_hat})
    write_summary(out / "summary.json", summary)
    return summary


def command_run(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem, _, base, summary = _setup(cfg)
    summary["command"] = "run"
    summary["audits"] = baseline_audits(cfg, base)
    records, fit = [], None
    if cfg.ts:
        dk = direction_field(problem.domain, cfg.sweep["direction"], _stream(cfg, STREAM_DIRECTION),
                             problem.kbar)
        records = stability_sweep(base, dk, cfg.ts, cfg.sigma, cfg.s, audit_options(cfg),
                                  cfg.workers, cfg.forward["tol"], cfg.forward["solver"])
        summary["sweep"] = {
            "failures": [{"t": r.t, "error": r.error} for r in records if not r.ok],
            "proof_inequality_holds": all(r.proof_holds for r in records
                                          if r.ok and r.proof_holds is not None),
            "clipped_nodes": [r.clipped_nodes for r in records],
        }
        if cfg.sweep["fit"]:
            try:
                fit = fit_holder(records, cfg.sweep["fit_range"], s=cfg.s, p=cfg.audits["p"])
                summary["fit"] = asdict(fit)
                summary["fit"]["note"] = ("beta is the empirical slope of log delta against log epsilon; "
                                          "shape_exponent = s/(p(4+s)) is shown for comparison only")
            except FitError as exc:
                summary["fit"] = {"error": str(exc)}
        _write_fields(out, {"dk": dk})
    write_records(out / "records.csv", records)
    write_loglog(out / "loglog.csv", records, fit)
    _write_fields(out, {"w1": base.report.w, "k1": problem.k})
    write_summary(out / "summary.json", summary)
    return summary


COMMANDS = {"run": command_run, "solve": command_solve, "audit": command_audit,
            "reconstruct": command_reconstruct}
