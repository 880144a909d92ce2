"""JSON experiment configuration with field-level diagnostics.

A config is one JSON object; every block is optional and falls back to the
baseline setup (unit square, isotropic lambda = mu = 1, h = 0.1, point load
at the center, smooth Winkler coefficient).
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

DEFAULTS = {
    "domain": {"Lx": 1.0, "Ly": 1.0, "n": 65, "rho0": None, "origin": [0.0, 0.0], "holes": []},
    "material": {"kind": "isotropic", "lam": 1.0, "mu": 1.0, "h": 0.1},
    "forward": {
        "k": {"kind": "expr", "expr": "kbar*(1 + sin(pi*x)*sin(pi*y))/2"},
        "P0": [0.5, 0.5], "f": 1.0, "d": 0.4, "kbar": 1.0, "c0": 1.0,
        "solver": "direct", "tol": 1e-10,
    },
    "reconstruction": {"w_min_rel": 1e-3, "exclude_radius": None, "mollify_width": 0.0,
                       "noise": 0.0},
    "sweep": {"t": [], "direction": {"kind": "bump", "amplitude": -1.0}, "fit": True,
              "fit_range": None},
    "s": 0.25,
    "sigma": 0.1,
    "audits": {"proof": True, "lps": True, "ap": True, "frequency": True, "interpolation": True,
               "tau": 0.05, "c1": 4.0, "c2": 4.0, "p": 2.0, "max_nodes": 20000, "tol": 1e-6},
    "seed": 0,
    "workers": 1,
    "output": "winkler_out",
    "metadata": {},
}

KNOWN = {key: set(val) if isinstance(val, dict) and key != "metadata" else None
         for key, val in DEFAULTS.items()}


class ConfigError(ValueError):
    """Malformed configuration; ``str()`` names the field and, when known, the line."""

    def __init__(self, message: str, field_name: str | None = None, line: int | None = None):
        self.field_name, self.line = field_name, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name:
            where.append(f"field '{field_name}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass
class ExperimentConfig:
    domain: dict
    material: dict
    forward: dict
    reconstruction: dict
    sweep: dict
    s: float
    sigma: float
    audits: dict
    seed: int
    workers: int
    output: str
    metadata: dict
    ts: list[float] = field(default_factory=list)
    source: str = ""

    def to_dict(self) -> dict:
        return {key: copy.deepcopy(getattr(self, key)) for key in DEFAULTS}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("k", "direction"):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _line_of(text: str, path: str) -> int | None:
    """Best-effort line number of the last key in a dotted field path."""
    if not text:
        return None
    key = re.sub(r"\[\d+\]$", "", path.split(".")[-1])
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Checker:
    def __init__(self, text: str):
        self.text = text

    def fail(self, path: str, message: str):
        raise ConfigError(message, path, _line_of(self.text, path))

    def number(self, path, value, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
        ok_type = isinstance(value, int) if integer else isinstance(value, (int, float))
        if isinstance(value, bool) or not ok_type:
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {value!r}")
        if not math.isfinite(value):
            self.fail(path, "must be finite")
        if lo is not None and (value < lo or (lo_open and value == lo)):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
        if hi is not None and (value > hi or (hi_open and value == hi)):
            self.fail(path, f"must be {'<' if hi_open else '<='} {hi}, got {value}")
        return value

    def point(self, path, value):
        if not (isinstance(value, list) and len(value) == 2):
            self.fail(path, "expected [x, y]")
        for i, v in enumerate(value):
            self.number(f"{path}[{i}]", v)
        return value


def _sweep_values(chk: _Checker, spec) -> list[float]:
    if isinstance(spec, dict):
        for key in ("start", "stop", "num"):
            if key not in spec:
                chk.fail(f"sweep.t.{key}", "missing (log-spaced sweeps need start, stop, num)")
        start = chk.number("sweep.t.start", spec["start"], 0, lo_open=True)
        stop = chk.number("sweep.t.stop", spec["stop"], start, lo_open=True)
        num = chk.number("sweep.t.num", spec["num"], 1, integer=True)
        return [float(v) for v in np.logspace(math.log10(start), math.log10(stop), num)]
    if not isinstance(spec, list):
        chk.fail("sweep.t", "expected a list of amplitudes or {start, stop, num}")
    ts = [float(chk.number(f"sweep.t[{i}]", v, 0, lo_open=True)) for i, v in enumerate(spec)]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        chk.fail("sweep.t", "amplitudes must be strictly increasing")
    return ts


def validate(raw: dict, text: str = "") -> ExperimentConfig:
    chk = _Checker(text)
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", line=1)
    for key, val in raw.items():
        if key not in DEFAULTS:
            chk.fail(key, "unknown block")
        sub = KNOWN[key]
        if sub is not None:
            if not isinstance(val, dict):
                chk.fail(key, "expected an object")
            for k2 in val:
                if k2 not in sub:
                    chk.fail(f"{key}.{k2}", "unknown field")
    cfg = _merge(DEFAULTS, raw)

    dom = cfg["domain"]
    chk.number("domain.Lx", dom["Lx"], 0, lo_open=True)
    chk.number("domain.Ly", dom["Ly"], 0, lo_open=True)
    chk.number("domain.n", dom["n"], 9, integer=True)
    if dom["rho0"] is not None:
        chk.number("domain.rho0", dom["rho0"], 0, lo_open=True)
    chk.point("domain.origin", dom["origin"])
    if not isinstance(dom["holes"], list):
        chk.fail("domain.holes", "expected a list of {x0, y0, x1, y1}")
    for i, hole in enumerate(dom["holes"]):
        if not (isinstance(hole, dict) and set(hole) == {"x0", "y0", "x1", "y1"}):
            chk.fail(f"domain.holes[{i}]", "expected {x0, y0, x1, y1}")

    mat = cfg["material"]
    kind = mat.get("kind")
    chk.number("material.h", mat.get("h"), 0, lo_open=True)
    if kind == "isotropic":
        chk.number("material.lam", mat.get("lam"))
        chk.number("material.mu", mat.get("mu"), 0, lo_open=True)
    elif kind == "orthotropic":
        for comp in ("C1111", "C1122", "C1212", "C2222"):
            if comp not in mat:
                chk.fail(f"material.{comp}", "missing orthotropic component")
            chk.number(f"material.{comp}", mat[comp])
    elif kind == "general":
        comps = mat.get("components")
        if not isinstance(comps, dict) or not comps:
            chk.fail("material.components", "expected an object of component expressions")
    else:
        chk.fail("material.kind", f"expected isotropic, orthotropic or general, got {kind!r}")

    fw = cfg["forward"]
    chk.point("forward.P0", fw["P0"])
    chk.number("forward.f", fw["f"], 0, lo_open=True)
    chk.number("forward.d", fw["d"], 0, lo_open=True)
    chk.number("forward.kbar", fw["kbar"], 0, lo_open=True)
    chk.number("forward.c0", fw["c0"], 0, lo_open=True)
    chk.number("forward.tol", fw["tol"], 0, lo_open=True)
    if fw["solver"] not in ("direct", "cg"):
        chk.fail("forward.solver", f"expected 'direct' or 'cg', got {fw['solver']!r}")
    k = fw["k"]
    if not isinstance(k, dict) or k.get("kind") not in ("expr", "constant", "piecewise"):
        chk.fail("forward.k", "expected {kind: expr|constant|piecewise, ...}")
    if k["kind"] == "expr" and not isinstance(k.get("expr"), str):
        chk.fail("forward.k.expr", "expected an expression string")
    if k["kind"] == "constant":
        chk.number("forward.k.value", k.get("value"), 0)
    if k["kind"] == "piecewise":
        chk.number("forward.k.J", k.get("J"), 1, integer=True)

    rc = cfg["reconstruction"]
    chk.number("reconstruction.w_min_rel", rc["w_min_rel"], 0)
    chk.number("reconstruction.mollify_width", rc["mollify_width"], 0)
    chk.number("reconstruction.noise", rc["noise"], 0)
    if rc["exclude_radius"] is not None:
        chk.number("reconstruction.exclude_radius", rc["exclude_radius"], 0, lo_open=True)

    sw = cfg["sweep"]
    ts = _sweep_values(chk, sw["t"])
    direction = sw["direction"]
    if not isinstance(direction, dict) or direction.get("kind") not in (
            "bump", "random_smooth", "piecewise", "expr"):
        chk.fail("sweep.direction", "expected {kind: bump|random_smooth|piecewise|expr, ...}")
    if direction["kind"] == "expr" and not isinstance(direction.get("expr"), str):
        chk.fail("sweep.direction.expr", "expected an expression string")
    if ts and sw["fit"]:
        if len(ts) < 5:
            chk.fail("sweep.t", f"a fit needs at least 5 amplitudes, got {len(ts)}")
        if math.log10(ts[-1] / ts[0]) < 2 - 1e-9:
            chk.fail("sweep.t", "amplitudes must span at least 2 decades for a fit")
    if sw["fit_range"] is not None:
        fr = sw["fit_range"]
        if not (isinstance(fr, list) and len(fr) == 2):
            chk.fail("sweep.fit_range", "expected [eps_lo, eps_hi]")
        lo = chk.number("sweep.fit_range[0]", fr[0], 0, lo_open=True)
        chk.number("sweep.fit_range[1]", fr[1], lo, lo_open=True)

    chk.number("s", cfg["s"], 0, 1, lo_open=True, hi_open=True)
    chk.number("sigma", cfg["sigma"], 0, lo_open=True)
    au = cfg["audits"]
    for key in ("proof", "lps", "ap", "frequency", "interpolation"):
        if not isinstance(au[key], bool):
            chk.fail(f"audits.{key}", "expected true or false")
    chk.number("audits.tau", au["tau"], 0, lo_open=True)
    chk.number("audits.c1", au["c1"], 1)
    chk.number("audits.c2", au["c2"], 1)
    chk.number("audits.p", au["p"], 1, lo_open=True)
    chk.number("audits.tol", au["tol"], 0)
    if au["max_nodes"] is not None:
        chk.number("audits.max_nodes", au["max_nodes"], 1, integer=True)
    chk.number("seed", cfg["seed"], 0, integer=True)
    chk.number("workers", cfg["workers"], 1, integer=True)
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        chk.fail("output", "expected a directory path")
    if not isinstance(cfg["metadata"], dict):
        chk.fail("metadata", "expected an object")
    return ExperimentConfig(**{key: cfg[key] for key in DEFAULTS}, ts=ts, source=text)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    return validate(raw, text)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def with_overrides(cfg: ExperimentConfig, seed=None, workers=None, out=None,
                   resolution=None) -> ExperimentConfig:
    raw = cfg.to_dict()
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    if out is not None:
        raw["output"] = str(out)
    if resolution is not None:
        raw["domain"]["n"] = resolution
    raw["sweep"]["t"] = cfg.ts
    return validate(raw, cfg.source)
