import json
import math

import numpy as np
import pytest
from conftest import baseline

from winkler_lab.experiments import audits as au
from winkler_lab.experiments.cli import main
from winkler_lab.experiments.coefficients import (PartitionError, direction_field, guillotine,
                                                  piecewise_from_rectangles, piecewise_k)
from winkler_lab.experiments.config import ConfigError, parse_config, with_overrides
from winkler_lab.experiments.sweep import (AuditOptions, Baseline, FitError, StabilityRecord,
                                           fit_holder, perturbed_k, stability_sweep)
from winkler_lab.fields import ScalarField, bv_embedding_check, total_variation
from winkler_lab.forward import sigma_bar
from winkler_lab.grid import build_rectangle, disc_region


def base_at(n, f=1.0):
    pb, system, rep = baseline(n, f=f)
    return Baseline(pb, system, rep)


def U_for(pb):
    return au.load_complement(pb.domain, pb.P0, sigma_bar(pb.d) * pb.domain.rho0)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def test_single_piece_is_constant():
    dom = build_rectangle(1.0, 1.0, 17)
    k, part = piecewise_k(dom, 1, levels=[0.7])
    assert np.all(k.values == 0.7)
    assert part.pieces[0].perimeter == pytest.approx(4.0)
    assert total_variation(k) == 0.0


def test_quadrant_total_variation_by_hand():
    dom = build_rectangle(1.0, 1.0, 17)
    rects = [(0, 0, 8, 8), (8, 0, 16, 8), (0, 8, 8, 16), (8, 8, 16, 16)]
    k = piecewise_from_rectangles(dom, rects, [0.0, 1.0, 1.0, 2.0])
    # four half-cuts of length 1/2, each with jump 1, plus nothing on the boundary
    assert total_variation(k) == pytest.approx(4 * 0.5 * 1.0 + 0 * 1.0, rel=1e-12)


def test_rectangles_must_tile_exactly():
    dom = build_rectangle(1.0, 1.0, 9)
    with pytest.raises(PartitionError):
        piecewise_from_rectangles(dom, [(0, 0, 4, 8)], [1.0])
    with pytest.raises(PartitionError):
        piecewise_from_rectangles(dom, [(0, 0, 8, 8), (0, 0, 4, 4)], [1.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_guillotine_tiles_with_J_pieces(seed):
    rects = guillotine(33, 33, 10, np.random.default_rng(seed))
    assert len(rects) == 10
    area = sum((r[2] - r[0]) * (r[3] - r[1]) for r in rects)
    assert area == 32 * 32


def test_seeded_partition_finite_bv_bound():
    dom = build_rectangle(1.0, 1.0, 33)
    k, part = piecewise_k(dom, 10, seed=3)
    k2, _ = piecewise_k(dom, 10, seed=3)
    assert np.array_equal(k.values, k2.values)
    lhs, rhs, ratio = bv_embedding_check(k, 0.25, max_nodes=None)
    assert all(math.isfinite(v) and v > 0 for v in (lhs, rhs, ratio))
    assert np.all((k.values >= 0.1) & (k.values <= 1.0))


def test_infeasible_perimeter_bound():
    dom = build_rectangle(1.0, 1.0, 17)
    with pytest.raises(PartitionError, match="infeasible"):
        piecewise_k(dom, 2, seed=0, perimeter_bound=0.5, max_attempts=5)


def test_perimeter_bound_respected():
    dom = build_rectangle(1.0, 1.0, 33)
    _, part = piecewise_k(dom, 6, seed=1, perimeter_bound=3.0)
    assert part.max_perimeter <= 3.0 + 1e-12


def test_bad_levels_rejected():
    dom = build_rectangle(1.0, 1.0, 17)
    with pytest.raises(PartitionError):
        piecewise_k(dom, 2, levels=[0.5])
    with pytest.raises(PartitionError):
        piecewise_k(dom, 2, levels=[0.5, 2.0])


@pytest.mark.parametrize("spec", [
    {"kind": "bump", "amplitude": -1.0},
    {"kind": "random_smooth", "amplitude": 0.5},
    {"kind": "piecewise", "J": 4},
    {"kind": "expr", "expr": "kbar*x*y"},
])
def test_direction_kinds(spec):
    dom = build_rectangle(1.0, 1.0, 17)
    dk = direction_field(dom, spec, seed=2, kbar=2.0)
    assert np.all(np.isfinite(dk.values[dom.active]))
    assert np.max(np.abs(dk.values)) <= 2.0 * abs(spec.get("amplitude", 1.0)) + 1e-12
    assert np.array_equal(dk.values, direction_field(dom, spec, seed=2, kbar=2.0).values)


def test_unknown_direction_kind():
    with pytest.raises(ValueError):
        direction_field(build_rectangle(1.0, 1.0, 9), {"kind": "spiral"})


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

def test_proof_audit_trivial_when_coefficients_agree():
    pb, _, rep = baseline(33)
    pa = au.proof_audit(rep.w, rep.w, pb.k, pb.k, pb.P, 0.1)
    assert pa.lhs == 0 and pa.I1 == 0 and pa.I2 == 0 and pa.holds
    assert pa.residual_ratio == 0.0


def test_lps_constant_field_is_node_count_ratio():
    pb, _, _ = baseline(65)
    dom = pb.domain
    U = U_for(pb)
    w = ScalarField.constant(dom, 3.0)
    s = au.lps_audit(w, U, 0.05, 4)
    for x, v in zip(s.centers, s.values):
        disc = disc_region(dom, dom.node_xy(*x), 0.05 * dom.rho0).mask
        assert v == pytest.approx(disc.sum() / U.mask.sum(), rel=1e-12)


def test_lps_disc_holding_all_mass_gives_one():
    pb, _, _ = baseline(65)
    dom = pb.domain
    U = U_for(pb)
    s0 = au.lps_audit(ScalarField.constant(dom, 1.0), U, 0.05, 4)
    x = s0.centers[0]
    w = ScalarField(dom, disc_region(dom, dom.node_xy(*x), 0.05 * dom.rho0).mask.astype(float))
    s = au.lps_audit(w, U, 0.05, 4)
    assert s.values[0] == pytest.approx(1.0, rel=1e-14)
    assert np.all(s.values <= 1.0 + 1e-14)


def test_lps_smooth_positive_field_cross_check():
    pb, _, rep = baseline(65)
    U = U_for(pb)
    s = au.lps_audit(rep.w, U, 0.05, 4)
    dom = pb.domain
    total = np.sum(rep.w.values[U.mask] ** 2)
    x = s.centers[len(s.centers) // 2]
    disc = disc_region(dom, dom.node_xy(*x), 0.05 * dom.rho0).mask
    assert s.values[len(s.centers) // 2] == pytest.approx(np.sum(rep.w.values[disc] ** 2) / total)
    assert np.all(s.values > 0)


def test_sampling_needs_three_steps():
    pb, _, _ = baseline(33)
    with pytest.raises(Exception, match="3 lattice steps"):
        au.sample_centers(U_for(pb), 0.05, 4)


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_ap_constant_field_is_one(p):
    pb, _, _ = baseline(65)
    s = au.ap_audit(ScalarField.constant(pb.domain, -2.0), U_for(pb), 0.05, p)
    assert np.allclose(s.values, 1.0, rtol=1e-13)
    assert s.excluded.sum() == 0


def test_ap_zero_disc_is_nan_and_counted():
    pb, _, _ = baseline(65)
    s = au.ap_audit(ScalarField.constant(pb.domain, 0.0), U_for(pb), 0.05)
    assert np.all(np.isnan(s.values))
    assert np.all(s.excluded > 0)


def test_ap_rejects_p_at_most_one():
    pb, _, rep = baseline(65)
    with pytest.raises(ValueError):
        au.ap_audit(rep.w, U_for(pb), 0.05, p=1.0)


def test_frequency_constant_is_one():
    pb, _, _ = baseline(33)
    assert au.frequency_ratio(ScalarField.constant(pb.domain, 5.0), U_for(pb)) == pytest.approx(1.0)


def test_frequency_grows_with_oscillation():
    pb, _, _ = baseline(33)
    U = U_for(pb)
    vals = [au.frequency_ratio(ScalarField.from_function(pb.domain, lambda x, y, m=m: np.sin(m * np.pi * x)
                                                         * np.sin(np.pi * y) + 2), U, None)
            for m in (1, 2, 4, 8)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_frequency_subsampled_matches_full():
    pb, _, rep = baseline(33)
    U = U_for(pb)
    full = au.frequency_ratio(rep.w, U, None)
    sub = au.frequency_ratio(rep.w, U, max_nodes=200)
    assert sub == pytest.approx(full, rel=0.05)


def test_interpolation_zero_field_flagged():
    pb, _, _ = baseline(33)
    ia = au.interpolation_audit(ScalarField.constant(pb.domain, 0.0), 0.1, 0.25)
    assert ia.ratio == 0.0 and ia.degenerate


def test_interpolation_baseline_finite():
    _, _, rep = baseline(65)
    ia = au.interpolation_audit(rep.w, 0.1, 0.25)
    assert math.isfinite(ia.ratio) and ia.ratio > 0 and not ia.degenerate


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_audits_homogeneous_of_degree_zero(c):
    pb, _, rep = baseline(65)
    U = U_for(pb)
    w, cw = rep.w, rep.w * c
    pairs = [
        (au.lps_audit(w, U, 0.05).values, au.lps_audit(cw, U, 0.05).values),
        (au.ap_audit(w, U, 0.05).values, au.ap_audit(cw, U, 0.05).values),
        (au.frequency_ratio(w, U), au.frequency_ratio(cw, U)),
        (au.interpolation_audit(w, 0.1, 0.25).ratio, au.interpolation_audit(cw, 0.1, 0.25).ratio),
    ]
    for a, b in pairs:
        assert np.allclose(a, b, rtol=1e-10, atol=0)


# ---------------------------------------------------------------------------
# sweep and fit
# ---------------------------------------------------------------------------

def test_perturbed_k_clips_and_counts():
    dom = build_rectangle(1.0, 1.0, 9)
    k1 = ScalarField.constant(dom, 0.5)
    dk = ScalarField.constant(dom, 1.0)
    k2, clipped = perturbed_k(k1, dk, 1.0, 1.0)
    assert np.all(k2.values == 1.0)
    assert clipped == dom.active.sum()
    k3, c3 = perturbed_k(k1, dk, 0.1, 1.0)
    assert c3 == 0 and np.allclose(k3.values, 0.6)


def test_zero_amplitude_gives_zero_discrepancy():
    base = base_at(33)
    dk = direction_field(base.problem.domain, {"kind": "bump", "amplitude": -1.0})
    (rec,) = stability_sweep(base, dk, [0.0], opts=None)
    assert rec.ok
    assert rec.delta == 0.0
    assert rec.epsilon < 1e-12


def test_epsilon_strictly_increasing_in_t():
    base = base_at(33)
    dk = direction_field(base.problem.domain, {"kind": "bump", "amplitude": -1.0})
    recs = stability_sweep(base, dk, np.logspace(-3, -1, 5), opts=None)
    eps = [r.epsilon for r in recs]
    assert all(b > a for a, b in zip(eps, eps[1:]))


def test_sweep_order_independent_of_workers():
    base = base_at(33)
    dk = direction_field(base.problem.domain, {"kind": "bump", "amplitude": -1.0})
    ts = [0.1, 0.001, 0.01]
    a = stability_sweep(base, dk, ts, opts=AuditOptions(lps=False, ap=False, frequency=False))
    b = stability_sweep(base, dk, ts, opts=AuditOptions(lps=False, ap=False, frequency=False), workers=3)
    assert [r.t for r in a] == sorted(ts)
    for ra, rb in zip(a, b):
        assert ra == rb


def test_load_scaling_leaves_epsilon_and_delta_unchanged():
    dk = direction_field(build_rectangle(1.0, 1.0, 33), {"kind": "bump", "amplitude": -1.0})
    r1 = stability_sweep(base_at(33, 1.0), dk, [0.05], opts=None)[0]
    r2 = stability_sweep(base_at(33, 2.0), dk, [0.05], opts=None)[0]
    assert r2.epsilon == pytest.approx(r1.epsilon, rel=1e-9)
    assert r2.delta == r1.delta


def test_soft_failure_is_recorded():
    base = base_at(33)
    bad = ScalarField(base.problem.domain, np.full(base.problem.domain.shape, np.nan))
    (rec,) = stability_sweep(base, bad, [0.1], opts=AuditOptions())
    assert not rec.ok and rec.error


def synthetic(eps, power, C=1.0):
    return [StabilityRecord(t=e, epsilon=e, delta=C * e**power) for e in eps]


@pytest.mark.parametrize("power", [1.0, 0.5, 0.3])
def test_fit_recovers_exact_power(power):
    fit = fit_holder(synthetic(np.logspace(-6, -1, 13), power, 3.0), s=0.25, p=2)
    assert fit.beta == pytest.approx(power, abs=1e-12)
    assert fit.logC == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.monotone
    assert fit.shape_exponent == pytest.approx(0.25 / (2 * 4.25))


def test_fit_uses_middle_decades():
    fit = fit_holder(synthetic(np.logspace(-5, 0, 11), 1.0))
    assert fit.fit_range[0] == pytest.approx(10**-4)
    assert fit.fit_range[1] == pytest.approx(10**-1)
    assert fit.n_used == 7


def test_fit_refuses_narrow_spread():
    with pytest.raises(FitError, match="decades"):
        fit_holder(synthetic(np.linspace(1e-3, 5e-3, 8), 1.0))


def test_fit_refuses_few_records():
    with pytest.raises(FitError, match="at least 5"):
        fit_holder(synthetic(np.logspace(-4, -1, 4), 1.0))


def test_fit_skips_failed_records():
    recs = synthetic(np.logspace(-4, 0, 9), 1.0) + [StabilityRecord(t=1.0, error="boom")]
    assert fit_holder(recs, fit_range=(1e-5, 10)).n_used == 9


# ---------------------------------------------------------------------------
# config and CLI
# ---------------------------------------------------------------------------

def test_config_defaults():
    cfg = parse_config("{}")
    assert cfg.domain["n"] == 65 and cfg.ts == [] and cfg.s == 0.25


def test_config_logspace_sweep():
    cfg = parse_config('{"sweep": {"t": {"start": 1e-4, "stop": 1e-1, "num": 13}}}')
    assert len(cfg.ts) == 13
    assert cfg.ts[0] == pytest.approx(1e-4) and cfg.ts[-1] == pytest.approx(1e-1)


@pytest.mark.parametrize("text, field_name, line", [
    ('{\n "domain": {\n  "n": 3\n }\n}', "domain.n", 3),
    ('{\n "s": 1.5\n}', "s", 2),
    ('{\n "sweep": {\n  "t": [0.1, 0.01, 0.5]\n }\n}', "sweep.t", 3),
    ('{\n "sweep": {\n  "t": [0.001, 0.01, 0.1]\n }\n}', "sweep.t", 3),
    ('{\n "sweep": {\n  "t": [-1, 0.1]\n }\n}', "sweep.t[0]", 3),
    ('{\n "audits": {\n  "tau": 0\n }\n}', "audits.tau", 3),
    ('{\n "bogus": 1\n}', "bogus", 2),
    ('{\n "forward": {\n  "solver": "lu"\n }\n}', "forward.solver", 3),
])
def test_config_errors_name_field_and_line(text, field_name, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.field_name == field_name
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_config_invalid_json_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n "s": 0.25,\n}')
    assert info.value.line == 3


def test_overrides_revalidate():
    cfg = parse_config('{"seed": 1}')
    cfg2 = with_overrides(cfg, seed=9, workers=2, out="elsewhere", resolution=33)
    assert (cfg2.seed, cfg2.workers, cfg2.output, cfg2.domain["n"]) == (9, 2, "elsewhere", 33)
    with pytest.raises(ConfigError):
        with_overrides(cfg, resolution=3)


def test_cli_bad_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"domain": {"n": "many"}}')
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "domain.n" in capsys.readouterr().err


def test_cli_missing_config_exits_2(tmp_path):
    assert main(["solve", str(tmp_path / "nope.json")]) == 2


def test_cli_hard_failure_exits_1(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"domain": {"n": 17}, "audits": {"tau": 0.05}}))
    # tau * rho0 is below three lattice steps at n = 17
    assert main(["audit", str(p), "--out", str(tmp_path / "o")]) == 1


def test_cli_audit_only_run(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"domain": {"n": 65}}))
    out = tmp_path / "o"
    assert main(["run", str(p), "--out", str(out)]) == 0
    assert (out / "records.csv").read_text().splitlines() == [
        "t,epsilon,delta,I1,I2,residual_102,lps_min,ap_max,freq_ratio,interp_ratio"]
    summary = json.loads((out / "summary.json").read_text())
    for key in ("lps", "ap", "frequency", "interpolation"):
        assert key in summary["audits"]
    assert summary["baseline"]["min_w_near_P0"] > 0


def test_cli_solve_and_reconstruct(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"domain": {"n": 33}, "reconstruction": {"noise": 0.0}}))
    assert main(["solve", str(p), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "fields" / "w.csv").exists()
    assert main(["reconstruct", str(p), "--out", str(tmp_path / "r")]) == 0
    rec = json.loads((tmp_path / "r" / "summary.json").read_text())["reconstruction"]
    assert rec["rel_l2_error"] < 0.1


def test_cli_run_is_byte_deterministic(tmp_path):
    cfg = {"domain": {"n": 33}, "sweep": {"t": {"start": 1e-3, "stop": 1e-1, "num": 5}},
           "audits": {"lps": False, "ap": False}, "seed": 4}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert main(["run", str(p), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(p), "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    a = (tmp_path / "a" / "records.csv").read_bytes()
    assert a == (tmp_path / "b" / "records.csv").read_bytes()
    assert len(a.splitlines()) == 6
