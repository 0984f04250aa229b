"""Acceptance criteria 1-10, one test each; every test records a PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from billiard_orbits.cli import main
from billiard_orbits.cohomology import (
    GradedPoly,
    division_identity_check,
    equivariant_poincare,
    ga_poincare_mod2,
    mod2_basis,
    ring_consistency_check,
)
from billiard_orbits.configspace import act, dihedral_group, grad, orbit_distance, perimeter_batch
from billiard_orbits.solver import Tolerances, _dedup, find_critical, report_bound, shoot
from billiard_orbits.surface import point_at, validate
from surfaces import AXES, PERTURBED, PURE, SPHERE
from test_configspace import fd_chart_gradient, random_config, random_spec

ODD = range(3, 202, 2)


def convolve(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def test_criterion_1_betti_formula(record):
    start = time.perf_counter()
    bad = []
    for n in ODD:
        p = equivariant_poincare(n)
        if list(p.coeffs) != convolve([1, 0, 1], [1] * (n - 1)) or p.total() != 2 * (n - 1):
            bad.append(n)
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 1.0
    record(1, ok, f"odd n in [3, 201], mismatches {bad}, {elapsed:.3f} s (limit 1 s)")
    assert ok


def test_criterion_2_case_analysis(record):
    bad = []
    for n in ODD:
        k = n // 4
        free = GradedPoly((1, 1)) * GradedPoly.geometric(k + 1 if n % 4 == 3 else k, 4)
        torsion = GradedPoly((0, 0, 1, 1)) * GradedPoly.geometric(k, 4)
        expected = GradedPoly((1,) * (n - 1))
        hist = [0] * (n - 1)
        for _, deg in mod2_basis(n):
            hist[deg] += 1
        if ga_poincare_mod2(n) != expected or free + torsion != expected or tuple(hist) != expected.coeffs:
            bad.append(n)
    record(2, not bad, f"1 + t + ... + t^(n-2) for odd n in [3, 201], mismatches {bad}")
    assert not bad


def test_criterion_3_division_identity(record):
    bad = []
    for n in ODD:
        quot, rem = divmod(GradedPoly((1, 1, 1, 1)) * ga_poincare_mod2(n), GradedPoly((1, 1)))
        if rem.coeffs or quot != equivariant_poincare(n) or not division_identity_check(n):
            bad.append(n)
    record(3, not bad, f"exact division for odd n <= 201, failures {bad}")
    assert not bad


def test_criterion_4_ring_consistency(record):
    start = time.perf_counter()
    results = {n: ring_consistency_check(n, 40) for n in (3, 5, 7, 11, 101)}
    elapsed = time.perf_counter() - start
    ok = all(results.values()) and elapsed < 10.0
    record(4, ok, f"n in {sorted(results)}, degree cap 40, {elapsed:.2f} s (limit 10 s)")
    assert ok


def orbit_checks(report, spec):
    diam = spec.diameter
    bad = 0
    for o in report.orbits:
        if not (
            o.grad_norm <= 1e-8
            and np.linalg.norm(grad(spec, o.rep)) <= 1e-8
            and o.reflect_residual <= 1e-6
            and o.shooting_gap <= 1e-6 * diam
        ):
            bad += 1
    return bad


def describe(run):
    first, rerun = run
    text = f"pure ellipsoid {AXES}: {first.distinct_count} nondegenerate, {first.degenerate_count} degenerate"
    if rerun is not None:
        text += f"; perturbed rerun: {rerun.distinct_count} nondegenerate"
    return text


def test_criterion_5_orbit_count_bound(record, run_n3, run_n5):
    ok = True
    details = []
    for run, n in ((run_n3, 3), (run_n5, 5)):
        first, rerun = run
        final = rerun or first
        spec = validate(PERTURBED if rerun is not None else PURE)
        bad = orbit_checks(final, spec)
        met = final.distinct_count >= 2 * (n - 1) and bad == 0
        ok &= met
        details.append(f"n={n} bound {2 * (n - 1)}: {describe(run)}, {bad} orbits failing checks")
        print(report_bound(final))
    record(5, ok, " | ".join(details))
    assert ok


def test_criterion_6_shooting_equivalence(record, run_n3, run_n5):
    worst = 0.0
    count = 0
    for first, rerun in (run_n3, run_n5):
        final = rerun or first
        spec = validate(PERTURBED if rerun is not None else PURE)
        for o in final.orbits:
            xs = o.rep.xs
            start = point_at(spec, o.rep.us[0])
            shot = shoot(spec, start, xs[1] - xs[0], o.rep.n)
            gap = np.linalg.norm(shot.points[1:] - np.roll(xs, -1, axis=0), axis=1).max()
            worst = max(worst, gap / spec.diameter)
            count += 1
    ok = count > 0 and worst <= 1e-6
    record(6, ok, f"{count} orbits, worst vertex gap {worst:.2e} x diameter (limit 1e-6)")
    assert ok


def test_criterion_7_gradient_correctness(record):
    rng = np.random.default_rng(7)
    errors = []
    for _ in range(100):
        spec = random_spec(rng)
        c = random_config(spec, int(rng.integers(3, 9)), rng)
        g, ref = grad(spec, c), fd_chart_gradient(spec, c, 1e-6)
        errors.append(np.linalg.norm(g - ref) / np.linalg.norm(ref))
    worst = max(errors)
    record(7, worst <= 1e-6, f"100 random pairs, worst relative error {worst:.2e} (limit 1e-6)")
    assert worst <= 1e-6


def test_criterion_8_degeneracy_detection(record):
    report = find_critical(validate(SPHERE), 3, 200, rng_seed=0)
    flagged = all(o.nullity > 0 for o in report.orbits)
    warned = any("degenerate" in d for d in report.diagnostics)
    ok = bool(report.orbits) and flagged and report.distinct_count == 0 and warned
    record(8, ok, f"unit sphere n=3: {len(report.orbits)} orbits, all flagged={flagged}, counted={report.distinct_count}")
    assert ok


def test_criterion_9_symmetry_invariance(record, run_n3, run_n5):
    tol = Tolerances()
    worst_value = worst_dist = 0.0
    unchanged = True
    for first, rerun in (run_n3, run_n5):
        final = rerun or first
        spec = validate(PERTURBED if rerun is not None else PURE)
        reps = [(o.seed_id, o.rep, o.value, o.grad_norm) for o in final.orbits]
        moved = []
        for seed_id, c, value, gn in reps:
            for g in dihedral_group(c.n):
                m = act(g, c)
                worst_value = max(worst_value, abs(float(perimeter_batch(m.xs)) - value))
                worst_dist = max(worst_dist, orbit_distance(m, c))
                moved.append((seed_id, m, value, gn))
        kept = _dedup(spec, reps + moved, tol)
        unchanged &= len(kept) == len(reps) and all(k[1] is r[1] for k, r in zip(kept, reps))
    ok = unchanged and worst_value <= 1e-12 and worst_dist <= 1e-12
    record(9, ok, f"perimeter drift {worst_value:.1e}, orbit distance {worst_dist:.1e}, classes unchanged={unchanged}")
    assert ok


def test_criterion_10_determinism(record, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"surface": PURE.to_dict(), "n": 3, "budget": 2000, "rng_seed": 11}))
    for name in ("a", "b"):
        assert main(["solve", str(config), "--output-dir", str(tmp_path / name)]) == 0
    a, b = ((tmp_path / name / "report.json").read_bytes() for name in ("a", "b"))
    ok = a == b
    record(10, ok, f"two runs of the same config, report.json {len(a)} bytes, identical={ok}")
    assert ok
