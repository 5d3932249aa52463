"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line verdict in RESULTS; the lines are printed in the
terminal summary (see conftest.py) and when this file is run as a script.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from dichequiv import check_all, preset
from dichequiv.dif import expand_D_power, set_partitions
from dichequiv.engine import ConjugacyEngine, TruncationPolicy
from dichequiv.errors import DichequivError, PreconditionFailed
from dichequiv.harness import run_dif_suite, run_equivalence_suite, run_smoothness_suite
from dichequiv.scenarios import PRESETS

from conftest import newton_z_star, scalar_doubling

FP_TOL = 1e-10
RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def test_criterion_1_corollary_conditions():
    t0 = time.perf_counter()
    rep = check_all(*preset("Cor175"), horizon=200)
    elapsed = time.perf_counter() - t0
    names = [f"d{i}" for i in range(8)]
    bad = [n for n in names if not rep[n].ok]
    q_ok = rep.q is not None and rep.q <= 4 / 9 + 1e-12
    ok = not bad and q_ok and elapsed < 5.0
    detail = (f"q={rep.q} (<= 4/9: {q_ok}), M={rep.M}, unsatisfied={bad or 'none'}, "
              f"{elapsed:.2f}s")
    assert record(1, ok, detail), detail


def test_criterion_2_equivalence_suite():
    policy = TruncationPolicy(fp_tol=FP_TOL)
    t0 = time.perf_counter()
    worst, failed = {}, []
    for name in ("Cor175", "Ex187", "Ex188", "Ex189"):
        try:
            rep = run_equivalence_suite(preset(name), policy, samples=100, seed=2)
        except DichequivError as exc:
            failed.append(f"{name}: {exc}")
            continue
        props = rep.properties
        limits = {"conjugacy_H": 10 * FP_TOL, "conjugacy_G": 10 * FP_TOL,
                  "inverse_GH": 10 * FP_TOL, "inverse_HG": 10 * FP_TOL,
                  "G_alternate": 20 * FP_TOL}
        for key, lim in limits.items():
            worst[key] = max(worst.get(key, 0.0), props[key].worst)
            if not props[key].worst <= lim:
                failed.append(f"{name}.{key}={props[key].worst:.3g}")
        for key in ("bounded_H", "bounded_G"):
            if not props[key].worst <= rep.conditions["p"] + FP_TOL:
                failed.append(f"{name}.{key}")
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed < 60.0
    detail = (", ".join(f"{k}={v:.2e}" for k, v in sorted(worst.items()))
              + f", {elapsed:.1f}s" + (f", failures: {failed}" if failed else ""))
    assert record(2, ok, detail), detail


def test_criterion_3_smoothness_suite():
    t0 = time.perf_counter()
    failed, notes = [], []
    legs = (("Cor175", False), ("Cor176", False), ("C2Corollary", True))
    for name, second in legs:
        try:
            rep = run_smoothness_suite(preset(name), samples=20, seed=3, second_order=second)
        except PreconditionFailed as exc:
            failed.append(f"{name}: {exc}")
            continue
        p = rep.properties
        checks = {"jacobian_w_star_fd": 1e-5, "jacobian_G_fd": 1e-5, "product_GH": 1e-8}
        if second:
            checks.update(hessian_G_fd=1e-4, hessian_w_star_fd=1e-4, hessian_symmetry=1e-8)
        for key, lim in checks.items():
            if not p[key].worst <= lim:
                failed.append(f"{name}.{key}={p[key].worst:.3g}")
        notes.append(f"{name} dG fd {p['jacobian_G_fd'].worst:.1e}")
    elapsed = time.perf_counter() - t0
    ok = not failed and elapsed < 60.0
    detail = ", ".join(notes) + f", {elapsed:.1f}s" + (f", failures: {failed}" if failed else "")
    assert record(3, ok, detail), detail


def _quantities(eng, k, v):
    out = {"H": eng.map_H(k, v), "G": eng.map_G(k, v)}
    if eng.pert.order >= 1:
        out["dG"] = eng.jacobian_G(k, v)
        out["dw"] = eng.jacobian_w_star(k, v)
    if eng.pert.order >= 2 and eng.cert.ratio("c2", eng.J) is not None:
        out["d2G"] = eng.hessian_G(k, v)
        out["d2w"] = eng.hessian_w_star(k, v)
    return out


def test_criterion_4_series_horizon_doubling():
    rng = np.random.default_rng(4)
    failed, worst_margin = [], 0.0
    for name in PRESETS:
        sc = preset(name)
        e1 = ConjugacyEngine(sc, TruncationPolicy(series_horizon=128))
        e2 = ConjugacyEngine(sc, TruncationPolicy(series_horizon=256))
        for _ in range(5):
            k, v = int(rng.integers(0, 7)), rng.uniform(-10, 10, 3)
            a, b = _quantities(e1, k, v), _quantities(e2, k, v)
            for key in a:
                diff = float(np.max(np.abs(a[key] - b[key])))
                bound = e1.truncation_bound(key, k)
                allowance = 2 * FP_TOL * (1 + float(np.max(np.abs(a[key]))))
                if not (np.isfinite(bound) and diff < bound + allowance):
                    failed.append(f"{name}.{key}(k={k}) diff={diff:.2e} bound={bound:.2e}")
                elif diff > 0:
                    worst_margin = max(worst_margin, diff / (bound + allowance))
    ok = not failed
    shown = sorted(set(f.split("(")[0] for f in failed))
    detail = f"worst diff/bound {worst_margin:.2e}" + (f", failures: {shown}" if failed else "")
    assert record(4, ok, detail), detail


def test_criterion_5_zero_perturbation():
    rng = np.random.default_rng(5)
    worst = 0.0
    for name in PRESETS:
        eng = ConjugacyEngine(preset(name, f_zero=True))
        for _ in range(5):
            k, v = int(rng.integers(0, 7)), rng.uniform(-10, 10, 3)
            I = np.eye(3)
            errs = [eng.map_H(k, v) - v, eng.map_G(k, v) - v, eng.compute_z_star(k, k, v),
                    eng.compute_w_star(k, k, v), eng.jacobian_G(k, v) - I,
                    eng.jacobian_H(k, v) - I, eng.jacobian_w_star(k, v),
                    eng.hessian_G(k, v), eng.hessian_w_star(k, v)]
            worst = max(worst, max(float(np.max(np.abs(e))) for e in errs))
    ok = worst <= 1e-14
    detail = f"worst deviation {worst:.2e}"
    assert record(5, ok, detail), detail


# the expansions as stated in the source text, as coefficient lists in term order
STATED = {2: [1, 1], 3: [1, 3, 1], 4: [1, 6, 4, 1]}


def test_criterion_6_dif_golden():
    failed = []
    for s, coeffs in STATED.items():
        got = expand_D_power(s).coefficients()
        if got != coeffs:
            failed.append(f"s={s}: got {got}, stated {coeffs}")
    for s, bell in zip(range(1, 7), (1, 2, 5, 15, 52, 203)):
        total = sum(expand_D_power(s).coefficients())
        if not total == bell == sum(1 for _ in set_partitions(s)):
            failed.append(f"bell s={s}: {total}")
    rep = run_dif_suite(6)
    for key, p in rep.properties.items():
        if key.startswith(("dif1_", "dif0_")) and not p.passed:
            failed.append(key)
    ok = not failed
    detail = "expansions, Bell sums, DIF1/d7 and DIF0/d3 agreement" + (
        f"; failures: {failed}" if failed else "")
    assert record(6, ok, detail), detail


def test_criterion_7_scalar_oracle():
    eng = ConjugacyEngine(scalar_doubling(), TruncationPolicy(fp_tol=FP_TOL))
    worst = 0.0
    for m, xi in ((0, 0.5), (0, -3.0), (2, 1.0), (4, 7.5), (6, -0.2), (8, 40.0)):
        oracle = newton_z_star(xi, m, 2 * eng.J)
        z = eng.z_star_path(m, np.array([xi]))[:eng.J, 0]
        worst = max(worst, float(np.max(np.abs(z - oracle[:eng.J]))))
    ok = worst <= 10 * FP_TOL
    detail = f"max |z_picard - z_dense| = {worst:.2e}"
    assert record(7, ok, detail), detail


def test_criterion_8_determinism(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        cmd = [sys.executable, "-m", "dichequiv", "verify", "--preset", "Ex188", "--suite", "all",
               "--seed", "42", "--format", "json", "--out", str(path)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        outs.append((proc.returncode, path.read_bytes() if path.exists() else b""))
    same = outs[0][1] == outs[1][1] and bool(outs[0][1])
    passed = outs[0][0] == 0 and json.loads(outs[0][1])["passed"]
    ok = same and passed
    detail = f"byte-identical={same}, exit={outs[0][0]}, {len(outs[0][1])} bytes"
    assert record(8, ok, detail), detail


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
