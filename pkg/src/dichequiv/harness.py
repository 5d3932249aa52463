"""Named property suites over a scenario, producing serializable reports."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .certificates import ConditionReport, check_all, check_d3_d4, check_d7
from .dif import (evaluate_dif_condition, expand_D_power, set_partitions, DifExpression)
from .engine import ConjugacyEngine, TruncationPolicy
from .envelopes import GrowthEnvelopes
from .errors import PreconditionFailed
from .scenarios import PRESETS, preset

BOX = 10.0
LARGE_NORM = 1e3
N_LARGE = 10
K_WINDOW = 6
FD_TOL_1 = 1e-5
FD_TOL_2 = 1e-4
PRODUCT_TOL = 1e-8
_EPS = float(np.finfo(float).eps)
SYMMETRY_TOL = 1e-8

# expansions of D^s(Gamma_0): (gamma index, pi exponents, coefficient)
GOLDEN = {
    1: [(1, {1: 1}, 1)],
    2: [(2, {1: 2}, 1), (1, {2: 1}, 1)],
    3: [(3, {1: 3}, 1), (2, {1: 1, 2: 1}, 3), (1, {3: 1}, 1)],
    4: [(4, {1: 4}, 1), (3, {1: 2, 2: 1}, 6), (2, {1: 1, 3: 1}, 4), (2, {2: 2}, 3),
        (1, {4: 1}, 1)],
}
BELL = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}


@dataclass
class PropertyResult:
    name: str
    samples: int
    worst: float
    tolerance: float
    passed: bool
    counterexample: Optional[dict] = None
    anchor: str = ""


@dataclass
class VerificationReport:
    scenario: str
    suite: str
    properties: dict[str, PropertyResult] = field(default_factory=dict)
    conditions: Optional[dict] = None
    policy: Optional[dict] = None
    wall_time: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties.values())

    def failures(self) -> list[PropertyResult]:
        return [p for p in self.properties.values() if not p.passed]

    def to_dict(self, timings: bool = False) -> dict:
        out = {"scenario": self.scenario, "suite": self.suite, "passed": self.passed,
               "properties": {k: asdict(v) for k, v in sorted(self.properties.items())},
               "conditions": self.conditions, "policy": self.policy}
        if timings:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self, timings: bool = False, **kw) -> str:
        return json.dumps(self.to_dict(timings), sort_keys=True, default=_json_default, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        props = {k: PropertyResult(**v) for k, v in data["properties"].items()}
        return cls(data["scenario"], data["suite"], props, data.get("conditions"),
                   data.get("policy"), data.get("wall_time", {}))

    def to_text(self) -> str:
        lines = [f"scenario {self.scenario}  suite {self.suite}  "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        w = max((len(n) for n in self.properties), default=8)
        for n, p in sorted(self.properties.items()):
            mark = "ok  " if p.passed else "FAIL"
            line = f"  {mark} {n.ljust(w)}  n={p.samples:<4d} worst={p.worst:.3e}  tol={p.tolerance:.1e}"
            if p.counterexample:
                line += "  at " + json.dumps(p.counterexample, default=_json_default)
            lines.append(line)
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


class _Tracker:
    """Accumulates the worst residual of one property."""

    def __init__(self, name: str, tol: float, anchor: str):
        self.name, self.tol, self.anchor = name, tol, anchor
        self.n, self.worst, self.where = 0, 0.0, None

    def add(self, value: float, **where):
        self.n += 1
        v = float(value)
        if math.isnan(v) or v > self.worst or self.where is None:
            if math.isnan(v) or v >= self.worst:
                self.worst, self.where = v, where

    def result(self) -> PropertyResult:
        ok = self.worst <= self.tol and not math.isnan(self.worst)
        ce = None if ok else {k: _plain(v) for k, v in (self.where or {}).items()}
        return PropertyResult(self.name, self.n, self.worst, self.tol, ok, ce, self.anchor)


def _plain(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _policy_dict(policy: TruncationPolicy) -> dict:
    return {"J": policy.series_horizon, "fp_tol": policy.fp_tol, "fd_step": policy.fd_step,
            "horizon": policy.horizon, "max_iters": policy.max_iters}


def _sample_points(rng, d: int, samples: int):
    """(k, point) pairs: `samples` from the box plus N_LARGE of norm LARGE_NORM."""
    out = []
    for _ in range(samples):
        out.append((int(rng.integers(0, K_WINDOW + 1)), rng.uniform(-BOX, BOX, d)))
    for _ in range(N_LARGE):
        v = rng.standard_normal(d)
        out.append((int(rng.integers(0, K_WINDOW + 1)), LARGE_NORM * v / np.linalg.norm(v)))
    return out


def _require(report: ConditionReport, names):
    for n in names:
        st = report.statuses.get(n)
        if st is None or not st.acceptable:
            detail = "" if st is None else f"{st.status}" + (f" {st.witness}" if st.witness else "")
            raise PreconditionFailed(n, detail)


def _vn(v):
    return float(np.linalg.norm(v))


def run_equivalence_suite(scenario, policy: Optional[TruncationPolicy] = None, samples: int = 100,
                          seed: int = 0, report: Optional[ConditionReport] = None
                          ) -> VerificationReport:
    policy = policy or TruncationPolicy()
    t0 = time.perf_counter()
    if report is None:
        report = check_all(*scenario, horizon=policy.horizon, anchors=(0,), second_order=False)
    _require(report, ("d0", "d1", "d2", "d3", "d4", "d5"))
    eng = ConjugacyEngine(scenario, policy, p=report.p, q=report.q)
    sys, pert = scenario.sys, scenario.pert
    tol = policy.fp_tol
    props = {n: _Tracker(n, t, a) for n, t, a in (
        ("conjugacy_H", 10 * tol, "H maps linear solutions to perturbed solutions"),
        ("conjugacy_G", 10 * tol, "G maps perturbed solutions to linear solutions"),
        ("inverse_GH", 10 * tol, "G(k, H(k, xi)) = xi"),
        ("inverse_HG", 10 * tol, "H(k, G(k, eta)) = eta"),
        ("bounded_H", eng.p + tol, "|H(k, xi) - xi| <= p"),
        ("bounded_G", eng.p + tol, "|G(k, eta) - eta| <= p"),
        ("G_alternate", 20 * tol, "G via Phi(k,0)[y(0) + w*(0)]"),
        ("flow_z", 10 * tol, "z*(k;(m,xi)) = z*(k;(p, x(p,m,xi)))"),
        ("flow_w", 10 * tol, "w*(k;(m,eta)) = w*(k;(p, y(p,m,eta)))"),
    )}
    rng = np.random.default_rng(seed)
    for k, v in _sample_points(rng, sys.dim, samples):
        A = sys.A(k)
        h = eng.map_H(k, v)
        props["conjugacy_H"].add(_vn(eng.map_H(k + 1, A @ v) - A @ h - pert.f(k, h)), k=k, point=v)
        g = eng.map_G(k, v)
        nxt = A @ v + pert.f(k, v)
        props["conjugacy_G"].add(_vn(eng.map_G(k + 1, nxt) - A @ g), k=k, point=v)
        props["inverse_GH"].add(_vn(eng.map_G(k, h) - v), k=k, point=v)
        props["inverse_HG"].add(_vn(eng.map_H(k, g) - v), k=k, point=v)
        props["bounded_H"].add(_vn(h - v), k=k, point=v)
        props["bounded_G"].add(_vn(g - v), k=k, point=v)
        props["G_alternate"].add(_vn(eng.map_G_alternate(k, v) - g), k=k, point=v)
        p_ = int(rng.integers(0, K_WINDOW + 1))
        xp = eng.linear_path(k, v)[p_]
        props["flow_z"].add(_vn(eng.compute_z_star(k, k, v) - eng.compute_z_star(k, p_, xp)),
                            k=k, p=p_, point=v)
        yp = eng.perturbed_path(k, v)[p_]
        props["flow_w"].add(_vn(eng.compute_w_star(k, k, v) - eng.compute_w_star(k, p_, yp)),
                            k=k, p=p_, point=v)
    out = VerificationReport(scenario.name, "equivalence",
                             {n: t.result() for n, t in props.items()},
                             report.to_dict(), _policy_dict(policy))
    out.wall_time["equivalence"] = time.perf_counter() - t0
    return out


def _fd_jacobian(fn, x, h):
    cols = [(fn(x + h * e) - fn(x - h * e)) / (2 * h) for e in np.eye(x.size)]
    return np.stack(cols, axis=-1)


def _rel(num, ana):
    return float(np.max(np.abs(num - ana)) / (1.0 + np.max(np.abs(ana))))


def run_smoothness_suite(scenario, policy: Optional[TruncationPolicy] = None, samples: int = 20,
                         seed: int = 0, report: Optional[ConditionReport] = None,
                         second_order: Optional[bool] = None) -> VerificationReport:
    policy = policy or TruncationPolicy()
    t0 = time.perf_counter()
    if second_order is None:
        second_order = scenario.pert.order >= 2
    if report is None:
        report = check_all(*scenario, horizon=policy.horizon, second_order=second_order)
    _require(report, ("d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7"))
    if second_order:
        _require(report, ("c2",))
    eng = ConjugacyEngine(scenario, policy, p=report.p, q=report.q)
    sys, h = scenario.sys, policy.fd_step
    d = sys.dim
    rows = [("jacobian_w_star_fd", FD_TOL_1, "dw*/deta against central differences"),
            ("jacobian_G_fd", FD_TOL_1, "dG/deta against central differences"),
            ("jacobian_H_fd", FD_TOL_1, "dH/dxi against central differences"),
            ("product_GH", PRODUCT_TOL, "dG(k, H(k, xi)) dH(k, xi) = I"),
            ("envelope_Y1", 1e-9, "||dy/deta(j)|| <= A_m(j)"),
            ("envelope_lipschitz", 1e-9, "|y(j,m,eta) - y(j,m,eta')| <= A_m(j)|eta - eta'|")]
    if second_order:
        rows += [("hessian_w_star_fd", FD_TOL_2, "d2w*/deta2 against differences of dw*"),
                 ("hessian_G_fd", FD_TOL_2, "d2G/deta2 against differences of dG"),
                 ("hessian_symmetry", SYMMETRY_TOL, "d2G and d2w* symmetric in the last two indices")]
    props = {n: _Tracker(n, t, a) for n, t, a in rows}
    rng = np.random.default_rng(seed)
    envs: dict[int, GrowthEnvelopes] = {}
    for k, v in _sample_points(rng, d, samples)[:samples]:
        if k not in envs:
            envs[k] = GrowthEnvelopes(sys, scenario.pert, k, eng.J - k)
        env = envs[k]
        ana = eng.jacobian_w_star(k, v)
        num = _fd_jacobian(lambda x: eng.compute_w_star(0, k, x), v, h)
        props["jacobian_w_star_fd"].add(_rel(num, ana), k=k, point=v)
        ana = eng.jacobian_G(k, v)
        num = _fd_jacobian(lambda x: eng.map_G(k, x), v, h)
        props["jacobian_G_fd"].add(_rel(num, ana), k=k, point=v)
        JH = eng.jacobian_H(k, v)
        num = _fd_jacobian(lambda x: eng.map_H(k, x), v, h)
        props["jacobian_H_fd"].add(_rel(num, JH), k=k, point=v)
        props["product_GH"].add(float(np.max(np.abs(eng.jacobian_G(k, eng.map_H(k, v)) @ JH
                                                     - np.eye(d)))), k=k, point=v)
        Y1 = eng.variational(k, v, 1)[0]
        y = eng.perturbed_path(k, v)
        v2 = v + rng.standard_normal(d) * 1e-3
        y2 = eng.perturbed_path(k, v2)
        dv = _vn(v2 - v)
        worst_env = worst_lip = 0.0
        for j in range(eng.J + 1):
            a = env.A_env(j)
            if not math.isfinite(a) or a == 0:
                continue
            worst_env = max(worst_env, float(np.linalg.norm(Y1[j], 2)) / a - 1.0)
            # differences of nearly equal states carry rounding of their size
            floor = 4 * _EPS * (_vn(y[j]) + _vn(y2[j]))
            worst_lip = max(worst_lip, (_vn(y[j] - y2[j]) - floor) / (a * dv) - 1.0)
        props["envelope_Y1"].add(max(worst_env, 0.0), k=k, point=v)
        props["envelope_lipschitz"].add(max(worst_lip, 0.0), k=k, point=v)
        if second_order:
            H2 = eng.hessian_w_star(k, v)
            num = _fd_jacobian(lambda x: eng.jacobian_w_star(k, x), v, h)
            props["hessian_w_star_fd"].add(_rel(num, H2), k=k, point=v)
            G2 = eng.hessian_G(k, v)
            num = _fd_jacobian(lambda x: eng.jacobian_G(k, x), v, h)
            props["hessian_G_fd"].add(_rel(num, G2), k=k, point=v)
            sym = max(float(np.max(np.abs(H2 - H2.transpose(0, 2, 1)))),
                      float(np.max(np.abs(G2 - G2.transpose(0, 2, 1)))))
            props["hessian_symmetry"].add(sym, k=k, point=v)
    out = VerificationReport(scenario.name, "smoothness",
                             {n: t.result() for n, t in props.items()},
                             report.to_dict(), _policy_dict(policy))
    out.wall_time["smoothness"] = time.perf_counter() - t0
    return out


def _golden_expr(s: int) -> DifExpression:
    from .dif import DifTerm
    return DifExpression(DifTerm(c, g, tuple(e.items())) for g, e, c in GOLDEN[s])


def run_dif_suite(r: int = 6, presets=PRESETS, horizon: int = 200) -> VerificationReport:
    if r > 6:
        raise ValueError("the dif suite covers r <= 6")
    t0 = time.perf_counter()
    props: dict[str, PropertyResult] = {}
    for s in range(1, min(r, 4) + 1):
        ok = expand_D_power(s, r) == _golden_expr(s)
        props[f"golden_s{s}"] = PropertyResult(
            f"golden_s{s}", 1, 0.0 if ok else 1.0, 0.0, ok,
            None if ok else {"got": str(expand_D_power(s, r))}, "expansion of D^s(Gamma_0)")
    for s in range(1, r + 1):
        total = sum(expand_D_power(s, r).coefficients())
        count = sum(1 for _ in set_partitions(s))
        ok = total == count == BELL[s]
        props[f"bell_s{s}"] = PropertyResult(
            f"bell_s{s}", 1, float(abs(total - count)), 0.0, ok,
            None if ok else {"coefficient_sum": total, "partitions": count},
            "coefficient sum equals the number of set partitions")
    for name in presets:
        sc = preset(name)
        sys, pert, cert = sc
        e1 = expand_D_power(1, max(pert.order, 1))
        agree = True
        where = None
        for m in (0, 1, 4):
            env = GrowthEnvelopes(sys, pert, m, horizon)
            a = check_d7(sys, cert, pert, m, horizon).status
            b = evaluate_dif_condition(e1, cert, env, pert.gamma_s, m, horizon, s=1).status
            if a != b:
                agree, where = False, {"m": m, "d7": a, "dif1": b}
                break
        props[f"dif1_equals_d7_{name}"] = PropertyResult(
            f"dif1_equals_d7_{name}", 3, 0.0 if agree else 1.0, 0.0, agree, where,
            "(DIF,1) is condition d7")
        d3, _ = check_d3_d4(sys, cert, pert, horizon)
        g0 = DifExpression.gamma(0)
        gam0 = lambda s_, j: float(pert.mu(j)) if s_ == 0 else pert.gamma_s(s_, j)
        env = GrowthEnvelopes(sys, pert, 0, horizon)
        b = evaluate_dif_condition(g0, cert, env, gam0, 0, horizon, s=0)
        ok = d3.ok == b.ok
        props[f"dif0_equals_d3_{name}"] = PropertyResult(
            f"dif0_equals_d3_{name}", 1, 0.0 if ok else 1.0, 0.0, ok,
            None if ok else {"d3": d3.status, "dif0": b.status}, "(DIF,0) with Gamma_0 = mu is d3")
    out = VerificationReport("dif", "dif", props, None, {"r": r, "horizon": horizon})
    out.wall_time["dif"] = time.perf_counter() - t0
    return out


SUITES: dict[str, Callable] = {"equivalence": run_equivalence_suite,
                               "smoothness": run_smoothness_suite}
