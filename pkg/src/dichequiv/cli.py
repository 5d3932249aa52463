"""Command-line entry point: ``dichequiv {check,map,verify,dif,presets}``.

Exit status is 0 when everything passes, 1 when a property or condition
fails and 2 for usage, configuration and precondition errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .certificates import check_all
from .dif import expand_D_power, format_expression, to_json_terms
from .engine import ConjugacyEngine, TruncationPolicy
from .errors import DichequivError
from .harness import run_dif_suite, run_equivalence_suite, run_smoothness_suite
from .scenarios import PRESETS, ScenarioParams, load_config, make_scenario

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_PRESET_LOOKUP = {p.lower(): p for p in PRESETS}


@dataclass
class RunConfig:
    preset: Optional[str] = None
    file: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    samples: Optional[int] = None
    seed: int = 0
    fmt: str = "text"
    out: Optional[str] = None
    timings: bool = False

    def scenario(self):
        if (self.preset is None) == (self.file is None):
            raise UsageError("give exactly one of --preset or --file")
        if self.preset is not None:
            name = _PRESET_LOOKUP.get(self.preset.lower())
            if name is None:
                raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
            params = ScenarioParams(name)
        else:
            params = load_config(self.file)
        return make_scenario(params.with_overrides(**self.overrides))


class UsageError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_override(item: str):
    key, sep, val = item.partition("=")
    if not sep or not key:
        raise UsageError(f"override {item!r} is not key=value")
    return key.strip(), _parse_value(val.strip())


def _parse_vector(text: str, dim: int) -> np.ndarray:
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad point {text!r}: {exc}") from None
    if v.size != dim:
        raise UsageError(f"point has {v.size} components, system dimension is {dim}")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--preset", help="preset name, case-insensitive")
    p.add_argument("--file", help="JSON scenario configuration")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a scenario constant (value parsed as JSON when possible)")
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--series-horizon", type=int, default=128)
    p.add_argument("--fp-tol", type=float, default=1e-10)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timings", action="store_true", help="include wall times in JSON")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dichequiv",
                                 description="Conjugacies of nonautonomous difference equations.")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="evaluate every hypothesis on a scenario")
    _common(c)
    m = sub.add_parser("map", help="evaluate H or G at a point")
    _common(m)
    m.add_argument("-d", "--direction", choices=("H", "G"), required=True)
    m.add_argument("-k", type=int, required=True)
    m.add_argument("-p", "--point", required=True, help="comma-separated components")
    v = sub.add_parser("verify", help="run property suites")
    _common(v)
    v.add_argument("--suite", choices=("equivalence", "smoothness", "dif", "all"), default="all")
    d = sub.add_parser("dif", help="expand D^s(Gamma_0)")
    d.add_argument("-s", type=int, required=True)
    d.add_argument("-r", type=int, default=None)
    d.add_argument("--format", choices=("json", "text"), default="text")
    d.add_argument("--out")
    pr = sub.add_parser("presets", help="list registered presets")
    pr.add_argument("--format", choices=("json", "text"), default="text")
    pr.add_argument("--out")
    return ap


def _config(ns) -> RunConfig:
    try:
        policy = TruncationPolicy(series_horizon=ns.series_horizon, fp_tol=ns.fp_tol,
                                  fd_step=ns.fd_step, horizon=ns.horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return RunConfig(ns.preset, ns.file, dict(_parse_override(o) for o in ns.override), policy,
                     ns.samples, ns.seed, ns.format, ns.out, ns.timings)


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_check(cfg: RunConfig) -> int:
    sc = cfg.scenario()
    report = check_all(*sc, horizon=cfg.policy.horizon, seed=cfg.seed)
    if cfg.fmt == "json":
        _emit(json.dumps({"scenario": sc.name, "report": report.to_dict()}, sort_keys=True,
                         default=_default), cfg.out)
    else:
        _emit(f"scenario {sc.name}\n" + report.to_text(), cfg.out)
    # horizon-limited verdicts are inconclusive rather than failed
    ok = all(st.acceptable for st in report.statuses.values())
    return EXIT_OK if ok else EXIT_FAIL


def cmd_map(cfg: RunConfig, direction: str, k: int, point: str) -> int:
    sc = cfg.scenario()
    v = _parse_vector(point, sc.sys.dim)
    if k < 0:
        raise UsageError("k must be nonnegative")
    eng = ConjugacyEngine(sc, cfg.policy)
    val = eng.map_H(k, v) if direction == "H" else eng.map_G(k, v)
    bound = eng.truncation_bound(direction, k)
    if cfg.fmt == "json":
        _emit(json.dumps({"scenario": sc.name, "direction": direction, "k": k,
                          "point": v.tolist(), "value": val.tolist(),
                          "truncation_bound": bound}, sort_keys=True), cfg.out)
    else:
        _emit(",".join(repr(float(x)) for x in val), cfg.out)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    sc = cfg.scenario()
    names = ("equivalence", "smoothness", "dif") if suite == "all" else (suite,)
    reports = {}
    cond = None
    if any(n != "dif" for n in names):
        cond = check_all(*sc, horizon=cfg.policy.horizon, seed=cfg.seed)
    for n in names:
        if n == "equivalence":
            reports[n] = run_equivalence_suite(sc, cfg.policy, cfg.samples or 100, cfg.seed, cond)
        elif n == "smoothness":
            reports[n] = run_smoothness_suite(sc, cfg.policy, cfg.samples or 20, cfg.seed, cond)
        else:
            reports[n] = run_dif_suite(6, horizon=cfg.policy.horizon)
    passed = all(r.passed for r in reports.values())
    if cfg.fmt == "json":
        doc = {"scenario": sc.name, "seed": cfg.seed, "passed": passed,
               "suites": {n: r.to_dict(cfg.timings) for n, r in reports.items()}}
        _emit(json.dumps(doc, sort_keys=True, default=_default), cfg.out)
    else:
        _emit("\n".join(r.to_text() for r in reports.values()), cfg.out)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_dif(s: int, r: Optional[int], fmt: str, out: Optional[str]) -> int:
    expr = expand_D_power(s, r)
    if fmt == "json":
        _emit(json.dumps({"s": s, "r": r, "expansion": format_expression(expr),
                          "terms": to_json_terms(expr)}, sort_keys=True, ensure_ascii=False), out)
    else:
        _emit(format_expression(expr), out)
    return EXIT_OK


def cmd_presets(fmt: str, out: Optional[str]) -> int:
    _emit(json.dumps(list(PRESETS)) if fmt == "json" else "\n".join(PRESETS), out)
    return EXIT_OK


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if ns.command == "dif":
            return cmd_dif(ns.s, ns.r, ns.format, ns.out)
        if ns.command == "presets":
            return cmd_presets(ns.format, ns.out)
        cfg = _config(ns)
        if ns.command == "check":
            return cmd_check(cfg)
        if ns.command == "map":
            return cmd_map(cfg, ns.direction, ns.k, ns.point)
        return cmd_verify(cfg, ns.suite)
    except (UsageError, DichequivError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
