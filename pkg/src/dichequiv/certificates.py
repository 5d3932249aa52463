"""Dichotomy data and finite-horizon checks of conditions d0 to d7.

Infinite sums are split into a partial sum and a tail.  A certificate may carry
``tail_ratios``: for a named series, a number rho < 1 such that the bounding
terms t_j (built from D, h and the envelopes) satisfy t_{j+1} <= rho t_j beyond
the horizon, so the tail from N is at most t_N / (1 - rho).  Series without a
certified ratio fall back to a ratio test on the last quartile of the computed
terms and are reported with tail_mode "heuristic".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping, Optional

import numpy as np

from .errors import MissingEnvelope, TailUnbounded
from .linalg import opnorm
from .system import MatrixSequence, PerturbationModel, green_table

DEFAULT_HORIZON = 200
HEURISTIC_MAX_RATIO = 0.99
DECAY_FACTOR = 100.0
REL_SLACK = 1e-9
ABS_SLACK = 1e-14
D7_ANCHORS = (0, 1, 2, 4, 8, 16)

SATISFIED = "satisfied"
VIOLATED = "violated"
HORIZON_LIMITED = "horizon-limited"
CERTIFIED = "certified"
HEURISTIC = "heuristic"


@dataclass(frozen=True, eq=False)
class DichotomyCertificate:
    proj_P: Callable[[int], np.ndarray]
    proj_Q: Callable[[int], np.ndarray]
    seq_D: Callable[[int], float]
    log_h: Callable[[int], float]
    # series name -> rho, or (rho, j0) when the ratio bound only holds for j >= j0
    tail_ratios: Mapping[str, Any] = field(default_factory=dict)

    def seq_h(self, n: int) -> float:
        return math.exp(self.log_h(n))

    def ratio(self, series: str, start: int) -> Optional[float]:
        """Certified ratio for tails starting at index ``start``, if any."""
        r = self.tail_ratios.get(series)
        if r is None:
            return None
        rho, j0 = (r, 0) if isinstance(r, (int, float)) else r
        return float(rho) if start >= j0 and rho < 1 else None

    def tail_bound(self, series: str, start: int, first_term: float) -> Optional[float]:
        """Certified bound on sum_{j>=start} t_j given t_start, or None when uncertified."""
        rho = self.ratio(series, start)
        if rho is None:
            return None
        return first_term / (1.0 - rho)

    @classmethod
    def from_projector(cls, P, D: Callable[[int], float], log_h: Callable[[int], float],
                       tail_ratios=None):
        P = np.array(P, dtype=float, ndmin=2)
        Q = np.eye(P.shape[0]) - P
        return cls(lambda n: P, lambda n: Q, D, log_h, dict(tail_ratios or {}))


@dataclass
class ConditionStatus:
    name: str
    status: str
    value: Optional[float] = None
    witness: Optional[dict] = None
    tail_mode: Optional[str] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SATISFIED

    @property
    def acceptable(self) -> bool:
        return self.status in (SATISFIED, HORIZON_LIMITED)


@dataclass
class ConditionReport:
    statuses: dict[str, ConditionStatus]
    horizon: int
    M: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None

    @property
    def tail_mode(self) -> str:
        modes = {s.tail_mode for s in self.statuses.values() if s.tail_mode}
        return HEURISTIC if HEURISTIC in modes else CERTIFIED

    def __getitem__(self, name: str) -> ConditionStatus:
        return self.statuses[name]

    def all_satisfied(self, names=None) -> bool:
        names = self.statuses if names is None else names
        return all(self.statuses[n].ok for n in names)

    def violated(self) -> list[str]:
        return [n for n, s in self.statuses.items() if s.status == VIOLATED]

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "tail_mode": self.tail_mode,
                "M": self.M, "p": self.p, "q": self.q,
                "conditions": {n: asdict(s) for n, s in self.statuses.items()}}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ConditionReport":
        st = {n: ConditionStatus(**s) for n, s in data["conditions"].items()}
        return cls(st, data["horizon"], data.get("M"), data.get("p"), data.get("q"))

    def to_text(self) -> str:
        rows = [("condition", "status", "value", "tail", "witness")]
        for n, s in self.statuses.items():
            val = "" if s.value is None else f"{s.value:.6g}"
            wit = "" if not s.witness else ", ".join(f"{k}={_fmt(v)}" for k, v in s.witness.items())
            rows.append((n, s.status, val, s.tail_mode or "", wit))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        consts = [f"horizon={self.horizon}", f"tail_mode={self.tail_mode}"]
        for k in ("M", "p", "q"):
            v = getattr(self, k)
            if v is not None:
                consts.append(f"{k}={v:.12g}")
        return "\n".join(lines + ["", "  ".join(consts)])


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _leq(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1 + REL_SLACK) + ABS_SLACK


# -- series ---------------------------------------------------------------

def series_status(name: str, log_terms, log_tail_first: float, ratio: Optional[float],
                  strict: bool = False, start: int = 0, bound: Optional[float] = None
                  ) -> ConditionStatus:
    """Verdict on sum_j t_j from log t_j over the horizon plus the first tail term.

    With a certified ``ratio`` the tail is t_N/(1-ratio); otherwise the decay
    rate is estimated from the last quartile of the computed terms.  ``bound``
    additionally requires the total to stay below it (d4 uses 1).
    """
    log_terms = np.asarray(log_terms, dtype=float)
    partial = float(np.sum(np.exp(log_terms))) if log_terms.size else 0.0
    t_n = math.exp(log_tail_first) if log_tail_first > -math.inf else 0.0
    if ratio is not None:
        tail, mode = t_n / (1.0 - ratio), CERTIFIED
    else:
        mode = HEURISTIC
        try:
            tail = heuristic_tail(log_terms, t_n)
        except TailUnbounded as exc:
            if strict:
                raise
            return ConditionStatus(name, VIOLATED, partial, {"rate": exc.args[1], "index": start},
                                   mode, "terms do not decay geometrically")
    if not math.isfinite(partial + tail):
        if strict:
            raise TailUnbounded(f"{name}: series overflowed", math.inf)
        return ConditionStatus(name, VIOLATED, math.inf, {"index": start}, mode, "overflow")
    total = partial + tail
    if bound is not None and not total < bound:
        return ConditionStatus(name, VIOLATED, total, {"index": start, "total": total}, mode,
                               f"sum exceeds {bound}")
    return ConditionStatus(name, SATISFIED, total, None, mode)


def heuristic_tail(log_terms: np.ndarray, t_next: float) -> float:
    n = log_terms.size
    if n == 0:
        return t_next
    q = log_terms[-max(n // 4, 2):] if n >= 2 else log_terms
    finite = q[np.isfinite(q)]
    if finite.size == 0:
        return 0.0
    if finite.size < 2:
        return t_next
    rate = math.exp((finite[-1] - finite[0]) / (finite.size - 1))
    if rate > HEURISTIC_MAX_RATIO:
        raise TailUnbounded(f"estimated term ratio {rate:.4g} > {HEURISTIC_MAX_RATIO}", rate)
    return max(t_next, math.exp(finite[-1]) * rate) / (1.0 - rate)


# -- individual conditions -------------------------------------------------

def check_d0(sys: MatrixSequence, horizon: int = DEFAULT_HORIZON) -> ConditionStatus:
    worst = 0.0
    for k in range(horizon + 1):
        a, ainv = sys.A(k), sys.Ainv(k)
        if not np.all(np.isfinite(ainv)) or opnorm(a @ ainv - np.eye(sys.dim)) > 1e-8:
            return ConditionStatus("d0", VIOLATED, worst, {"k": k}, detail="singular coefficient")
        nk = max(opnorm(a), opnorm(ainv))
        worst = max(worst, nk)
        if not _leq(nk, sys.bound_M):
            return ConditionStatus("d0", VIOLATED, nk, {"k": k, "norm": nk},
                                   detail=f"exceeds declared bound {sys.bound_M:g}")
    return ConditionStatus("d0", SATISFIED, worst)


def check_d1(sys: MatrixSequence, cert: DichotomyCertificate,
             horizon: int = DEFAULT_HORIZON) -> ConditionStatus:
    eye = np.eye(sys.dim)
    for n in range(horizon + 1):
        P, Q = cert.proj_P(n), cert.proj_Q(n)
        if opnorm(P + Q - eye) > 1e-12 or opnorm(P @ P - P) > 1e-12 or opnorm(Q @ Q - Q) > 1e-12:
            return ConditionStatus("d1", VIOLATED, None, {"n": n}, detail="projector algebra")
        if n < horizon:
            a = sys.A(n)
            if opnorm(cert.proj_P(n + 1) @ a - a @ P) > 1e-10 * max(1.0, opnorm(a)):
                return ConditionStatus("d1", VIOLATED, None, {"n": n}, detail="projector invariance")
    lh = np.array([cert.log_h(n) for n in range(horizon + 1)])
    if abs(lh[0]) > 1e-12:
        return ConditionStatus("d1", VIOLATED, None, {"n": 0}, detail="h(0) != 1")
    bad = np.nonzero(np.diff(lh) > 1e-12)[0]
    if bad.size:
        return ConditionStatus("d1", VIOLATED, None, {"n": int(bad[0]) + 1}, detail="h increases")

    G = green_table(sys, cert, horizon, horizon)
    norms = np.linalg.norm(G, 2, axis=(-2, -1))
    logD = np.log(np.array([cert.seq_D(n) for n in range(horizon + 1)]))
    worst = 0.0
    for k in range(horizon + 1):
        for n in range(horizon + 1):
            # P branch for k >= n, Q branch (including k == n via Q(n) alone) for k <= n
            checks = []
            if k >= n:
                checks.append((norms[k, n], logD[n] + lh[k] - lh[n]))
            if k <= n:
                lhs = norms[k, n] if k < n else opnorm(cert.proj_Q(n))
                checks.append((lhs, logD[n] + lh[n] - lh[k]))
            for lhs, log_rhs in checks:
                rhs = math.exp(log_rhs)
                if lhs > 0:
                    worst = max(worst, lhs / rhs if rhs > 0 else math.inf)
                if not _leq(lhs, rhs):
                    return ConditionStatus("d1", VIOLATED, lhs / rhs if rhs else math.inf,
                                           {"k": k, "n": n, "lhs": float(lhs), "rhs": rhs})
    if lh[-1] > -math.log(DECAY_FACTOR):
        return ConditionStatus("d1", HORIZON_LIMITED, worst, None,
                               detail=f"h({horizon}) = {math.exp(lh[-1]):.3g} has not decayed "
                                      f"by {DECAY_FACTOR:g}")
    return ConditionStatus("d1", SATISFIED, worst)


def check_d2(sys: MatrixSequence, pert: PerturbationModel, horizon: int = DEFAULT_HORIZON,
             samples: int = 64, seed: int = 0) -> ConditionStatus:
    """Sampled bound and Lipschitz checks of f on a box plus large-norm points."""
    rng = np.random.default_rng(seed)
    d = sys.dim
    ks = np.arange(min(horizon, 50) + 1)
    for k in ks:
        u = np.concatenate([rng.uniform(-10, 10, (samples, d)),
                            rng.standard_normal((8, d)) * 1e6])
        v = u + rng.standard_normal(u.shape) * 10.0 ** rng.uniform(-6, 1, (u.shape[0], 1))
        kk = np.full(u.shape[0], int(k))
        fu, fv = pert.f(kk, u), pert.f(kk, v)
        mu, g = float(pert.mu(k)), float(pert.gamma(k))
        sz = np.linalg.norm(fu, axis=1)
        if np.any(sz > mu * (1 + REL_SLACK) + ABS_SLACK):
            i = int(np.argmax(sz))
            return ConditionStatus("d2", VIOLATED, float(sz[i]), {"k": int(k), "size": float(sz[i])},
                                   detail="|f| exceeds mu")
        lip = np.linalg.norm(fu - fv, axis=1) / np.linalg.norm(u - v, axis=1)
        if np.any(lip > g * (1 + 1e-7) + ABS_SLACK):
            i = int(np.argmax(lip))
            return ConditionStatus("d2", VIOLATED, float(lip[i]), {"k": int(k), "ratio": float(lip[i])},
                                   detail="Lipschitz ratio exceeds gamma")
    return ConditionStatus("d2", SATISFIED)


def check_d3_d4(sys: MatrixSequence, cert: DichotomyCertificate, pert: PerturbationModel,
                horizon: int = DEFAULT_HORIZON, strict: bool = False):
    """sup_k sum_j ||G(k, j+1)|| env(j) for env = mu (d3) and gamma (d4)."""
    N = 2 * horizon
    G = green_table(sys, cert, horizon, N + 1)
    norms = np.linalg.norm(G, 2, axis=(-2, -1))[:, 1:N + 1]   # column j is G(k, j+1)
    lh = np.array([cert.log_h(n) for n in range(N + 2)])
    logD = math.log(cert.seq_D(N + 1))
    out = []
    for name, env_fn, series in (("d3", pert.mu, "mu"), ("d4", pert.gamma, "gamma")):
        env = np.array([float(env_fn(j)) for j in range(N + 1)])
        rho = cert.ratio(series, N)
        worst = None
        for k in range(horizon + 1):
            terms = norms[k] * env[:N]
            with np.errstate(divide="ignore"):
                logs = np.log(terms)
                log_tail = (logD + lh[N + 1] - lh[k] + math.log(env[N])) if env[N] > 0 else -math.inf
            # heuristic tails look only at indices past k, where the unstable branch decays
            st = series_status(name, logs[k:] if rho is None else logs, log_tail, rho,
                               strict=strict, start=k,
                               bound=1.0 if name == "d4" else None)
            if rho is None:
                st.value = (st.value or 0.0) + float(np.sum(terms[:k]))
                if name == "d4" and st.ok and not st.value < 1.0:
                    st = ConditionStatus(name, VIOLATED, st.value, {"k": k}, st.tail_mode, "sum >= 1")
            if not st.ok:
                st.witness = dict(st.witness or {}, k=k)
                worst = st
                break
            if worst is None or st.value > worst.value:
                worst = st
        worst.name = name
        out.append(worst)
    return out[0], out[1]


def check_d5(sys: MatrixSequence, pert: PerturbationModel,
             horizon: int = DEFAULT_HORIZON) -> ConditionStatus:
    worst = 0.0
    for l in range(horizon + 1):
        c = opnorm(sys.Ainv(l)) * float(pert.gamma(l))
        worst = max(worst, c)
        if not c < 1.0:
            return ConditionStatus("d5", VIOLATED, c, {"l": l, "value": c})
    return ConditionStatus("d5", SATISFIED, worst)


def check_d6(pert: PerturbationModel) -> ConditionStatus:
    if pert.order >= 1 and len(pert.derivs) >= 1:
        return ConditionStatus("d6", SATISFIED, float(pert.order))
    return ConditionStatus("d6", VIOLATED, float(pert.order), {"order": pert.order},
                           detail="no u-derivative supplied")


def _envelope_logs(sys, pert, m: int, N: int):
    """log Psi_m(j) for j in [m, N]."""
    out = np.empty(N - m + 1)
    out[0] = 0.0
    for i, p in enumerate(range(m, N)):
        out[i + 1] = out[i] + math.log(opnorm(sys.A(p)) + float(pert.gamma(p)))
    return out


def _dh_logs(cert, lo: int, hi: int) -> np.ndarray:
    """log D(j+1) + log h(j+1) for j in [lo, hi]."""
    with np.errstate(divide="ignore"):
        return np.array([math.log(cert.seq_D(j + 1)) if cert.seq_D(j + 1) > 0 else -math.inf
                         for j in range(lo, hi + 1)]) + \
            np.array([cert.log_h(j + 1) for j in range(lo, hi + 1)])


def _safe_log(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(x, dtype=float))


def check_d7(sys: MatrixSequence, cert: DichotomyCertificate, pert: PerturbationModel,
             m: int, horizon: int = DEFAULT_HORIZON, strict: bool = False) -> ConditionStatus:
    N = m + horizon
    gam = np.array([float(pert.gamma(j)) for j in range(m, N + 1)])
    logs = _dh_logs(cert, m, N) + _safe_log(gam) + _envelope_logs(sys, pert, m, N)
    st = series_status("d7", logs[:-1], logs[-1], cert.ratio("d7", N),
                       strict=strict, start=m)
    if st.witness is not None:
        st.witness["m"] = m
    return st


def check_c2_conditions(sys: MatrixSequence, cert: DichotomyCertificate, pert: PerturbationModel,
                        envelopes, m: int, horizon: int = DEFAULT_HORIZON,
                        strict: bool = False) -> ConditionStatus:
    """Summability of D(j+1) h(j+1) [pi_m(j) gamma(j) + Gamma(j) Psi_m(j)^2]."""
    if envelopes is None or not envelopes.has_pi(2):
        raise MissingEnvelope("second-order envelope pi_2 not supplied")
    try:
        pert.gamma_s(2, m)
    except Exception as exc:
        raise MissingEnvelope("second-derivative bound Gamma not supplied") from exc
    N = m + horizon
    logs = np.empty(N - m + 1)
    for i, j in enumerate(range(m, N + 1)):
        gam, Gam = float(pert.gamma(j)), pert.gamma_s(2, j)
        a = envelopes.log_pi(2, j) + math.log(gam) if gam > 0 else -math.inf
        b = math.log(Gam) + 2 * envelopes.log_Psi(j) if Gam > 0 else -math.inf
        logs[i] = np.logaddexp(a, b)
    logs = logs + _dh_logs(cert, m, N)
    st = series_status("c2", logs[:-1], logs[-1], cert.ratio("c2", N),
                       strict=strict, start=m)
    if st.witness is not None:
        st.witness["m"] = m
    return st


def check_all(sys, pert, cert, horizon: int = DEFAULT_HORIZON, anchors=D7_ANCHORS,
              second_order: Optional[bool] = None, pi_overrides=None, samples: int = 64,
              seed: int = 0) -> ConditionReport:
    """Every condition at once; d7 and the C2 series are checked at each anchor m."""
    from .dif import evaluate_dif_condition, expand_D_power
    from .envelopes import GrowthEnvelopes

    st: dict[str, ConditionStatus] = {}
    st["d0"] = check_d0(sys, horizon)
    st["d1"] = check_d1(sys, cert, horizon)
    st["d2"] = check_d2(sys, pert, horizon, samples, seed)
    st["d3"], st["d4"] = check_d3_d4(sys, cert, pert, horizon)
    st["d5"] = check_d5(sys, pert, horizon)
    st["d6"] = check_d6(pert)

    def first_bad(results):
        for r in results:
            if not r.ok:
                return r
        return max(results, key=lambda r: r.value or 0.0)

    st["d7"] = first_bad([check_d7(sys, cert, pert, m, horizon) for m in anchors])
    if second_order is None:
        second_order = pert.order >= 2 and pert.gamma_hi is not None
    if second_order:
        envs = [GrowthEnvelopes(sys, pert, m, horizon, pi_overrides) for m in anchors]
        st["c2"] = first_bad([check_c2_conditions(sys, cert, pert, e, e.m, horizon) for e in envs])
        gs = lambda s, j: pert.gamma_s(s, j)
        for s in (1, 2):
            expr = expand_D_power(s, pert.order)
            st[f"dif{s}"] = first_bad([evaluate_dif_condition(expr, cert, e, gs, e.m, horizon, s=s)
                                       for e in envs])

    M = st["d0"].value if st["d0"].ok else None
    p = st["d3"].value if st["d3"].ok else None
    q = st["d4"].value if st["d4"].ok else None
    return ConditionReport(st, horizon, M, p, q)
