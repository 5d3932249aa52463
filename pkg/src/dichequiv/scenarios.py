"""Preset and user-defined scenarios: coefficients, perturbation, dichotomy data.

Every preset is three-dimensional unless stated otherwise and uses the
perturbation f(k, u) = s(k) L tanh(W u + c) with W orthogonal, for which

    |f| <= s L sqrt(d),  Lip f = s L,  |f''| <= s L 4 / (3 sqrt 3).

Tail ratios are derived by hand for each preset from closed forms of D, h and
the envelopes; see the comments next to each ``tail_ratios`` dict.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .certificates import DichotomyCertificate
from .errors import ConfigError, InvalidParams
from .linalg import opnorm, random_orthogonal, rotation
from .system import MatrixSequence, PerturbationModel

VARIANTS = ("Cor175", "Cor176", "C2Corollary", "Ex187", "Ex188", "Ex189", "Custom")
TANH2_MAX = 4.0 / (3.0 * math.sqrt(3.0))   # max |tanh''|
VALIDATION_HORIZON = 400


class Seq:
    """Real sequence on n >= 0, evaluated lazily into a growing table.

    Accepts integer scalars or integer arrays.  ``ratio`` is an upper bound on
    s(n+1)/s(n) valid for n >= 1, when known in closed form.
    """

    def __init__(self, fn: Callable[[int], float], ratio: Optional[float] = None,
                 l1: Optional[float] = None, log_fn: Optional[Callable[[int], float]] = None):
        self.fn, self.ratio, self._l1, self.log_fn = fn, ratio, l1, log_fn
        self._table = np.zeros(0)

    def _grow(self, n: int):
        if n < self._table.size:
            return
        size = max(n + 1, 2 * self._table.size, 64)
        extra = np.array([float(self.fn(i)) for i in range(self._table.size, size)])
        self._table = np.concatenate([self._table, extra])

    def __call__(self, k):
        if np.ndim(k) == 0:
            k = int(k)
            self._grow(k)
            return float(self._table[k])
        k = np.asarray(k, dtype=int)
        if k.size:
            self._grow(int(k.max()))
        return self._table[k]

    def log(self, n: int) -> float:
        if self.log_fn is not None:
            return float(self.log_fn(n))
        v = self(n)
        return math.log(v) if v > 0 else -math.inf

    def l1(self, start: int = 1) -> float:
        """sum_{n >= start} |s(n)|."""
        if self._l1 is not None and start == 1:
            return self._l1
        if self.ratio is not None and self.ratio < 1:
            head = sum(abs(self(n)) for n in range(start, 64))
            return head + abs(self(64)) / (1 - self.ratio)
        raise InvalidParams("cannot bound the l1 norm of this sequence")

    @classmethod
    def constant(cls, value: float):
        v = float(value)
        return cls(lambda n: v, ratio=1.0 if v else 0.0,
                   log_fn=(lambda n: math.log(v)) if v > 0 else None)

    @classmethod
    def geometric(cls, scale: float, ratio: float):
        s, r = float(scale), float(ratio)
        l1 = s * r / (1 - r) if 0 <= r < 1 else math.inf
        log_fn = (lambda n: math.log(s) + n * math.log(r)) if s > 0 and r > 0 else None
        return cls(lambda n: s * r ** n, ratio=r, l1=l1, log_fn=log_fn)

    @classmethod
    def power(cls, scale: float, exponent: float, offset: float = 0.0, at0: Optional[float] = None):
        s, e, o = float(scale), float(exponent), float(offset)
        z = (o + s) if at0 is None else float(at0)
        return cls(lambda n: z if n == 0 else o + s * float(n) ** e)

    @classmethod
    def explicit(cls, values, fill: float = 0.0):
        vals = [float(v) for v in values]
        f = float(fill)
        l1 = sum(abs(v) for v in vals[1:]) if f == 0 else math.inf
        return cls(lambda n: vals[n] if n < len(vals) else f, l1=l1)


def parse_seq(desc) -> Seq:
    if isinstance(desc, Seq):
        return desc
    if isinstance(desc, (int, float)):
        return Seq.constant(desc)
    if isinstance(desc, list):
        return Seq.explicit(desc)
    if not isinstance(desc, dict) or len(desc) != 1:
        raise ConfigError(f"sequence must be a single-key tag, got {desc!r}")
    (tag, body), = desc.items()
    try:
        if tag == "constant":
            return Seq.constant(body if not isinstance(body, dict) else body["value"])
        if tag == "geometric":
            return Seq.geometric(body.get("scale", 1.0), body["ratio"])
        if tag == "power":
            return Seq.power(body.get("scale", 1.0), body["exponent"], body.get("offset", 0.0),
                             body.get("at0"))
        if tag in ("explicit", "explicit-list"):
            if isinstance(body, dict):
                return Seq.explicit(body["values"], body.get("fill", 0.0))
            return Seq.explicit(body)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad {tag} sequence: {exc}") from exc
    raise ConfigError(f"unknown sequence tag {tag!r}")


@dataclass
class ScenarioParams:
    variant: str
    constants: dict = field(default_factory=dict)
    sequences: dict = field(default_factory=dict)

    def with_overrides(self, **kw) -> "ScenarioParams":
        out = copy.deepcopy(self)
        out.constants.update(kw)
        return out

    def to_dict(self) -> dict:
        return {"variant": self.variant, "constants": self.constants, "sequences": self.sequences}

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioParams":
        if "variant" not in data:
            raise ConfigError("configuration lacks a variant tag")
        if data["variant"] not in VARIANTS:
            raise ConfigError(f"unknown variant {data['variant']!r}; choose from {VARIANTS}")
        return cls(data["variant"], dict(data.get("constants", {})),
                   dict(data.get("sequences", {})))


def load_config(path) -> ScenarioParams:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return ScenarioParams.from_dict(data)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    params: ScenarioParams
    sys: MatrixSequence
    pert: PerturbationModel
    cert: DichotomyCertificate
    # alternative pi_2 envelope written as a plain product of Gamma values
    pi_product: Optional[Callable[[int, int], float]] = None
    engine_f_scale: float = 1.0

    def __iter__(self):
        return iter((self.sys, self.pert, self.cert))

    def with_perturbation(self, pert: PerturbationModel) -> "Scenario":
        return replace(self, pert=pert)

    def unperturbed(self) -> "Scenario":
        return replace(self, name=self.name + "+f0",
                       pert=PerturbationModel.zero(self.sys.dim, max(self.pert.order, 2)))


def tanh_perturbation(scale: Seq, W, c, lip: float = 1.0, mu: Optional[Callable] = None
                      ) -> PerturbationModel:
    """f(k, u) = scale(k) lip tanh(W u + c), vectorized in k and u."""
    W = np.array(W, dtype=float, ndmin=2)
    c = np.array(c, dtype=float)
    d = W.shape[0]
    L = float(lip)

    def amp(k):
        return L * scale(k)

    def f(k, u):
        u = np.asarray(u, dtype=float)
        a = amp(k)
        return np.asarray(a)[..., None] * np.tanh(u @ W.T + c)

    def df(k, u):
        u = np.asarray(u, dtype=float)
        t = np.tanh(u @ W.T + c)
        a = np.asarray(amp(k))[..., None, None]
        return a * (1.0 - t * t)[..., :, None] * W

    def d2f(k, u):
        u = np.asarray(u, dtype=float)
        t = np.tanh(u @ W.T + c)
        a = np.asarray(amp(k))[..., None, None, None]
        t2 = -2.0 * t * (1.0 - t * t)
        return a * t2[..., :, None, None] * W[:, :, None] * W[:, None, :]

    Wn = opnorm(W)
    gamma = lambda k: L * Wn * scale(k)
    if mu is None:
        mu = lambda k: L * math.sqrt(d) * scale(k)
    hi = lambda s, k: L * Wn * Wn * TANH2_MAX * scale(k) if s == 2 else _no_order(s)
    return PerturbationModel(f, gamma, mu, 2, (df, d2f), hi)


def _no_order(s):
    from .errors import MissingDerivative
    raise MissingDerivative(f"no envelope for derivative of order {s}")


def _const(params: ScenarioParams, key: str, default=None):
    v = params.constants.get(key, default)
    if v is None:
        raise InvalidParams(f"missing constant {key}")
    return v


def _require(ok: bool, what: str):
    if not ok:
        raise InvalidParams(f"constraint violated: {what}")


_W3 = rotation(3, 0.9, 0) @ rotation(3, 0.4, 1)
_C3 = np.array([0.3, -0.2, 0.1])


# -- presets ---------------------------------------------------------------

def _cor175(p: ScenarioParams) -> Scenario:
    theta = float(_const(p, "theta", 0.1))
    M = float(_const(p, "M", 2.0))
    gamma = float(_const(p, "gamma", 0.4))
    D = float(_const(p, "D", 1.0))
    _require(0 < theta < 1, "theta in (0,1)")
    _require(M * gamma < 1, "M gamma < 1")
    _require(D * gamma / (1 - theta) < 1, "D gamma / (1 - theta) < 1")
    _require(theta * (M + gamma) < 1, "theta (M + gamma) < 1")
    # Realization: all directions unstable, ||A|| = 1/theta.  No coefficients with
    # ||A|| <= M can meet both dichotomy inequalities for D=1, h=theta^n.
    R = rotation(3, 0.7, 0) @ rotation(3, 0.3, 1)
    A, Ainv = R / theta, theta * R.T
    # the declared bound is the realized one; M only enters the constraints above
    sys = MatrixSequence(3, lambda k: A, lambda k: Ainv, 1.0 / theta)
    pert = tanh_perturbation(Seq.constant(gamma), _W3, _C3)
    lt = math.log(theta)
    # D h(j+1)/h(k) env(j) with constant envelopes shrinks by theta per step;
    # the d7 terms grow by theta (||A|| + gamma) > 1 here, so no certificate.
    ratios = {"mu": theta, "gamma": theta, "dif0": theta}
    cert = DichotomyCertificate.from_projector(np.zeros((3, 3)), lambda n: D, lambda n: n * lt, ratios)
    return Scenario("Cor175", p, sys, pert, cert)


def _exp_rotations(lam: float):
    s = math.exp(-lam)

    def A(k):
        return s * rotation(3, 0.3 + 0.1 * k, k % 3)

    def Ainv(k):
        return rotation(3, 0.3 + 0.1 * k, k % 3).T / s
    return A, Ainv


def _cor176_like(p: ScenarioParams, name: str, defaults: dict, second_order: bool) -> Scenario:
    g = {k: float(_const(p, k, v)) for k, v in defaults.items()}
    C, lam, eps, nu, kappa, tau, M = (g[k] for k in ("C", "lambda", "epsilon", "nu", "kappa", "tau", "M"))
    _require(C >= 1 and lam > 0 and eps >= 0 and nu >= 0, "C >= 1, lambda > 0, epsilon >= 0, nu >= 0")
    _require(tau > eps - lam, "tau > epsilon - lambda")
    if second_order:
        _require(M * M * math.exp(-lam) < 1, "M^2 exp(-lambda) < 1")
    else:
        _require(M * math.exp(-lam) < 1, "M exp(-lambda) < 1")
    _require(math.exp(-lam) <= M, "||A(k)|| = exp(-lambda) <= M")
    # the realized |f| <= nu sqrt(3) e^{-eps(k+1)} must sit under kappa e^{-tau(k+1)}
    _require(nu * math.sqrt(3) <= kappa and tau <= eps, "nu sqrt(3) <= kappa and tau <= epsilon")
    A, Ainv = _exp_rotations(lam)
    sys = MatrixSequence(3, A, Ainv, max(M, math.exp(lam)))
    scale = Seq.geometric(nu * math.exp(-eps), math.exp(-eps))
    mu = lambda k: kappa * np.exp(-tau * (np.asarray(k) + 1.0))
    pert = tanh_perturbation(scale, _W3, _C3, mu=mu)
    psi = math.exp(-lam) + nu * math.exp(-eps)
    # D(j+1) h(j+1) grows by e^{eps - lambda}; mu, gamma decay by e^{-tau}, e^{-eps};
    # Psi grows by at most psi; pi_2 by at most psi (1 + e^{-eps} psi).
    d7 = math.exp(-lam) * psi
    c2 = math.exp(-lam) * psi * (1 + math.exp(-eps) * psi)
    ratios = {"mu": math.exp(eps - lam - tau), "gamma": math.exp(-lam),
              "dif0": math.exp(eps - lam - tau), "d7": d7, "dif1": d7, "c2": c2, "dif2": c2}
    cert = DichotomyCertificate.from_projector(np.eye(3), lambda n: C * math.exp(eps * n),
                                               lambda n: -lam * n, ratios)
    zeta = nu * TANH2_MAX

    def pi_product(m, j):
        return math.prod(zeta * math.exp(-eps * (i + 1)) for i in range(m, j))
    return Scenario(name, p, sys, pert, cert, pi_product=pi_product)


def _cor176(p):
    return _cor176_like(p, "Cor176", dict(C=1.0, **{"lambda": 1.0}, epsilon=0.2, nu=0.05,
                                          kappa=1.0, tau=0.0, M=1.0), False)


def _c2cor(p):
    return _cor176_like(p, "C2Corollary", dict(C=1.0, **{"lambda": 0.5}, epsilon=0.1, nu=0.05,
                                               kappa=1.0, tau=0.0, M=1.2), True)


def _ex18x(p: ScenarioParams, name: str) -> Scenario:
    ex187 = name == "Ex187"
    seqs = p.sequences
    if ex187:
        c = parse_seq(seqs.get("c", {"power": {"scale": 1.0, "exponent": -2, "offset": 1.0, "at0": 1.0}}))
        af, bf = float(_const(p, "a_factor", 0.9)), float(_const(p, "b_factor", 1.0))
        a = Seq(lambda n: af / c(n))
        b = Seq(lambda n: bf / c(n))
        L = float(_const(p, "g_lip", 0.5))
    else:
        c = parse_seq(seqs.get("c", {"constant": 1.0}))
        a = parse_seq(seqs.get("a", p.constants.get("a", 0.5)))
        b = parse_seq(seqs.get("b", p.constants.get("b", 0.6)))
        L = float(_const(p, "g_lip", 1.0))
    r = parse_seq(seqs.get("r", {"geometric": {"scale": 0.5, "ratio": 0.5}}))
    H = VALIDATION_HORIZON
    cv = c(np.arange(H + 1))
    av, bv, rv = a(np.arange(H + 1)), b(np.arange(H + 1)), r(np.arange(H + 1))
    M = float(_const(p, "M", float(np.max(cv))))
    alpha = float(_const(p, "alpha", float(min(av.min(), bv.min()))))
    _require(alpha > 0, "alpha > 0")
    tol = 1e-12
    _require(bool(np.all(av >= alpha - tol) and np.all(bv >= alpha - tol)), "alpha <= a_n, b_n")
    _require(bool(np.all(av <= 1 / cv + tol) and np.all(bv <= 1 / cv + tol)), "a_n, b_n <= 1/c_n")
    _require(bool(np.all(cv >= 1 - tol) and np.all(cv <= M + tol)), "1 <= c_n <= M")
    _require(bool(np.all(rv >= 0)), "r_n >= 0")
    r1 = r.l1()
    _require(math.isfinite(r1), "r summable")
    if not ex187:
        _require(r1 < 1, "||r||_1 < 1")

    S = np.concatenate([[0.0], np.cumsum(rv[1:])])          # S[n] = r_1 + ... + r_n

    def gp(n):
        # the gamma_n of the construction; index 0 carries no perturbation
        if n == 0:
            return 0.0
        if n - 1 < S.size:
            s = S[n - 1]
        else:
            s = S[-1] + sum(r(i) for i in range(S.size, n))
        return r(n) * (c(n) if ex187 else 1.0) / (1.0 + s)

    gseq = Seq(gp)
    if ex187:
        for k in range(2, H + 1):
            val = cv[k - 1] * rv[k - 1] / (1 + S[k - 2]) + (r1 - rv[k - 1])
            _require(val < 1, f"standing condition at k={k} ({val:.4g} >= 1)")

    def A(n):
        return np.diag([a(n), b(n), c(n)])

    def Ainv(n):
        return np.diag([1 / a(n), 1 / b(n), 1 / c(n)])
    bound = max(M, float(np.max(1 / np.minimum(av, bv))))
    sys = MatrixSequence(3, A, Ainv, bound)
    pert = tanh_perturbation(gseq, _W3, _C3, lip=L)

    logc = np.log(cv)
    cum = np.concatenate([[0.0, 0.0], np.cumsum(logc[1:])])   # cum[n] = sum_{p=1}^{n-1} log c_p

    def log_h(n):
        if n < cum.size:
            return -float(cum[n])
        return -float(cum[-1]) - sum(math.log(c(p)) for p in range(cum.size - 1, n))

    ratios = {}
    c_desc = seqs.get("c")
    c_nonincreasing = (c_desc is None or "constant" in c_desc or
                       ("power" in c_desc and c_desc["power"].get("exponent", 0) < 0
                        and c_desc["power"].get("scale", 1.0) >= 0))
    if r.ratio is not None and r.ratio < 1 and c_nonincreasing:
        # For j >= 1, gamma_{j+1}/gamma_j times h(j+2)/h(j+1) telescopes to
        # (r_{j+1}/r_j)(1+S_{j-1})/(1+S_j)/c_j <= ratio(r); the d7 factor adds
        # (c_j + gamma_j)/c_j <= 1 + L r_j.
        rr = r.ratio
        ratios = {"mu": (rr, 1), "gamma": (rr, 1), "dif0": (rr, 1)}
        d7 = rr * (1 + L * float(np.max(rv[1:])))
        ratios["d7"] = ratios["dif1"] = (d7, 1)
        # pi_2 grows by at most a_j + rho_g a_{j-1}^2 with a_j = c_j + gamma_j, so
        # from j0 on the C2 terms shrink by rr (1 + L r_j0) + rr^2 a_{j0-1}^2.
        j0 = 16
        a_sup = c(j0 - 1) * (1 + L * r(j0 - 1))
        c2 = rr * (1 + L * r(j0)) + rr * rr * a_sup * a_sup
        ratios["c2"] = ratios["dif2"] = (c2, j0)
    P = np.diag([1.0, 1.0, 0.0])
    cert = DichotomyCertificate.from_projector(P, lambda n: 1.0, log_h, ratios)
    return Scenario(name, p, sys, pert, cert)


def _ex189(p: ScenarioParams) -> Scenario:
    a, b, c = (float(_const(p, k, v)) for k, v in (("a", 0.5), ("b", 0.6), ("c", 1.5)))
    delta = float(_const(p, "delta", 0.5))
    seed = int(_const(p, "seed", 189))
    L = float(_const(p, "g_lip", 1.0))
    identity = bool(p.constants.get("identity_E", False))
    _require(0 < a <= 1 / c and 0 < b <= 1 / c and c >= 1, "0 < a, b <= 1/c <= 1 <= c")
    gam = parse_seq(p.sequences.get("gamma", {"geometric": {"scale": 1.0, "ratio": 0.25}}))
    gamma = Seq(lambda n: 0.0 if n == 0 else gam(n), ratio=gam.ratio)

    cache: dict[int, np.ndarray] = {}

    def E(n):
        if n not in cache:
            if n == 0 or identity:
                cache[n] = np.eye(3)
            else:
                cache[n] = random_orthogonal(3, np.random.default_rng([seed, n]))
        return cache[n]

    ns = range(VALIDATION_HORIZON + 1)
    e_plus = max(opnorm(E(n)) for n in ns)
    e_minus = max(opnorm(E(n).T) for n in ns)
    _require(abs(e_plus * e_minus - 1) < 1e-9, "E(n) orthogonal (bounded with bounded inverse)")
    _require(gam.ratio is not None and gam.ratio * (e_minus * e_plus + delta) < 1,
             "sum_j gamma_j (E- E+ + delta)^j < infinity")
    base = np.diag([a, b, c])
    base_inv = np.diag([1 / a, 1 / b, 1 / c])

    def B(n):
        return E(n + 1).T @ base @ E(n)

    def Binv(n):
        return E(n).T @ base_inv @ E(n + 1)
    sys = MatrixSequence(3, B, Binv, max(c, 1 / min(a, b)) * e_plus * e_minus)
    pert = tanh_perturbation(gamma, _W3, _C3, lip=L)
    P = np.diag([1.0, 1.0, 0.0])
    Pt = lambda n: E(n).T @ P @ E(n)
    Qt = lambda n: E(n).T @ (np.eye(3) - P) @ E(n)
    lc = math.log(c)
    # D constant, h shrinks by 1/c, gamma by its ratio; d7 adds ||B|| + gamma <= c + gamma_1
    rg = gam.ratio / c
    a = c * e_plus * e_minus + gam(1)
    d7 = rg * a
    c2 = rg * (a + gam.ratio * a * a)
    ratios = {"mu": (rg, 1), "gamma": (rg, 1), "dif0": (rg, 1), "d7": (d7, 1), "dif1": (d7, 1),
              "c2": (c2, 1), "dif2": (c2, 1)}
    cert = DichotomyCertificate(Pt, Qt, lambda n: e_minus * opnorm(E(n)), lambda n: -n * lc, ratios)
    return Scenario("Ex189", p, sys, pert, cert)


def _custom(p: ScenarioParams) -> Scenario:
    k = p.constants
    if "matrix" in k:
        A0 = np.array(k["matrix"], dtype=float, ndmin=2)
        d = A0.shape[0]
        sys = MatrixSequence.constant(A0, k.get("bound_M"))
    elif "diagonal" in p.sequences:
        diag = [parse_seq(s) for s in p.sequences["diagonal"]]
        d = len(diag)
        sys = MatrixSequence(d, lambda n: np.diag([s(n) for s in diag]),
                             lambda n: np.diag([1 / s(n) for s in diag]),
                             float(k.get("bound_M", math.inf)))
    else:
        raise ConfigError("Custom scenario needs constants.matrix or sequences.diagonal")
    P = np.array(k.get("projector", np.eye(d)), dtype=float, ndmin=2)
    if P.shape != (d, d):
        raise ConfigError(f"projector shape {P.shape} does not match dimension {d}")
    Dseq = parse_seq(p.sequences.get("D", {"constant": 1.0}))
    hseq = parse_seq(p.sequences.get("h", {"constant": 1.0}))
    scale = parse_seq(p.sequences.get("scale", {"constant": 0.0}))
    kind = k.get("kind", "tanh")
    if kind == "zero":
        pert = PerturbationModel.zero(d)
    elif kind == "tanh":
        W = np.array(k.get("W", np.eye(d)), dtype=float, ndmin=2)
        c = np.array(k.get("offset", np.zeros(d)), dtype=float)
        pert = tanh_perturbation(scale, W, c, lip=float(k.get("lip", 1.0)))
    else:
        raise ConfigError(f"unknown perturbation kind {kind!r}")
    cert = DichotomyCertificate.from_projector(P, Dseq, hseq.log, dict(k.get("tail_ratios", {})))
    return Scenario("Custom", p, sys, pert, cert)


_BUILDERS = {"Cor175": _cor175, "Cor176": _cor176, "C2Corollary": _c2cor,
             "Ex187": lambda p: _ex18x(p, "Ex187"), "Ex188": lambda p: _ex18x(p, "Ex188"),
             "Ex189": _ex189, "Custom": _custom}


def make_scenario(params: ScenarioParams) -> Scenario:
    if params.variant not in _BUILDERS:
        raise ConfigError(f"unknown variant {params.variant!r}")
    sc = _BUILDERS[params.variant](params)
    sab = params.constants.get("sabotage", {})
    if sab:
        sc = replace(sc, engine_f_scale=float(sab.get("engine_f_scale", 1.0)))
    if "gamma_scale" in params.constants:
        sc = sc.with_perturbation(sc.pert.scaled(float(params.constants["gamma_scale"])))
    if params.constants.get("f_zero"):
        sc = sc.unperturbed()
    return sc


def preset(name: str, **overrides) -> Scenario:
    return make_scenario(ScenarioParams(name, dict(overrides)))


PRESETS = ("Cor175", "Cor176", "C2Corollary", "Ex187", "Ex188", "Ex189")
