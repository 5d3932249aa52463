"""Symbolic derivation on products of derivative envelopes.

Monomials are Gamma_s * prod_k pi_k^{e_k} with integer coefficients, where
Gamma_s bounds the s-th u-derivative of the perturbation and pi_k bounds the
k-th eta-derivative of perturbed solutions.  The derivation acts by

    D(Gamma_s) = Gamma_{s+1} pi_1,   D(pi_k) = pi_{k+1},   Leibniz on products,

seeded at a formal symbol Gamma_0.  Repeated application reproduces the
Faa di Bruno pattern; coefficient sums are Bell numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import MissingEnvelope, OrderOverflow

_SUB = str.maketrans("0123456789", "₀₁₂₃₄₅₆₇₈₉")
_SUP = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


@dataclass(frozen=True, order=False)
class DifTerm:
    """coefficient * Gamma_s * prod pi_k^{e_k}; ``gamma_index`` None means no Gamma factor."""

    coefficient: int
    gamma_index: Optional[int]
    pi_exponents: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        exps = {}
        for k, e in self.pi_exponents:
            if k < 1 or e < 0:
                raise ValueError(f"bad pi factor ({k}, {e})")
            exps[k] = exps.get(k, 0) + e
        canon = tuple(sorted((k, e) for k, e in exps.items() if e))
        object.__setattr__(self, "pi_exponents", canon)

    @property
    def key(self):
        return (self.gamma_index, self.pi_exponents)

    def max_pi(self) -> int:
        return max((k for k, _ in self.pi_exponents), default=0)


def _sort_key(term: DifTerm):
    s = -1 if term.gamma_index is None else term.gamma_index
    # descending s, then exponent vector read from pi_1 upward, larger first
    width = max(term.max_pi(), 1)
    exps = dict(term.pi_exponents)
    return (-s, tuple(-exps.get(k, 0) for k in range(1, width + 1)))


class DifExpression:
    """Integer combination of DifTerms kept in canonical form."""

    __slots__ = ("terms",)

    def __init__(self, terms=()):
        acc: dict = {}
        for t in terms:
            acc[t.key] = acc.get(t.key, 0) + t.coefficient
        merged = [DifTerm(c, s, e) for (s, e), c in acc.items() if c != 0]
        self.terms = tuple(sorted(merged, key=_sort_key))

    @classmethod
    def gamma(cls, s: int) -> "DifExpression":
        return cls([DifTerm(1, s)])

    @classmethod
    def pi(cls, k: int, e: int = 1) -> "DifExpression":
        return cls([DifTerm(1, None, ((k, e),))])

    def __eq__(self, other):
        return isinstance(other, DifExpression) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __bool__(self):
        return bool(self.terms)

    def __iter__(self) -> Iterator[DifTerm]:
        return iter(self.terms)

    def __add__(self, other):
        return DifExpression(self.terms + other.terms)

    def __mul__(self, other):
        if isinstance(other, int):
            return DifExpression(DifTerm(other * t.coefficient, t.gamma_index, t.pi_exponents)
                                 for t in self.terms)
        out = []
        for a in self.terms:
            for b in other.terms:
                if a.gamma_index is not None and b.gamma_index is not None:
                    raise ValueError("product of two Gamma factors is not representable")
                s = a.gamma_index if a.gamma_index is not None else b.gamma_index
                out.append(DifTerm(a.coefficient * b.coefficient, s,
                                   a.pi_exponents + b.pi_exponents))
        return DifExpression(out)

    __rmul__ = __mul__

    def coefficients(self) -> list[int]:
        return [t.coefficient for t in self.terms]

    def __repr__(self):
        return f"DifExpression({format_expression(self)!r})"

    def __str__(self):
        return format_expression(self)


def canonicalize(expr: DifExpression) -> DifExpression:
    return DifExpression(expr.terms)


def _d_term(term: DifTerm, r: int) -> list[DifTerm]:
    out = []
    c, s, exps = term.coefficient, term.gamma_index, dict(term.pi_exponents)
    if s is not None:
        if s >= r:
            raise OrderOverflow(f"D(Gamma_{s}) needs Gamma_{s + 1} beyond r={r}")
        new = dict(exps)
        new[1] = new.get(1, 0) + 1
        out.append(DifTerm(c, s + 1, tuple(new.items())))
    for k, e in exps.items():
        if k >= r:
            raise OrderOverflow(f"D(pi_{k}) needs pi_{k + 1} beyond r={r}")
        new = dict(exps)
        new[k] -= 1
        new[k + 1] = new.get(k + 1, 0) + 1
        out.append(DifTerm(c * e, s, tuple(new.items())))
    return out


def apply_D(expr: DifExpression, r: int) -> DifExpression:
    out = []
    for t in expr.terms:
        out.extend(_d_term(t, r))
    return DifExpression(out)


def expand_D_power(s: int, r: Optional[int] = None) -> DifExpression:
    """D^s applied to the seed Gamma_0, with orders capped at r (default r = s)."""
    if r is None:
        r = s
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s > r:
        raise OrderOverflow(f"D^{s}(Gamma_0) needs Gamma_{s} beyond r={r}")
    expr = DifExpression.gamma(0)
    for _ in range(s):
        expr = apply_D(expr, r)
    return expr


def format_term(t: DifTerm) -> str:
    parts = []
    if t.gamma_index is not None:
        parts.append(f"Γ_{t.gamma_index}")
    for k, e in sorted(t.pi_exponents, reverse=True):
        sym = "π" + str(k).translate(_SUB)
        if e > 1:
            sym += str(e).translate(_SUP)
        parts.append(sym)
    if not parts:
        return str(t.coefficient)
    body = "·".join(parts)
    if t.coefficient == 1:
        return body
    if t.coefficient == -1:
        return "-" + body
    return f"{t.coefficient}·{body}"


def format_expression(expr: DifExpression) -> str:
    if not expr.terms:
        return "0"
    out = format_term(expr.terms[0])
    for t in expr.terms[1:]:
        s = format_term(t)
        out += " - " + s[1:] if s.startswith("-") else " + " + s
    return out


def to_json_terms(expr: DifExpression) -> list[dict]:
    return [{"coefficient": t.coefficient, "gamma": t.gamma_index,
             "pi": {str(k): e for k, e in t.pi_exponents}} for t in expr.terms]


def from_json_terms(data) -> DifExpression:
    if isinstance(data, str):
        data = json.loads(data)
    return DifExpression(DifTerm(int(d["coefficient"]), d["gamma"],
                                 tuple((int(k), int(e)) for k, e in d["pi"].items()))
                         for d in data)


# -- combinatorics ---------------------------------------------------------

def set_partitions(n: int):
    """All set partitions of {0, ..., n-1}, each as a list of blocks."""
    if n == 0:
        yield []
        return
    for part in set_partitions(n - 1):
        for i in range(len(part)):
            yield part[:i] + [part[i] + [n - 1]] + part[i + 1:]
        yield part + [[n - 1]]


@lru_cache(maxsize=None)
def _bell_coeffs(n: int, k: int) -> tuple:
    """Partial Bell polynomial B_{n,k} as ((multiplicity, exponent tuple), ...)."""
    if n == 0 and k == 0:
        return ((1, ()),)
    if n == 0 or k == 0:
        return ()
    acc: dict = {}
    for i in range(1, n - k + 2):
        c = math.comb(n - 1, i - 1)
        for mult, exps in _bell_coeffs(n - i, k - 1):
            e = list(exps) + [0] * max(0, i - len(exps))
            e[i - 1] += 1
            key = tuple(e)
            acc[key] = acc.get(key, 0) + c * mult
    return tuple((m, e) for e, m in sorted(acc.items()))


def partial_bell(n: int, k: int, x) -> float:
    """B_{n,k}(x_1, ..., x_{n-k+1}) with ``x[i - 1]`` standing for x_i."""
    total = 0.0
    for mult, exps in _bell_coeffs(n, k):
        term = float(mult)
        for i, e in enumerate(exps):
            if e:
                term *= x[i] ** e
        total += term
    return total


def log_partial_bell(n: int, k: int, logx) -> float:
    """log B_{n,k} from log x_i; all x_i are nonnegative."""
    logs = []
    for mult, exps in _bell_coeffs(n, k):
        v = math.log(mult)
        for i, e in enumerate(exps):
            if e:
                v += e * logx[i]
        logs.append(v)
    return _logsum(logs)


def _logsum(logs) -> float:
    logs = [v for v in logs if v > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    if top == math.inf:
        return math.inf
    return top + math.log(sum(math.exp(v - top) for v in logs))


# -- numeric evaluation ----------------------------------------------------

def evaluate_expression(expr: DifExpression, j: int, gamma_eval: Callable[[int, int], float],
                        pi_eval: Callable[[int, int], float]) -> float:
    total = 0.0
    for t in expr.terms:
        v = float(t.coefficient)
        if t.gamma_index is not None:
            v *= gamma_eval(t.gamma_index, j)
        for k, e in t.pi_exponents:
            if v == 0.0:
                break
            v *= pi_eval(k, j) ** e
        total += v
    return total


def log_evaluate_expression(expr: DifExpression, j: int, gamma_eval, log_pi_eval) -> float:
    """log of the expression value, for nonnegative coefficients and inputs."""
    logs = []
    for t in expr.terms:
        if t.coefficient < 0:
            raise ValueError("log evaluation needs nonnegative coefficients")
        v = math.log(t.coefficient) if t.coefficient else -math.inf
        if t.gamma_index is not None:
            g = gamma_eval(t.gamma_index, j)
            v += math.log(g) if g > 0 else -math.inf
        for k, e in t.pi_exponents:
            if v == -math.inf:
                break
            v += e * log_pi_eval(k, j)
        logs.append(v)
    return _logsum(logs)


def evaluate_dif_condition(expr: DifExpression, cert, envelopes, gamma_s: Callable[[int, int], float],
                           m: int, horizon: int, s: Optional[int] = None, strict: bool = False):
    """Summability of sum_{j>=m} D(j+1) h(j+1) expr(j).

    ``gamma_s(s, j)`` must evaluate every Gamma symbol occurring in ``expr``
    (Gamma_0 included, when present); pi symbols come from ``envelopes``.
    ``s`` selects the certified tail ratio ``dif{s}`` when the certificate has one.
    """
    from .certificates import series_status

    needed_g = {t.gamma_index for t in expr.terms if t.gamma_index is not None}
    needed_pi = {k for t in expr.terms for k, _ in t.pi_exponents}
    for g in needed_g:
        try:
            gamma_s(g, m)
        except Exception as exc:
            raise MissingEnvelope(f"no evaluator for Gamma_{g}") from exc
    for k in needed_pi:
        if not envelopes.has_pi(k):
            raise MissingEnvelope(f"no envelope for pi_{k}")

    N = m + horizon
    logs = np.empty(N - m + 1)
    for idx, j in enumerate(range(m, N + 1)):
        v = log_evaluate_expression(expr, j, gamma_s, envelopes.log_pi)
        dj = cert.seq_D(j + 1)
        logs[idx] = (v + math.log(dj) + cert.log_h(j + 1)) if dj > 0 else -math.inf
    key = f"dif{s}" if s is not None else None
    ratio = cert.ratio(key, N) if key else None
    name = f"DIF{s}" if s is not None else "DIF"
    return series_status(name, logs[:-1], logs[-1], ratio, strict=strict, start=m)
