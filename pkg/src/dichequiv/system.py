"""Linear and perturbed nonautonomous difference systems.

The linear system is x(k+1) = A(k) x(k) on the nonnegative integers and the
perturbed one is y(k+1) = A(k) y(k) + f(k, y(k)).  Everything here is dense
double precision; dimensions are small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractionViolated, MissingDerivative, NoConvergence
from .linalg import opnorm, vnorm

BACKWARD_MAX_ITERS = 10_000
_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class MatrixSequence:
    """Coefficients A(k) of the linear system, with inverses and the d0 bound.

    ``coeff`` and ``inv_coeff`` are called at most once per index; results are
    memoized.  When ``inv_coeff`` is omitted the inverse is computed numerically.
    """

    dim: int
    coeff: Callable[[int], np.ndarray]
    inv_coeff: Optional[Callable[[int], np.ndarray]] = None
    bound_M: float = math.inf
    _a: dict = field(default_factory=dict, repr=False)
    _ainv: dict = field(default_factory=dict, repr=False)

    @classmethod
    def constant(cls, matrix, bound_M=None):
        a = np.array(matrix, dtype=float, ndmin=2)
        ainv = np.linalg.inv(a)
        if bound_M is None:
            bound_M = max(opnorm(a), opnorm(ainv))
        return cls(a.shape[0], lambda k: a, lambda k: ainv, float(bound_M))

    def A(self, k: int) -> np.ndarray:
        try:
            return self._a[k]
        except KeyError:
            a = np.array(self.coeff(k), dtype=float, ndmin=2)
            a.setflags(write=False)
            self._a[k] = a
            return a

    def Ainv(self, k: int) -> np.ndarray:
        try:
            return self._ainv[k]
        except KeyError:
            if self.inv_coeff is None:
                a = np.linalg.inv(self.A(k))
            else:
                a = np.array(self.inv_coeff(k), dtype=float, ndmin=2)
            a.setflags(write=False)
            self._ainv[k] = a
            return a

    def stack(self, lo: int, hi: int) -> np.ndarray:
        """A(k) for k in [lo, hi) as an array of shape (hi - lo, d, d)."""
        if hi <= lo:
            return np.zeros((0, self.dim, self.dim))
        return np.stack([self.A(k) for k in range(lo, hi)])


def _zero_f(k, u):
    return np.zeros_like(np.asarray(u, dtype=float))


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """Nonlinear term f(k, u) with its u-derivatives and bounding sequences.

    ``f`` must broadcast: it accepts either an integer k with u of shape (d,),
    or an integer array k of shape (n,) with u of shape (n, d).  The same holds
    for each entry of ``derivs`` (``derivs[s - 1]`` is the s-th derivative,
    returning arrays with s trailing axes of length d).

    ``gamma`` bounds the Lipschitz constant of f(k, .), ``mu`` bounds |f(k, .)|,
    and ``gamma_hi(s, k)`` bounds the s-th derivative for s >= 2.
    """

    f: Callable
    gamma: Callable[[int], float]
    mu: Callable[[int], float]
    order: int = 0
    derivs: tuple = ()
    gamma_hi: Optional[Callable[[int, int], float]] = None

    @classmethod
    def zero(cls, dim: int, order: int = 2):
        def d1(k, u):
            u = np.asarray(u, dtype=float)
            return np.zeros(u.shape + (u.shape[-1],))

        def d2(k, u):
            u = np.asarray(u, dtype=float)
            return np.zeros(u.shape + (u.shape[-1], u.shape[-1]))

        return cls(_zero_f, lambda k: 0.0, lambda k: 0.0, order, (d1, d2)[:order],
                   lambda s, k: 0.0)

    def deriv(self, s: int, k, u):
        if s < 1 or s > self.order or s > len(self.derivs):
            raise MissingDerivative(f"derivative of order {s} not available "
                                    f"(order={self.order})")
        return self.derivs[s - 1](k, u)

    def gamma_s(self, s: int, k: int) -> float:
        if s == 1:
            return float(self.gamma(k))
        if s < 1 or s > self.order or self.gamma_hi is None:
            raise MissingDerivative(f"no envelope for derivative of order {s}")
        return float(self.gamma_hi(s, k))

    def scaled(self, factor: float) -> "PerturbationModel":
        """The perturbation factor * f, with envelopes scaled to match."""
        derivs = tuple((lambda d: lambda k, u: factor * d(k, u))(d) for d in self.derivs)
        hi = None
        if self.gamma_hi is not None:
            hi = lambda s, k: abs(factor) * self.gamma_hi(s, k)
        return PerturbationModel(
            lambda k, u: factor * self.f(k, u),
            lambda k: abs(factor) * self.gamma(k),
            lambda k: abs(factor) * self.mu(k),
            self.order, derivs, hi)


def transition_matrix(sys: MatrixSequence, k: int, n: int) -> np.ndarray:
    """Phi(k, n): forward product for k > n, identity, inverse product for k < n."""
    out = np.eye(sys.dim)
    if k > n:
        for i in range(n, k):
            out = sys.A(i) @ out
    elif k < n:
        for i in range(k, n):
            out = out @ sys.Ainv(i)
    return out


def green_operator(sys: MatrixSequence, cert, k: int, n: int) -> np.ndarray:
    phi = transition_matrix(sys, k, n)
    if k >= n:
        return phi @ cert.proj_P(n)
    return -phi @ cert.proj_Q(n)


def green_table(sys: MatrixSequence, cert, K: int, N: int) -> np.ndarray:
    """Green operator G[k, n] for 0 <= k <= K, 0 <= n <= N, shape (K+1, N+1, d, d).

    Products are re-projected at every step (P(k+1) A(k) on the stable branch,
    Q(k) A^-1(k) on the unstable one), which uses projector invariance to keep
    rounding errors from leaking into the complementary, exponentially growing
    directions.
    """
    d = sys.dim
    P = [np.asarray(cert.proj_P(n), dtype=float) for n in range(max(K, N) + 1)]
    Q = [np.asarray(cert.proj_Q(n), dtype=float) for n in range(max(K, N) + 1)]
    out = np.zeros((K + 1, N + 1, d, d))

    # stable branch, k >= n: sweep k upward
    row = np.zeros((N + 1, d, d))
    for k in range(K + 1):
        if k > 0:
            lim = min(k, N + 1)
            step = P[k] @ sys.A(k - 1)
            row[:lim] = np.einsum("ab,nbc->nac", step, row[:lim])
        if k <= N:
            row[k] = P[k]
        out[k, : min(k, N) + 1] = row[: min(k, N) + 1]

    # unstable branch, k < n: sweep k downward from N - 1
    row = np.zeros((N + 1, d, d))
    for k in range(N - 1, -1, -1):
        step = Q[k] @ sys.Ainv(k)
        if k + 2 <= N:
            row[k + 2:] = np.einsum("ab,nbc->nac", step, row[k + 2:])
        row[k + 1] = -step @ Q[k + 1]
        if k <= K:
            out[k, k + 1:] = row[k + 1:]
    return out


def forward_step(sys: MatrixSequence, pert: Optional[PerturbationModel], k: int, v):
    v = np.asarray(v, dtype=float)
    out = sys.A(k) @ v
    if pert is not None:
        out = out + pert.f(k, v)
    return out


def backward_step(sys: MatrixSequence, pert: Optional[PerturbationModel], k: int, w,
                  tol: float = 1e-14, max_iters: int = BACKWARD_MAX_ITERS):
    """Solve w = A(k) v + f(k, v) for v by the contraction v -> A^-1(k)(w - f(k, v))."""
    w = np.asarray(w, dtype=float)
    ainv = sys.Ainv(k)
    v = ainv @ w
    if pert is None:
        return v
    c = opnorm(ainv) * float(pert.gamma(k))
    if c >= 1.0:
        raise ContractionViolated(f"||A^-1({k})|| gamma({k}) = {c:.6g} >= 1")
    if c == 0.0:
        return v
    stop = tol * (1.0 - c) / c
    for _ in range(max_iters):
        nxt = ainv @ (w - pert.f(k, v))
        delta = vnorm(nxt - v)
        v = nxt
        if delta <= stop or delta <= 4 * _EPS * max(vnorm(v), vnorm(w)):
            return v
    raise NoConvergence(f"backward step at k={k} did not converge in {max_iters} "
                        f"iterations (last update {delta:.3e})")


class Trajectory:
    """Solution through (m, value), evaluated on demand and memoized.

    Indices below the anchor use backward steps, which need (d5) on the
    indices crossed when the trajectory is perturbed.
    """

    def __init__(self, sys: MatrixSequence, pert: Optional[PerturbationModel], m: int,
                 value, tol: float = 1e-14):
        self.sys = sys
        self.pert = pert
        self.kind = "linear" if pert is None else "perturbed"
        self.anchor = (int(m), np.array(value, dtype=float))
        self.tol = tol
        self._vals = {int(m): self.anchor[1]}
        self._lo = self._hi = int(m)

    def __call__(self, k: int) -> np.ndarray:
        return self.samples(k)

    def samples(self, k: int) -> np.ndarray:
        k = int(k)
        if k < 0:
            raise ValueError("trajectories live on the nonnegative integers")
        while k > self._hi:
            self._vals[self._hi + 1] = forward_step(self.sys, self.pert, self._hi,
                                                    self._vals[self._hi])
            self._hi += 1
        while k < self._lo:
            self._vals[self._lo - 1] = backward_step(self.sys, self.pert, self._lo - 1,
                                                     self._vals[self._lo], self.tol)
            self._lo -= 1
        return self._vals[k]

    def array(self, lo: int, hi: int) -> np.ndarray:
        """Samples for k in [lo, hi] stacked into shape (hi - lo + 1, d)."""
        self.samples(lo)
        self.samples(hi)
        return np.stack([self._vals[k] for k in range(lo, hi + 1)])


def solve_trajectory(sys: MatrixSequence, pert: Optional[PerturbationModel], m: int, v0,
                     krange: tuple[int, int], tol: float = 1e-14) -> Trajectory:
    traj = Trajectory(sys, pert, m, v0, tol)
    traj.array(*krange)
    return traj
