"""Equivalence maps H, G between the linear and the perturbed system.

With x(j) = Phi(j, m) xi a linear solution, z* is the fixed point of

    (Theta z)(n) = sum_{j>=0} G(n, j+1) f(j, x(j) + z(j)),

and with y(., m, eta) a perturbed solution,

    w*(n; (m, eta)) = -sum_{j>=0} G(n, j+1) f(j, y(j, m, eta)).

Then H(k, xi) = xi + z*(k; (k, xi)) and G(k, eta) = eta + w*(k; (k, eta)).

Sums are truncated at j < J.  The truncated Theta still satisfies
z(n+1) = A(n) z(n) + f(n, x(n) + z(n)) exactly for n < J, because the Green
table obeys G(n+1, j+1) - A(n) G(n, j+1) = delta_{nj} I row by row.

Derivatives.  Differentiating y(j+1) = A(j) y(j) + f(j, y(j)) in eta gives

    Y1(j+1) = [A(j) + f'(j, y(j))] Y1(j),                      Y1(m) = I,
    Y2(j+1) = [A(j) + f'(j, y(j))] Y2(j) + f''(j, y(j))[Y1(j), Y1(j)],  Y2(m) = 0,

run backward below m by inverting A(j) + f'(j, y(j)), which (d5) keeps
nonsingular.  Then

    dw*(n)  = -sum_j G(n, j+1) f'(j, y(j)) Y1(j),
    d2w*(n) = -sum_j G(n, j+1) (f'(j, y(j)) Y2(j) + f''(j, y(j))[Y1(j), Y1(j)]),

and dG(k, eta) = Phi(k, 0)[Y1(0) + dw*(0)], d2G likewise with Y2, while
dH(k, xi) = dG(k, H(k, xi))^-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificates import check_d3_d4, check_d5, heuristic_tail
from .envelopes import GrowthEnvelopes
from .errors import (MissingDerivative, NoConvergence, PolicyRejected, PreconditionFailed,
                     SingularJacobian, TailUnbounded)
from .system import backward_step, green_table, transition_matrix

_EPS = np.finfo(float).eps
COND_LIMIT = 1e12


@dataclass(frozen=True)
class TruncationPolicy:
    series_horizon: int = 128
    fp_tol: float = 1e-10
    fd_step: float = 1e-5
    max_iters: int = 1000
    # anchors up to this index are covered by the tail budget checked at construction
    k_max: int = 8
    horizon: int = 200

    def __post_init__(self):
        if self.series_horizon < 1:
            raise ValueError("series_horizon must be >= 1")
        if not self.fp_tol > 0 or not self.fd_step > 0:
            raise ValueError("fp_tol and fd_step must be positive")
        if self.max_iters < 1 or self.k_max < 0 or self.horizon < 1:
            raise ValueError("max_iters, horizon must be positive and k_max nonnegative")
        if self.k_max >= self.series_horizon:
            raise ValueError("k_max must be below the series horizon")


def _key(m, v):
    return (int(m), np.asarray(v, dtype=float).tobytes())


class ConjugacyEngine:
    """Truncated-series evaluation of z*, w*, H, G and their derivatives.

    ``p`` and ``q`` come from the d3/d4 check unless supplied.  Construction
    fails with PreconditionFailed when q >= 1 and with PolicyRejected when the
    truncation error bound on H at anchors k <= policy.k_max exceeds fp_tol.
    """

    def __init__(self, scenario, policy: Optional[TruncationPolicy] = None,
                 p: Optional[float] = None, q: Optional[float] = None, check_budget: bool = True):
        self.scenario = scenario
        self.sys, self.pert, self.cert = scenario.sys, scenario.pert, scenario.cert
        self.policy = policy or TruncationPolicy()
        self.J = J = self.policy.series_horizon
        if p is None or q is None:
            d3, d4 = check_d3_d4(self.sys, self.cert, self.pert, self.policy.horizon)
            if not d4.ok:
                raise PreconditionFailed("d4", d4.detail or f"q = {d4.value}")
            p, q = (d3.value if d3.ok else math.inf), d4.value
        if not q < 1:
            raise PreconditionFailed("d4", f"q = {q:.6g} >= 1")
        self.p, self.q = float(p), float(q)
        scale = float(getattr(scenario, "engine_f_scale", 1.0))
        self._fscale = scale
        self._green = green_table(self.sys, self.cert, J, J)
        # Gm[(n, a), (j, b)] = G(n, j+1)[a, b] for n, j in [0, J)
        d = self.sys.dim
        self._Gm = self._green[:J, 1:J + 1].transpose(0, 2, 1, 3).reshape(J * d, J * d)
        self._js = np.arange(J)
        self._cache: dict = {}
        self._gamma = np.array([float(self.pert.gamma(j)) for j in range(J + 1)])
        self._mu = np.array([float(self.pert.mu(j)) for j in range(J + 1)])
        self._tau_cache = None
        self.tail_mode = "certified"
        if check_budget:
            worst = max(self.truncation_bound("H", k) for k in range(self.policy.k_max + 1))
            if not worst <= self.policy.fp_tol:
                raise PolicyRejected(f"tail bound {worst:.3g} at J={J} exceeds fp_tol "
                                     f"{self.policy.fp_tol:g}")

    # -- perturbation as seen by the engine ---------------------------------

    def _f(self, k, u):
        out = self.pert.f(k, u)
        return out if self._fscale == 1.0 else self._fscale * out

    def _df(self, k, u):
        out = self.pert.deriv(1, k, u)
        return out if self._fscale == 1.0 else self._fscale * out

    def _d2f(self, k, u):
        out = self.pert.deriv(2, k, u)
        return out if self._fscale == 1.0 else self._fscale * out

    # -- paths ---------------------------------------------------------------

    def linear_path(self, m: int, xi) -> np.ndarray:
        """x(j) = Phi(j, m) xi for j in [0, J]."""
        key = ("x",) + _key(m, xi)
        if key in self._cache:
            return self._cache[key]
        J, m = self.J, int(m)
        out = np.empty((max(J, m) + 1, self.sys.dim))
        out[m] = xi
        for j in range(m, J):
            out[j + 1] = self.sys.A(j) @ out[j]
        for j in range(m - 1, -1, -1):
            out[j] = self.sys.Ainv(j) @ out[j + 1]
        out = out[:J + 1]
        self._cache[key] = out
        return out

    def perturbed_path(self, m: int, eta) -> np.ndarray:
        """y(j, m, eta) for j in [0, J]; backward steps below m need (d5)."""
        key = ("y",) + _key(m, eta)
        if key in self._cache:
            return self._cache[key]
        J, m = self.J, int(m)
        out = np.empty((max(J, m) + 1, self.sys.dim))
        out[m] = eta
        for j in range(m, J):
            out[j + 1] = self.sys.A(j) @ out[j] + self._f(j, out[j])
        if m > 0:
            d5 = check_d5(self.sys, self.pert, m - 1)
            if not d5.ok:
                raise PreconditionFailed("d5", f"backward continuation at l={d5.witness['l']}")
            pert = self.pert if self._fscale == 1.0 else self.pert.scaled(self._fscale)
            for j in range(m - 1, -1, -1):
                out[j] = backward_step(self.sys, pert, j, out[j + 1], tol=0.0)
        out = out[:J + 1]
        self._cache[key] = out
        return out

    # -- z* and w* -------------------------------------------------------------

    def z_star_path(self, m: int, xi) -> np.ndarray:
        """The truncated fixed point z*(n; (m, xi)) for n in [0, J]."""
        key = ("z",) + _key(m, xi)
        if key in self._cache:
            return self._cache[key]
        J, d = self.J, self.sys.dim
        X = self.linear_path(m, xi)[:J]
        z = np.zeros((J, d))
        stop = self.policy.fp_tol * (1.0 - self.q)
        for _ in range(self.policy.max_iters):
            F = self._f(self._js, X + z)
            nxt = (self._Gm @ F.reshape(-1)).reshape(J, d)
            delta = float(np.max(np.abs(nxt - z))) if J else 0.0
            z = nxt
            scale = float(np.max(np.abs(z))) if z.size else 0.0
            if delta <= stop or delta <= 8 * _EPS * scale:
                break
        else:
            raise NoConvergence(f"Picard iteration did not reach {stop:.3g} in "
                                f"{self.policy.max_iters} steps (last update {delta:.3g})")
        F = self._f(self._js, X + z)
        zJ = np.einsum("jab,jb->a", self._green[J, 1:J + 1], F)
        out = np.vstack([z, zJ[None]])
        self._cache[key] = out
        return out

    def compute_z_star(self, k: int, m: int, xi) -> np.ndarray:
        self._check_index(k)
        return self.z_star_path(m, xi)[int(k)].copy()

    def w_star_row(self, n: int, m: int, eta) -> np.ndarray:
        Y = self.perturbed_path(m, eta)[:self.J]
        F = self._f(self._js, Y)
        return -np.einsum("jab,jb->a", self._green[int(n), 1:self.J + 1], F)

    def compute_w_star(self, k: int, m: int, eta) -> np.ndarray:
        self._check_index(k)
        return self.w_star_row(k, m, eta)

    def _check_index(self, k):
        if not 0 <= int(k) <= self.J:
            raise ValueError(f"index {k} outside [0, {self.J}]")

    # -- maps ----------------------------------------------------------------

    def map_H(self, k: int, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return xi + self.compute_z_star(k, k, xi)

    def map_G(self, k: int, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return eta + self.compute_w_star(k, k, eta)

    def map_G_alternate(self, k: int, eta) -> np.ndarray:
        y0 = self.perturbed_path(k, eta)[0]
        return transition_matrix(self.sys, int(k), 0) @ (y0 + self.w_star_row(0, k, eta))

    # -- variational equations -------------------------------------------------

    def variational(self, m: int, eta, order: int = 1):
        """(Y1, Y2) on [0, J]; Y2 is None when order < 2."""
        key = ("v", order) + _key(m, eta)
        if key in self._cache:
            return self._cache[key]
        if self.pert.order < order:
            raise MissingDerivative(f"perturbation has order {self.pert.order} < {order}")
        J, m, d = self.J, int(m), self.sys.dim
        Y = self.perturbed_path(m, eta)
        js = np.arange(J + 1)
        df = self._df(js, Y)
        d2f = self._d2f(js, Y) if order >= 2 else None
        live = None if d2f is None else np.any(d2f != 0, axis=(1, 2, 3))
        Y1 = np.empty((J + 1, d, d))
        Y2 = np.zeros((J + 1, d, d, d)) if order >= 2 else None
        Y1[m] = np.eye(d)
        for j in range(m, J):
            M = self.sys.A(j) + df[j]
            Y1[j + 1] = M @ Y1[j]
            if Y2 is not None:
                Y2[j + 1] = np.einsum("ip,pab->iab", M, Y2[j])
                if live[j]:
                    Y2[j + 1] += np.einsum("ipq,pa,qb->iab", d2f[j], Y1[j], Y1[j])
        for j in range(m - 1, -1, -1):
            M = self.sys.A(j) + df[j]
            Y1[j] = np.linalg.solve(M, Y1[j + 1])
            if Y2 is not None:
                rhs = Y2[j + 1].copy()
                if live[j]:
                    rhs -= np.einsum("ipq,pa,qb->iab", d2f[j], Y1[j], Y1[j])
                Y2[j] = np.linalg.solve(M, rhs.reshape(d, d * d)).reshape(d, d, d)
        out = (Y1, Y2, df, d2f, live)
        self._cache[key] = out
        return out

    def _dw_row(self, n: int, m: int, eta) -> np.ndarray:
        Y1, _, df, _, _ = self.variational(m, eta, 1)
        J = self.J
        terms = np.einsum("jab,jbc->jac", df[:J], Y1[:J])
        return -np.einsum("jab,jbc->ac", self._green[int(n), 1:J + 1], terms)

    def _d2w_row(self, n: int, m: int, eta) -> np.ndarray:
        Y1, Y2, df, d2f, live = self.variational(m, eta, 2)
        J = self.J
        terms = np.einsum("jip,jpab->jiab", df[:J], Y2[:J])
        idx = np.nonzero(live[:J])[0]
        if idx.size:
            terms[idx] += np.einsum("jipq,jpa,jqb->jiab", d2f[idx], Y1[idx], Y1[idx])
        return -np.einsum("jxi,jiab->xab", self._green[int(n), 1:J + 1], terms)

    def jacobian_w_star(self, m: int, eta) -> np.ndarray:
        """d/d eta of w*(0; (m, eta))."""
        return self._dw_row(0, m, eta)

    def hessian_w_star(self, m: int, eta) -> np.ndarray:
        """Second eta-derivative of w*(0; (m, eta)), indexed [component, a, b]."""
        return self._d2w_row(0, m, eta)

    def jacobian_G(self, k: int, eta) -> np.ndarray:
        Y1 = self.variational(k, eta, 1)[0]
        phi = transition_matrix(self.sys, int(k), 0)
        return phi @ (Y1[0] + self._dw_row(0, k, eta))

    def hessian_G(self, k: int, eta) -> np.ndarray:
        Y2 = self.variational(k, eta, 2)[1]
        phi = transition_matrix(self.sys, int(k), 0)
        return np.einsum("xi,iab->xab", phi, Y2[0] + self._d2w_row(0, k, eta))

    def jacobian_H(self, k: int, xi) -> np.ndarray:
        JG = self.jacobian_G(k, self.map_H(k, xi))
        cond = np.linalg.cond(JG)
        if not cond < COND_LIMIT:
            raise SingularJacobian(f"dG at k={k} has condition number {cond:.3g}")
        return np.linalg.inv(JG)

    # -- truncation error bounds -----------------------------------------------

    def _tau(self) -> np.ndarray:
        """Bound on sum_{j>=J} ||G(n, j+1)|| mu(j) for n in [0, J)."""
        if self._tau_cache is not None:
            return self._tau_cache
        J, cert = self.J, self.cert
        DJ = cert.seq_D(J + 1)
        out = np.empty(J)
        rho = cert.ratio("mu", J)
        norms = None
        for n in range(J):
            if rho is not None:
                log_t = (math.log(DJ) + cert.log_h(J + 1) - cert.log_h(n) + math.log(self._mu[J])
                         if DJ > 0 and self._mu[J] > 0 else -math.inf)
                out[n] = math.exp(log_t) / (1 - rho) if log_t > -math.inf else 0.0
            else:
                self.tail_mode = "heuristic"
                if norms is None:
                    norms = np.linalg.norm(self._green, 2, axis=(-2, -1))
                terms = norms[n, n + 1:J + 1] * self._mu[n:J]
                with np.errstate(divide="ignore"):
                    logs = np.log(terms)
                try:
                    out[n] = heuristic_tail(logs, 0.0) if logs.size >= 4 else math.inf
                except TailUnbounded:
                    out[n] = math.inf
        self._tau_cache = out
        return out

    def _propagated_tau(self) -> np.ndarray:
        """(I - K)^-1 tau with K[n, j] = ||G(n, j+1)|| gamma(j); bounds |z_J - z*|."""
        key = ("ptau",)
        if key in self._cache:
            return self._cache[key]
        J = self.J
        tau = self._tau()
        if not np.all(np.isfinite(tau)):
            out = np.full(J, math.inf)
        else:
            K = np.linalg.norm(self._green[:J, 1:J + 1], 2, axis=(-2, -1)) * self._gamma[:J]
            out = np.linalg.solve(np.eye(J) - K, tau)
            out = np.maximum(out, tau)
        self._cache[key] = out
        return out

    def _series_tail(self, series: str, k: int) -> float:
        """Tail from J of the d7 (order 1) or C2 (order 2) terms anchored at k, over h(k)."""
        J, cert = self.J, self.cert
        rho = cert.ratio(series, J)
        if rho is None:
            return math.inf
        env = GrowthEnvelopes(self.sys, self.pert, k, J - k)
        gam = float(self.pert.gamma(J))
        if series == "d7":
            inner = math.log(gam) + env.log_Psi(J) if gam > 0 else -math.inf
        else:
            Gam = self.pert.gamma_s(2, J)
            a = env.log_pi(2, J) + math.log(gam) if gam > 0 else -math.inf
            b = math.log(Gam) + 2 * env.log_Psi(J) if Gam > 0 else -math.inf
            inner = float(np.logaddexp(a, b))
        DJ = cert.seq_D(J + 1)
        if DJ <= 0 or inner == -math.inf:
            return 0.0
        log_t = math.log(DJ) + cert.log_h(J + 1) + inner - cert.log_h(k)
        return math.exp(log_t) / (1 - rho) * abs(self._fscale)

    def truncation_bound(self, what: str, k: int) -> float:
        """Bound on |value at J - value at J = infinity| for the named quantity at anchor k.

        ``what`` is one of H, G, dG, d2G, dw, d2w.  inf means no certified bound.
        """
        if what == "H":
            return float(self._propagated_tau()[k])
        if what == "G":
            return float(self._tau()[k])
        if what in ("dG", "dw"):
            t = self._series_tail("d7", k)
            return t if what == "dG" else t * math.exp(self.cert.log_h(k))
        if what in ("d2G", "d2w"):
            t = self._series_tail("c2", k)
            return t if what == "d2G" else t * math.exp(self.cert.log_h(k))
        raise ValueError(f"unknown quantity {what!r}")


class ConjugacyMap:
    """H or G bound to an engine, callable as map(k, point)."""

    def __init__(self, engine: ConjugacyEngine, direction: str):
        if direction not in ("H", "G"):
            raise ValueError("direction must be H or G")
        self.engine, self.direction = engine, direction

    @property
    def p(self):
        return self.engine.p

    @property
    def q(self):
        return self.engine.q

    def __call__(self, k, point):
        e = self.engine
        return e.map_H(k, point) if self.direction == "H" else e.map_G(k, point)

    def jacobian(self, k, point):
        e = self.engine
        return e.jacobian_H(k, point) if self.direction == "H" else e.jacobian_G(k, point)
