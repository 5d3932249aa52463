"""Growth envelopes for perturbed solutions and their eta-derivatives.

For a fixed anchor m:

* C_m(j), j < m: prod_{i=j}^{m-1} ||A^-1(i)|| / (1 - ||A^-1(i)|| gamma(i))
* B_m(j) = Psi_m(j), j >= m: prod_{p=m}^{j-1} (||A(p)|| + gamma(p))
* A_m(j): C_m below m, 1 at m, B_m above m

and higher-order bounds pi_{s,m}(j) on the s-th derivative of y(j, m, eta),
obtained by taking norms in the variational recurrence

    Y_s(j+1) = A(j) Y_s(j) + sum over set partitions of {1..s} of
               f^{(#blocks)}(j, y(j)) [Y_{|B_1|}, ..., Y_{|B_k|}],

which gives pi_1 = Psi_m and, for s >= 2, pi_s(m) = 0 and
pi_s(j+1) = (||A(j)|| + Gamma_1(j)) pi_s(j) + sum_{k=2}^{s} Gamma_k(j) B_{s,k}(pi_1(j), ...).
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .dif import log_partial_bell
from .errors import MissingEnvelope
from .linalg import opnorm


class GrowthEnvelopes:
    def __init__(self, sys, pert, m: int, horizon: int,
                 pi_overrides: Optional[dict[int, Callable[[int, int], float]]] = None):
        self.sys, self.pert, self.m = sys, pert, int(m)
        self.N = int(m) + int(horizon)
        self._pi_overrides = dict(pi_overrides or {})
        n = self.N + 1
        self._normA = np.array([opnorm(sys.A(k)) for k in range(n)])
        self._normAinv = np.array([opnorm(sys.Ainv(k)) for k in range(n)])
        self._gamma = np.array([float(pert.gamma(k)) for k in range(n)])

        log_psi = np.full(n, -np.inf)
        log_psi[self.m] = 0.0
        for j in range(self.m, self.N):
            log_psi[j + 1] = log_psi[j] + math.log(self._normA[j] + self._gamma[j])
        self._log_psi = log_psi

        log_c = np.full(n, -np.inf)
        log_c[self.m] = 0.0
        for j in range(self.m - 1, -1, -1):
            c = self._normAinv[j] * self._gamma[j]
            log_c[j] = log_c[j + 1] + (math.log(self._normAinv[j] / (1.0 - c))
                                       if c < 1 else math.inf)
        self._log_c = log_c
        self._logpi: dict[int, np.ndarray] = {1: log_psi}

    def log_Psi(self, j: int) -> float:
        return float(self._log_psi[j]) if j >= self.m else -math.inf

    def Psi(self, j: int) -> float:
        return float(np.exp(self._log_psi[j])) if j >= self.m else 0.0

    B = Psi

    def C(self, j: int) -> float:
        if j >= self.m:
            raise ValueError("C_m is defined below the anchor only")
        return float(np.exp(self._log_c[j]))

    def A_env(self, j: int) -> float:
        if j < self.m:
            return self.C(j)
        if j == self.m:
            return 1.0
        return self.Psi(j)

    def has_pi(self, s: int) -> bool:
        if s in self._pi_overrides or s == 1:
            return True
        try:
            for k in range(2, s + 1):
                self.pert.gamma_s(k, self.m)
        except Exception:
            return False
        return True

    def pi(self, s: int, j: int) -> float:
        """Bound on the s-th eta-derivative of y(j, m, eta), j >= m."""
        return math.exp(self.log_pi(s, j))

    def log_pi(self, s: int, j: int) -> float:
        if s in self._pi_overrides:
            v = float(self._pi_overrides[s](self.m, j))
            return math.log(v) if v > 0 else -math.inf
        if j < self.m:
            raise ValueError("pi_{s,m} is defined for j >= m")
        return float(self._log_pi_array(s)[j])

    def _log_pi_array(self, s: int) -> np.ndarray:
        if s in self._logpi:
            return self._logpi[s]
        if not self.has_pi(s):
            raise MissingEnvelope(f"pi_{s} needs derivative envelopes up to order {s}")
        lower = [self._log_pi_array(k) for k in range(1, s)]
        out = np.full(self.N + 1, -np.inf)
        for j in range(self.m, self.N):
            x = [arr[j] for arr in lower]
            acc = math.log(self._normA[j] + self._gamma[j]) + out[j]
            for k in range(2, s + 1):
                gk = self.pert.gamma_s(k, j)
                if gk > 0:
                    acc = np.logaddexp(acc, math.log(gk) + log_partial_bell(s, k, x))
            out[j + 1] = acc
        self._logpi[s] = out
        return out
