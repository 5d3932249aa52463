import sys

import numpy as np
import pytest

from dichequiv import ScenarioParams, make_scenario


def scalar_doubling():
    """A = 2 with every direction unstable, f(k, u) = 0.1 tanh(u) 2^-k."""
    params = ScenarioParams(
        "Custom",
        {"matrix": [[2.0]], "projector": [[0.0]], "W": [[1.0]], "lip": 0.1,
         "tail_ratios": {"mu": 0.25, "gamma": 0.25}},
        {"h": {"geometric": {"scale": 1.0, "ratio": 0.5}},
         "scale": {"geometric": {"scale": 1.0, "ratio": 0.5}}})
    return make_scenario(params)


def newton_z_star(xi: float, m: int, horizon: int, tol: float = 1e-15) -> np.ndarray:
    """Dense Newton solve of the truncated fixed-point system for scalar_doubling.

    Unknowns z(0..horizon-1); G(n, j+1) = -2^(n-j-1) for n <= j and 0 otherwise.
    """
    n = np.arange(horizon)
    G = np.where(n[:, None] <= n[None, :], -(2.0 ** (n[:, None] - n[None, :] - 1.0)), 0.0)
    x = xi * 2.0 ** (n - m)
    amp = 0.1 * 2.0 ** -n
    z = np.zeros(horizon)
    for _ in range(50):
        u = x + z
        F = z - G @ (amp * np.tanh(u))
        t = np.tanh(u)
        Jac = np.eye(horizon) - G * (amp * (1.0 - t * t))[None, :]
        step = np.linalg.solve(Jac, F)
        z -= step
        if np.max(np.abs(step)) < tol:
            break
    return z


@pytest.fixture(scope="session")
def scalar_scenario():
    return scalar_doubling()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
