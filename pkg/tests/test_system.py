import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dichequiv import (MatrixSequence, PerturbationModel, backward_step, forward_step,
                       green_operator, green_table, preset, solve_trajectory, transition_matrix)
from dichequiv.errors import ContractionViolated, MissingDerivative
from dichequiv.linalg import multilinear_norm_bound, opnorm, random_orthogonal, rotation

EX189 = preset("Ex189")
EX188 = preset("Ex188")

idx = st.integers(min_value=0, max_value=12)


@settings(max_examples=60, deadline=None)
@given(idx, idx, idx)
def test_transition_cocycle(k, n, l):
    sys = EX189.sys
    lhs = transition_matrix(sys, k, n) @ transition_matrix(sys, n, l)
    assert np.allclose(lhs, transition_matrix(sys, k, l), atol=1e-9, rtol=1e-9)


def test_transition_identity_and_step():
    sys = EX188.sys
    assert np.array_equal(transition_matrix(sys, 5, 5), np.eye(3))
    assert np.allclose(transition_matrix(sys, 4, 3), sys.A(3))
    assert np.allclose(transition_matrix(sys, 3, 4), sys.Ainv(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=15))
def test_green_jump_is_identity(n):
    # G(n, n) - A(n-1) G(n-1, n) = P(n) + Q(n)
    sys, cert = EX189.sys, EX189.cert
    jump = green_operator(sys, cert, n, n) - sys.A(n - 1) @ green_operator(sys, cert, n - 1, n)
    assert np.allclose(jump, np.eye(sys.dim), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(idx, idx)
def test_green_solves_homogeneous_equation_off_diagonal(k, n):
    if k + 1 == n:
        return
    sys, cert = EX188.sys, EX188.cert
    assert np.allclose(green_operator(sys, cert, k + 1, n),
                       sys.A(k) @ green_operator(sys, cert, k, n), atol=1e-12)


def test_green_table_matches_pointwise():
    sys, cert = EX189.sys, EX189.cert
    tab = green_table(sys, cert, 6, 10)
    for k in range(7):
        for n in range(11):
            assert np.allclose(tab[k, n], green_operator(sys, cert, k, n), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10), st.lists(st.floats(-50, 50), min_size=3, max_size=3))
def test_backward_inverts_forward(k, v):
    sys, pert = EX188.sys, EX188.pert
    v = np.array(v)
    w = forward_step(sys, pert, k, v)
    assert np.allclose(backward_step(sys, pert, k, w), v, atol=1e-10 * (1 + np.abs(v).max()))


def test_backward_needs_contraction():
    sys = MatrixSequence.constant([[0.5]])
    pert = PerturbationModel(lambda k, u: 1.0 * u, lambda k: 1.0, lambda k: 1.0)
    with pytest.raises(ContractionViolated):
        backward_step(sys, pert, 0, np.array([1.0]))


def test_trajectory_round_trip():
    sys, pert = EX188.sys, EX188.pert
    traj = solve_trajectory(sys, pert, 4, np.array([1.0, -2.0, 0.5]), (0, 10))
    for k in range(10):
        assert np.allclose(traj(k + 1), forward_step(sys, pert, k, traj(k)), atol=1e-10)
    with pytest.raises(ValueError):
        traj(-1)


def test_constant_sequence_bound():
    sys = MatrixSequence.constant(np.diag([2.0, 0.25]))
    assert sys.bound_M == pytest.approx(4.0)
    assert sys.stack(0, 3).shape == (3, 2, 2)


def test_missing_derivative():
    pert = PerturbationModel.zero(2, order=1)
    with pytest.raises(MissingDerivative):
        pert.deriv(2, 0, np.zeros(2))
    with pytest.raises(MissingDerivative):
        pert.gamma_s(2, 0)


def test_scaled_perturbation_scales_envelopes():
    p = EX188.pert.scaled(-3.0)
    u = np.array([0.3, -0.1, 2.0])
    assert np.allclose(p.f(2, u), -3.0 * EX188.pert.f(2, u))
    assert p.gamma(2) == pytest.approx(3.0 * EX188.pert.gamma(2))
    assert p.gamma_s(2, 2) == pytest.approx(3.0 * EX188.pert.gamma_s(2, 2))


def test_linalg_helpers():
    rng = np.random.default_rng(1)
    q = random_orthogonal(4, rng)
    assert np.allclose(q.T @ q, np.eye(4), atol=1e-12)
    assert opnorm(q) == pytest.approx(1.0)
    r = rotation(3, 0.4, axis=1)
    assert np.allclose(r @ r.T, np.eye(3))
    # bilinear map (u, v) -> u1 * v : norm 1
    t = np.zeros((2, 2, 2))
    t[0, 0, 0] = t[1, 0, 1] = 1.0
    assert multilinear_norm_bound(t) >= 1.0 - 1e-12
    stack = np.stack([np.eye(2), 2 * np.eye(2)])
    assert np.allclose(opnorm(stack), [1.0, 2.0])
