import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dichequiv import (ConditionReport, DichotomyCertificate, GrowthEnvelopes, MatrixSequence,
                       PerturbationModel, check_all, check_c2_conditions, check_d0, check_d1,
                       check_d3_d4, check_d5, check_d7, green_operator, preset)
from dichequiv.certificates import heuristic_tail, series_status
from dichequiv.errors import MissingEnvelope, TailUnbounded
from dichequiv.scenarios import PRESETS


@pytest.fixture(scope="module")
def reports():
    return {n: check_all(*preset(n), horizon=200) for n in PRESETS}


@pytest.mark.parametrize("name", ["Cor176", "C2Corollary"])
def test_certified_presets_satisfy_everything(reports, name):
    rep = reports[name]
    assert rep.all_satisfied(), rep.to_text()
    assert rep.tail_mode == "certified"


@pytest.mark.parametrize("name", ["Ex187", "Ex188", "Ex189"])
def test_examples_meet_equivalence_hypotheses(reports, name):
    rep = reports[name]
    for c in ("d0", "d2", "d3", "d4", "d5", "d6", "d7"):
        assert rep[c].ok, (c, rep[c])
    assert rep["d1"].acceptable
    assert rep.q < 1


def test_single_branch_q_matches_closed_form(reports):
    # all directions unstable with ||Phi(k, n)|| = theta^(n-k): the Green sum is
    # gamma * sum_{i>=1} theta^i = gamma theta / (1 - theta)
    sc = preset("Cor175")
    theta, gamma = 0.1, 0.4
    rep = reports["Cor175"]
    assert rep.q == pytest.approx(gamma * theta / (1 - theta), rel=1e-9)
    assert rep.q <= 4 / 9 + 1e-12
    assert rep.p == pytest.approx(sc.pert.mu(0) * theta / (1 - theta), rel=1e-9)


def test_d4_against_brute_force_green_sum():
    sc = preset("Ex189")
    d3, d4 = check_d3_d4(sc.sys, sc.cert, sc.pert, horizon=40)
    brute = max(sum(np.linalg.norm(green_operator(sc.sys, sc.cert, k, j + 1), 2) * sc.pert.gamma(j)
                    for j in range(120)) for k in range(41))
    # the reported value adds a certified tail beyond the horizon, never less
    assert brute <= d4.value * (1 + 1e-9)
    assert d4.value - brute < 1e-6


def test_lipschitz_envelope_sum_bounded_by_l1_norm(reports):
    # with c_n = 1 the d7 terms at every anchor sum to at most sum_{n>=1} r_n = 1/2
    assert reports["Ex188"]["d7"].value <= 0.5 + 1e-9


def test_unrealizable_corollary_constants_diverge(reports):
    rep = reports["Cor175"]
    assert rep["d7"].status == "violated"
    assert rep["d7"].witness["rate"] == pytest.approx(0.1 * (10 + 0.4), rel=1e-6)


def test_d0_flags_declared_bound():
    sys = MatrixSequence.constant(np.diag([3.0, 0.5]), bound_M=2.0)
    st_ = check_d0(sys, 5)
    assert st_.status == "violated" and st_.witness["k"] == 0


def test_d1_rejects_bad_projector():
    sys = MatrixSequence.constant(np.diag([0.5, 2.0]))
    bad = DichotomyCertificate(lambda n: np.array([[1.0, 1.0], [0.0, 0.5]]),
                               lambda n: np.eye(2) - np.array([[1.0, 1.0], [0.0, 0.5]]),
                               lambda n: 1.0, lambda n: n * math.log(0.5))
    assert check_d1(sys, bad, 10).detail == "projector algebra"


def test_d1_accepts_exact_dichotomy():
    sys = MatrixSequence.constant(np.diag([0.5, 2.0]))
    cert = DichotomyCertificate.from_projector(np.diag([1.0, 0.0]), lambda n: 1.0,
                                               lambda n: n * math.log(0.5))
    st_ = check_d1(sys, cert, 30)
    assert st_.ok and st_.value == pytest.approx(1.0)


def test_d1_horizon_limited_when_h_barely_decays():
    sys = MatrixSequence.constant([[0.999]])
    cert = DichotomyCertificate.from_projector([[1.0]], lambda n: 1.0,
                                               lambda n: n * math.log(0.999))
    assert check_d1(sys, cert, 50).status == "horizon-limited"


def test_d5_reports_first_failure():
    sys = MatrixSequence.constant([[0.5]])
    pert = PerturbationModel(lambda k, u: 0 * u, lambda k: 0.1 if k < 3 else 0.6, lambda k: 0.0)
    st_ = check_d5(sys, pert, 10)
    assert st_.status == "violated" and st_.witness["l"] == 3


def test_c2_needs_envelopes():
    sys, pert, cert = preset("Ex188")
    with pytest.raises(MissingEnvelope):
        check_c2_conditions(sys, cert, pert, None, 0)
    first = PerturbationModel.zero(3, order=1)
    env = GrowthEnvelopes(sys, first, 0, 20)
    with pytest.raises(MissingEnvelope):
        check_c2_conditions(sys, cert, first, env, 0, 20)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 0.95), st.integers(5, 60))
def test_certified_geometric_tail_is_exact(rho, n):
    logs = np.arange(n) * math.log(rho)
    s = series_status("x", logs, n * math.log(rho), rho)
    assert s.ok and s.tail_mode == "certified"
    assert s.value == pytest.approx(1 / (1 - rho), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 0.9), st.integers(16, 80))
def test_heuristic_tail_dominates_true_geometric_tail(rho, n):
    logs = np.arange(n) * math.log(rho)
    tail = heuristic_tail(logs, rho ** n)
    assert tail >= rho ** n / (1 - rho) * (1 - 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 3.0), st.integers(8, 50))
def test_growing_series_is_violated(rate, n):
    logs = np.arange(n) * math.log(rate)
    s = series_status("x", logs, n * math.log(rate), None)
    assert s.status == "violated"
    with pytest.raises(TailUnbounded):
        series_status("x", logs, n * math.log(rate), None, strict=True)


def test_ratio_start_index():
    cert = DichotomyCertificate.from_projector([[1.0]], lambda n: 1.0, lambda n: -n,
                                               {"a": 0.5, "b": (0.5, 10), "c": 1.0})
    assert cert.ratio("a", 0) == 0.5
    assert cert.ratio("b", 9) is None and cert.ratio("b", 10) == 0.5
    assert cert.ratio("c", 100) is None and cert.ratio("z", 0) is None
    assert cert.tail_bound("a", 3, 2.0) == pytest.approx(4.0)


def test_d7_anchor_witness():
    sys, pert, cert = preset("Cor175")
    st_ = check_d7(sys, cert, pert, 4, 100)
    assert st_.witness["m"] == 4


@pytest.mark.parametrize("name", PRESETS)
def test_report_json_round_trip(reports, name):
    rep = reports[name]
    again = ConditionReport.from_dict(json.loads(rep.to_json()))
    assert again.to_json() == rep.to_json()
    assert "tail_mode" in rep.to_text()
