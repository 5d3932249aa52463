import math
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from dichequiv.dif import (DifExpression, DifTerm, apply_D, evaluate_expression, expand_D_power,
                           format_expression, from_json_terms, log_evaluate_expression,
                           log_partial_bell, partial_bell, set_partitions, to_json_terms)
from dichequiv.errors import OrderOverflow


def faa_di_bruno(s: int) -> DifExpression:
    """sum over set partitions of {1..s}: Gamma_{#blocks} * prod pi_{|block|}."""
    terms = []
    for part in set_partitions(s):
        sizes = Counter(len(b) for b in part)
        terms.append(DifTerm(1, len(part), tuple(sizes.items())))
    return DifExpression(terms)


def test_first_derivatives_by_hand():
    assert format_expression(expand_D_power(1)) == "Γ_1·π₁"
    assert format_expression(expand_D_power(2)) == "Γ_2·π₁² + Γ_1·π₂"
    assert format_expression(expand_D_power(3)) == "Γ_3·π₁³ + 3·Γ_2·π₂·π₁ + Γ_1·π₃"


@pytest.mark.parametrize("s,coeffs", [(2, [1, 1]), (3, [1, 3, 1]), (4, [1, 6, 4, 3, 1])])
def test_coefficient_lists(s, coeffs):
    assert expand_D_power(s).coefficients() == coeffs


@pytest.mark.parametrize("s", range(1, 8))
def test_expansion_matches_set_partition_sum(s):
    assert expand_D_power(s) == faa_di_bruno(s)


@pytest.mark.parametrize("s,bell", [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)])
def test_bell_numbers(s, bell):
    assert sum(expand_D_power(s).coefficients()) == bell
    assert sum(1 for _ in set_partitions(s)) == bell


def test_order_overflow():
    with pytest.raises(OrderOverflow):
        expand_D_power(7, 6)
    with pytest.raises(OrderOverflow):
        apply_D(DifExpression.pi(2), 2)
    assert expand_D_power(0) == DifExpression.gamma(0)


exprs = st.builds(
    lambda c, s, ex: DifExpression([DifTerm(c, s, tuple(ex))]),
    st.integers(1, 5), st.one_of(st.none(), st.integers(0, 3)),
    st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3)), max_size=3))


@settings(max_examples=100, deadline=None)
@given(exprs, exprs)
def test_product_rule(a, b):
    if any(t.gamma_index is not None for t in a) and any(t.gamma_index is not None for t in b):
        with pytest.raises(ValueError):
            a * b
        return
    r = 10
    assert apply_D(a * b, r) == apply_D(a, r) * b + a * apply_D(b, r)


@settings(max_examples=100, deadline=None)
@given(exprs, exprs)
def test_linearity_and_canonical_form(a, b):
    r = 10
    assert apply_D(a + b, r) == apply_D(a, r) + apply_D(b, r)
    assert a + b == b + a
    assert from_json_terms(to_json_terms(a + b)) == a + b


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.data())
def test_partial_bell_against_partitions(n, data):
    k = data.draw(st.integers(1, n))
    x = data.draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n))
    brute = sum(math.prod(x[len(b) - 1] for b in part)
                for part in set_partitions(n) if len(part) == k)
    assert partial_bell(n, k, x) == pytest.approx(brute, rel=1e-12)
    assert log_partial_bell(n, k, [math.log(v) for v in x]) == pytest.approx(math.log(brute), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_log_evaluation_agrees(s, g, p):
    expr = expand_D_power(s)
    gam = lambda i, j: g ** i
    pi = lambda k, j: p * k
    direct = evaluate_expression(expr, 0, gam, pi)
    via_log = log_evaluate_expression(expr, 0, gam, lambda k, j: math.log(pi(k, j)))
    assert via_log == pytest.approx(math.log(direct), rel=1e-12)


def test_ordering_is_by_gamma_then_exponents():
    expr = DifExpression([DifTerm(1, 1, ((3, 1),)), DifTerm(2, 3, ((1, 2), (2, 1))),
                          DifTerm(1, 3, ((1, 3),))])
    assert [t.gamma_index for t in expr] == [3, 3, 1]
    assert expr.terms[0].pi_exponents == ((1, 3),)


def test_zero_and_bad_terms():
    assert format_expression(DifExpression()) == "0"
    assert not (DifExpression.gamma(1) + DifExpression.gamma(1) * -1)
    with pytest.raises(ValueError):
        DifTerm(1, 0, ((0, 1),))
