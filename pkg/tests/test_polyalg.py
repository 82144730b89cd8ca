import numpy as np
import pytest

from ratsos.polyalg import (Polynomial, VariableMismatchError, VariableSet, grad_dot, grlex_key,
                            monomial_basis, sum_of_squares)
from ratsos.polyparse import parse_poly

V2 = VariableSet(("x1", "x2"), ("u",))


def P(s, v=V2):
    return parse_poly(s, v)


def test_variable_set_partition():
    v = VariableSet(("x1", "x2"), ("u",), ("w",))
    assert v.nvars == 4
    assert v.state_indices == (0, 1)
    assert v.input_indices == (2,)
    assert v.aux_indices == (3,)
    assert v.index("w") == 3
    with pytest.raises(ValueError):
        VariableSet(("x", "x"))


def test_arithmetic_and_canonical_zero():
    p = P("x1^2 + 2*x1*x2 - u")
    q = P("u - x1^2")
    assert p + q == P("2*x1*x2")
    assert (p - p).is_zero()
    assert p * 0 == Polynomial.zero(V2)
    assert (P("x1 + 1") ** 3) == P("x1^3 + 3*x1^2 + 3*x1 + 1")


def test_degree_and_dependence():
    p = P("x1^3*u + x2")
    assert p.degree == 4
    assert p.degree_in(V2.state_indices) == 3
    assert not p.depends_only_on(V2.state_indices)
    assert P("x1*x2").depends_only_on(V2.state_indices)


def test_mixed_variable_sets_rejected():
    other = VariableSet(("a",))
    with pytest.raises(VariableMismatchError):
        P("x1") + Polynomial.variable(other, "a")


def test_partial_and_grad_dot():
    V = P("x1^2 + x1*x2 + 3*x2^2")
    assert V.partial("x1") == P("2*x1 + x2")
    f = [P("x2"), P("-x1 - x2")]
    expected = P("2*x1 + x2") * f[0] + P("x1 + 6*x2") * f[1]
    assert grad_dot(V, f) == expected


def test_evaluate_many_matches_scalar():
    p = P("x1^3 - 2*x1*x2*u + 0.5")
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    vals = p.evaluate_many(X)
    for row, v in zip(X, vals):
        assert v == pytest.approx(p.evaluate(dict(zip(V2.names, row))))


def test_evaluate_reports_missing_names():
    with pytest.raises(KeyError):
        P("x1 + u").evaluate({"x1": 1.0})


def test_monomial_basis_grlex():
    basis = monomial_basis(V2, "state", 0, 2)
    assert len(basis) == 6
    assert basis == sorted(basis, key=grlex_key)
    assert all(m[2] == 0 for m in basis)


def test_sum_of_squares_states_only():
    assert sum_of_squares(V2) == P("x1^2 + x2^2")
