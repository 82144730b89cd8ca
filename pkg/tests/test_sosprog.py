import numpy as np
import pytest

from ratsos.polyalg import Polynomial, VariableSet
from ratsos.polyparse import parse_poly
from ratsos.sdpcore import Status
from ratsos.sosprog import NonConvexProductError, SOSProgram, gram_basis, is_sos, sos_decompose
from ratsos.sosprog import DecisionPolynomial

V = VariableSet(("x", "y"))


def P(s):
    return parse_poly(s, V)


def test_gram_basis_is_trimmed():
    basis = gram_basis(DecisionPolynomial.from_poly(P("x^4 + y^2")))
    # only monomials of degree 1..2 can appear, and y^2 is unreachable
    assert (0, 0) not in basis
    assert (0, 2) not in basis
    assert (2, 0) in basis


def test_certificate_reconstructs():
    r = is_sos(P("2*x^2 - 2*x*y + y^2 + 1"))
    assert r.feasible
    cert = r.certificates[0]
    assert cert.residual < 1e-7
    assert cert.min_eig > -1e-9
    squares = sos_decompose(cert)
    assert sum((s * s for s in squares), Polynomial.zero(V)).allclose(cert.expr, 1e-7)


def test_nonnegative_but_not_sos_rejected():
    v = VariableSet(("x", "y", "z"))
    motzkin = parse_poly("x^4*y^2 + x^2*y^4 - 3*x^2*y^2*z^2 + z^6", v)
    assert is_sos(motzkin).status == Status.INFEASIBLE


def test_decision_polynomial_products():
    prog = SOSProgram(V)
    a = prog.declare_poly("all", 0, 1)
    b = prog.declare_poly("all", 0, 1)
    assert (a * P("x")).degree == 2
    with pytest.raises(NonConvexProductError):
        a * b


def test_lyapunov_search():
    # V with V - eps|x|^2 SOS and -dV/dt SOS for dx = -x + y, dy = -y
    prog = SOSProgram(V)
    Vd = prog.declare_poly("all", 2, 2, name="V")
    prog.add_sos(Vd - prog.rho("all"))
    dV = Vd.partial_index(0) * P("-x + y") + Vd.partial_index(1) * P("-y")
    prog.add_sos(-dV - prog.rho("all"))
    r = prog.solve()
    assert r.feasible
    Vs = r.value(Vd)
    X = np.random.default_rng(0).normal(size=(50, 2))
    assert np.all(Vs.evaluate_many(X) > 0)


def test_sos_poly_is_psd_by_construction():
    prog = SOSProgram(V)
    s = prog.sos_poly("all", 1, name="s")
    prog.add_eq(s - P("x^2 + 2*x*y + 3*y^2 + 1"))
    r = prog.solve()
    assert r.feasible
    assert r.value(s).allclose(P("x^2 + 2*x*y + 3*y^2 + 1"), 1e-6)
    assert r.certificates[0].min_eig > -1e-9


def test_equality_constraints_pin_coefficients():
    prog = SOSProgram(V)
    p = prog.declare_poly("all", 0, 2)
    prog.add_eq(p - P("x^2 + 1"))
    prog.add_sos(p)
    r = prog.solve()
    assert r.value(p).allclose(P("x^2 + 1"), 1e-7)


def test_infeasible_program_has_no_values():
    prog = SOSProgram(V)
    prog.add_sos(P("x^2 - 1"))
    r = prog.solve()
    assert r.status == Status.INFEASIBLE
    assert r.certificates == []
