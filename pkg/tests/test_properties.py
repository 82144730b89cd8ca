"""Property-based checks of the invariants."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import rand_sdp
from ratsos.polyalg import Polynomial, VariableSet, grad_dot
from ratsos.polyparse import format_poly, parse_poly
from ratsos.sdpcore import export_sdpa, import_sdpa, solve
from ratsos.synth import RationalController, SynthesisConfig, SystemModel, run_step1, synthesize
from ratsos.synth import wrap_initial
from ratsos.verify import ball_points, certified_roa_level

V3 = VariableSet(("x", "y"), ("u",))

monomials = st.tuples(*[st.integers(0, 3)] * 3)
int_polys = st.dictionaries(monomials, st.integers(-9, 9), max_size=6).map(
    lambda d: Polynomial(V3, d))
real_polys = st.dictionaries(
    monomials, st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False).filter(
        lambda c: abs(c) > 1e-6), max_size=6).map(lambda d: Polynomial(V3, d))


@given(real_polys)
def test_parser_round_trip(p):
    assert parse_poly(format_poly(p), V3) == p


@given(int_polys, int_polys, int_polys)
def test_ring_laws(p, q, r):
    assert (p + q) * r == p * r + q * r
    assert p * q == q * p
    assert (p - q) + q == p


@given(int_polys, int_polys, st.integers(-5, 5))
def test_lie_derivative_is_linear(p, q, a):
    f = [Polynomial.variable(V3, "y"), parse_poly("-x - y + u", V3)]
    assert grad_dot(p * a + q, f) == grad_dot(p, f) * a + grad_dot(q, f)


@given(st.floats(0.1, 10.0))
def test_controller_normalization_invariant(c):
    v = V3
    ctrl = RationalController([parse_poly("-3*x - y", v)], [parse_poly("2 + x^2", v)])
    scaled = RationalController([ctrl.p[0] * c], [ctrl.q[0] * c])
    X = np.array([[0.3, -0.2], [1.0, 2.0]])
    np.testing.assert_allclose(scaled(X), ctrl(X))
    a, b = ctrl.normalized(), scaled.normalized()
    assert a.p[0].allclose(b.p[0], 1e-9) and a.q[0].allclose(b.q[0], 1e-9)
    assert a.q[0].constant_term() == pytest.approx(1.0)


@pytest.fixture(scope="module")
def scalar_cert():
    v = VariableSet(("x",), ("u",))
    sys_ = SystemModel(v, [parse_poly("-x + u", v)])
    r = run_step1(sys_, wrap_initial([parse_poly("-x", v)]), SynthesisConfig(), 1.0)
    assert r.feasible
    return r.cert


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture], max_examples=25)
@given(st.floats(1e-3, 1e3))
def test_bundle_normalization_invariant(scalar_cert, c):
    a = scalar_cert.normalized()
    b = scalar_cert.scaled(c).normalized()
    assert a.V.allclose(b.V, 1e-8)
    assert all(x.allclose(y, 1e-8) for x, y in zip(a.lam, b.lam))


@settings(max_examples=5, deadline=None)
@given(st.sampled_from([0.05, 0.1, 0.25]), st.integers(1, 4))
def test_schedule_monotone(R_inc, iters):
    v = VariableSet(("x",), ("u",))
    sys_ = SystemModel(v, [parse_poly("-x + u", v)])
    res = synthesize(sys_, [parse_poly("-x", v)], SynthesisConfig(R_inc=R_inc, iter_max=iters))
    radii = [c.R for c in res.certificates]
    assert all(b > a for a, b in zip(radii, radii[1:]))
    assert res.R == pytest.approx(1.0 + R_inc * res.n_feasible)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(-0.9, 0.9), st.floats(0.3, 3.0))
def test_certified_level_contained(a, b, rho, R):
    v = VariableSet(("x", "y"))
    off = rho * np.sqrt(a * b)
    V = Polynomial(v, {(2, 0): a, (0, 2): b, (1, 1): 2 * off, (4, 0): 0.1})
    c = certified_roa_level(V, R, n_samples=2000)
    X = ball_points(2, 4 * R, 4000, seed=1)
    inside = X[V.evaluate_many(X) <= c][:500]
    assert np.all(np.sum(inside ** 2, axis=1) <= R * (1 + 1e-6))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_sdpa_export_is_canonical(seed):
    p, _ = rand_sdp(np.random.default_rng(seed))
    text = export_sdpa(p)
    assert export_sdpa(import_sdpa(text)) == text
    assert import_sdpa(text).structurally_equal(p)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_weak_duality(seed):
    p, _ = rand_sdp(np.random.default_rng(seed))
    s = solve(p)
    assert s.primal_objective >= s.dual_objective - 1e-9 * (1 + abs(s.primal_objective))
