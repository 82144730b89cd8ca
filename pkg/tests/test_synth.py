import json

import numpy as np
import pytest

from helpers import builtin, pendulum_printed_controller
from ratsos.polyalg import Polynomial, VariableSet
from ratsos.polyparse import parse_poly, system_from_document
from ratsos.sdpcore import Status
from ratsos.sosprog import NonConvexProductError, SOSProgram
from ratsos.synth import (InitialControllerError, RationalController, SynthesisConfig, SystemModel,
                          build_core_expression, cancellation_controller, certify_denominators,
                          controller_from_document, controller_to_document, result_to_document,
                          run_step1, run_step2, synthesize, traditional_iterate, wrap_initial)
from ratsos.synth.controller import dumps
from ratsos.verify import check_certificate

V1 = VariableSet(("x",), ("u",))


def P(s, v=V1):
    return parse_poly(s, v)


@pytest.fixture
def scalar():
    return SystemModel(V1, [P("-x + u")])


# -- configuration and system model ---------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SynthesisConfig(mode="fancy")
    with pytest.raises(ValueError):
        SynthesisConfig(d_V=0)
    cfg = SynthesisConfig.from_dict({"R0": 0.5, "unrelated": 1})
    assert cfg.R0 == 0.5
    assert cfg.degrees()["V"] == 2


def test_cleared_dynamics_and_affine_split():
    sys_ = builtin("rational2d")
    D, F = sys_.cleared_dynamics()
    assert D == parse_poly("1 + x1^2", sys_.vars)
    X = np.random.default_rng(0).normal(size=(10, 2))
    U = np.random.default_rng(1).normal(size=(10, 1))
    Z = sys_.full_points(X, U)
    f = sys_.vector_field(X, U)
    for i in range(2):
        np.testing.assert_allclose(F[i].evaluate_many(Z), D.evaluate_many(Z) * f[:, i], atol=1e-10)
    D2, F0, G = sys_.affine_split()
    for i in range(2):
        lhs = F0[i].evaluate_many(Z) + G[i][0].evaluate_many(Z) * U[:, 0]
        np.testing.assert_allclose(lhs, F[i].evaluate_many(Z), atol=1e-10)


def test_non_affine_detected():
    sys_ = system_from_document({"state_vars": ["x"], "input_vars": ["u"],
                                 "dynamics": ["-x + x^2*u^3"]})
    assert not sys_.is_control_affine()
    with pytest.raises(ValueError):
        sys_.affine_split()
    with pytest.raises(ValueError, match="input-affine"):
        traditional_iterate(sys_, [parse_poly("-x", sys_.vars)])


def test_denominator_certification():
    good = system_from_document({"state_vars": ["x"], "dynamics": [{"num": "-x", "den": "1 + x^2"}]})
    bad = system_from_document({"state_vars": ["x"], "dynamics": [{"num": "-x", "den": "1 - x^2"}]})
    assert certify_denominators(good, None)
    assert not certify_denominators(bad, None)
    assert certify_denominators(bad, 0.5)
    assert not certify_denominators(bad, 2.0)


# -- controllers ------------------------------------------------------------

def test_controller_normalization_and_evaluation():
    c = RationalController([P("-4*x")], [P("2 + 2*x^2")]).normalized()
    assert c.q[0].constant_term() == 1.0
    assert c(np.array([1.0]))[0] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        RationalController([P("u")], [P("1")])
    with pytest.raises(ValueError):
        RationalController([P("x")], [Polynomial.zero(V1)])


def test_controller_document_round_trip():
    sys_ = builtin("pendulum")
    c = pendulum_printed_controller(sys_)
    doc = json.loads(dumps(controller_to_document(c, {"R": 2.0})))
    back = controller_from_document(doc, sys_.vars)
    assert back.p[0] == c.p[0] and back.q[0] == c.q[0]
    with pytest.raises(ValueError, match="do not match"):
        controller_from_document(doc, VariableSet(("a", "b"), ("u",), ("w",)))


# -- steps ------------------------------------------------------------------

def test_scalar_steps(scalar):
    cfg = SynthesisConfig(d_V=2, d_lambda=2)
    r1 = run_step1(scalar, wrap_initial([P("-x")]), cfg, None)
    assert r1.status == Status.FEASIBLE
    assert r1.cert.max_residual < 1e-6
    r2 = run_step2(scalar, r1.cert.lam, cfg, None, 0.1)
    assert r2.feasible
    assert r2.cert.controller.q[0].constant_term() == pytest.approx(1.0)
    assert check_certificate(r2.cert, scalar, n_samples=200).passed


def test_destabilizing_controller_infeasible():
    sys_ = SystemModel(V1, [P("x + u")])
    r = run_step1(sys_, wrap_initial([P("x")]), SynthesisConfig(d_V=4, d_lambda=0), 1.0)
    assert r.status == Status.INFEASIBLE
    # a richer multiplier makes the program only weakly infeasible
    r = run_step1(sys_, wrap_initial([P("x")]), SynthesisConfig(d_V=4, d_lambda=2), 1.0)
    assert not r.feasible


def test_lambda_and_controller_both_unknown_rejected(scalar):
    prog = SOSProgram(V1)
    V = prog.declare_poly("state", 2, 2)
    lam = [prog.declare_poly("all", 0, 1)]
    p = [prog.declare_poly("state", 1, 1)]
    q = [prog.declare_poly("state", 0, 0)]
    with pytest.raises(NonConvexProductError):
        build_core_expression(scalar, Polynomial.constant(V1, 0) + P("x^2"), lam, (p, q), 0.0,
                              None, prog)
    del V


# -- algorithm --------------------------------------------------------------

def test_schedule_arithmetic(scalar):
    res = synthesize(scalar, [P("-x")], SynthesisConfig(iter_max=5))
    assert res.n_feasible == 5
    assert res.R == pytest.approx(1.5)
    assert res.gamma == pytest.approx(0.5)
    assert [c.R for c in res.certificates] == pytest.approx([1.0, 1.1, 1.2, 1.3, 1.4])
    steps = [(h["iteration"], h["step"]) for h in res.history]
    assert steps == [(k, s) for k in range(1, 6) for s in (1, 2)]


def test_initial_controller_failure():
    sys_ = SystemModel(V1, [P("x + u")])
    with pytest.raises(InitialControllerError):
        synthesize(sys_, [P("x")], SynthesisConfig(iter_max=2, d_V=2, d_V_max=4))


def test_polynomial_mode_pins_q(scalar):
    res = synthesize(scalar, [P("-x")], SynthesisConfig(iter_max=2, mode="polynomial"))
    assert res.controller.is_polynomial
    assert res.controller.q[0] == Polynomial.constant(V1, 1.0)


def test_result_document_is_deterministic(scalar):
    cfg = SynthesisConfig(iter_max=2)
    a = dumps(result_to_document(synthesize(scalar, [P("-x")], cfg)))
    b = dumps(result_to_document(synthesize(scalar, [P("-x")], cfg)))
    assert a == b
    assert "seconds" not in a


def test_step1_decay_option_records_rate(scalar):
    cfg = SynthesisConfig(iter_max=3, step1_decay=True)
    res = synthesize(scalar, [P("-x")], cfg, keep_problems=True)
    assert res.n_feasible == 3
    assert len(res.problems) == len(res.history)


def test_traditional_matches_schedule(scalar):
    res = traditional_iterate(scalar, [P("-x")], SynthesisConfig(iter_max=3))
    assert res.method == "traditional"
    assert res.n_feasible == 3
    assert all(check_certificate(c, scalar, n_samples=200).passed for c in res.certificates)


# -- cancellation baseline --------------------------------------------------

def test_cancellation_law():
    v = VariableSet(("x1", "x2"), ("u",))
    V = parse_poly("x1^2 + x2^2", v)
    f0 = [parse_poly("x2", v), parse_poly("x1^3", v)]
    g = [Polynomial.zero(v), parse_poly("1", v)]
    W = parse_poly("x1^2 + x2^2", v)
    law = cancellation_controller(V, f0, g, W)
    assert "denominator not sign-certified" in law.flags
    # closed loop dV/dt = -W wherever q != 0
    x = np.array([[0.3, -0.7]])
    u = law(x)[0, 0]
    dV = 2 * x[0, 0] * x[0, 1] + 2 * x[0, 1] * (x[0, 0] ** 3 + u)
    assert dV == pytest.approx(-(0.3 ** 2 + 0.7 ** 2))
    with pytest.raises(ValueError):
        cancellation_controller(V, f0, [Polynomial.zero(v)] * 2, W)
    with pytest.raises(ValueError):
        cancellation_controller(V, f0, g, parse_poly("x1^2 + 1", v))
