import json

import pytest

from ratsos.polyalg import VariableSet
from ratsos.polyparse import (PolyParseError, SystemFileError, format_poly, load_system,
                              parse_poly, system_from_document)

V = VariableSet(("x1", "x2"), ("u",))


def test_precedence_and_unary_minus():
    assert parse_poly("-x1^2", V) == parse_poly("-(x1^2)", V)
    assert parse_poly("2*x1 + 3*x1", V) == parse_poly("5*x1", V)
    assert parse_poly("(x1 + x2)*(x1 - x2)", V) == parse_poly("x1^2 - x2^2", V)


def test_constants_are_substituted():
    p = parse_poly("m*g*x1", V, {"m": 2.0, "g": 3.0})
    assert p == parse_poly("6*x1", V)


def test_error_offsets():
    with pytest.raises(PolyParseError) as err:
        parse_poly("x1 + y", V)
    assert err.value.offset == 5
    with pytest.raises(PolyParseError):
        parse_poly("x1^-1", V)
    with pytest.raises(PolyParseError):
        parse_poly("(x1 + 1", V)


def test_format_round_trip():
    p = parse_poly("-0.25*x1^3*u + x2 - 7", V)
    assert parse_poly(format_poly(p), V) == p


def test_system_document():
    sys_ = system_from_document({
        "state_vars": ["x1", "x2"], "input_vars": ["u"],
        "dynamics": ["x2", {"num": "-x1 + u", "den": "1 + x1^2"}],
    })
    assert sys_.n_x == 2 and sys_.n_u == 1
    assert sys_.f_den[1] == parse_poly("1 + x1^2", sys_.vars)


def test_system_document_errors():
    with pytest.raises(SystemFileError, match="dynamics"):
        system_from_document({"state_vars": ["x"], "dynamics": ["x", "x"]})
    with pytest.raises(SystemFileError, match="unknown keys"):
        system_from_document({"state_vars": ["x"], "dynamics": ["x"], "bogus": 1})
    with pytest.raises(SystemFileError, match="dynamics\\[0\\]"):
        system_from_document({"state_vars": ["x"], "dynamics": ["x +"]})


def test_json_system_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"state_vars": ["x"], "input_vars": ["u"], "dynamics": ["-x + u"]}))
    sys_ = load_system(path)
    assert sys_.name == "s"
    assert sys_.is_control_affine()


def test_radius_dependent_parameter():
    from helpers import builtin

    a1 = builtin("pendulum", 1.0).parameters["alpha"]
    a2 = builtin("pendulum", 2.0).parameters["alpha"]
    assert 0 < a1 < a2 < 1
