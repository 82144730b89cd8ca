"""Text grammar for polynomials and the system description file format.

Polynomial grammar (whitespace insignificant)::

    expr   := [sign] term (sign term)*
    term   := factor ('*' factor)*
    factor := NUMBER | NAME ['^' INT] | '(' expr ')' ['^' INT]

``NAME`` must be a declared variable or a named constant. Multiplication is
always explicit; ``2x1`` is rejected.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Mapping

from .polyalg import Polynomial, VariableSet

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*^()−])
    """,
    re.VERBOSE,
)


class PolyParseError(ValueError):
    """Parse failure carrying the character offset of the offending token."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class SystemFileError(ValueError):
    """Schema violation in a system description file."""


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolyParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group(kind)
            if val == "−":
                val = "-"
            tokens.append((kind, val, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, vars: VariableSet, constants: Mapping[str, float]):
        self.text = text
        self.vars = vars
        self.constants = constants
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok):
        raise PolyParseError(msg, tok[2], self.text)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.error("empty expression", self.peek())
        p = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.error(f"unexpected token {tok[1]!r}", tok)
        return p

    def expr(self) -> Polynomial:
        sign = 1.0
        tok = self.peek()
        if tok[1] in "+-" and tok[0] == "op":
            self.take()
            sign = -1.0 if tok[1] == "-" else 1.0
        total = self.term() * sign
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                t = self.term()
                total = total + t if tok[1] == "+" else total - t
            else:
                return total

    def term(self) -> Polynomial:
        p = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.factor()
        return p

    def exponent(self) -> int | None:
        if not (self.peek()[0] == "op" and self.peek()[1] == "^"):
            return None
        self.take()
        tok = self.take()
        if tok[0] == "op" and tok[1] in "-−":
            self.error("negative exponent", tok)
        if tok[0] != "num" or not tok[1].isdigit():
            self.error(f"exponent must be a non-negative integer, got {tok[1]!r}", tok)
        return int(tok[1])

    def factor(self) -> Polynomial:
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            base = Polynomial.constant(self.vars, float(val))
        elif kind == "name":
            if val in self.vars.names:
                base = Polynomial.variable(self.vars, val)
            elif val in self.constants:
                base = Polynomial.constant(self.vars, float(self.constants[val]))
            else:
                self.error(f"unknown identifier {val!r}", tok)
        elif kind == "op" and val == "(":
            base = self.expr()
            close = self.take()
            if close[1] != ")":
                self.error("expected ')'", close)
        else:
            self.error(f"unexpected token {val!r}" if val else "unexpected end of input", tok)
        k = self.exponent()
        if k is not None:
            base = base ** k
        return base


def parse_poly(src: str, vars: VariableSet, constants: Mapping[str, float] | None = None) -> Polynomial:
    """Parse ``src`` into a canonical :class:`Polynomial` over ``vars``."""
    if not isinstance(src, str):
        if isinstance(src, (int, float)):
            return Polynomial.constant(vars, float(src))
        raise TypeError(f"expected polynomial text, got {type(src).__name__}")
    return _Parser(src, vars, constants or {}).parse()


def _format_coef(c: float) -> str:
    if c == int(c) and abs(c) < 1e15:
        return str(int(c))
    return repr(c)


def format_poly(p: Polynomial) -> str:
    """Deterministic text form; ``parse_poly(format_poly(p)) == p``."""
    if p.is_zero():
        return "0"
    names = p.vars.names
    parts = []
    for k, (m, c) in enumerate(p.sorted_terms(descending=True)):
        factors = []
        for name, e in zip(names, m):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        mag = abs(c)
        if not factors:
            body = _format_coef(mag)
        elif mag == 1.0:
            body = "*".join(factors)
        else:
            body = _format_coef(mag) + "*" + "*".join(factors)
        if k == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append((" - " if c < 0 else " + ") + body)
    return "".join(parts)


# ----------------------------------------------------------------------------
# system files

AUX_FUNCTIONS = {
    # w = v - sin(v); lies in the sector [0, alpha*v] for |v| <= v_max
    "sin_residual": lambda v: v - _np().sin(v),
    "tanh_residual": lambda v: v - _np().tanh(v),
}


def _np():
    import numpy

    return numpy


def _radius_parameter(rule: Mapping, R: float) -> float:
    if "sector_sin" in rule:
        scale = float(rule["sector_sin"].get("xmax_per_radius", 1.0))
        xm = scale * R
        return 1.0 - math.sin(xm) / xm
    raise SystemFileError(f"unknown parameter rule {dict(rule)!r}")


def _read_document(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        doc = json.loads(text)
    else:
        import yaml

        doc = yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise SystemFileError(f"{path}: top level must be a mapping")
    return doc


def _as_names(doc, key, required=False):
    val = doc.get(key, [])
    if val is None:
        val = []
    if required and not val:
        raise SystemFileError(f"'{key}' must be a non-empty list")
    if not isinstance(val, list):
        raise SystemFileError(f"'{key}' must be a list")
    return val


_KNOWN_KEYS = {
    "name", "description", "state_vars", "input_vars", "aux_vars", "parameters",
    "dynamics", "ineq_constraints", "eq_constraints", "initial_controller",
    "synthesis", "simulation",
}


def system_from_document(doc: Mapping, radius: float | None = None, source: str = "<document>"):
    """Build a :class:`~ratsos.synth.system.SystemModel` from a parsed document.

    Parameters given as rules (e.g. a sector bound that depends on the ball
    radius) are evaluated at ``radius``; when ``radius`` is ``None`` the
    document's ``synthesis.R0`` (or 1.0) is used.
    """
    from .synth.system import AuxDefinition, SystemModel

    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise SystemFileError(f"{source}: unknown keys {sorted(unknown)}")
    for key in ("state_vars", "dynamics"):
        if key not in doc:
            raise SystemFileError(f"{source}: missing required key '{key}'")

    states = _as_names(doc, "state_vars", required=True)
    inputs = _as_names(doc, "input_vars")
    aux_entries = _as_names(doc, "aux_vars")
    aux_names = []
    aux_defs = {}
    for entry in aux_entries:
        if isinstance(entry, str):
            aux_names.append(entry)
            continue
        if not isinstance(entry, Mapping) or "name" not in entry:
            raise SystemFileError(f"{source}: aux_vars entries need a 'name'")
        aux_names.append(entry["name"])
        if "function" in entry:
            fn = entry["function"]
            if fn not in AUX_FUNCTIONS:
                raise SystemFileError(f"{source}: unknown aux function {fn!r}")
            aux_defs[entry["name"]] = AuxDefinition(fn, entry.get("of"))
    try:
        vars = VariableSet(tuple(states), tuple(inputs), tuple(aux_names))
    except ValueError as exc:
        raise SystemFileError(f"{source}: {exc}") from None
    for name, d in aux_defs.items():
        if d.of not in vars.state_names:
            raise SystemFileError(f"{source}: aux variable {name!r} must be defined from a state")

    synthesis = dict(doc.get("synthesis") or {})
    if radius is None:
        radius = float(synthesis.get("R0", 1.0))
    constants = {}
    radius_rules = {}
    for name, val in (doc.get("parameters") or {}).items():
        if isinstance(val, Mapping):
            radius_rules[name] = dict(val)
            constants[name] = _radius_parameter(val, radius)
        else:
            try:
                constants[name] = float(val)
            except (TypeError, ValueError):
                raise SystemFileError(f"{source}: parameter {name!r} must be numeric") from None
    clash = set(constants) & set(vars.names)
    if clash:
        raise SystemFileError(f"{source}: parameters shadow variables {sorted(clash)}")

    def P(text, where):
        try:
            return parse_poly(text, vars, constants)
        except PolyParseError as exc:
            raise SystemFileError(f"{source}: {where}: {exc}") from None

    dyn = doc["dynamics"]
    if not isinstance(dyn, list):
        raise SystemFileError(f"{source}: 'dynamics' must be a list")
    if len(dyn) != len(states):
        raise SystemFileError(
            f"{source}: {len(states)} state variables but {len(dyn)} dynamics entries")
    f_num, f_den = [], []
    for i, entry in enumerate(dyn):
        if isinstance(entry, Mapping):
            if "num" not in entry:
                raise SystemFileError(f"{source}: dynamics[{i}] needs 'num'")
            f_num.append(P(entry["num"], f"dynamics[{i}].num"))
            f_den.append(P(entry.get("den", "1"), f"dynamics[{i}].den"))
        else:
            f_num.append(P(entry, f"dynamics[{i}]"))
            f_den.append(Polynomial.constant(vars, 1.0))
    g = [P(s, f"ineq_constraints[{i}]") for i, s in enumerate(_as_names(doc, "ineq_constraints"))]
    h = [P(s, f"eq_constraints[{i}]") for i, s in enumerate(_as_names(doc, "eq_constraints"))]

    K0 = None
    if doc.get("initial_controller") is not None:
        K0 = [P(s, f"initial_controller[{i}]") for i, s in enumerate(doc["initial_controller"])]

    rebuild = None
    if radius_rules:
        def rebuild(R, _doc=dict(doc), _source=source):
            return system_from_document(_doc, radius=R, source=_source)

    return SystemModel(
        vars=vars, f_num=f_num, f_den=f_den, g=g, h=h,
        aux=aux_defs, name=doc.get("name", Path(source).stem), initial_controller=K0,
        defaults={"synthesis": synthesis, "simulation": dict(doc.get("simulation") or {})},
        parameters=constants, radius=radius if radius_rules else None, rebuild=rebuild,
    )


def load_system(path, radius: float | None = None):
    """Load a system description (YAML or JSON) into a ``SystemModel``."""
    doc = _read_document(path)
    return system_from_document(doc, radius=radius, source=str(path))
