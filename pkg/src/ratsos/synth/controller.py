"""Rational state-feedback controllers and their document form."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..polyalg import Polynomial, VariableSet


@dataclass
class RationalController:
    """``u_k = p_k(x) / q_k(x)`` with ``q_k(0) = 1``.

    Parameters
    ----------
    p, q : list of Polynomial
        Numerators and denominators, one per input. Both depend on the
        states only.
    """

    p: list[Polynomial]
    q: list[Polynomial]

    def __post_init__(self):
        if len(self.p) != len(self.q):
            raise ValueError("p and q must have one entry per input")
        if not self.p:
            raise ValueError("controller without inputs")
        vars = self.p[0].vars
        states = vars.state_indices
        for poly in [*self.p, *self.q]:
            if poly.vars != vars:
                raise ValueError("controller polynomials must share a variable set")
            if not poly.depends_only_on(states):
                raise ValueError("controller polynomials may only depend on the states")
        for qk in self.q:
            if qk.is_zero():
                raise ValueError("zero controller denominator")

    @property
    def vars(self) -> VariableSet:
        return self.p[0].vars

    @property
    def n_u(self) -> int:
        return len(self.p)

    @property
    def is_polynomial(self) -> bool:
        return all(qk.degree == 0 for qk in self.q)

    def numerator_denominator(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate ``p`` and ``q`` at states ``X`` of shape ``(N, n_x)``."""
        Z = self._pad(X)
        P = np.column_stack([pk.evaluate_many(Z) for pk in self.p])
        Q = np.column_stack([qk.evaluate_many(Z) for qk in self.q])
        return P, Q

    def __call__(self, X: np.ndarray) -> np.ndarray:
        """Inputs ``p / q`` at states ``X``; 1-D input gives a 1-D result."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        P, Q = self.numerator_denominator(np.atleast_2d(X))
        U = P / Q
        return U[0] if single else U

    def _pad(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = self.vars
        if X.shape[1] != v.n_state:
            raise ValueError(f"expected {v.n_state} states, got {X.shape[1]}")
        return np.hstack([X, np.zeros((X.shape[0], v.n_input + v.n_aux))])

    def normalized(self) -> "RationalController":
        """Scale each ``(p_k, q_k)`` so that ``q_k(0) = 1``."""
        p, q = [], []
        for pk, qk in zip(self.p, self.q):
            c = qk.constant_term()
            if c == 0:
                raise ValueError("q(0) = 0 cannot be normalized")
            p.append(pk * (1.0 / c))
            q.append(qk * (1.0 / c))
        return RationalController(p, q)

    def relative_change(self, other: "RationalController") -> float:
        """Largest coefficient change relative to this controller's scale."""
        num = max(max((a - b).max_abs_coef() for a, b in zip(self.p, other.p)),
                  max((a - b).max_abs_coef() for a, b in zip(self.q, other.q)))
        den = max(max(pk.max_abs_coef() for pk in self.p), 1.0)
        return num / den


def wrap_initial(K: Sequence[Polynomial]) -> RationalController:
    """Polynomial controller ``u = K(x)`` as ``p = K``, ``q = 1``."""
    K = list(K)
    if not K:
        raise ValueError("empty initial controller")
    one = Polynomial.constant(K[0].vars, 1.0)
    return RationalController(K, [one for _ in K])


# ----------------------------------------------------------------------------
# documents

def poly_to_terms(p: Polynomial) -> list:
    """``[[exponents, coefficient], ...]`` in descending graded-lex order."""
    return [[list(m), float(c)] for m, c in p.sorted_terms(descending=True)]


def poly_from_terms(terms, vars: VariableSet) -> Polynomial:
    out = {}
    for m, c in terms:
        m = tuple(int(e) for e in m)
        if len(m) != vars.nvars:
            raise ValueError(f"exponent vector {list(m)} does not match {vars.nvars} variables")
        out[m] = out.get(m, 0.0) + float(c)
    return Polynomial(vars, out)


def vars_to_document(v: VariableSet) -> dict:
    return {"state_vars": list(v.state_names), "input_vars": list(v.input_names),
            "aux_vars": list(v.aux_names)}


def controller_to_document(ctrl: RationalController, meta: dict | None = None) -> dict:
    """Plain ``dict`` with deterministic key order, suitable for JSON."""
    doc = {"kind": "rational_controller", **vars_to_document(ctrl.vars),
           "p": [poly_to_terms(pk) for pk in ctrl.p],
           "q": [poly_to_terms(qk) for qk in ctrl.q]}
    if meta:
        doc["meta"] = {k: meta[k] for k in sorted(meta)}
    return doc


def controller_from_document(doc: dict, vars: VariableSet | None = None) -> RationalController:
    """Inverse of :func:`controller_to_document`.

    When ``vars`` is given the document's variable names must match it.
    """
    if "controller" in doc:
        doc = doc["controller"]
    own = VariableSet(tuple(doc["state_vars"]), tuple(doc.get("input_vars", ())),
                      tuple(doc.get("aux_vars", ())))
    if vars is not None and vars != own:
        raise ValueError(f"controller variables {own.names} do not match the system {vars.names}")
    vars = vars or own
    p = [poly_from_terms(t, vars) for t in doc["p"]]
    q = [poly_from_terms(t, vars) for t in doc["q"]]
    return RationalController(p, q)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def save_document(doc: dict, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(doc))


def load_document(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
