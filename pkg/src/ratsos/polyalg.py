"""Sparse multivariate polynomials over an ordered set of named variables.

Variables are partitioned into states ``x``, inputs ``u`` and optional
auxiliary variables ``w`` (pseudo-states that stand in for non-polynomial
terms such as sector-bounded nonlinearities). A monomial is an exponent
tuple ordered as ``states + inputs + aux``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from numbers import Real
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

#: Coefficients below this magnitude are dropped on canonicalization.
ZERO_TOL = 1e-12

_SUBSET_ALIASES = {
    "state": "state",
    "x": "state",
    "all": "all",
    "state_input": "all",
    "xu": "all",
}


class VariableMismatchError(ValueError):
    """Raised when polynomials over different variable sets are combined."""


@dataclass(frozen=True)
class VariableSet:
    state_names: tuple[str, ...]
    input_names: tuple[str, ...] = ()
    aux_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "aux_names", tuple(self.aux_names))
        if len(self.state_names) < 1:
            raise ValueError("at least one state variable is required")
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError(f"variable names must be unique, got {names}")
        for name in names:
            if not name.isidentifier():
                raise ValueError(f"invalid variable name {name!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return self.state_names + self.input_names + self.aux_names

    @property
    def n_state(self) -> int:
        return len(self.state_names)

    @property
    def n_input(self) -> int:
        return len(self.input_names)

    @property
    def n_aux(self) -> int:
        return len(self.aux_names)

    @property
    def nvars(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown variable {name!r}") from None

    def subset_indices(self, subset: str) -> tuple[int, ...]:
        """Indices of the variables in ``subset`` ('state' or 'all')."""
        try:
            kind = _SUBSET_ALIASES[subset]
        except KeyError:
            raise ValueError(f"unknown variable subset {subset!r}") from None
        if kind == "state":
            return tuple(range(self.n_state))
        return tuple(range(self.nvars))

    @property
    def state_indices(self) -> tuple[int, ...]:
        return tuple(range(self.n_state))

    @property
    def input_indices(self) -> tuple[int, ...]:
        return tuple(range(self.n_state, self.n_state + self.n_input))

    @property
    def aux_indices(self) -> tuple[int, ...]:
        start = self.n_state + self.n_input
        return tuple(range(start, start + self.n_aux))


def mono_degree(m: Monomial) -> int:
    return sum(m)


def grlex_key(m: Monomial):
    """Ascending graded-lex key: lower degree first, ``x1``-heavy first."""
    return (sum(m), tuple(-e for e in m))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(i + j for i, j in zip(a, b))


def monomial_basis(vars: VariableSet, subset: str, dmin: int, dmax: int) -> list[Monomial]:
    """All monomials in ``subset`` with ``dmin <= degree <= dmax`` in grlex order."""
    if dmin < 0 or dmax < dmin:
        raise ValueError(f"invalid degree window [{dmin}, {dmax}]")
    idx = vars.subset_indices(subset)
    out = []
    for d in range(dmin, dmax + 1):
        for combo in combinations_with_replacement(idx, d):
            e = [0] * vars.nvars
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    out.sort(key=grlex_key)
    return out


class Polynomial:
    """Immutable sparse polynomial with real coefficients.

    ``terms`` maps exponent tuples to coefficients. Construction drops
    coefficients with magnitude below :data:`ZERO_TOL`, so two polynomials
    compare equal exactly when their canonical term maps agree.
    """

    __slots__ = ("vars", "terms", "_compiled")

    def __init__(self, vars: VariableSet, terms: Mapping[Monomial, float] | None = None):
        self.vars = vars
        clean = {}
        n = vars.nvars
        if terms:
            for m, c in terms.items():
                if len(m) != n:
                    raise ValueError(f"monomial {m} has wrong length for {n} variables")
                c = float(c)
                if abs(c) >= ZERO_TOL:
                    clean[tuple(int(e) for e in m)] = c
        self.terms = clean
        self._compiled = None

    # construction helpers
    @classmethod
    def zero(cls, vars: VariableSet) -> "Polynomial":
        return cls(vars)

    @classmethod
    def constant(cls, vars: VariableSet, value: float) -> "Polynomial":
        return cls(vars, {(0,) * vars.nvars: value})

    @classmethod
    def variable(cls, vars: VariableSet, name: str) -> "Polynomial":
        e = [0] * vars.nvars
        e[vars.index(name)] = 1
        return cls(vars, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, vars: VariableSet, m: Monomial, coeff: float = 1.0) -> "Polynomial":
        return cls(vars, {tuple(m): coeff})

    # basic queries
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self):
        """Total degree; ``-inf`` for the zero polynomial."""
        if not self.terms:
            return -math.inf
        return max(sum(m) for m in self.terms)

    @property
    def min_degree(self):
        if not self.terms:
            return math.inf
        return min(sum(m) for m in self.terms)

    def degree_in(self, indices: Iterable[int]) -> int:
        """Largest combined exponent of the variables at ``indices``."""
        idx = tuple(indices)
        if not self.terms:
            return -1
        return max(sum(m[i] for i in idx) for m in self.terms)

    def depends_only_on(self, indices: Iterable[int]) -> bool:
        allowed = set(indices)
        return all(e == 0 for m in self.terms for i, e in enumerate(m) if i not in allowed)

    def coefficient(self, m: Monomial) -> float:
        return self.terms.get(tuple(m), 0.0)

    def constant_term(self) -> float:
        return self.terms.get((0,) * self.vars.nvars, 0.0)

    def sorted_terms(self, descending: bool = True) -> list[tuple[Monomial, float]]:
        if descending:
            # leading degree first, x1-heavy first within a degree
            keys = sorted(self.terms, key=lambda m: (-sum(m), tuple(-e for e in m)))
        else:
            keys = sorted(self.terms, key=grlex_key)
        return [(m, self.terms[m]) for m in keys]

    def coef_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.terms.values()))

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    # arithmetic
    def _check(self, other: "Polynomial"):
        if other.vars != self.vars:
            raise VariableMismatchError(
                f"variable sets differ: {self.vars.names} vs {other.vars.names}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, Real):
            return Polynomial.constant(self.vars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0.0) + c
        return Polynomial(self.vars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.vars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, Real):
            return Polynomial(self.vars, {m: c * float(other) for m, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        terms: dict[Monomial, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = mono_mul(ma, mb)
                terms[m] = terms.get(m, 0.0) + ca * cb
        return Polynomial(self.vars, terms)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Real):
            return self * (1.0 / float(other))
        return NotImplemented

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = Polynomial.constant(self.vars, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if isinstance(other, Real):
            other = Polynomial.constant(self.vars, float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self.terms == other.terms

    def __hash__(self):
        return hash((self.vars, frozenset(self.terms.items())))

    def allclose(self, other: "Polynomial", atol: float = 1e-9) -> bool:
        self._check(other)
        return (self - other).max_abs_coef() <= atol

    # calculus
    def partial(self, name: str) -> "Polynomial":
        i = self.vars.index(name)
        return self.partial_index(i)

    def partial_index(self, i: int) -> "Polynomial":
        terms: dict[Monomial, float] = {}
        for m, c in self.terms.items():
            if m[i] == 0:
                continue
            e = list(m)
            e[i] -= 1
            terms[tuple(e)] = terms.get(tuple(e), 0.0) + c * m[i]
        return Polynomial(self.vars, terms)

    # evaluation
    def evaluate(self, point: Mapping[str, float]) -> float:
        """Evaluate at ``point`` (a name -> value mapping).

        Only variables that actually occur in the polynomial must be
        assigned.
        """
        names = self.vars.names
        used = {i for m in self.terms for i, e in enumerate(m) if e}
        missing = [names[i] for i in sorted(used) if names[i] not in point]
        if missing:
            raise KeyError(f"missing assignment for {missing}")
        vals = [float(point.get(n, 0.0)) for n in names]
        total = 0.0
        for m, c in self.terms.items():
            v = c
            for x, e in zip(vals, m):
                if e:
                    v *= x ** e
            total += v
        return total

    def _compile(self):
        if self._compiled is None:
            if self.terms:
                exps = np.array(list(self.terms.keys()), dtype=np.int64)
                coefs = np.array(list(self.terms.values()), dtype=float)
            else:
                exps = np.zeros((0, self.vars.nvars), dtype=np.int64)
                coefs = np.zeros(0)
            self._compiled = (exps, coefs)
        return self._compiled

    def evaluate_many(self, X) -> np.ndarray:
        """Vectorised evaluation at the rows of ``X`` (shape ``(N, nvars)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.vars.nvars:
            raise ValueError(f"expected {self.vars.nvars} columns, got {X.shape[1]}")
        exps, coefs = self._compile()
        if coefs.size == 0:
            return np.zeros(X.shape[0])
        vals = np.ones((X.shape[0], coefs.size))
        for j in range(X.shape[1]):
            col = exps[:, j]
            if np.any(col):
                vals *= X[:, j:j + 1] ** col[None, :]
        return vals @ coefs

    def __call__(self, *args, **kwargs):
        if kwargs and not args:
            return self.evaluate(kwargs)
        if len(args) == 1 and isinstance(args[0], Mapping):
            return self.evaluate(args[0])
        return float(self.evaluate_many(np.asarray(args, dtype=float)[None, :])[0])

    # structure
    def relabel(self, vars: VariableSet) -> "Polynomial":
        """Re-express over ``vars`` (which must contain every used variable)."""
        names = self.vars.names
        terms = {}
        for m, c in self.terms.items():
            e = [0] * vars.nvars
            for i, k in enumerate(m):
                if k:
                    e[vars.index(names[i])] = k
            terms[tuple(e)] = c
        return Polynomial(vars, terms)

    def __repr__(self):
        from .polyparse import format_poly

        return f"Polynomial({format_poly(self)!r})"


def grad_dot(V: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """Directional derivative ``sum_i dV/dx_i * f_i`` over the state variables."""
    n = V.vars.n_state
    if len(f) != n:
        raise ValueError(f"expected {n} vector-field components, got {len(f)}")
    out = Polynomial.zero(V.vars)
    for i, fi in enumerate(f):
        if fi.vars != V.vars:
            raise VariableMismatchError("vector field and V use different variable sets")
        out = out + V.partial_index(i) * fi
    return out


def sum_of_squares(vars: VariableSet, indices: Iterable[int] | None = None) -> Polynomial:
    """``sum_i x_i^2`` over the state variables (or the given indices)."""
    idx = vars.state_indices if indices is None else tuple(indices)
    terms = {}
    for i in idx:
        e = [0] * vars.nvars
        e[i] = 2
        terms[tuple(e)] = 1.0
    return Polynomial(vars, terms)
