"""Sum-of-squares programs compiled to block SDPs.

A program owns a vector of scalar decision variables. Decision polynomials
have coefficients that are affine in those variables; SOS constraints
introduce one Gram matrix each and match coefficients through linear
equalities. Only products with *known* polynomials are allowed, so every
program stays convex.

Gram bases are trimmed by two exact rules. Degrees outside
``[ceil(mindeg/2), floor(maxdeg/2)]`` of the constrained expression cannot
appear in any SOS decomposition, and a basis monomial ``z_a`` whose square
``z_a^2`` is reachable only from the diagonal entry ``Q_aa`` while the
expression has no such term forces ``Q_aa = 0`` and hence a zero row. Both
remove directions that would otherwise leave the SDP without an interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .polyalg import Monomial, Polynomial, VariableSet, grlex_key, monomial_basis, mono_mul
from .sdpcore import Block, SDPProblem, SDPSolution, SolverOptions, Status, solve

CONST = -1  # key of the constant part inside an affine expression


class NonConvexProductError(TypeError):
    """Raised when two decision polynomials are multiplied."""


class DegreeOverflowError(ValueError):
    """Raised when an SOS expression exceeds the requested Gram degree."""


def _acc(dst: dict, src: Mapping, scale: float = 1.0):
    for k, w in src.items():
        dst[k] = dst.get(k, 0.0) + scale * w


def _clean(aff: dict) -> dict:
    return {k: w for k, w in aff.items() if w != 0.0}


class Affine:
    """``const + sum_i w_i * y_i`` over scalar decision variables."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[int, float] | None = None):
        self.terms = _clean(dict(terms or {}))

    @classmethod
    def constant(cls, value: float) -> "Affine":
        return cls({CONST: float(value)})

    @classmethod
    def var(cls, i: int, weight: float = 1.0) -> "Affine":
        return cls({int(i): float(weight)})

    @property
    def const(self) -> float:
        return self.terms.get(CONST, 0.0)

    @property
    def weights(self) -> dict[int, float]:
        return {k: w for k, w in self.terms.items() if k != CONST}

    def is_constant(self) -> bool:
        return all(k == CONST for k in self.terms)

    def _coerce(self, other):
        if isinstance(other, Affine):
            return other
        if isinstance(other, Real):
            return Affine.constant(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        t = dict(self.terms)
        _acc(t, other.terms)
        return Affine(t)

    __radd__ = __add__

    def __neg__(self):
        return Affine({k: -w for k, w in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Real):
            return NotImplemented
        return Affine({k: w * float(other) for k, w in self.terms.items()})

    __rmul__ = __mul__

    def value(self, y: np.ndarray) -> float:
        return sum(w * (1.0 if k == CONST else y[k]) for k, w in self.terms.items())

    def __repr__(self):
        return f"Affine({self.terms})"


class DecisionPolynomial:
    """Polynomial whose coefficients are :class:`Affine` expressions."""

    __slots__ = ("vars", "terms")

    def __init__(self, vars: VariableSet, terms: Mapping[Monomial, Mapping[int, float]] | None = None):
        self.vars = vars
        clean = {}
        for m, aff in (terms or {}).items():
            a = _clean(dict(aff.terms if isinstance(aff, Affine) else aff))
            if a:
                clean[tuple(m)] = a
        self.terms: dict[Monomial, dict[int, float]] = clean

    @classmethod
    def from_poly(cls, p: Polynomial) -> "DecisionPolynomial":
        return cls(p.vars, {m: {CONST: c} for m, c in p.terms.items()})

    def _coerce(self, other):
        if isinstance(other, DecisionPolynomial):
            if other.vars != self.vars:
                raise ValueError("decision polynomials over different variable sets")
            return other
        if isinstance(other, Polynomial):
            if other.vars != self.vars:
                raise ValueError("polynomial over a different variable set")
            return DecisionPolynomial.from_poly(other)
        if isinstance(other, Real):
            return DecisionPolynomial.from_poly(Polynomial.constant(self.vars, float(other)))
        if isinstance(other, Affine):
            return DecisionPolynomial(self.vars, {(0,) * self.vars.nvars: other})
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        t = {m: dict(a) for m, a in self.terms.items()}
        for m, a in other.terms.items():
            _acc(t.setdefault(m, {}), a)
        return DecisionPolynomial(self.vars, t)

    __radd__ = __add__

    def __neg__(self):
        return DecisionPolynomial(self.vars, {m: {k: -w for k, w in a.items()} for m, a in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DecisionPolynomial):
            if self.is_known() or other.is_known():
                known, dec = (self, other) if self.is_known() else (other, self)
                return dec * known.known_part()
            raise NonConvexProductError("product of two decision polynomials is not convex")
        if isinstance(other, Real):
            s = float(other)
            return DecisionPolynomial(self.vars, {m: {k: w * s for k, w in a.items()} for m, a in self.terms.items()})
        if isinstance(other, Polynomial):
            if other.vars != self.vars:
                raise ValueError("polynomial over a different variable set")
            t: dict[Monomial, dict[int, float]] = {}
            for mb, cb in other.terms.items():
                for ma, a in self.terms.items():
                    _acc(t.setdefault(mono_mul(ma, mb), {}), a, cb)
            return DecisionPolynomial(self.vars, t)
        return NotImplemented

    __rmul__ = __mul__

    def is_known(self) -> bool:
        return all(k == CONST for a in self.terms.values() for k in a)

    def known_part(self) -> Polynomial:
        return Polynomial(self.vars, {m: a.get(CONST, 0.0) for m, a in self.terms.items()})

    def coefficient(self, m: Monomial) -> Affine:
        return Affine(self.terms.get(tuple(m), {}))

    def partial_index(self, i: int) -> "DecisionPolynomial":
        t: dict[Monomial, dict[int, float]] = {}
        for m, a in self.terms.items():
            e = m[i]
            if e:
                d = list(m)
                d[i] -= 1
                _acc(t.setdefault(tuple(d), {}), a, float(e))
        return DecisionPolynomial(self.vars, t)

    def decision_vars(self) -> set[int]:
        return {k for a in self.terms.values() for k in a if k != CONST}

    @property
    def degree(self):
        return max((sum(m) for m in self.terms), default=-math.inf)

    def instantiate(self, y) -> Polynomial:
        """Substitute decision values ``y`` (array indexed by variable id)."""
        y = np.asarray(y, dtype=float)
        return Polynomial(self.vars, {
            m: sum(w * (1.0 if k == CONST else y[k]) for k, w in a.items())
            for m, a in self.terms.items()
        })

    def __repr__(self):
        return f"DecisionPolynomial({len(self.terms)} terms, {len(self.decision_vars())} vars)"


@dataclass
class GramCertificate:
    """``expr = z^T Q z`` with ``Q`` PSD."""

    basis: list[Monomial]
    Q: np.ndarray
    vars: VariableSet
    expr: Polynomial | None = None
    name: str = ""

    def gram_polynomial(self) -> Polynomial:
        terms: dict[Monomial, float] = {}
        n = len(self.basis)
        for a in range(n):
            for b in range(n):
                c = self.Q[a, b]
                if c != 0.0:
                    m = mono_mul(self.basis[a], self.basis[b])
                    terms[m] = terms.get(m, 0.0) + c
        return Polynomial(self.vars, terms)

    @property
    def residual(self) -> float:
        """Largest coefficient mismatch between ``expr`` and ``z^T Q z``."""
        if self.expr is None:
            return math.nan
        return (self.gram_polynomial() - self.expr).max_abs_coef()

    @property
    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0]) if len(self.basis) else 0.0


@dataclass
class _SOSConstraint:
    expr: DecisionPolynomial
    basis: list[Monomial]
    gram_vars: np.ndarray          # (n, n) symmetric array of variable ids
    name: str
    direct: bool = False           # expr is z^T G z itself, no matching rows


@dataclass
class SOSResult:
    status: Status
    values: np.ndarray
    certificates: list[GramCertificate]
    solution: SDPSolution
    program: "SOSProgram" = field(repr=False)
    problem: SDPProblem | None = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.status == Status.FEASIBLE

    def value(self, p: DecisionPolynomial) -> Polynomial:
        return p.instantiate(self.values)


def gram_basis(expr: DecisionPolynomial, subset: str = "all", half_deg: int | None = None) -> list[Monomial]:
    """Trimmed Gram basis for ``expr`` (see module notes)."""
    vars = expr.vars
    if not expr.terms:
        return []
    maxdeg = max(sum(m) for m in expr.terms)
    mindeg = min(sum(m) for m in expr.terms)
    if half_deg is not None:
        if maxdeg > 2 * half_deg:
            raise DegreeOverflowError(f"expression degree {maxdeg} exceeds 2*{half_deg}")
    hi = maxdeg // 2
    lo = (mindeg + 1) // 2
    if lo > hi:
        return []
    idx = set(vars.subset_indices(subset))
    # per-variable bounds: half of the largest exponent present
    caps = [0] * vars.nvars
    for m in expr.terms:
        for i, e in enumerate(m):
            caps[i] = max(caps[i], e)
    basis = [m for m in monomial_basis(vars, subset, lo, hi)
             if all(e * 2 <= caps[i] for i, e in enumerate(m)) and all(e == 0 or i in idx for i, e in enumerate(m))]
    support = set(expr.terms)
    while True:
        pairs: dict[Monomial, int] = {}
        for a in range(len(basis)):
            for b in range(a, len(basis)):
                m = mono_mul(basis[a], basis[b])
                pairs[m] = pairs.get(m, 0) + 1
        keep = [z for z in basis if mono_mul(z, z) in support or pairs[mono_mul(z, z)] > 1]
        if len(keep) == len(basis):
            return basis
        basis = keep


class SOSProgram:
    """Container for decision variables, SOS constraints and equalities.

    Parameters
    ----------
    vars : VariableSet
        Indeterminates shared by all polynomials of the program.
    eps : float
        Weight of the strictness term ``eps * sum(x_i^2)`` (see :meth:`rho`).
    reg_weight : float
        Optional weight of a trace penalty on the Gram matrices, which
        pulls feasibility solutions toward small certificates.
    """

    def __init__(self, vars: VariableSet, eps: float = 1e-6, reg_weight: float = 0.0):
        self.vars = vars
        self.eps = float(eps)
        self.reg_weight = float(reg_weight)
        self.n_vars = 0
        self.sos: list[_SOSConstraint] = []
        self.eqs: list[dict[int, float]] = []
        self.objective: dict[int, float] | None = None
        self.decision_polys: dict[str, DecisionPolynomial] = {}

    # -- declarations -------------------------------------------------------
    def new_vars(self, k: int) -> np.ndarray:
        ids = np.arange(self.n_vars, self.n_vars + k)
        self.n_vars += k
        return ids

    def declare_poly(self, subset: str = "all", dmin: int = 0, dmax: int = 2,
                     name: str | None = None) -> DecisionPolynomial:
        """Fresh polynomial with one unknown coefficient per basis monomial."""
        basis = monomial_basis(self.vars, subset, dmin, dmax)
        ids = self.new_vars(len(basis))
        p = DecisionPolynomial(self.vars, {m: {int(i): 1.0} for m, i in zip(basis, ids)})
        if name:
            self.decision_polys[name] = p
        return p

    def rho(self, subset: str = "state") -> Polynomial:
        """Strictness margin ``eps * sum of squares`` over ``subset``."""
        idx = self.vars.subset_indices(subset)
        terms = {}
        for i in idx:
            e = [0] * self.vars.nvars
            e[i] = 2
            terms[tuple(e)] = self.eps
        return Polynomial(self.vars, terms)

    # -- constraints --------------------------------------------------------
    def add_sos(self, expr, basis_subset: str = "all", half_deg: int | None = None,
                name: str = "") -> int:
        """Constrain ``expr`` to be a sum of squares; returns its index."""
        if isinstance(expr, Polynomial):
            expr = DecisionPolynomial.from_poly(expr)
        if expr.vars != self.vars:
            raise ValueError("expression uses a different variable set")
        basis = gram_basis(expr, basis_subset, half_deg)
        n = len(basis)
        G = np.zeros((n, n), dtype=int)
        if n:
            iu = np.triu_indices(n)
            ids = self.new_vars(len(iu[0]))
            G[iu] = ids
            G[(iu[1], iu[0])] = ids
        self.sos.append(_SOSConstraint(expr, basis, G, name or f"sos{len(self.sos)}"))
        return len(self.sos) - 1

    def sos_poly(self, subset: str = "all", half_deg: int = 1, min_half: int = 0,
                 name: str = "") -> DecisionPolynomial:
        """Fresh SOS polynomial ``z^T G z`` with ``z`` all monomials of
        degree ``min_half..half_deg`` over ``subset`` and ``G`` PSD.

        Cheaper than declaring a free polynomial and constraining it with
        :meth:`add_sos`, since no coefficient-matching rows are needed.
        """
        basis = monomial_basis(self.vars, subset, min_half, half_deg)
        n = len(basis)
        G = np.zeros((n, n), dtype=int)
        terms: dict[Monomial, dict[int, float]] = {}
        if n:
            iu = np.triu_indices(n)
            ids = self.new_vars(len(iu[0]))
            G[iu] = ids
            G[(iu[1], iu[0])] = ids
            for a, b, v in zip(iu[0], iu[1], ids):
                m = mono_mul(basis[a], basis[b])
                terms.setdefault(m, {})[int(v)] = 1.0 if a == b else 2.0
        p = DecisionPolynomial(self.vars, terms)
        self.sos.append(_SOSConstraint(p, basis, G, name or f"sos{len(self.sos)}", direct=True))
        return p

    def add_eq(self, expr) -> int | None:
        """Require ``expr = 0`` (affine) or all coefficients zero (polynomial).

        Vacuous ``0 = 0`` rows are dropped; returns the number of rows kept.
        """
        if isinstance(expr, (DecisionPolynomial, Polynomial)):
            if isinstance(expr, Polynomial):
                expr = DecisionPolynomial.from_poly(expr)
            kept = 0
            for m in sorted(expr.terms, key=grlex_key):
                kept += self.add_eq(Affine(expr.terms[m])) or 0
            return kept
        if isinstance(expr, Real):
            expr = Affine.constant(float(expr))
        if not expr.terms:
            return 0
        self.eqs.append(dict(expr.terms))
        return 1

    def set_objective(self, expr: Affine | None):
        """Minimize ``expr`` (``None`` restores a pure feasibility problem)."""
        self.objective = None if expr is None else dict(expr.terms)

    # -- compilation --------------------------------------------------------
    def _coefficient_rows(self):
        rows = []
        for con in self.sos:
            if con.direct:
                continue
            acc: dict[Monomial, dict[int, float]] = {m: {k: -w for k, w in a.items()}
                                                    for m, a in con.expr.terms.items()}
            n = len(con.basis)
            for a in range(n):
                for b in range(a, n):
                    m = mono_mul(con.basis[a], con.basis[b])
                    d = acc.setdefault(m, {})
                    v = int(con.gram_vars[a, b])
                    d[v] = d.get(v, 0.0) + (1.0 if a == b else 2.0)
            for m in sorted(acc, key=grlex_key):
                row = _clean(acc[m])
                if row:
                    rows.append(row)
        return rows

    def compile(self) -> SDPProblem:
        """Block SDP: one PSD block per SOS constraint plus all equalities."""
        blocks = []
        for con in self.sos:
            n = len(con.basis)
            if n == 0:
                continue
            blk = Block(n)
            for a in range(n):
                for b in range(a, n):
                    blk.add(int(con.gram_vars[a, b]), a, b, 1.0)
            blocks.append(blk)
        rows = self._coefficient_rows() + [dict(r) for r in self.eqs]
        ri, ci, vv, b = [], [], [], []
        for r, row in enumerate(rows):
            b.append(-row.get(CONST, 0.0))
            for k in sorted(row):
                if k != CONST:
                    ri.append(r); ci.append(k); vv.append(row[k])
        A = sp.csr_matrix((vv, (ri, ci)), shape=(len(rows), self.n_vars))
        c = np.zeros(self.n_vars)
        if self.objective:
            for k, w in self.objective.items():
                if k != CONST:
                    c[k] += w
        if self.reg_weight:
            for con in self.sos:
                for a in range(len(con.basis)):
                    c[int(con.gram_vars[a, a])] += self.reg_weight
        return SDPProblem(self.n_vars, blocks, A=A, b=np.array(b), c=c if np.any(c) else None)

    def lift_solution(self, sol: SDPSolution):
        """Decision values and one Gram certificate per SOS constraint."""
        if sol.status != Status.FEASIBLE:
            raise ValueError(f"cannot lift a solution with status {sol.status.value}")
        y = np.asarray(sol.y, dtype=float)
        certs = []
        k = 0
        for con in self.sos:
            n = len(con.basis)
            if n == 0:
                Q = np.zeros((0, 0))
            else:
                Q = 0.5 * (sol.block_values[k] + sol.block_values[k].T)
                k += 1
            certs.append(GramCertificate(list(con.basis), Q, self.vars,
                                         con.expr.instantiate(y), con.name))
        return y, certs

    def solve(self, opts: SolverOptions | None = None, **kwargs) -> SOSResult:
        problem = self.compile()
        sol = solve(problem, opts, **kwargs)
        if sol.status == Status.FEASIBLE:
            y, certs = self.lift_solution(sol)
        else:
            y, certs = np.full(self.n_vars, np.nan), []
        return SOSResult(sol.status, y, certs, sol, self, problem)


# -- functional aliases -----------------------------------------------------

def declare_poly(prog: SOSProgram, subset: str = "all", dmin: int = 0, dmax: int = 2) -> DecisionPolynomial:
    return prog.declare_poly(subset, dmin, dmax)


def add_sos(prog: SOSProgram, expr, basis_subset: str = "all", half_deg: int | None = None) -> int:
    return prog.add_sos(expr, basis_subset, half_deg)


def add_eq(prog: SOSProgram, expr) -> int | None:
    return prog.add_eq(expr)


def compile_program(prog: SOSProgram) -> SDPProblem:
    return prog.compile()


def lift_solution(prog: SOSProgram, sol: SDPSolution):
    return prog.lift_solution(sol)


def sos_decompose(cert: GramCertificate, tol: float = 1e-8) -> list[Polynomial]:
    """Factor ``z^T Q z`` into squares ``sum r_i^2`` via the eigendecomposition.

    Raises
    ------
    ValueError
        If ``Q`` has an eigenvalue below ``-tol``.
    """
    n = len(cert.basis)
    if n == 0:
        return []
    w, V = np.linalg.eigh(0.5 * (cert.Q + cert.Q.T))
    if w[0] < -tol:
        raise ValueError(f"Gram matrix is indefinite (smallest eigenvalue {w[0]:.3e})")
    out = []
    for lam, v in zip(w, V.T):
        if lam <= 0.0:
            continue
        s = math.sqrt(lam)
        r = Polynomial(cert.vars, {m: s * c for m, c in zip(cert.basis, v)})
        if not r.is_zero():
            out.append(r)
    return out


def is_sos(p: Polynomial, subset: str = "all", opts: SolverOptions | None = None) -> SOSResult:
    """Convenience check: is the known polynomial ``p`` a sum of squares?"""
    prog = SOSProgram(p.vars)
    prog.add_sos(p, subset)
    return prog.solve(opts)
