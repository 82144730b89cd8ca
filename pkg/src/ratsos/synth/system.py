"""Plant models: rational dynamics, region constraints and auxiliary variables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..polyalg import Polynomial, VariableSet, sum_of_squares


@dataclass(frozen=True)
class AuxDefinition:
    """Physical meaning of an auxiliary variable, e.g. ``w = x1 - sin(x1)``."""

    function: str
    of: str

    def evaluate(self, values: np.ndarray) -> np.ndarray:
        from ..polyparse import AUX_FUNCTIONS

        return AUX_FUNCTIONS[self.function](np.asarray(values, dtype=float))


@dataclass
class SystemModel:
    """``dx_i/dt = f_num_i / f_den_i`` with constraints ``g >= 0`` and ``h = 0``.

    Parameters
    ----------
    vars : VariableSet
        States, inputs and auxiliary variables.
    f_num, f_den : list of Polynomial
        Numerators and (positive) denominators of the vector field.
    g, h : list of Polynomial
        Inequality and equality constraints describing the working set.
    aux : dict
        Maps auxiliary variable names to :class:`AuxDefinition` so that
        simulations can evaluate them from the state.
    rebuild : callable, optional
        ``rebuild(R)`` returns the model with radius-dependent parameters
        re-evaluated at ``R``.
    """

    vars: VariableSet
    f_num: list[Polynomial]
    f_den: list[Polynomial] | None = None
    g: list[Polynomial] = field(default_factory=list)
    h: list[Polynomial] = field(default_factory=list)
    aux: Mapping[str, AuxDefinition] = field(default_factory=dict)
    name: str = ""
    initial_controller: list[Polynomial] | None = None
    defaults: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    radius: float | None = None
    rebuild: Callable[[float], "SystemModel"] | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.vars.n_state
        if len(self.f_num) != n:
            raise ValueError(f"{n} states but {len(self.f_num)} dynamics entries")
        if self.f_den is None:
            self.f_den = [Polynomial.constant(self.vars, 1.0) for _ in range(n)]
        if len(self.f_den) != n:
            raise ValueError("f_den must match the number of states")
        for p in [*self.f_num, *self.f_den, *self.g, *self.h]:
            if p.vars != self.vars:
                raise ValueError("all polynomials must share the model's variable set")
        for d in self.f_den:
            if d.is_zero():
                raise ValueError("zero denominator")

    # -- structure ----------------------------------------------------------
    @property
    def n_x(self) -> int:
        return self.vars.n_state

    @property
    def n_u(self) -> int:
        return self.vars.n_input

    def at_radius(self, R: float) -> "SystemModel":
        """Model with radius-dependent parameters evaluated at ``R``."""
        if self.rebuild is None:
            return self
        return self.rebuild(R)

    def distinct_denominators(self) -> list[Polynomial]:
        out: list[Polynomial] = []
        for d in self.f_den:
            if d.degree == 0:
                continue
            if not any(d == e for e in out):
                out.append(d)
        return out

    def denominator_product(self) -> Polynomial:
        """``D = product of the distinct non-constant denominators``."""
        D = Polynomial.constant(self.vars, 1.0)
        for d in self.distinct_denominators():
            D = D * d
        return D

    def cleared_dynamics(self) -> tuple[Polynomial, list[Polynomial]]:
        """``(D, [D * f_i])`` with every entry an exact polynomial."""
        dens = self.distinct_denominators()
        D = self.denominator_product()
        out = []
        for num, den in zip(self.f_num, self.f_den):
            if den.degree == 0:
                cof = D * (1.0 / den.constant_term())
            else:
                cof = Polynomial.constant(self.vars, 1.0)
                for e in dens:
                    if not (e == den):
                        cof = cof * e
            out.append(num * cof)
        return D, out

    def is_control_affine(self) -> bool:
        """Every numerator is at most linear in the inputs and no
        denominator depends on them."""
        idx = self.vars.input_indices
        if not idx:
            return True
        return (all(p.degree_in(idx) <= 1 for p in self.f_num)
                and all(p.degree_in(idx) <= 0 for p in self.f_den))

    def affine_split(self) -> tuple[Polynomial, list[Polynomial], list[list[Polynomial]]]:
        """``(D, F0, G)`` with ``D f(x, u) = F0(x) + G(x) u`` (cleared).

        Raises
        ------
        ValueError
            If the dynamics are not affine in the inputs.
        """
        if not self.is_control_affine():
            raise ValueError("dynamics are not affine in the inputs")
        D, F = self.cleared_dynamics()
        inputs = self.vars.input_indices
        F0, G = [], []
        for Fi in F:
            f0 = {}
            gi = {k: {} for k in inputs}
            for m, c in Fi.terms.items():
                hit = [k for k in inputs if m[k]]
                if not hit:
                    f0[m] = c
                else:
                    k = hit[0]
                    e = list(m)
                    e[k] = 0
                    gi[k][tuple(e)] = c
            F0.append(Polynomial(self.vars, f0))
            G.append([Polynomial(self.vars, gi[k]) for k in inputs])
        return D, F0, G

    def equilibrium_residual(self) -> float:
        """``max_i |f_num_i(0, 0)|``; zero when the origin is an equilibrium."""
        return max((abs(p.constant_term()) for p in self.f_num), default=0.0)

    # -- numerics -----------------------------------------------------------
    def full_points(self, X: np.ndarray, U: np.ndarray | None = None) -> np.ndarray:
        """Stack states, inputs and evaluated auxiliaries in variable order."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N = X.shape[0]
        if U is None:
            U = np.zeros((N, self.n_u))
        U = np.asarray(U, dtype=float).reshape(N, self.n_u)
        W = np.zeros((N, self.vars.n_aux))
        for j, name in enumerate(self.vars.aux_names):
            d = self.aux.get(name)
            if d is None:
                raise ValueError(f"auxiliary variable {name!r} has no physical definition")
            W[:, j] = d.evaluate(X[:, self.vars.index(d.of)])
        return np.hstack([X, U, W])

    def vector_field(self, X: np.ndarray, U: np.ndarray | None = None) -> np.ndarray:
        Z = self.full_points(X, U)
        out = np.empty((Z.shape[0], self.n_x))
        for i, (num, den) in enumerate(zip(self.f_num, self.f_den)):
            out[:, i] = num.evaluate_many(Z) / den.evaluate_many(Z)
        return out

    def constraints_hold(self, Z: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Mask of full points satisfying every ``g_i >= -tol`` and ``|h_j| <= tol``."""
        ok = np.ones(Z.shape[0], dtype=bool)
        for gi in self.g:
            ok &= gi.evaluate_many(Z) >= -tol
        for hj in self.h:
            ok &= np.abs(hj.evaluate_many(Z)) <= max(tol, 1e-12)
        return ok

    def ball(self, R: float) -> Polynomial:
        return Polynomial.constant(self.vars, R) - sum_of_squares(self.vars)


def certify_denominators(sys: SystemModel, R: float | None, eps: float = 1e-6, opts=None) -> bool:
    """SOS certificate that every denominator exceeds ``eps`` on the ball.

    Checks ``den - eps - s * (R - |x|^2)`` SOS with ``s`` SOS (no ball when
    ``R`` is ``None``). Constant denominators are accepted when positive.
    """
    from ..sosprog import SOSProgram

    for den in sys.f_den:
        if den.degree == 0:
            if den.constant_term() <= 0:
                return False
            continue
        prog = SOSProgram(sys.vars)
        expr = den - eps
        if R is not None:
            half = max(1, int(den.degree) // 2 - 1)
            s = prog.sos_poly("state", half)
            expr = expr - s * sys.ball(R)
        prog.add_sos(expr, "all")
        if not prog.solve(opts).feasible:
            return False
    return True
