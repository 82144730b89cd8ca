"""Closed-form cancellation law used as a comparison baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..polyalg import Polynomial, grad_dot


@dataclass
class CancellationLaw:
    """``u = p / q`` from ``dV/dx (f0 + g u) = -W``.

    ``q`` is not sign-certified and may vanish away from the origin.
    ``common`` is the monomial factor shared by ``p`` and ``q`` and
    ``reduced`` holds ``(p, q)`` with that factor divided out.
    """

    p: Polynomial
    q: Polynomial
    common: tuple[int, ...]
    reduced: tuple[Polynomial, Polynomial]
    flags: list[str] = field(default_factory=list)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = self.p.vars
        Z = np.hstack([X, np.zeros((X.shape[0], v.n_input + v.n_aux))])
        p, q = self.reduced
        return (p.evaluate_many(Z) / q.evaluate_many(Z))[:, None]


def _monomial_gcd(*polys: Polynomial) -> tuple[int, ...]:
    nv = polys[0].vars.nvars
    g = [None] * nv
    for p in polys:
        for m in p.terms:
            for i, e in enumerate(m):
                g[i] = e if g[i] is None else min(g[i], e)
    return tuple(0 if e is None else e for e in g)


def _divide(p: Polynomial, m: tuple[int, ...]) -> Polynomial:
    return Polynomial(p.vars, {tuple(a - b for a, b in zip(k, m)): c for k, c in p.terms.items()})


def cancellation_controller(V: Polynomial, f0: Sequence[Polynomial], g: Sequence[Polynomial],
                            W: Polynomial, grid: int = 11, radius: float = 1.0) -> CancellationLaw:
    """``p = -(grad(V).f0 + W)``, ``q = grad(V).g`` for a single input.

    Parameters
    ----------
    V, W : Polynomial
        Lyapunov function and the desired decrease ``-W``. ``W`` must vanish
        at the origin and be positive on a test grid of the cube
        ``[-radius, radius]^n`` (origin excluded).
    f0, g : sequence of Polynomial
        Drift and input vector field of ``dx/dt = f0 + g u``.

    Raises
    ------
    ValueError
        If ``q`` is identically zero or ``W`` fails the checks.
    """
    vars = V.vars
    if abs(W.constant_term()) > 1e-12:
        raise ValueError("W must vanish at the origin")
    axes = [np.linspace(-radius, radius, grid)] * vars.n_state
    X = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, vars.n_state)
    X = X[np.linalg.norm(X, axis=1) > 0]
    Z = np.hstack([X, np.zeros((X.shape[0], vars.n_input + vars.n_aux))])
    if np.any(W.evaluate_many(Z) <= 0):
        raise ValueError("W is not positive on the test grid")
    p = -(grad_dot(V, list(f0)) + W)
    q = grad_dot(V, list(g))
    if q.is_zero():
        raise ValueError("dV/dx g is identically zero; the law is undefined")
    m = _monomial_gcd(p, q)
    reduced = (_divide(p, m), _divide(q, m))
    flags = ["denominator not sign-certified"]
    if any(m):
        flags.append("common monomial factor removed")
    return CancellationLaw(p, q, m, reduced, flags)
