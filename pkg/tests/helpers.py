"""Shared generators for the test-suite."""

from __future__ import annotations

from importlib.resources import as_file, files

import numpy as np
import scipy.sparse as sp

from ratsos.polyalg import Polynomial, VariableSet, monomial_basis
from ratsos.polyparse import load_system, parse_poly
from ratsos.sdpcore import Block, SDPProblem
from ratsos.synth import RationalController

NAMES = ("x", "y", "z")


def state_vars(n: int) -> VariableSet:
    return VariableSet(NAMES[:n] if n <= 3 else tuple(f"x{i}" for i in range(1, n + 1)))


def random_poly(rng, vars: VariableSet, deg: int, density: float = 0.7) -> Polynomial:
    basis = monomial_basis(vars, "all", 0, deg)
    keep = [m for m in basis if rng.random() < density] or basis[:1]
    return Polynomial(vars, {m: float(np.round(rng.normal(), 3)) for m in keep})


def random_sos(rng, n: int, deg: int) -> Polynomial:
    """Sum of a few random squares; ``deg`` is even."""
    vars = state_vars(n)
    out = Polynomial.zero(vars)
    for _ in range(int(rng.integers(1, 4))):
        r = random_poly(rng, vars, deg // 2)
        out = out + r * r
    return out


def random_negative(rng, n: int, deg: int) -> Polynomial:
    """Random polynomial shifted to equal -1 at a random point."""
    vars = state_vars(n)
    p = random_poly(rng, vars, deg)
    x0 = rng.normal(size=n)
    return p - (p.evaluate_many(x0[None, :])[0] + 1.0)


def rand_sdp(rng) -> tuple[SDPProblem, np.ndarray]:
    """Strictly feasible block SDP with a known interior point ``y0``.

    Blocks are at most 30x30 with at most 60 scalar variables; the
    objective is built from a positive definite dual point so the problem
    is bounded.
    """
    nv = int(rng.integers(5, 61))
    y0 = rng.normal(size=nv)
    c = np.zeros(nv)
    blocks = []
    for _ in range(int(rng.integers(1, 4))):
        d = int(rng.integers(2, 31))
        blk = Block(d)
        S0 = rng.normal(size=(d, d))
        S0 = S0 @ S0.T / d + np.eye(d)
        Z0 = rng.normal(size=(d, d))
        Z0 = Z0 @ Z0.T / d + np.eye(d)
        F0 = -S0.copy()
        for v in rng.choice(nv, size=min(nv, int(rng.integers(3, 20))), replace=False):
            F = rng.normal(size=(d, d))
            F = (F + F.T) / 2
            F[np.abs(F) < 0.8] = 0
            for i in range(d):
                for j in range(i, d):
                    if F[i, j]:
                        blk.add(int(v), i, j, F[i, j])
            F0 += y0[v] * F
            c[v] += np.sum(Z0 * F)
        for i in range(d):
            for j in range(i, d):
                blk.add(-1, i, j, F0[i, j])
        blocks.append(blk)
    rows = [rng.normal(size=(int(rng.integers(0, 5)), nv))]
    used = set().union(*[b.variables() for b in blocks])
    for v in range(nv):
        if v not in used:
            r = np.zeros(nv)
            r[v] = 1
            rows.append(r[None])
    A = sp.csr_matrix(np.vstack(rows))
    c = c + A.T @ rng.normal(size=A.shape[0])
    return SDPProblem(nv, blocks, A=A, b=A @ y0, c=c), y0


def rand_infeasible(rng) -> SDPProblem:
    """``sum y_i F_i - F_0 >= 0`` with every ``F_i`` orthogonal to a PD
    matrix ``Z0`` and ``<Z0, F_0> = 1``, so ``Z0`` proves infeasibility."""
    nv = int(rng.integers(2, 30))
    blocks = []
    for _ in range(int(rng.integers(1, 3))):
        d = int(rng.integers(2, 15))
        blk = Block(d)
        Z0 = rng.normal(size=(d, d))
        Z0 = Z0 @ Z0.T + np.eye(d)
        for v in range(nv):
            F = rng.normal(size=(d, d))
            F = (F + F.T) / 2
            F -= np.sum(Z0 * F) / np.sum(Z0 * Z0) * Z0
            for i in range(d):
                for j in range(i, d):
                    blk.add(v, i, j, F[i, j])
        F0 = rng.normal(size=(d, d))
        F0 = (F0 + F0.T) / 2
        F0 += (1 - np.sum(Z0 * F0)) / np.sum(Z0 * Z0) * Z0
        for i in range(d):
            for j in range(i, d):
                blk.add(-1, i, j, F0[i, j])
        blocks.append(blk)
    return SDPProblem(nv, blocks)


def builtin(name: str, radius: float | None = None):
    with as_file(files("ratsos") / "benchmarks" / f"{name}.yaml") as path:
        return load_system(path, radius)


# printed rational controller for the pendulum
PENDULUM_P = ("-2.539*x1^3 - 0.66171*x1^2*x2 - 0.52445*x1*x2^2 + 0.00041924*x2^3"
              " - 5.5279*x1 - 1.5831*x2")
PENDULUM_Q = "1.1618*x1^2 - 0.69832*x1*x2 + 2.0172*x2^2 + 2.7878"


def pendulum_printed_controller(sys) -> RationalController:
    p = parse_poly(PENDULUM_P, sys.vars)
    q = parse_poly(PENDULUM_Q, sys.vars)
    return RationalController([p], [q]).normalized()
