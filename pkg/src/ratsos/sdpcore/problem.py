"""Block SDP problem and solution containers.

A problem is posed over scalar variables ``y`` (length ``n_vars``)::

    minimize    c^T y
    subject to  F_k(y) = sum_i y_i F_{k,i} - F_{k,0}  is PSD   for each block k
                A y = b

Coefficient matrices are symmetric and stored as upper-triangle COO
entries, mirroring the SDPA sparse format. A *diagonal* block constrains
only its diagonal (an LP cone) and may only carry diagonal entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp


class Status(str, Enum):
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNKNOWN = "Unknown"


@dataclass
class Block:
    """One matrix block: ``sum_i y_i F_i - F_0``.

    ``entries`` holds ``(var, i, j, value)`` rows with ``i <= j`` (0-based);
    ``var = -1`` denotes the constant matrix ``F_0``.
    """

    dim: int
    entries: list[tuple[int, int, int, float]] = field(default_factory=list)
    diagonal: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("block dimension must be positive")

    def add(self, var: int, i: int, j: int, value: float):
        if i > j:
            i, j = j, i
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise ValueError(f"entry ({i}, {j}) outside block of size {self.dim}")
        if self.diagonal and i != j:
            raise ValueError("diagonal blocks only take diagonal entries")
        self.entries.append((int(var), int(i), int(j), float(value)))

    def canonical_entries(self) -> list[tuple[int, int, int, float]]:
        """Merged, zero-free entries sorted by (var, i, j); F_0 first."""
        acc: dict[tuple[int, int, int], float] = {}
        for v, i, j, val in self.entries:
            acc[(v, i, j)] = acc.get((v, i, j), 0.0) + val
        return [(v, i, j, val) for (v, i, j), val in sorted(acc.items()) if val != 0.0]

    def variables(self) -> set[int]:
        return {v for v, _, _, val in self.entries if v >= 0 and val != 0.0}

    def matrix(self, var: int) -> np.ndarray:
        """Dense symmetric coefficient matrix of ``var`` (-1 for F_0)."""
        M = np.zeros((self.dim, self.dim))
        for v, i, j, val in self.entries:
            if v == var:
                M[i, j] += val
                if i != j:
                    M[j, i] += val
        return M

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """``sum_i y_i F_i - F_0`` as a dense matrix."""
        M = np.zeros((self.dim, self.dim))
        for v, i, j, val in self.entries:
            w = -val if v < 0 else val * y[v]
            M[i, j] += w
            if i != j:
                M[j, i] += w
        return M


@dataclass
class SDPProblem:
    n_vars: int
    blocks: list[Block] = field(default_factory=list)
    A: sp.csr_matrix | None = None
    b: np.ndarray | None = None
    c: np.ndarray | None = None

    def __post_init__(self):
        if self.A is None:
            self.A = sp.csr_matrix((0, self.n_vars))
        else:
            self.A = sp.csr_matrix(self.A, dtype=float)
        if self.b is None:
            self.b = np.zeros(self.A.shape[0])
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.c is not None:
            self.c = np.asarray(self.c, dtype=float).ravel()
        self.validate()

    def validate(self):
        if self.A.shape[1] != self.n_vars:
            raise ValueError(f"A has {self.A.shape[1]} columns, expected {self.n_vars}")
        if self.b.shape[0] != self.A.shape[0]:
            raise ValueError("A and b have inconsistent row counts")
        if self.c is not None and self.c.shape[0] != self.n_vars:
            raise ValueError(f"objective has length {self.c.shape[0]}, expected {self.n_vars}")
        for k, blk in enumerate(self.blocks):
            for v, i, j, _ in blk.entries:
                if v >= self.n_vars:
                    raise ValueError(f"block {k} references variable {v} >= n_vars")

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    @property
    def free_vars(self) -> int:
        """Number of scalar variables that appear in no block."""
        used = set()
        for blk in self.blocks:
            used |= blk.variables()
        return self.n_vars - len(used)

    @property
    def block_sizes(self) -> list[int]:
        return [blk.dim for blk in self.blocks]

    def objective(self, y) -> float:
        return 0.0 if self.c is None else float(self.c @ y)

    def structurally_equal(self, other: "SDPProblem", tol: float = 0.0) -> bool:
        if self.n_vars != other.n_vars or len(self.blocks) != len(other.blocks):
            return False
        for a, b in zip(self.blocks, other.blocks):
            if a.dim != b.dim or a.diagonal != b.diagonal:
                return False
            ea, eb = a.canonical_entries(), b.canonical_entries()
            if len(ea) != len(eb):
                return False
            for x, y in zip(ea, eb):
                if x[:3] != y[:3] or abs(x[3] - y[3]) > tol:
                    return False
        ca = np.zeros(self.n_vars) if self.c is None else self.c
        cb = np.zeros(other.n_vars) if other.c is None else other.c
        if np.max(np.abs(ca - cb), initial=0.0) > tol:
            return False
        if self.A.shape != other.A.shape:
            return False
        if self.n_eq and (abs(self.A - other.A).max() > tol or np.max(np.abs(self.b - other.b)) > tol):
            return False
        return True


@dataclass
class SDPSolution:
    status: Status
    y: np.ndarray
    block_values: list[np.ndarray]
    dual: dict
    gap: float
    residuals: tuple[float, float]
    iterations: int
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    certificate: dict | None = None
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == Status.FEASIBLE


def verify_infeasibility_certificate(problem: SDPProblem, certificate: dict) -> tuple[float, float, float]:
    """Check a primal infeasibility certificate by direct multiplication.

    The certificate consists of PSD block multipliers ``Z_k`` and equality
    multipliers ``v`` with ``sum_k <Z_k, F_{k,i}> + (A^T v)_i = 0`` for all
    ``i`` and ``sum_k <Z_k, F_{k,0}> + b^T v > 0``. For a feasible ``y`` the
    sum ``sum_k <Z_k, F_k(y)>`` would be non-negative yet equals minus the
    latter quantity, so the pair proves infeasibility.

    Returns
    -------
    value : float
        Normalised to 1 for a valid certificate.
    residual : float
        Infinity norm of the stationarity vector after normalisation.
    min_eig : float
        Smallest eigenvalue over the normalised ``Z_k``.
    """
    Zs = certificate["Z"]
    v = np.asarray(certificate["v"], dtype=float)
    stat = np.zeros(problem.n_vars)
    const = 0.0
    min_eig = np.inf
    for blk, Z in zip(problem.blocks, Zs):
        Z = np.asarray(Z, dtype=float)
        if blk.diagonal:
            Z = np.diag(np.diag(Z))
        if Z.size:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(Z)[0]))
        for var, i, j, val in blk.entries:
            w = val * (Z[i, j] if i == j else 2.0 * Z[i, j])
            if var < 0:
                const += w
            else:
                stat[var] += w
    value = const
    if problem.n_eq:
        stat += problem.A.T @ v
        value += float(problem.b @ v)
    scale = value if value > 0 else 1.0
    if min_eig == np.inf:
        min_eig = 0.0
    return value / scale, float(np.max(np.abs(stat), initial=0.0)) / scale, min_eig / scale
