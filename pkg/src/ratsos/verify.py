"""Closed-loop simulation, performance metrics, ROA estimates and
numeric spot checks of certificates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .polyalg import Polynomial
from .synth.controller import RationalController
from .synth.steps import CertBundle, rebuild_core
from .synth.system import SystemModel


@dataclass
class Trajectory:
    """Simulated closed loop on a uniform time grid.

    ``states`` has shape ``(steps, n_x)`` and ``inputs`` ``(steps, n_u)``.
    Inputs are the controller values before any cap. A truncated run keeps
    the rows up to the last valid step.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    flags: dict = field(default_factory=dict)
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ()

    @property
    def truncated(self) -> bool:
        return bool(self.flags.get("diverged") or self.flags.get("denominator_violation"))

    def to_csv(self) -> str:
        """``t,<states>,<inputs>`` with ``repr``-exact, locale-free numbers."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.state_names, *self.input_names])
        for t, x, u in zip(self.times, self.states, self.inputs):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in x), *(repr(float(v)) for v in u)])
        return buf.getvalue()


def _controller_fn(ctrl, sys: SystemModel, eps_eta: float):
    """Return ``f(X) -> (U, bad_mask)``; ``bad`` marks small denominators."""
    if ctrl is None:
        return lambda X: (np.zeros((X.shape[0], sys.n_u)), np.zeros(X.shape[0], dtype=bool))
    if isinstance(ctrl, RationalController):
        def f(X):
            P, Q = ctrl.numerator_denominator(X)
            bad = np.any(Q <= eps_eta / 2, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                return P / Q, bad
        return f
    return lambda X: (np.asarray(ctrl(X), dtype=float).reshape(X.shape[0], sys.n_u),
                      np.zeros(X.shape[0], dtype=bool))


def simulate_batch(sys: SystemModel, ctrl, X0, dt: float, T: float,
                   input_cap: float | None = None, eps_eta: float = 1e-3,
                   diverge: float = 1e6) -> list[Trajectory]:
    """Integrate many initial states at once with classic RK4.

    Parameters
    ----------
    ctrl : RationalController, callable or None
        ``None`` applies ``u = 0``; a callable maps ``(N, n_x)`` states to
        ``(N, n_u)`` inputs.
    input_cap : float, optional
        Saturate the applied input at ``+-input_cap``. Uncapped by default.
    eps_eta : float
        A run stops with ``denominator_violation`` once some ``q_k`` drops
        to ``eps_eta / 2`` or below at any stage.
    diverge : float
        A run stops with ``diverged`` once the state norm exceeds this or
        becomes non-finite.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    X = np.atleast_2d(np.asarray(X0, dtype=float)).copy()
    B, n = X.shape
    if n != sys.n_x:
        raise ValueError(f"expected {sys.n_x} states, got {n}")
    steps = int(round(T / dt))
    law = _controller_fn(ctrl, sys, eps_eta)

    def applied(Xs):
        U, bad = law(Xs)
        if input_cap is not None:
            U = np.clip(U, -input_cap, input_cap)
        return U, bad

    def rhs(Xs):
        U, bad = applied(Xs)
        with np.errstate(all="ignore"):
            return sys.vector_field(Xs, U), bad

    states = np.full((steps + 1, B, n), np.nan)
    inputs = np.full((steps + 1, B, sys.n_u), np.nan)
    last = np.full(B, steps)
    active = np.ones(B, dtype=bool)
    flags = [dict(diverged=False, denominator_violation=False, input_cap_hit=False) for _ in range(B)]

    def stop(mask, k, key):
        for b in np.flatnonzero(mask & active):
            flags[b][key] = True
            last[b] = k
        active[mask] = False

    for k in range(steps + 1):
        U, bad = law(X)
        states[k, active] = X[active]
        inputs[k, active] = U[active]
        if input_cap is not None:
            for b in np.flatnonzero(active & np.any(np.abs(U) > input_cap, axis=1)):
                flags[b]["input_cap_hit"] = True
        stop(bad, k, "denominator_violation")
        if k == steps or not active.any():
            break
        A = np.flatnonzero(active)
        x = X[A]
        k1, b1 = rhs(x)
        k2, b2 = rhs(x + 0.5 * dt * k1)
        k3, b3 = rhs(x + 0.5 * dt * k2)
        k4, b4 = rhs(x + dt * k3)
        xn = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        badq = np.zeros(B, dtype=bool)
        badq[A] = b1 | b2 | b3 | b4
        stop(badq, k, "denominator_violation")
        X[A] = xn
        with np.errstate(invalid="ignore"):
            big = ~np.all(np.isfinite(X), axis=1) | (np.linalg.norm(X, axis=1) > diverge)
        stop(big & active, k, "diverged")

    times = np.arange(steps + 1) * dt
    out = []
    for b in range(B):
        m = last[b] + 1
        out.append(Trajectory(times[:m].copy(), states[:m, b].copy(), inputs[:m, b].copy(),
                              flags[b], sys.vars.state_names, sys.vars.input_names))
    for tr in out:
        tr.flags["converged"] = (not tr.truncated) and settling_time(tr) is not None
    return out


def simulate(sys: SystemModel, ctrl, x0, dt: float = 1e-2, T: float = 10.0,
             input_cap: float | None = None, eps_eta: float = 1e-3) -> Trajectory:
    """Single closed-loop trajectory; see :func:`simulate_batch`."""
    return simulate_batch(sys, ctrl, np.asarray(x0, dtype=float)[None, :], dt, T,
                          input_cap, eps_eta)[0]


def settling_time(traj: Trajectory, fraction: float = 0.01) -> float | None:
    """First time after which every state stays within ``fraction`` of its
    initial magnitude; ``None`` if that never happens in the horizon.

    States that start at exactly zero are ignored. A truncated trajectory
    has no settling time.
    """
    if traj.truncated or len(traj.times) == 0:
        return None
    x0 = np.abs(traj.states[0])
    t_star = 0.0
    for i, a in enumerate(x0):
        if a == 0:
            continue
        outside = np.flatnonzero(np.abs(traj.states[:, i]) > fraction * a)
        if len(outside) == 0:
            continue
        j = outside[-1] + 1
        if j >= len(traj.times):
            return None
        t_star = max(t_star, float(traj.times[j]))
    return t_star


def total_cost(traj: Trajectory) -> float:
    """Plain sum over recorded steps of ``|x|^2 + |u|^2`` (no ``dt`` weight)."""
    return float(np.sum(traj.states ** 2) + np.sum(traj.inputs ** 2))


# ----------------------------------------------------------------------------
# regions of attraction

def ball_grid(n: int, R: float, grid_n: int) -> np.ndarray:
    """Points of a uniform ``grid_n^n`` lattice inside ``|x|^2 <= R``.

    The origin is dropped.

    Raises
    ------
    ValueError
        If the grid would be empty.
    """
    if R <= 0 or grid_n < 1:
        raise ValueError("empty grid: need R > 0 and grid_n >= 1")
    r = math.sqrt(R)
    axis = np.linspace(-r, r, grid_n) if grid_n > 1 else np.array([0.5 * r])
    X = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), -1).reshape(-1, n)
    keep = (np.sum(X ** 2, axis=1) <= R * (1 + 1e-12)) & (np.linalg.norm(X, axis=1) > 0)
    X = X[keep]
    if len(X) == 0:
        raise ValueError("empty grid")
    return X


def ball_points(n: int, R: float, count: int, seed: int = 0) -> np.ndarray:
    """``count`` quasi-uniform points inside ``|x|^2 <= R`` (scrambled Halton)."""
    if R <= 0 or count < 1:
        raise ValueError("need R > 0 and count >= 1")
    r = math.sqrt(R)
    gen = qmc.Halton(d=n, scramble=True, seed=seed)
    out = []
    while sum(len(o) for o in out) < count:
        P = (2 * gen.random(max(4 * count, 16)) - 1) * r
        P = P[np.sum(P ** 2, axis=1) <= R]
        out.append(P)
    return np.vstack(out)[:count]


@dataclass
class RoaReport:
    """Grid verdicts plus the certified sublevel set, when ``V`` is known."""

    grid: np.ndarray
    verdicts: np.ndarray
    R: float
    certified_level: float | None = None
    level_resolution: float | None = None

    @property
    def fraction_converged(self) -> float:
        return float(np.mean(self.verdicts)) if len(self.verdicts) else 0.0

    def to_document(self) -> dict:
        return {
            "R": self.R,
            "points": int(len(self.grid)),
            "fraction_converged": self.fraction_converged,
            "certified_level": self.certified_level,
            "level_resolution": self.level_resolution,
        }

    def to_csv(self, names) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*names, "converged"])
        for x, v in zip(self.grid, self.verdicts):
            w.writerow([*(repr(float(c)) for c in x), int(bool(v))])
        return buf.getvalue()


def roa_sample(sys: SystemModel, ctrl, R: float, grid_n: int = 5, dt: float = 1e-2,
               T: float = 10.0, V: Polynomial | None = None, input_cap: float | None = None,
               eps_eta: float = 1e-3) -> RoaReport:
    """Simulate from a uniform grid in the ball and classify each point."""
    X = ball_grid(sys.n_x, R, grid_n)
    trajs = simulate_batch(sys, ctrl, X, dt, T, input_cap, eps_eta)
    verdicts = np.array([t.flags["converged"] for t in trajs], dtype=bool)
    rep = RoaReport(X, verdicts, R)
    if V is not None:
        rep.certified_level, rep.level_resolution = certified_roa_level(V, R, return_resolution=True)
    return rep


def _pad(V: Polynomial, X: np.ndarray) -> np.ndarray:
    v = V.vars
    return np.hstack([X, np.zeros((X.shape[0], v.nvars - X.shape[1]))])


def _sphere(n: int, count: int, seed: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = np.linspace(0, 2 * np.pi, count, endpoint=False)
        return np.column_stack([np.cos(th), np.sin(th)])
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((count, n))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    E = np.vstack([np.eye(n), -np.eye(n)])
    return np.vstack([E, P])


def certified_roa_level(V: Polynomial, R: float, n_samples: int = 10000, seed: int = 0,
                        return_resolution: bool = False):
    """Largest ``c`` with ``{V <= c}`` (component of the origin) inside
    ``|x|^2 <= R``.

    That level is ``min V`` over the sphere ``|x|^2 = R``, which is where a
    bisection on ``c`` against the boundary samples converges; the minimum
    is taken directly. The resolution is a first-order bound on how far
    the sampled minimum may sit above the true one.

    Raises
    ------
    ValueError
        If ``V`` is not positive definite on the sampled shells.
    """
    n = V.vars.n_state
    if not V.depends_only_on(V.vars.state_indices):
        raise ValueError("V must depend on the states only")
    U = _sphere(n, n_samples, seed)
    r = math.sqrt(R)
    for frac in (0.1, 0.25, 0.5, 1.0):
        vals = V.evaluate_many(_pad(V, U * r * frac))
        top = float(np.max(np.abs(vals)))
        if top == 0 or float(np.min(vals)) <= 1e-9 * top:
            raise ValueError("V is not positive definite on the sampled region")
    vals = V.evaluate_many(_pad(V, U * r))
    c = float(np.min(vals))
    if not return_resolution:
        return c
    grads = np.column_stack([V.partial_index(i).evaluate_many(_pad(V, U * r)) for i in range(n)])
    tangential = grads - np.sum(grads * U, axis=1, keepdims=True) * U
    if n <= 2:
        spacing = 2 * np.pi * r / max(len(U), 1)
    else:
        spacing = r * (4 * np.pi / len(U)) ** (1.0 / (n - 1))
    res = float(np.max(np.linalg.norm(tangential, axis=1))) * spacing / 2
    return c, res


def sublevel_fraction(V: Polynomial, R: float, level: float, count: int = 4000, seed: int = 0) -> float:
    """Fraction of the ball ``|x|^2 <= R`` covered by ``{V <= level}``."""
    X = ball_points(V.vars.n_state, R, count, seed)
    return float(np.mean(V.evaluate_many(_pad(V, X)) <= level))


# ----------------------------------------------------------------------------
# certificate spot checks

@dataclass
class CheckReport:
    """Outcome of :func:`check_certificate`.

    ``failures`` maps a check name to ``(witness_point, value)``.
    """

    passed: bool
    samples: int
    skipped: int
    identity_residual: float
    coefficient_residual: float
    failures: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)


def _sample_region(sys: SystemModel, R: float, n: int, rng) -> np.ndarray:
    X = rng.standard_normal((n, sys.n_x))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= math.sqrt(R) * rng.random((n, 1)) ** (1.0 / sys.n_x)
    return X


def check_certificate(bundle: CertBundle, sys: SystemModel, ctrl: RationalController | None = None,
                      n_samples: int = 1000, tol: float = 1e-6, seed: int = 0,
                      eps_eta: float = 1e-3) -> CheckReport:
    """Numerically re-check the conclusion of a certificate.

    Samples states in the ball (``R`` from the bundle, 1 if absent), keeps
    those satisfying the working-set constraints with ``u = p/q``, and checks
    ``V > 0``, ``dV/dt <= -gamma V + tol`` and ``q_k >= eps_eta - tol``.
    The core identity is re-evaluated at random ``(x, u, w)`` points off the
    controller manifold using the rebuilt core and the stored Gram matrix.
    """
    sysR = sys.at_radius(bundle.R) if bundle.R is not None else sys
    ctrl = ctrl or bundle.controller
    rng = np.random.default_rng(seed)
    R = bundle.R if bundle.R is not None else 1.0
    X = _sample_region(sysR, R, n_samples, rng)
    P, Q = ctrl.numerator_denominator(X)
    U = P / Q
    Z = sysR.full_points(X, U)
    keep = sysR.constraints_hold(Z)
    X, U, Z, Q = X[keep], U[keep], Z[keep], Q[keep]
    failures, worst = {}, {}

    def record(name, values, bad_mask):
        if len(values):
            j = int(np.argmax(values))
            worst[name] = float(values[j])
        if np.any(bad_mask):
            j = int(np.flatnonzero(bad_mask)[np.argmax(values[bad_mask])])
            failures[name] = (Z[j].tolist(), float(values[j]))

    Vx = bundle.V.evaluate_many(Z)
    record("V_positive", -Vx, Vx <= 0)
    F = sysR.vector_field(X, U)
    dV = np.zeros(len(X))
    for i, idx in enumerate(sysR.vars.state_indices):
        dV += bundle.V.partial_index(idx).evaluate_many(Z) * F[:, i]
    excess = dV + bundle.gamma * Vx
    record("decay", excess, excess > tol)
    qgap = eps_eta - Q.min(axis=1) if len(Q) else np.zeros(0)
    record("q_lower_bound", qgap, qgap > tol)

    core = rebuild_core(sysR, bundle, ctrl)
    gram = bundle.grams.get("core")
    coef_res, ident = math.nan, math.nan
    if gram is not None:
        diff = core - gram.gram_polynomial()
        coef_res = diff.max_abs_coef()
        W = rng.uniform(-1, 1, (n_samples, sysR.vars.nvars)) * math.sqrt(R)
        scale = 1.0 + sum(abs(c) * np.abs(Polynomial.monomial(core.vars, m).evaluate_many(W))
                          for m, c in core.terms.items())
        rel = np.abs(diff.evaluate_many(W)) / scale
        ident = float(np.max(rel))
        if ident > tol:
            j = int(np.argmax(rel))
            failures["identity"] = (W[j].tolist(), float(rel[j]))
        if gram.min_eig < -tol:
            failures["gram_psd"] = (None, gram.min_eig)
    return CheckReport(not failures, int(len(X)), int(n_samples - len(X)), ident, coef_res,
                       failures, worst)


def closed_loop_derivative(sys: SystemModel, V: Polynomial, ctrl: RationalController,
                           X: np.ndarray) -> np.ndarray:
    """``dV/dt`` along the closed loop at states ``X`` (helper for plots)."""
    U = ctrl(X)
    Z = sys.full_points(X, U)
    F = sys.vector_field(X, U)
    return sum(V.partial_index(idx).evaluate_many(Z) * F[:, i]
               for i, idx in enumerate(sys.vars.state_indices))


__all__ = [
    "Trajectory", "simulate", "simulate_batch", "settling_time", "total_cost",
    "ball_grid", "ball_points", "RoaReport", "roa_sample", "certified_roa_level",
    "sublevel_fraction", "CheckReport", "check_certificate", "closed_loop_derivative",
]
