"""The two convex SOS subproblems of the alternating synthesis.

Both steps share one core expression. With ``D`` the product of the distinct
dynamics denominators and ``F_i = D f_i`` the cleared numerators::

    core = -grad(V).F - gamma D V - sum_k lam_k (q_k u_k - p_k)
           - sum_j t_j h_j - sum_i s_i g_i - s_ball (R - |x|^2)

``core`` SOS certifies ``dV/dt <= -gamma V`` on the working set whenever
``u_k = p_k / q_k``. Step 1 fixes the controller and searches for ``V`` and
the multiplier ``lam``; step 2 fixes ``lam`` and searches for ``V`` and the
controller.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..polyalg import Polynomial
from ..sdpcore import SDPProblem, SolverOptions, Status
from ..sosprog import DecisionPolynomial, GramCertificate, NonConvexProductError, SOSProgram
from .controller import RationalController
from .system import SystemModel


@dataclass
class SynthesisConfig:
    """Degrees, schedules and tolerances of the synthesis.

    ``d_V``, ``d_lambda``, ``d_t`` and ``d_s`` are starting degrees that the
    outer loop raises by 2 (up to the ``*_max`` values) after an infeasible
    step. ``d_p`` and ``d_q`` are the controller degrees. ``eps_rho`` is the
    strictness weight in ``V - eps_rho |x|^2`` SOS, ``eps_eta`` the lower
    bound in ``q - eps_eta`` SOS and ``eps_q`` the margin of the positivity
    certificate of the dynamics denominators. With ``step1_decay`` the
    analysis step also imposes the decay rate of the last feasible synthesis
    step instead of plain decrease. ``reg_weight`` adds a trace penalty on
    every Gram matrix (0 keeps pure feasibility problems).
    """

    R0: float = 1.0
    R_inc: float = 0.1
    gamma0: float = 0.0
    gamma_inc: float = 0.1
    d_V: int = 2
    d_lambda: int = 2
    d_t: int = 2
    d_s: int = 2
    d_V_max: int = 4
    d_lambda_max: int = 4
    d_t_max: int = 4
    d_s_max: int = 4
    d_p: int = 3
    d_q: int = 2
    iter_max: int = 10
    eps_rho: float = 1e-6
    eps_q: float = 1e-6
    eps_eta: float = 1e-3
    mode: str = "rational"
    step1_decay: bool = False
    reg_weight: float = 0.0
    convergence_tol: float = 1e-4
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mode not in ("rational", "polynomial"):
            raise ValueError(f"mode must be 'rational' or 'polynomial', got {self.mode!r}")
        for name in ("d_V", "d_lambda", "d_t", "d_s", "d_p", "d_q", "iter_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.d_V < 2:
            raise ValueError("d_V must be at least 2")
        if self.R0 <= 0:
            raise ValueError("R0 must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "solver"}
        kw = {k: v for k, v in d.items() if k in known}
        return cls(**kw)

    def degrees(self) -> dict[str, int]:
        return {"V": self.d_V, "lambda": self.d_lambda, "t": self.d_t, "s": self.d_s}

    def max_degrees(self) -> dict[str, int]:
        return {"V": self.d_V_max, "lambda": self.d_lambda_max, "t": self.d_t_max, "s": self.d_s_max}


@dataclass
class CertBundle:
    """Everything needed to re-check one feasible step.

    ``grams`` maps constraint names (``"core"``, ``"V"``, ``"q0"``, ...) to
    their Gram certificates. ``core`` is the instantiated core expression.
    """

    V: Polynomial
    controller: RationalController
    lam: list[Polynomial] | None
    s: list[Polynomial]
    t: list[Polynomial]
    s_ball: Polynomial | None
    R: float | None
    gamma: float
    core: Polynomial
    grams: dict[str, GramCertificate]
    step: int = 0
    method: str = "proposed"

    def scaled(self, c: float) -> "CertBundle":
        """Multiply ``V`` and every certificate term by ``c > 0``.

        The controller and the ``q`` certificates are unaffected.
        """
        if c <= 0:
            raise ValueError("scale must be positive")

        def sc(g: GramCertificate) -> GramCertificate:
            if g.name.startswith("q"):
                return g
            return GramCertificate(g.basis, g.Q * c, g.vars,
                                   None if g.expr is None else g.expr * c, g.name)

        return replace(
            self,
            V=self.V * c,
            lam=None if self.lam is None else [l * c for l in self.lam],
            s=[x * c for x in self.s], t=[x * c for x in self.t],
            s_ball=None if self.s_ball is None else self.s_ball * c,
            core=self.core * c,
            grams={k: sc(g) for k, g in self.grams.items()},
        )

    def normalized(self) -> "CertBundle":
        """Scale so that the quadratic diagonal of ``V`` averages 1."""
        v = self.V.vars
        diag = 0.0
        for i in v.state_indices:
            e = [0] * v.nvars
            e[i] = 2
            diag += self.V.coefficient(tuple(e))
        if diag <= 0:
            return self
        return self.scaled(v.n_state / diag)

    @property
    def max_residual(self) -> float:
        return max((g.residual for g in self.grams.values()), default=0.0)

    @property
    def min_eig(self) -> float:
        return min((g.min_eig for g in self.grams.values()), default=0.0)


@dataclass
class StepResult:
    """Outcome of one SOS subproblem."""

    step: int
    status: Status
    cert: CertBundle | None
    problem: SDPProblem | None
    iterations: int
    seconds: float
    gap: float
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == Status.FEASIBLE


def _is_decision(p) -> bool:
    return isinstance(p, DecisionPolynomial) and not p.is_known()


def _as_dec(p) -> DecisionPolynomial:
    return p if isinstance(p, DecisionPolynomial) else DecisionPolynomial.from_poly(p)


def build_core_expression(sys: SystemModel, V, lam, ctrl, gamma: float = 0.0,
                          R: float | None = None, prog: SOSProgram | None = None,
                          degrees: dict | None = None, out: dict | None = None,
                          multipliers: dict | None = None) -> DecisionPolynomial:
    """Assemble the core expression of the synthesis condition.

    Parameters
    ----------
    sys : SystemModel
    V : Polynomial or DecisionPolynomial
    lam : sequence of Polynomial or DecisionPolynomial, or None
        One multiplier per input. ``None`` drops the term (the controller
        must then already be substituted into the dynamics).
    ctrl : RationalController or tuple (p, q) of decision polynomial lists
    gamma : float
        Decay rate; the term ``-gamma D V`` is added.
    R : float, optional
        Ball radius; adds the ``s_ball`` term when given.
    prog : SOSProgram, optional
        Program receiving the multipliers ``s``, ``t`` and ``s_ball``. A
        fresh one is created when omitted and stored in ``out["program"]``.
    degrees : dict, optional
        ``{"s": d_s, "t": d_t}`` multiplier degrees (default 2 each).
    out : dict, optional
        Receives the multiplier decision polynomials under ``"s"``, ``"t"``
        and ``"s_ball"``.
    multipliers : dict, optional
        Known multipliers (same keys as ``out``) used instead of fresh
        decision polynomials, e.g. to rebuild a lifted certificate.

    Raises
    ------
    NonConvexProductError
        If both ``lam`` and the controller contain decision variables.
    """
    if prog is None:
        prog = SOSProgram(sys.vars)
    degrees = dict(degrees or {})
    d_s = int(degrees.get("s", 2))
    d_t = int(degrees.get("t", 2))
    if isinstance(ctrl, RationalController):
        p_list, q_list = list(ctrl.p), list(ctrl.q)
    else:
        p_list, q_list = (list(x) for x in ctrl)
    lam_dec = lam is not None and any(_is_decision(l) for l in lam)
    ctrl_dec = any(_is_decision(x) for x in [*p_list, *q_list])
    if lam_dec and ctrl_dec:
        raise NonConvexProductError("lambda and the controller cannot both be unknown")

    D, F = sys.cleared_dynamics()
    Vd = _as_dec(V)
    expr = DecisionPolynomial(sys.vars)
    for i, Fi in enumerate(F):
        expr = expr - Vd.partial_index(sys.vars.state_indices[i]) * Fi
    if gamma:
        expr = expr - Vd * (D * float(gamma))
    if lam is not None:
        if len(lam) != sys.n_u or len(p_list) != sys.n_u:
            raise ValueError("need one multiplier and one controller channel per input")
        for k, uk in enumerate(sys.vars.input_indices):
            u = Polynomial.variable(sys.vars, sys.vars.names[uk])
            resid = _as_dec(q_list[k]) * u - _as_dec(p_list[k])
            if lam_dec:
                expr = expr - _as_dec(lam[k]) * resid.known_part()
            else:
                expr = expr - resid * _as_dec(lam[k]).known_part()
    expr = _constraint_terms(sys, expr, R, prog, d_s, d_t, multipliers, out)
    if out is not None:
        out["program"] = prog
    return expr


def _constraint_terms(sys, expr, R, prog, d_s, d_t, known, out):
    """Subtract ``s_i g_i``, ``t_j h_j`` and ``s_ball (R - |x|^2)``."""
    s_list, t_list = [], []
    for i, gi in enumerate(sys.g):
        s = _as_dec(known["s"][i]) if known else prog.sos_poly("all", d_s // 2, name=f"s{i}")
        s_list.append(s)
        expr = expr - s * gi
    for j, hj in enumerate(sys.h):
        t = _as_dec(known["t"][j]) if known else prog.declare_poly("all", 0, d_t)
        t_list.append(t)
        expr = expr - t * hj
    s_ball = None
    if R is not None:
        if known:
            s_ball = _as_dec(known["s_ball"])
        else:
            s_ball = prog.sos_poly("all", d_s // 2, name="ball")
        expr = expr - s_ball * sys.ball(R)
    if out is not None:
        out.update(s=s_list, t=t_list, s_ball=s_ball)
    return expr


def _finish(step: int, res, t0: float, build) -> StepResult:
    sol = res.solution
    cert = build(res) if res.feasible else None
    return StepResult(step, res.status, cert, res.problem, sol.iterations,
                      time.perf_counter() - t0, sol.gap, sol.message)


def _grams(res) -> dict[str, GramCertificate]:
    return {g.name: g for g in res.certificates}


def run_step1(sys: SystemModel, ctrl: RationalController, cfg: SynthesisConfig,
              R: float | None, degrees: dict | None = None, gamma: float = 0.0) -> StepResult:
    """Search ``V`` and ``lam`` for a fixed controller.

    ``gamma`` defaults to 0 (plain decrease); it is only non-zero when the
    configuration asks for decay in this step.
    """
    t0 = time.perf_counter()
    deg = {**cfg.degrees(), **(degrees or {})}
    prog = SOSProgram(sys.vars, eps=cfg.eps_rho, reg_weight=cfg.reg_weight)
    V = prog.declare_poly("state", 2, deg["V"], name="V")
    prog.add_sos(V - prog.rho("state"), "state", name="V")
    lam = [prog.declare_poly("all", 0, deg["lambda"], name=f"lambda{k}") for k in range(sys.n_u)]
    parts: dict = {}
    expr = build_core_expression(sys, V, lam, ctrl, gamma, R, prog, deg, parts)
    prog.add_sos(expr, "all", name="core")
    res = prog.solve(cfg.solver)

    def build(res):
        y = res.values
        b = CertBundle(
            V=V.instantiate(y), controller=ctrl, lam=[l.instantiate(y) for l in lam],
            s=[s.instantiate(y) for s in parts["s"]], t=[t.instantiate(y) for t in parts["t"]],
            s_ball=None if parts["s_ball"] is None else parts["s_ball"].instantiate(y),
            R=R, gamma=gamma, core=expr.instantiate(y), grams=_grams(res), step=1)
        return b.normalized()

    return _finish(1, res, t0, build)


def _declare_controller(prog: SOSProgram, sys: SystemModel, cfg: SynthesisConfig):
    p, q = [], []
    for k in range(sys.n_u):
        pk = prog.declare_poly("state", 1, max(1, cfg.d_p), name=f"p{k}")
        qk = prog.declare_poly("state", 0, cfg.d_q, name=f"q{k}")
        zero = (0,) * sys.vars.nvars
        prog.add_eq(qk.coefficient(zero) - 1.0)
        if cfg.mode == "polynomial":
            for m in qk.terms:
                if m != zero:
                    prog.add_eq(qk.coefficient(m))
        else:
            eta = Polynomial.constant(sys.vars, cfg.eps_eta)
            prog.add_sos(qk - eta, "state", name=f"q{k}")
        p.append(pk)
        q.append(qk)
    return p, q


def _controller_from(p, q, y, sys) -> RationalController:
    P = [pk.instantiate(y) for pk in p]
    Q = [qk.instantiate(y) for qk in q]
    # drop solver noise so that q = 1 stays exactly polynomial
    Q = [Polynomial(sys.vars, {m: c for m, c in qk.terms.items() if abs(c) > 1e-12}) for qk in Q]
    return RationalController(P, Q).normalized()


def run_step2(sys: SystemModel, lam: Sequence[Polynomial], cfg: SynthesisConfig,
              R: float | None, gamma: float, degrees: dict | None = None) -> StepResult:
    """Search ``V`` and the controller for fixed multipliers ``lam``."""
    t0 = time.perf_counter()
    deg = {**cfg.degrees(), **(degrees or {})}
    prog = SOSProgram(sys.vars, eps=cfg.eps_rho, reg_weight=cfg.reg_weight)
    V = prog.declare_poly("state", 2, deg["V"], name="V")
    prog.add_sos(V - prog.rho("state"), "state", name="V")
    p, q = _declare_controller(prog, sys, cfg)
    parts: dict = {}
    expr = build_core_expression(sys, V, list(lam), (p, q), gamma, R, prog, deg, parts)
    prog.add_sos(expr, "all", name="core")
    res = prog.solve(cfg.solver)

    def build(res):
        y = res.values
        b = CertBundle(
            V=V.instantiate(y), controller=_controller_from(p, q, y, sys), lam=list(lam),
            s=[s.instantiate(y) for s in parts["s"]], t=[t.instantiate(y) for t in parts["t"]],
            s_ball=None if parts["s_ball"] is None else parts["s_ball"].instantiate(y),
            R=R, gamma=gamma, core=expr.instantiate(y), grams=_grams(res), step=2)
        return b.normalized()

    return _finish(2, res, t0, build)


# ----------------------------------------------------------------------------
# traditional (substitution) form

def _traditional_expression(sys: SystemModel, V, p_list, q_list, gamma, R, prog, deg, parts,
                            known: dict | None = None):
    """Core expression after substituting ``u = p / q`` and clearing ``q``."""
    if sys.n_u != 1:
        if not all(isinstance(qk, Polynomial) and qk.degree == 0 for qk in q_list):
            raise NotImplementedError(
                "the substitution form supports one input, or several inputs with q = 1")
    for c in [*sys.g, *sys.h]:
        if c.degree_in(sys.vars.input_indices) > 0:
            raise ValueError("constraints may not depend on the inputs in the substitution form")
    D, F0, G = sys.affine_split()
    Vd = _as_dec(V)
    qd = _as_dec(q_list[0]) if sys.n_u == 1 else DecisionPolynomial.from_poly(
        Polynomial.constant(sys.vars, 1.0))
    expr = DecisionPolynomial(sys.vars)
    for i in range(sys.n_x):
        dV = Vd.partial_index(sys.vars.state_indices[i])
        inner = qd * F0[i]
        for k in range(sys.n_u):
            inner = inner + _as_dec(p_list[k]) * G[i][k]
        expr = expr - dV * inner
    if gamma:
        expr = expr - (Vd * (D * float(gamma))) * qd
    return _constraint_terms(sys, expr, R, prog, int(deg.get("s", 2)), int(deg.get("t", 2)),
                             known, parts)


def rebuild_core(sys: SystemModel, cert: CertBundle, controller: RationalController | None = None) -> Polynomial:
    """Core polynomial recomputed from the lifted pieces of ``cert``."""
    ctrl = controller or cert.controller
    known = {"s": cert.s, "t": cert.t, "s_ball": cert.s_ball}
    if cert.method == "traditional":
        expr = _traditional_expression(sys, cert.V, ctrl.p, ctrl.q, cert.gamma, cert.R, None, {},
                                       {}, known)
    else:
        expr = build_core_expression(sys, cert.V, cert.lam, ctrl, cert.gamma, cert.R,
                                     multipliers=known)
    return expr.known_part()


def run_traditional_step1(sys: SystemModel, ctrl: RationalController, cfg: SynthesisConfig,
                          R: float | None, degrees: dict | None = None,
                          gamma: float = 0.0) -> StepResult:
    """Substitution form, ``V`` unknown and the controller fixed."""
    t0 = time.perf_counter()
    deg = {**cfg.degrees(), **(degrees or {})}
    prog = SOSProgram(sys.vars, eps=cfg.eps_rho, reg_weight=cfg.reg_weight)
    V = prog.declare_poly("state", 2, deg["V"], name="V")
    prog.add_sos(V - prog.rho("state"), "state", name="V")
    parts: dict = {}
    expr = _traditional_expression(sys, V, ctrl.p, ctrl.q, gamma, R, prog, deg, parts)
    prog.add_sos(expr, "all", name="core")
    res = prog.solve(cfg.solver)

    def build(res):
        y = res.values
        b = CertBundle(
            V=V.instantiate(y), controller=ctrl, lam=None,
            s=[s.instantiate(y) for s in parts["s"]], t=[t.instantiate(y) for t in parts["t"]],
            s_ball=None if parts["s_ball"] is None else parts["s_ball"].instantiate(y),
            R=R, gamma=gamma, core=expr.instantiate(y), grams=_grams(res), step=1,
            method="traditional")
        return b.normalized()

    return _finish(1, res, t0, build)


def run_traditional_step2(sys: SystemModel, V: Polynomial, cfg: SynthesisConfig,
                          R: float | None, gamma: float, degrees: dict | None = None) -> StepResult:
    """Substitution form, ``V`` fixed and the controller unknown."""
    t0 = time.perf_counter()
    deg = {**cfg.degrees(), **(degrees or {})}
    prog = SOSProgram(sys.vars, eps=cfg.eps_rho, reg_weight=cfg.reg_weight)
    p, q = _declare_controller(prog, sys, cfg)
    parts: dict = {}
    expr = _traditional_expression(sys, V, p, q, gamma, R, prog, deg, parts)
    prog.add_sos(expr, "all", name="core")
    res = prog.solve(cfg.solver)

    def build(res):
        y = res.values
        return CertBundle(
            V=V, controller=_controller_from(p, q, y, sys), lam=None,
            s=[s.instantiate(y) for s in parts["s"]], t=[t.instantiate(y) for t in parts["t"]],
            s_ball=None if parts["s_ball"] is None else parts["s_ball"].instantiate(y),
            R=R, gamma=gamma, core=expr.instantiate(y), grams=_grams(res), step=2,
            method="traditional")

    return _finish(2, res, t0, build)
