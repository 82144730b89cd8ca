"""Alternating synthesis with growing region and decay rate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from ..sdpcore import Status
from .controller import RationalController, wrap_initial
from .steps import (CertBundle, StepResult, SynthesisConfig, run_step1, run_step2,
                    run_traditional_step1, run_traditional_step2)
from .system import SystemModel, certify_denominators

log = logging.getLogger(__name__)


class InitialControllerError(RuntimeError):
    """The initial controller admits no certificate at any allowed degree."""


@dataclass
class SynthesisResult:
    """Final controller, its certificate and the per-step history.

    ``history`` holds one dict per solved subproblem with the keys
    ``iteration``, ``inner``, ``step``, ``status``, ``R``, ``gamma``,
    ``degrees``, ``solver_iterations``, ``seconds`` and ``flags``.
    ``certificates`` lists the bundle of every feasible step 2 in order.
    """

    controller: RationalController
    cert: CertBundle | None
    R: float
    gamma: float
    history: list[dict] = field(default_factory=list)
    certificates: list[CertBundle] = field(default_factory=list)
    problems: list = field(default_factory=list, repr=False)
    method: str = "proposed"
    converged: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def n_feasible(self) -> int:
        return len(self.certificates)


def _entry(res: StepResult, iteration, inner, R, gamma, degrees, flags=()) -> dict:
    return {
        "iteration": iteration, "inner": inner, "step": res.step,
        "status": res.status.value, "R": R, "gamma": gamma,
        "degrees": dict(degrees), "solver_iterations": res.iterations,
        "seconds": round(res.seconds, 6), "flags": list(flags),
    }


def _degenerate(lam) -> bool:
    return lam is not None and all(l.max_abs_coef() < 1e-8 for l in lam)


def _run(sys: SystemModel, ctrl: RationalController, cfg: SynthesisConfig,
         step_a: Callable, step_b: Callable, method: str,
         keep_problems: bool = False) -> SynthesisResult:
    R = cfg.R0
    gamma = cfg.gamma0
    degs = cfg.degrees()
    maxd = cfg.max_degrees()
    history: list[dict] = []
    certs: list[CertBundle] = []
    problems: list = []
    cert = None
    step1_ok = False
    a = 0
    counter = 0
    first = True
    converged = False
    warnings = []
    decay1 = 0.0
    if sys.equilibrium_residual() > 1e-9:
        warnings.append("origin is not an equilibrium of the open-loop dynamics")
        log.warning(warnings[-1])
    dens_global = certify_denominators(sys, None, cfg.eps_q, cfg.solver)
    while True:
        if not first:
            if all(degs[k] >= maxd[k] for k in degs):
                break
            if a > 0:
                for k in degs:
                    if degs[k] < maxd[k]:
                        degs[k] = min(degs[k] + 2, maxd[k])
                a = 0
        first = False
        failed = False
        while a < cfg.iter_max:
            a += 1
            counter += 1
            sysR = sys.at_radius(R)
            if not dens_global and not certify_denominators(sysR, R, cfg.eps_q, cfg.solver):
                raise ValueError(f"dynamics denominators are not certified positive at R={R}")
            r1 = step_a(sysR, ctrl, cfg, R, degs, decay1)
            flags = []
            if r1.status == Status.UNKNOWN:
                flags.append("solver_unknown")
                log.warning("step 1 ended with status unknown; treated as infeasible")
            if r1.feasible and method == "proposed" and _degenerate(r1.cert.lam):
                flags.append("degenerate_lambda")
            history.append(_entry(r1, counter, a, R, gamma, degs, flags))
            if keep_problems:
                problems.append(r1.problem)
            if not r1.feasible:
                failed = True
                break
            step1_ok = True
            if cert is None:
                cert = r1.cert
            r2 = step_b(sysR, r1.cert, cfg, R, gamma, degs)
            flags = ["solver_unknown"] if r2.status == Status.UNKNOWN else []
            history.append(_entry(r2, counter, a, R, gamma, degs, flags))
            if keep_problems:
                problems.append(r2.problem)
            if not r2.feasible:
                failed = True
                break
            change = ctrl.relative_change(r2.cert.controller)
            history[-1]["controller_change"] = change
            converged = change < cfg.convergence_tol
            ctrl = r2.cert.controller
            cert = r2.cert
            certs.append(cert)
            if cfg.step1_decay:
                decay1 = cert.gamma
            # recomputed from the count to avoid drift from repeated addition
            R = round(cfg.R0 + len(certs) * cfg.R_inc, 12)
            gamma = round(cfg.gamma0 + len(certs) * cfg.gamma_inc, 12)
        if not failed:
            break
    if cfg.iter_max > 0 and not step1_ok:
        raise InitialControllerError(
            "the initial controller could not be certified at any allowed degree")
    return SynthesisResult(ctrl, cert, R, gamma, history, certs, problems, method, converged,
                           warnings)


def _proposed_a(sysR, ctrl, cfg, R, degs, g=0.0):
    return run_step1(sysR, ctrl, cfg, R, degs, g)


def _proposed_b(sysR, c1, cfg, R, gamma, degs):
    return run_step2(sysR, c1.lam, cfg, R, gamma, degs)


def _traditional_a(sysR, ctrl, cfg, R, degs, g=0.0):
    return run_traditional_step1(sysR, ctrl, cfg, R, degs, g)


def _traditional_b(sysR, c1, cfg, R, gamma, degs):
    return run_traditional_step2(sysR, c1.V, cfg, R, gamma, degs)


def _initial(sys: SystemModel, K0) -> RationalController:
    if K0 is None:
        K0 = sys.initial_controller
    if K0 is None:
        raise ValueError("an initial controller is required")
    if isinstance(K0, RationalController):
        return K0
    return wrap_initial(K0)


def synthesize(sys: SystemModel, K0=None, config: SynthesisConfig | None = None,
               keep_problems: bool = False) -> SynthesisResult:
    """Alternate the two SOS steps while growing ``R`` and ``gamma``.

    Parameters
    ----------
    sys : SystemModel
    K0 : list of Polynomial or RationalController, optional
        Initial stabilizing controller; defaults to ``sys.initial_controller``.
    config : SynthesisConfig, optional
    keep_problems : bool
        Keep the compiled SDP of every step in ``result.problems``.

    Raises
    ------
    InitialControllerError
        If step 1 of the first iteration is infeasible at every degree.
    """
    cfg = config or SynthesisConfig()
    ctrl = _initial(sys, K0)
    return _run(sys, ctrl, cfg, _proposed_a, _proposed_b, "proposed", keep_problems)


def traditional_iterate(sys: SystemModel, K0=None, config: SynthesisConfig | None = None,
                        keep_problems: bool = False) -> SynthesisResult:
    """Baseline that substitutes ``u = p / q`` directly into the dynamics.

    Uses the same schedule as :func:`synthesize` but alternates between
    ``V`` (controller fixed) and the controller (``V`` fixed).

    Raises
    ------
    ValueError
        If the dynamics are not affine in the inputs.
    """
    if not sys.is_control_affine():
        raise ValueError("the substitution baseline needs input-affine dynamics")
    cfg = config or SynthesisConfig()
    ctrl = _initial(sys, K0)
    return _run(sys, ctrl, cfg, _traditional_a, _traditional_b, "traditional", keep_problems)
