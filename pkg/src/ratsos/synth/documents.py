"""Synthesis result documents (controller plus certificate)."""

from __future__ import annotations

from .algorithm import SynthesisResult
from .controller import controller_to_document, poly_to_terms, vars_to_document
from .steps import CertBundle


def cert_to_document(cert: CertBundle) -> dict:
    return {
        "step": cert.step,
        "method": cert.method,
        "R": cert.R,
        "gamma": cert.gamma,
        "V": poly_to_terms(cert.V),
        "lambda": None if cert.lam is None else [poly_to_terms(l) for l in cert.lam],
        "s": [poly_to_terms(s) for s in cert.s],
        "t": [poly_to_terms(t) for t in cert.t],
        "s_ball": None if cert.s_ball is None else poly_to_terms(cert.s_ball),
        "grams": [
            {"name": g.name, "basis": [list(m) for m in g.basis],
             "Q": [[float(v) for v in row] for row in g.Q],
             "residual": float(g.residual), "min_eig": float(g.min_eig)}
            for _, g in sorted(cert.grams.items())
        ],
    }


def result_to_document(result: SynthesisResult, meta: dict | None = None) -> dict:
    """Deterministically ordered document for a synthesis run.

    Timing fields are left out of the history so that equal runs produce
    byte-identical documents.
    """
    ctrl = result.controller
    history = [{k: v for k, v in h.items() if k != "seconds"} for h in result.history]
    warnings = sorted({f for h in result.history for f in h["flags"]})
    doc = {
        "kind": "synthesis_result",
        "method": result.method,
        **vars_to_document(ctrl.vars),
        "controller": controller_to_document(ctrl),
        "certificate": None if result.cert is None else cert_to_document(result.cert),
        "summary": {
            "R_next": result.R,
            "gamma_next": result.gamma,
            "certified_R": None if result.cert is None else result.cert.R,
            "feasible_iterations": result.n_feasible,
            "steps_solved": len(result.history),
            "converged": result.converged,
            "warnings": warnings,
        },
        "history": history,
    }
    if meta:
        doc["meta"] = {k: meta[k] for k in sorted(meta)}
    return doc
