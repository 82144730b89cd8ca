"""Rational controller synthesis by alternating convex SOS programs."""

from .algorithm import InitialControllerError, SynthesisResult, synthesize, traditional_iterate
from .baselines import CancellationLaw, cancellation_controller
from .controller import (RationalController, controller_from_document, controller_to_document,
                         load_document, save_document, wrap_initial)
from .documents import result_to_document
from .steps import (CertBundle, StepResult, SynthesisConfig, build_core_expression, run_step1,
                    run_step2, run_traditional_step1, run_traditional_step2)
from .system import AuxDefinition, SystemModel, certify_denominators

__all__ = [
    "AuxDefinition", "SystemModel", "certify_denominators",
    "RationalController", "wrap_initial", "controller_to_document", "controller_from_document",
    "save_document", "load_document", "result_to_document",
    "SynthesisConfig", "CertBundle", "StepResult", "build_core_expression",
    "run_step1", "run_step2", "run_traditional_step1", "run_traditional_step2",
    "SynthesisResult", "InitialControllerError", "synthesize", "traditional_iterate",
    "CancellationLaw", "cancellation_controller",
]
