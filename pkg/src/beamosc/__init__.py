"""beamosc: spectral solver and oscillation-theorem verification harness
for a fourth-order multipoint boundary problem with interface conditions
and eigenvalue-dependent end conditions."""

from .coefficients import CoefficientError, PiecewiseCoefficient
from .problem import (InterfacePoint, ProblemError, ProblemSpec,
                      parse_problem, serialize_problem, validate_problem)
from .transform import Atom, HatPencil, PiecewiseLinearMap, build_tau, push_forward
from .sigma import SigmaData, SigmaError, TildeProblem, build_omega, solve_sigma, transform_tilde
from .pipeline import HypothesisViolation, PipelineConfig, PipelineResult, solve, verify

__version__ = "0.1.0"

__all__ = [
    "Atom", "CoefficientError", "HatPencil", "HypothesisViolation",
    "InterfacePoint", "PiecewiseCoefficient", "PiecewiseLinearMap",
    "PipelineConfig", "PipelineResult", "ProblemError", "ProblemSpec",
    "SigmaData", "SigmaError", "TildeProblem", "build_omega", "build_tau",
    "parse_problem", "push_forward", "serialize_problem", "solve",
    "solve_sigma", "transform_tilde", "validate_problem", "verify",
]
