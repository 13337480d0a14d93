"""Numerical laboratory for overdetermined p-capacitary problems on star-shaped domains."""

from serrinlab.closed_forms import PLaplaceParams
from serrinlab.diagnostics import DiagnosticsReport, Verdict, VerdictThresholds, run_diagnostics
from serrinlab.errors import (
    ConfigError,
    InvalidDomainError,
    ParameterError,
    SerrinLabError,
    SolverError,
    UnconvergedError,
)
from serrinlab.geometry import StarDomain, TrigRadius
from serrinlab.solver import SolverConfig, SolveResult, run_problem

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DiagnosticsReport",
    "InvalidDomainError",
    "PLaplaceParams",
    "ParameterError",
    "SerrinLabError",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "StarDomain",
    "TrigRadius",
    "UnconvergedError",
    "Verdict",
    "VerdictThresholds",
    "run_diagnostics",
    "run_problem",
]
