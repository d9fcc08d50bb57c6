"""Learning multivariate Hawkes processes from superposed event sequences."""

from .core import (
    BoundReport,
    EventSequence,
    FitResult,
    HawkesModel,
    RegressionBundle,
    read_model,
    read_sequences,
    superpose,
    validate_model,
    write_model,
    write_sequences,
)
from .design import build_multi, build_single, build_super
from .estimators import fit_ls, fit_mle, fit_strategy, recover_sources
from .simulate import make_synthetic_suite, simulate_branching, simulate_thinning

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "EventSequence",
    "FitResult",
    "HawkesModel",
    "RegressionBundle",
    "build_multi",
    "build_single",
    "build_super",
    "fit_ls",
    "fit_mle",
    "fit_strategy",
    "make_synthetic_suite",
    "read_model",
    "read_sequences",
    "recover_sources",
    "simulate_branching",
    "simulate_thinning",
    "superpose",
    "validate_model",
    "write_model",
    "write_sequences",
]
