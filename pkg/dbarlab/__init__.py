"""
dbarlab - numerical experiments on compactness of the dbar-Neumann operator

Hermitian-form criteria, planar potential theory, the Hartogs and wedge
non-compactness witnesses, and Reinhardt-domain verdicts with Bergman
commutator spectra, run as reproducible experiments.
"""

__version__ = "0.1.1"

from .errors import ConsistencyError, DbarLabError, DbarLabNotice, InvalidInputError
from .experiments import DbarExperiments, ExperimentKit, report_bundle, run_suite
from .models import ExperimentResult
from .observability import TraceEvent, TracingKit

# Convenient alias: @experiment instead of @ExperimentKit.register_as_experiment
experiment = ExperimentKit.register_as_experiment

__all__ = [
    "DbarExperiments",
    "ExperimentKit",
    "ExperimentResult",
    "TracingKit",
    "TraceEvent",
    "DbarLabError",
    "InvalidInputError",
    "ConsistencyError",
    "DbarLabNotice",
    "experiment",
    "report_bundle",
    "run_suite",
]
