"""Verification lab for equilibrium measures of rational maps on the sphere.

Sample the measure by backward iteration, push observables through the
transfer operator, and test mixing / CLT / large-deviation predictions
against an exact rational-arithmetic oracle on the full shift.
"""

__version__ = "0.1.0"

from .errors import (
    CoboundaryDetected,
    ConfigError,
    DegenerateMap,
    DegreeTooLow,
    DepthUnsupported,
    ExceptionalStart,
    GreenlabError,
    InsufficientTailData,
    InvalidParams,
    NoDecayDetected,
    RootFindingFailed,
    TooManySingularHits,
)
from .sphere import Chart, HPoints, RationalMap, SpherePoint, chordal, make_rational_map
from .measure import EmpiricalMeasure, green_function, integrate, sample_equilibrium
from .observables import Observable, observable_from_config
from .shiftspace import CylinderFunction, oracle_suite
from .transfer import TransferBudget, transfer, transfer_batch
from .config import ExperimentConfig, load_config

__all__ = [
    "Chart",
    "CoboundaryDetected",
    "ConfigError",
    "CylinderFunction",
    "DegenerateMap",
    "DegreeTooLow",
    "DepthUnsupported",
    "EmpiricalMeasure",
    "ExceptionalStart",
    "ExperimentConfig",
    "GreenlabError",
    "HPoints",
    "InsufficientTailData",
    "InvalidParams",
    "NoDecayDetected",
    "Observable",
    "RationalMap",
    "RootFindingFailed",
    "SpherePoint",
    "TooManySingularHits",
    "TransferBudget",
    "chordal",
    "green_function",
    "integrate",
    "load_config",
    "make_rational_map",
    "observable_from_config",
    "oracle_suite",
    "sample_equilibrium",
    "transfer",
    "transfer_batch",
]
