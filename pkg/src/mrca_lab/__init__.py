"""Laws, exact samplers and Monte Carlo checks for the genealogy of a
stationary continuous-state branching population."""

__version__ = "0.1.0"

from .mechanism import CapabilityError, MechanismError, MechanismSpec, ValidationReport
from .cumulant import CumulantEvaluator
from .laws import StationaryLaw
from .sampler import AncestorSample, MrcaSample, RngStream
from .verify import McReport

__all__ = [
    "AncestorSample",
    "CapabilityError",
    "CumulantEvaluator",
    "McReport",
    "MechanismError",
    "MechanismSpec",
    "MrcaSample",
    "RngStream",
    "StationaryLaw",
    "ValidationReport",
]
