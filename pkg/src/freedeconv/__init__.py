"""Free (de)convolution of spectral measures and moment-based estimators."""
from . import closedform, estimators, freeconv, measures, rmt
from ._core import BACKEND
from .errors import (BranchTrackingError, DomainError, FirstMomentZeroError, FreeDeconvError,
                     MassRoundingError, MeasureError, NoSolutionError, ParseError, PoleError,
                     RankError, RootFindingError)
from .measures import (AtomicMeasure, CumulantSequence, DensityCurve, MarchenkoPastur,
                       MomentSequence, moments_of, mp_moments)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AtomicMeasure", "CumulantSequence", "DensityCurve", "MarchenkoPastur",
    "MomentSequence", "moments_of", "mp_moments", "closedform", "estimators", "freeconv",
    "measures", "rmt", "FreeDeconvError", "MeasureError", "ParseError", "PoleError",
    "FirstMomentZeroError", "RootFindingError", "DomainError", "NoSolutionError",
    "BranchTrackingError", "MassRoundingError", "RankError",
]
