"""Joint blind super-resolution and demixing by Riemannian gradient descent."""
__version__ = "0.1.0"

from .estimators import ChannelEstimator, RGDDemixer
from .hankel_ops import LiftShape
from .sensing import MeasurementSet, simulate_instance
from .solver import SolverConfig, solve

__all__ = [
    "ChannelEstimator",
    "LiftShape",
    "MeasurementSet",
    "RGDDemixer",
    "SolverConfig",
    "simulate_instance",
    "solve",
]
