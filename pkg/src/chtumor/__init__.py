"""Cahn-Hilliard tumor growth with nutrient: simulation, long-time behavior
and optimal control of the nutrient source."""

__version__ = "0.1.0"

from .grid import Grid
from .model import ModelSpec
from .solver import SchemeParams, State, Trajectory, run
from .control import Control, CostSpec, DecaySource

__all__ = [
    "Grid",
    "ModelSpec",
    "SchemeParams",
    "State",
    "Trajectory",
    "run",
    "Control",
    "CostSpec",
    "DecaySource",
    "__version__",
]
