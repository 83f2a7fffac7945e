"""Lagrangian solver and energy/uniqueness diagnostics for a radially symmetric
self-gravitating gas with a physical vacuum boundary."""
from __future__ import annotations

from .errors import (CapabilityError, ConfigurationError, IOFailure, NumericalError,
                     ValidationError, VstarError)
from .grid import Grid
from .profiles import InitialData, lane_emden_equilibrium, vacuum_profile
from .solver import SolverConfig, Termination, Trajectory, run
from .weights import build_weights

__version__ = "0.1.0"

__all__ = ["CapabilityError", "ConfigurationError", "Grid", "IOFailure", "InitialData",
           "NumericalError", "SolverConfig", "Termination", "Trajectory", "ValidationError",
           "VstarError", "build_weights", "lane_emden_equilibrium", "run", "vacuum_profile"]
