"""Time-minimal control of the integrable dissipative two-level system:
extremals, conjugate and cut loci, and the Grusin metric family."""
from ._jit import BACKEND
from .model import (CartesianState, DissipationParams, ExtremalPoint, ReducedCostate,
                    SphericalState)

__version__ = "0.1.0"
