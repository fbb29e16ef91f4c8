"""Short-pulse data for quadratic wave systems in spherical symmetry, solved on a double-null grid."""

from .errors import ShortPulseError
from .nullforms import (
    QuadraticForm,
    SystemCoupling,
    check_null_condition,
    default_coupling,
    dt_squared_coupling,
    linear_coupling,
    reduce_to_null_frame,
)
from .nullgrid import build_grid, extract_cone
from .pulsedata import make_short_pulse
from .solver import EvolutionParams, evolve

__version__ = "0.1.0"

__all__ = [
    "EvolutionParams",
    "QuadraticForm",
    "ShortPulseError",
    "SystemCoupling",
    "build_grid",
    "check_null_condition",
    "default_coupling",
    "dt_squared_coupling",
    "evolve",
    "extract_cone",
    "linear_coupling",
    "make_short_pulse",
    "reduce_to_null_frame",
]
