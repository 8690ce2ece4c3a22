"""Deterministic, seedable simulator of optically-coupled slime-mould
logic gates: two-choice phototaxis, the PNOT and PNAND gates with their
propagation delays, failure rates and reset behaviour, and the
fault-tolerance sweeps, at desk scale."""

__version__ = "0.1.0"

from .calibration import Calibration, DEFAULT_CALIBRATION
from .scene import Scene, pnand_scene, pnot_scene, phototaxis_scene, validate_scene

__all__ = [
    "Calibration",
    "DEFAULT_CALIBRATION",
    "Scene",
    "pnand_scene",
    "pnot_scene",
    "phototaxis_scene",
    "validate_scene",
    "__version__",
]
