"""Numerical laboratory for the semiclassical limit from Hartree to Vlasov dynamics."""

from .core import (
    AccuracyWarning,
    CapabilityError,
    ConfigurationError,
    GridIncompatibilityError,
    HVLabError,
    NumericError,
    PhaseGrid,
    SpatialGrid,
    StateConstructionError,
    wigner_phase_grid,
)
from .kinetic import PhaseSpaceField, vlasov_step
from .quantum import DensityMatrix, build_mixed_state, hartree_step, trace_norm
from .transforms import weyl, wigner

__version__ = "0.1.0"
