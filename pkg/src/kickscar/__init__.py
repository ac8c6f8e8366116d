"""Kicked constrained spin chains: exact diagonalization, Floquet dynamics and scar diagnostics."""
from .hilbert import (
    ConstrainedBasis,
    FullBasis,
    build_momentum_sector,
    enumerate_constrained,
    full_basis,
    neel_states,
)
from .operators import DeformationParams, RydbergParams

__version__ = "0.1.0"
