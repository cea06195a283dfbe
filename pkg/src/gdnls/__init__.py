"""Degenerate solitons of the generalized derivative NLS and their orbital instability."""

__version__ = "0.1.0"

from .grid import GridSpec, h1_norm, pairing, shift, spectral_derivative  # noqa: E402
from .soliton import SolitonParams, SolitonProfile, build_profile, soliton_residual  # noqa: E402
from .functionals import action, energy, mass, momentum  # noqa: E402
from .degeneracy import DegeneracyData, analyze, find_z0  # noqa: E402
from .modulation import Frame, ModulationState, coercivity_estimate, decompose, make_frame  # noqa: E402
from .dynamics import SimConfig, evolve, orbital_distance, run_instability  # noqa: E402

__all__ = [
    "GridSpec", "h1_norm", "pairing", "shift", "spectral_derivative",
    "SolitonParams", "SolitonProfile", "build_profile", "soliton_residual",
    "action", "energy", "mass", "momentum",
    "DegeneracyData", "analyze", "find_z0",
    "Frame", "ModulationState", "coercivity_estimate", "decompose", "make_frame",
    "SimConfig", "evolve", "orbital_distance", "run_instability",
]
