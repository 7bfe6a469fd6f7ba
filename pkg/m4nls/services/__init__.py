"""
Services module for the 4NLS laboratory.
Numerical kernels and the studies built on them.
"""

from m4nls.services.spectral_core import SpectralGrid, Field, make_grid
from m4nls.services.solvers import GroundStateResult, petviashvili_solve, normalized_gradient_flow
from m4nls.services.linearization import SpectrumReport, smallest_eigenpairs, stability_condition
from m4nls.services.evolution import StabilityTrace, split_step_evolve, orbital_distance, stability_experiment

__all__ = [
    "SpectralGrid",
    "Field",
    "make_grid",
    "GroundStateResult",
    "petviashvili_solve",
    "normalized_gradient_flow",
    "SpectrumReport",
    "smallest_eigenpairs",
    "stability_condition",
    "StabilityTrace",
    "split_step_evolve",
    "orbital_distance",
    "stability_experiment",
]
