"""
Models module for the 4NLS laboratory.
Pydantic schemas for parameters, reports and run configuration.
"""

from m4nls.models.schemas import (
    # Parameters
    Params,

    # Functional records
    SobolevProducts,
    FunctionalRecord,
    LagrangeMultiplier,
    RecoveredIntegrals,
    IdentityReport,

    # Linearization
    NondegeneracyReport,
    StabilityConditionReport,

    # Analysis
    DecayFit,
    SignReport,
    MassSample,
    CriticalMassReport,
    ShootReport,

    # Runs
    SolverKnobs,
    ExperimentKnobs,
    RunConfig,
    RunManifest,
)

__all__ = [
    "Params",
    "SobolevProducts",
    "FunctionalRecord",
    "LagrangeMultiplier",
    "RecoveredIntegrals",
    "IdentityReport",
    "NondegeneracyReport",
    "StabilityConditionReport",
    "DecayFit",
    "SignReport",
    "MassSample",
    "CriticalMassReport",
    "ShootReport",
    "SolverKnobs",
    "ExperimentKnobs",
    "RunConfig",
    "RunManifest",
]
