"""
Pydantic schemas for the 4NLS laboratory.
Defines parameter sets, scalar report records, and the run configuration.
Array-carrying results (fields, spectra, trajectories) live next to the
services that produce them.
"""

import math
from datetime import datetime
from pathlib import Path
from typing import Optional, Any, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from m4nls.config.settings import settings


# ===========================================
# Physical Parameters
# ===========================================

class Params(BaseModel):
    """
    Coefficients of gamma*Delta^2 u - beta*Delta u + alpha*u = |u|^(2 sigma) u in dimension N.
    alpha is optional: mass-constrained problems recover it as a Lagrange multiplier.
    """
    gamma: float = Field(..., ge=0, description="Biharmonic dispersion coefficient")
    beta: float = Field(..., description="Laplacian dispersion coefficient")
    alpha: Optional[float] = Field(None, description="Frequency / Lagrange multiplier")
    sigma: float = Field(..., gt=0, description="Nonlinearity exponent")
    dim: int = Field(1, ge=1, le=3, description="Space dimension N")

    class Config:
        frozen = True
        json_schema_extra = {
            "example": {"gamma": 1.0, "beta": 5.0, "alpha": 4.0, "sigma": 1.0, "dim": 1}
        }

    def with_alpha(self, alpha: Optional[float]) -> "Params":
        """Copy with a different frequency."""
        return self.model_copy(update={"alpha": alpha})

    def require_alpha(self) -> float:
        """Return alpha or raise if it was not supplied."""
        if self.alpha is None:
            raise ValueError("alpha is required for this operation")
        return self.alpha

    @property
    def sigma_n(self) -> float:
        return self.sigma * self.dim

    def symbol_positive(self) -> bool:
        """Continuous positivity of gamma|k|^4 + beta|k|^2 + alpha over all k."""
        alpha = self.require_alpha()
        if alpha <= 0:
            return False
        if self.gamma == 0:
            return self.beta >= 0
        return self.beta > -2.0 * math.sqrt(self.gamma * alpha)


# ===========================================
# Functional Records
# ===========================================

class SobolevProducts(BaseModel):
    """Squared norms with the Parseval weight of the grid."""
    l2: float = Field(..., description="Integral of |f|^2")
    grad_l2: float = Field(..., description="Integral of |grad f|^2")
    lap_l2: float = Field(..., description="Integral of |Delta f|^2")
    h2: float = Field(..., description="Sum of the three")


class FunctionalRecord(BaseModel):
    """Energy, mass, quadratic form, action and L^(2 sigma + 2) power of a profile."""
    E: float = Field(..., description="Energy gamma/2 |Delta u|^2 + beta/2 |grad u|^2 - lp/(2 sigma + 2)")
    mass: float = Field(..., description="Integral of |u|^2")
    lp_power: float = Field(..., description="Integral of |u|^(2 sigma + 2)")
    grad_l2: float = Field(..., description="Integral of |grad u|^2")
    lap_l2: float = Field(..., description="Integral of |Delta u|^2")
    J: Optional[float] = Field(None, description="Quadratic form, needs alpha")
    A: Optional[float] = Field(None, description="Action J/2 - lp/(2 sigma + 2), needs alpha")


class LagrangeMultiplier(BaseModel):
    """Three evaluations of the frequency of a mass-constrained critical point."""
    alpha: float = Field(..., description="(lp - gamma |Delta u|^2 - beta |grad u|^2) / mu")
    alpha_energy_form: float = Field(..., description="(-2E + sigma/(sigma+1) lp) / mu")
    alpha_pohozaev_form: float = Field(..., description="((1 - sigma N/(2 sigma + 2)) lp + gamma |Delta u|^2) / mu")
    mismatch: float = Field(..., ge=0, description="Largest pairwise relative difference")


class RecoveredIntegrals(BaseModel):
    """Integrals reconstructed from (E, alpha, mu)."""
    lap_l2: float
    grad_l2: float
    lp_power: float
    branch: Literal["linear_solve", "critical_zero_energy"] = "linear_solve"


class IdentityReport(BaseModel):
    """Identity suite evaluated on a candidate solution."""
    pohozaev_residual: float = Field(..., description="Relative Pohozaev defect (signed)")
    el_residual: float = Field(..., ge=0, description="Relative Euler-Lagrange residual")
    alpha: float = Field(..., description="Recovered Lagrange multiplier")
    lagrange_mismatch: float = Field(..., ge=0)
    recovered_integrals: Optional[tuple[float, float, float]] = Field(
        None, description="(|Delta u|^2, |grad u|^2, lp) from recover_integrals"
    )
    consistency_defects: Optional[tuple[float, float, float]] = Field(
        None, description="Relative errors of the recovered integrals"
    )
    gn_ratios: dict[str, float] = Field(default_factory=dict)
    functionals: FunctionalRecord


# ===========================================
# Linearization Reports
# ===========================================

class NondegeneracyReport(BaseModel):
    """Kernel count of L1 beyond the N translation modes."""
    kernel_dim: int
    kernel_dim_beyond_translations: int
    kernel_tol: float
    gap: float = Field(..., description="Smallest |eigenvalue| outside the kernel")
    eigenvalues: list[float]
    verdict: str


class StabilityConditionReport(BaseModel):
    """Solve of L1 v = u* in the complement of the computed kernel."""
    integral: float = Field(..., description="Integral of v u*")
    solve_residual: float = Field(..., ge=0)
    kernel_dim: int
    kernel_overlap: float = Field(..., ge=0)
    method: Literal["iterative", "dense"]
    sign: Literal["negative", "positive", "zero"]


# ===========================================
# Analysis Reports
# ===========================================

class DecayFit(BaseModel):
    """Least-squares exponential tail fit."""
    fitted_rate: float
    window: tuple[float, float]
    r_squared: float = Field(..., ge=0, le=1)
    n_samples: int
    envelope: bool = Field(False, description="Fitted on local maxima of |u|")
    non_exponential: bool = False
    theoretical_rate: Optional[float] = None
    regime: Optional[Literal["beta_gt", "beta_eq", "beta_lt", "nls"]] = None
    linear_rate: Optional[float] = Field(None, description="Smallest |Im k| over roots of the symbol")


class SignReport(BaseModel):
    """Sign structure along the radial axis."""
    n_sign_changes_radial: int
    min_over_max: float
    classification: Literal["single-signed", "sign-changing"]
    expected: Optional[Literal["single-signed", "sign-changing"]] = None
    consistent: Optional[bool] = None


class MassSample(BaseModel):
    """One evaluation of the negative-energy indicator."""
    mu: float
    energy: float
    negative: bool
    iterations: int


class CriticalMassReport(BaseModel):
    """Bisection result for the critical mass."""
    mu_c_est: float
    bracket: tuple[float, float]
    samples: list[MassSample] = Field(default_factory=list)
    note: str = ""
    formula_estimate: Optional[float] = None


class ShootReport(BaseModel):
    """Summary of a shooting run."""
    H0: float
    H_drift: float = Field(..., ge=0, description="max |H - H0| before departure")
    H_drift_total: float = Field(..., ge=0)
    departure_x: Optional[float] = None
    outcome: Literal["decayed", "diverged", "undecided"]
    x_end: float
    lambda1: float
    lambda2: float


# ===========================================
# Run Configuration
# ===========================================

Command = Literal[
    "ground-state", "mass-min", "spectrum", "stability-condition", "evolve",
    "stability-experiment", "decay-fit", "critical-mass", "gamma-limit",
    "shoot-1d", "verify", "alpha-chart",
]

ALPHA_COMMANDS = {"ground-state", "spectrum", "stability-condition", "stability-experiment"}


class SolverKnobs(BaseModel):
    """Iteration controls shared by the solvers."""
    tol: float = Field(default=settings.petviashvili_tol, gt=0)
    max_iter: int = Field(default=settings.petviashvili_max_iter, ge=1)
    dt: float = Field(default=settings.ngf_dt, gt=0, description="NGF pseudo-time step")
    residual_tol: Optional[float] = Field(None, gt=0, description="Optional NGF residual target")
    k: int = Field(default=4, ge=1, le=10, description="Number of eigenpairs")
    kernel_tol: Optional[float] = Field(None, gt=0)

    class Config:
        extra = "forbid"


class ExperimentKnobs(BaseModel):
    """Controls for studies and time evolution."""
    mu: Optional[float] = Field(None, gt=0)
    mu_list: Optional[list[float]] = None
    mu_lo: float = Field(default=0.5, gt=0)
    mu_hi: float = Field(default=8.0, gt=0)
    bisect_tol: float = Field(default=0.05, gt=0, lt=1)
    gamma_list: list[float] = Field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    alpha_list: Optional[list[float]] = None
    epsilon: float = Field(default=1e-3, ge=0)
    perturbation: Literal["scale", "noise", "modulated"] = "scale"
    scheme: Optional[Literal["strang", "yoshida4"]] = Field(
        None, description="Split-step scheme; evolve defaults to strang, stability-experiment to yoshida4"
    )
    t_end: float = Field(default=1.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    record_every: int = Field(default=10, ge=1)
    window_fraction: float = Field(default=0.5, gt=0, le=1)
    u0: Optional[float] = None
    upp0: Optional[float] = None
    x_max: float = Field(default=30.0, gt=0)
    step: float = Field(default=1e-3, gt=0)

    class Config:
        extra = "forbid"

    @field_validator("gamma_list", "mu_list", "alpha_list")
    @classmethod
    def _positive_entries(cls, values):
        if values is not None and any(v <= 0 for v in values):
            raise ValueError("entries must be positive")
        return values


class RunConfig(BaseModel):
    """
    Validated batch configuration.
    Built from a flat JSON object whose dotted keys name nested sections.
    """
    command: Command
    gamma: float = Field(..., ge=0)
    beta: float
    alpha: Optional[float] = None
    sigma: float = Field(..., gt=0)
    dim: int = Field(1, ge=1, le=3)
    n: int = Field(256, ge=16)
    L: Optional[float] = Field(None, gt=0)
    seed: int = 0
    output_dir: Optional[Path] = None
    input_field: Optional[Path] = None
    solver: SolverKnobs = Field(default_factory=SolverKnobs)
    experiment: ExperimentKnobs = Field(default_factory=ExperimentKnobs)

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "command": "ground-state", "gamma": 1.0, "beta": 5.0, "alpha": 4.0,
                "sigma": 1.0, "dim": 1, "n": 512, "L": 80.0
            }
        }

    @field_validator("n")
    @classmethod
    def _even_n(cls, n: int) -> int:
        if n % 2:
            raise ValueError("n must be even")
        return n

    @model_validator(mode="after")
    def _command_requirements(self):
        if self.command in ALPHA_COMMANDS and self.alpha is None and self.input_field is None:
            raise ValueError(f"alpha is required for command '{self.command}'")
        if self.command == "verify" and self.input_field is None:
            raise ValueError("input_field is required for command 'verify'")
        if self.command == "shoot-1d" and self.alpha is None:
            raise ValueError("alpha is required for command 'shoot-1d'")
        if self.command == "decay-fit" and self.alpha is None and self.input_field is None:
            raise ValueError("alpha or input_field is required for command 'decay-fit'")
        if self.command == "shoot-1d" and (self.experiment.u0 is None or self.experiment.upp0 is None):
            raise ValueError("experiment.u0 and experiment.upp0 are required for command 'shoot-1d'")
        if self.command in ("mass-min", "gamma-limit") and self.experiment.mu is None:
            raise ValueError(f"experiment.mu is required for command '{self.command}'")
        if self.command == "alpha-chart" and not self.experiment.mu_list:
            raise ValueError("experiment.mu_list is required for command 'alpha-chart'")
        return self

    def params(self) -> Params:
        return Params(gamma=self.gamma, beta=self.beta, alpha=self.alpha, sigma=self.sigma, dim=self.dim)


class RunManifest(BaseModel):
    """Written last in every run directory."""
    config: dict[str, Any]
    version: str
    command: str
    determinism_note: str
    threads: int
    started_at: datetime
    wall_time_s: float
    status: Literal["ok", "failed"]
    exit_code: int
    message: str = ""
    flags: dict[str, Any] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict, description="file name -> sha256")
