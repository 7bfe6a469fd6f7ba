"""
Laboratory settings (pydantic-settings).
Loads numerical defaults and paths from environment variables and .env file.
"""

from pathlib import Path
from functools import lru_cache
from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    """
    Laboratory settings loaded from environment variables (prefix M4NLS_).
    """

    # Application
    app_name: str = "Mixed-dispersion 4NLS Lab"
    app_version: str = "1.0.0"
    debug: bool = Field(default=False, description="Enable debug logging on the console")

    # Paths
    output_dir: Path = Field(default=Path("runs"), description="Base directory for run outputs")
    log_dir: Path = Field(default=Path("logs"), description="Directory for the log file")
    log_level: str = Field(default="INFO", description="Console log level")
    log_every: int = Field(default=100, description="Iterations between DEBUG progress lines")

    # Parallelism
    threads: int = Field(default=1, ge=1, description="FFT workers and concurrent sweep jobs")

    # Petviashvili
    petviashvili_tol: float = Field(default=1e-10, description="Relative Euler-Lagrange residual target")
    petviashvili_max_iter: int = Field(default=2000, description="Iteration cap")
    stabilizer_guard: float = Field(
        default=1e3,
        description="Divergence when the stabilizing factor leaves [1/guard, guard]"
    )

    # Normalized gradient flow
    ngf_tol: float = Field(default=1e-10, description="Relative energy change per step counted as converged")
    ngf_dt: float = Field(default=0.5, description="Initial pseudo-time step")
    ngf_dt_floor: float = Field(default=1e-6, description="Smallest step before giving up")
    ngf_negative_energy: float = Field(default=-1e-10, description="Energy below which a minimizer counts as negative")
    ngf_plateau_steps: int = Field(default=500, description="Accepted steps above the threshold before 'not achieved'")
    ngf_max_iter: int = Field(default=20000, description="Step cap, accepted and rejected")

    # Critical mass
    critical_energy_threshold: float = Field(default=-1e-9, description="Indicator threshold E < value")
    critical_scan_points: int = Field(default=6, description="Geometric samples before bisection")

    # Linearization
    dense_max_points: int = Field(default=2048, description="Largest grid solved with a dense eigensolver")
    eigen_residual_tol: float = Field(default=1e-8, description="Required eigenpair residual")
    kernel_tol_factor: float = Field(default=1e-6, description="Kernel tolerance relative to the first positive eigenvalue")
    kernel_overlap_limit: float = Field(default=1e-6, description="Allowed kernel component of a right-hand side")
    minres_tol: float = Field(default=1e-13, description="MINRES relative tolerance")
    solution_residual_warn: float = Field(default=1e-6, description="u_star residual that triggers a warning")

    # Evolution
    stability_constant_max: float = Field(default=10.0, description="Largest fitted C accepted as bounded")

    # Analysis
    divergence_threshold: float = Field(default=1e3, description="|u| beyond which a shot diverges")
    decay_threshold: float = Field(default=1e-8, description="|u| below which a shot has decayed")
    decay_floor: float = Field(default=1e-12, description="Relative floor excluded from decay fits")
    sign_threshold: float = Field(default=1e-8, description="Relative magnitude below which signs are ignored")
    tail_target: float = Field(default=1e-12, description="Predicted tail value at the box edge")

    class Config:
        env_prefix = "M4NLS_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    """
    Settings read once per process; override through M4NLS_* variables
    set before the first import.
    """
    return Settings()


# Global settings instance
settings = get_settings()
