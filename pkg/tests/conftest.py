"""
Shared fixtures. Log and run directories are redirected to a temporary
location before the package (and its logger) is imported.
"""

import os
import tempfile

_SCRATCH = tempfile.mkdtemp(prefix="m4nls-tests-")
os.environ.setdefault("M4NLS_LOG_DIR", os.path.join(_SCRATCH, "logs"))
os.environ.setdefault("M4NLS_OUTPUT_DIR", os.path.join(_SCRATCH, "runs"))

import math

import numpy as np
import pytest

from m4nls.models.schemas import Params
from m4nls.services.spectral_core import Field, make_grid


# Closed-form solution of u'''' - 5u'' + 4u = u^3: sqrt(30)/2 sech^2(x/2)
EXACT_AMPLITUDE = math.sqrt(30.0) / 2.0


def exact_profile_values(x: np.ndarray) -> np.ndarray:
    return EXACT_AMPLITUDE / np.cosh(x / 2.0) ** 2


@pytest.fixture(scope="session")
def exact_params() -> Params:
    return Params(gamma=1.0, beta=5.0, alpha=4.0, sigma=1.0, dim=1)


@pytest.fixture(scope="session")
def grid_1d():
    return make_grid(1, 512, 80.0)


@pytest.fixture(scope="session")
def exact_U(grid_1d) -> Field:
    return Field(grid_1d, exact_profile_values(grid_1d.coords[0]))


@pytest.fixture(scope="session")
def soliton_grid():
    return make_grid(1, 512, 60.0)


@pytest.fixture(scope="session")
def soliton(soliton_grid) -> Field:
    """sqrt(2) sech(x): -u'' + u = u^3."""
    return Field(soliton_grid, math.sqrt(2.0) / np.cosh(soliton_grid.coords[0]))


@pytest.fixture
def gaussian_1d():
    grid = make_grid(1, 256, 40.0)
    return Field(grid, 0.5 * np.exp(-grid.coords[0] ** 2 / 8.0))
