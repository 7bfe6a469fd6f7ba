"""
Linearization Service.
Linearized operators L1, L2 about a profile, their smallest eigenpairs,
the nondegeneracy count and the sign of the integral of v u* for L1 v = u*.
"""

from dataclasses import dataclass, field as dc_field
from typing import Literal, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg as sp_linalg
from scipy.sparse.linalg import LinearOperator, lobpcg, minres

from m4nls.config.settings import settings
from m4nls.models.schemas import Params, NondegeneracyReport, StabilityConditionReport
from m4nls.services.spectral_core import Field, check_symbol, linear_symbol
from m4nls.services.functionals import el_residual
from m4nls.utils.errors import ConvergenceError, NumericalFailure
from m4nls.utils.logger import logger


Which = Literal["L1", "L2"]


@dataclass
class SpectrumReport:
    """Smallest eigenpairs of L1 or L2."""
    operator: Which
    eigenvalues: list[float]
    eigen_residuals: list[float]
    n_negative: int
    kernel_dim_est: int
    kernel_tol: float
    method: str
    eigenvectors: np.ndarray = dc_field(repr=False)
    flags: list[str] = dc_field(default_factory=list)

    def rows(self) -> list[dict]:
        return [
            {"operator": self.operator, "index": i, "eigenvalue": lam, "residual": res}
            for i, (lam, res) in enumerate(zip(self.eigenvalues, self.eigen_residuals))
        ]


def _potential(u_star: Field, params: Params, which: Which) -> np.ndarray:
    power = np.abs(u_star.values) ** (2 * params.sigma)
    if which == "L1":
        return (2 * params.sigma + 1) * power
    if which == "L2":
        return power
    raise ValueError(f"unknown operator '{which}'")


class LinearizedOperator:
    """
    gamma*Delta^2 - beta*Delta + alpha - V acting on grid vectors, with
    V = (2 sigma + 1)|u*|^(2 sigma) for L1 and |u*|^(2 sigma) for L2.
    Blocks of column vectors are transformed together.
    """

    def __init__(self, u_star: Field, params: Params, which: Which):
        self.grid = u_star.grid
        self.params = params
        self.which = which
        self.symbol = linear_symbol(params, self.grid)
        self.potential = _potential(u_star, params, which).ravel()
        self.size = self.grid.points
        self._axes = tuple(range(1, self.grid.dim + 1))

    def _spectral(self, block: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        columns = block.reshape(self.size, -1).T.reshape((-1,) + self.grid.shape)
        out = sp_fft.ifftn(symbol * sp_fft.fftn(columns, axes=self._axes), axes=self._axes).real
        return out.reshape(-1, self.size).T

    def matmat(self, block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=np.float64).reshape(self.size, -1)
        return self._spectral(block, self.symbol) - self.potential[:, np.newaxis] * block

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matmat(v).ravel()

    def precondition(self, block: np.ndarray) -> np.ndarray:
        """Inverse of the constant-coefficient part."""
        block = np.asarray(block, dtype=np.float64).reshape(self.size, -1)
        return self._spectral(block, 1.0 / self.symbol)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(
            (self.size, self.size), matvec=self.matvec, matmat=self.matmat, dtype=np.float64
        )

    def preconditioner(self) -> LinearOperator:
        return LinearOperator(
            (self.size, self.size),
            matvec=lambda v: self.precondition(v).ravel(),
            matmat=self.precondition,
            dtype=np.float64,
        )

    def dense(self) -> np.ndarray:
        """Explicit symmetric matrix; intended for small grids."""
        matrix = self.matmat(np.eye(self.size))
        return 0.5 * (matrix + matrix.T)


def apply_linearized(u_star: Field, v: Field, params: Params, which: Which) -> Field:
    """
    Apply L1 or L2 about u_star to v.

    Raises:
        ValueError: u_star and v live on different grids
    """
    if not u_star.grid.matches(v.grid):
        raise ValueError("grid mismatch between u_star and v")
    operator = LinearizedOperator(u_star, params, which)
    return Field(v.grid, operator.matvec(np.real(v.values).ravel()))


def default_kernel_tol(eigenvalues: np.ndarray, factor: Optional[float] = None) -> float:
    """
    factor times the smallest positive eigenvalue above the largest relative jump
    in |lambda|, which separates near-kernel values from the rest.
    """
    factor = settings.kernel_tol_factor if factor is None else factor
    values = np.asarray(eigenvalues, dtype=float)
    magnitudes = np.sort(np.abs(values))
    if magnitudes.size < 2:
        return factor * float(magnitudes[-1]) if magnitudes.size else factor
    ratios = magnitudes[1:] / np.maximum(magnitudes[:-1], np.finfo(float).tiny)
    cut = magnitudes[int(np.argmax(ratios)) + 1]
    above = values[(np.abs(values) >= cut) & (values > 0)]
    reference = float(above.min()) if above.size else float(magnitudes[-1])
    return factor * reference


def smallest_eigenpairs(
    u_star: Field,
    params: Params,
    which: Which,
    k: int = 4,
    kernel_tol: Optional[float] = None,
    method: Literal["auto", "dense", "lobpcg"] = "auto",
    seed: int = 0,
) -> SpectrumReport:
    """
    k smallest eigenpairs of L1 or L2.

    Dense symmetric solve up to settings.dense_max_points grid points, otherwise
    LOBPCG preconditioned by the inverse of gamma*Delta^2 - beta*Delta + alpha.

    Raises:
        ValueError: k outside [1, 10]
        ConvergenceError: an eigen-residual above settings.eigen_residual_tol
    """
    if not 1 <= k <= 10:
        raise ValueError(f"k must be between 1 and 10, got {k}")
    check_symbol(params, u_star.grid)
    operator = LinearizedOperator(u_star, params, which)
    flags = []

    solution_residual = el_residual(u_star, params)
    if solution_residual > settings.solution_residual_warn:
        flags.append("u_star residual too large")
        logger.warning(f"{which} spectrum: u_star residual too large ({solution_residual:.3e})")

    if method == "auto":
        method = "dense" if operator.size <= settings.dense_max_points else "lobpcg"

    if method == "dense":
        values, vectors = sp_linalg.eigh(operator.dense(), subset_by_index=[0, k - 1])
    else:
        rng = np.random.default_rng(seed)
        start = rng.standard_normal((operator.size, k))
        values, vectors = lobpcg(
            operator.as_linear_operator(), start, M=operator.preconditioner(),
            largest=False, tol=settings.eigen_residual_tol * 1e-2, maxiter=2000,
        )
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        vectors = vectors / np.linalg.norm(vectors, axis=0)

    residuals = np.linalg.norm(operator.matmat(vectors) - vectors * values, axis=0)
    worst = float(residuals.max())
    if worst > settings.eigen_residual_tol:
        raise ConvergenceError(
            f"{which} eigensolver ({method}) residual {worst:.3e} above {settings.eigen_residual_tol}",
            residual=worst,
        )

    tol = default_kernel_tol(values) if kernel_tol is None else kernel_tol
    report = SpectrumReport(
        operator=which,
        eigenvalues=[float(v) for v in values],
        eigen_residuals=[float(r) for r in residuals],
        n_negative=int(np.sum(values < -tol)),
        kernel_dim_est=int(np.sum(np.abs(values) < tol)),
        kernel_tol=tol,
        method=method,
        eigenvectors=vectors,
        flags=flags,
    )
    logger.info(
        f"{which} smallest eigenvalues ({method}): "
        + ", ".join(f"{v:.10g}" for v in report.eigenvalues)
        + f"; negative={report.n_negative}, kernel={report.kernel_dim_est}"
    )
    return report


def nondegeneracy_report(
    u_star: Field, params: Params, kernel_tol: Optional[float] = None, k: Optional[int] = None
) -> NondegeneracyReport:
    """
    Count near-kernel eigenvalues of L1 beyond the N translation modes.

    Raises:
        ValueError: the tolerance is too coarse to separate the kernel from the
            rest of the computed spectrum (the gap is reported)
    """
    dim = u_star.grid.dim
    k = k or min(dim + 3, 10)
    spectrum = smallest_eigenpairs(u_star, params, "L1", k=k, kernel_tol=kernel_tol)
    tol = spectrum.kernel_tol
    magnitudes = np.abs(np.asarray(spectrum.eigenvalues))
    outside = magnitudes[magnitudes >= tol]
    if outside.size == 0:
        raise ValueError(f"all {k} computed eigenvalues lie within kernel_tol {tol:.3e}; gap unknown")
    gap = float(outside.min())
    if gap < 10 * tol:
        raise ValueError(f"kernel_tol {tol:.3e} is coarser than the eigenvalue gap {gap:.3e}")

    extra = spectrum.kernel_dim_est - dim
    if extra == 0:
        verdict = "nondegenerate at tolerance"
    elif extra > 0:
        verdict = f"degenerate: {extra} kernel direction(s) beyond translations"
    else:
        verdict = "fewer kernel directions than translations"
    logger.info(f"Nondegeneracy: kernel={spectrum.kernel_dim_est}, N={dim}, gap={gap:.3e} -> {verdict}")
    return NondegeneracyReport(
        kernel_dim=spectrum.kernel_dim_est,
        kernel_dim_beyond_translations=extra,
        kernel_tol=tol,
        gap=gap,
        eigenvalues=spectrum.eigenvalues,
        verdict=verdict,
    )


def stability_condition(
    u_star: Field,
    params: Params,
    kernel_tol: Optional[float] = None,
    method: Literal["iterative", "dense"] = "iterative",
) -> StabilityConditionReport:
    """
    Solve L1 v = u* with the computed kernel of L1 projected out of operator and
    right-hand side, and return the integral of v u*.

    Raises:
        ValueError: u* = 0
        NumericalFailure: right-hand side has a kernel component above the limit
        ConvergenceError: deflated solve residual above 1e-8
    """
    grid = u_star.grid
    rhs = np.real(u_star.values).ravel()
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0:
        raise ValueError("zero right-hand side: u_star vanishes")

    spectrum = smallest_eigenpairs(u_star, params, "L1", k=min(grid.dim + 3, 10), kernel_tol=kernel_tol)
    kernel = spectrum.eigenvectors[:, np.abs(np.asarray(spectrum.eigenvalues)) < spectrum.kernel_tol]
    overlap = float(np.linalg.norm(kernel.T @ rhs) / rhs_norm) if kernel.size else 0.0
    if overlap > settings.kernel_overlap_limit:
        raise NumericalFailure(
            f"right-hand side has kernel component {overlap:.3e} > {settings.kernel_overlap_limit}"
        )

    def project(v: np.ndarray) -> np.ndarray:
        return v - kernel @ (kernel.T @ v) if kernel.size else v

    operator = LinearizedOperator(u_star, params, "L1")
    b = project(rhs)

    if method == "dense":
        matrix = operator.dense() + kernel @ kernel.T
        v = project(sp_linalg.solve(matrix, b, assume_a="sym"))
    else:
        deflated = LinearOperator(
            (operator.size, operator.size),
            matvec=lambda x: project(operator.matvec(project(x))),
            dtype=np.float64,
        )
        v, info = minres(
            deflated, b, M=operator.preconditioner(), rtol=settings.minres_tol,
            maxiter=min(20 * operator.size, 5000),
        )
        if info != 0:
            logger.warning(f"MINRES returned info={info}")
        v = project(v)

    residual = float(np.linalg.norm(project(operator.matvec(v)) - b) / np.linalg.norm(b))
    if residual > 1e-8:
        raise ConvergenceError(f"deflated solve residual {residual:.3e} above 1e-8", residual=residual)

    integral = float(grid.cell_volume * np.dot(v, rhs))
    sign = "negative" if integral < 0 else ("positive" if integral > 0 else "zero")
    logger.info(
        f"Stability condition ({method}): integral v u* = {integral:.12g} ({sign}), "
        f"residual={residual:.3e}, kernel={kernel.shape[1]}"
    )
    return StabilityConditionReport(
        integral=integral,
        solve_residual=residual,
        kernel_dim=int(kernel.shape[1]),
        kernel_overlap=overlap,
        method=method,
        sign=sign,
    )
