"""
Solvers Service.
Standing-wave profiles: Petviashvili iteration at prescribed frequency,
normalized gradient flow at prescribed mass, Fourier rearrangement,
gamma-rescaling and the closed-form 1D NLS soliton.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.special import gamma as gamma_fn

from m4nls.config.settings import settings
from m4nls.models.schemas import Params, FunctionalRecord
from m4nls.services.spectral_core import (
    Field,
    SpectralGrid,
    make_grid,
    to_spectral,
    from_spectral,
    check_symbol,
    dealias_mask,
    inner,
    sobolev_products,
    linear_decay_rate,
)
from m4nls.services.functionals import (
    nonlinearity,
    evaluate,
    el_residual,
    lagrange_multiplier,
)
from m4nls.utils.errors import ConvergenceError
from m4nls.utils.logger import logger


@dataclass
class GroundStateResult:
    """Converged (or last) profile with its diagnostics."""
    profile: Field
    params: Params
    alpha: float
    mass: float
    el_residual: float
    iterations: int
    functionals: FunctionalRecord
    converged: bool
    achieved: bool = True
    stabilizer: Optional[float] = None
    dt: Optional[float] = None
    message: str = ""
    energy_history: list[float] = dc_field(default_factory=list, repr=False)

    def summary(self) -> dict:
        """Flat scalar view for CSV reports."""
        row = {
            "alpha": self.alpha,
            "mass": self.mass,
            "el_residual": self.el_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "achieved": self.achieved,
            "stabilizer": self.stabilizer,
            "dt": self.dt,
            "message": self.message,
        }
        row.update(self.functionals.model_dump())
        return row


def _needs_dealiasing(sigma: float) -> bool:
    return abs(2 * sigma - round(2 * sigma)) < 1e-12


def default_initial_guess(params: Params, grid: SpectralGrid) -> Field:
    """Centered Gaussian with the amplitude of the alpha-scaled soliton and the linear tail width."""
    alpha = params.require_alpha()
    amplitude = ((params.sigma + 1) * alpha) ** (1 / (2 * params.sigma))
    rate = linear_decay_rate(params)
    return Field(grid, amplitude * np.exp(-0.5 * (rate * grid.radius()) ** 2))


# ===========================================
# Petviashvili iteration
# ===========================================

def petviashvili_solve(
    params: Params,
    init: Optional[Field] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    grid: Optional[SpectralGrid] = None,
) -> GroundStateResult:
    """
    Solve gamma*Delta^2 u - beta*Delta u + alpha u = |u|^(2 sigma) u by the stabilized
    fixed point u <- S^theta (gamma*Delta^2 - beta*Delta + alpha)^(-1) |u|^(2 sigma) u.

    Args:
        params: Coefficients, alpha > 0 required
        init: Starting profile; defaults to default_initial_guess on grid
        tol: Relative residual target (settings.petviashvili_tol)
        max_iter: Iteration cap (settings.petviashvili_max_iter)
        grid: Grid for the default initial guess

    Returns:
        GroundStateResult with converged=True

    Raises:
        SymbolViolationError: non-positive symbol on the grid
        ConvergenceError: stabilizing factor left the guard band or max_iter reached
        ValueError: missing alpha or zero initial guess
    """
    alpha = params.require_alpha()
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    tol = settings.petviashvili_tol if tol is None else tol
    max_iter = settings.petviashvili_max_iter if max_iter is None else max_iter
    if init is None:
        if grid is None:
            raise ValueError("either init or grid is required")
        init = default_initial_guess(params, grid)
    grid = init.grid
    u = np.real(init.values).astype(np.float64)
    if not np.any(u):
        raise ValueError("initial guess is identically zero")

    symbol = check_symbol(params, grid)
    mask = dealias_mask(grid) if _needs_dealiasing(params.sigma) else None
    theta = (2 * params.sigma + 1) / (2 * params.sigma)
    guard = settings.stabilizer_guard

    logger.info(
        f"Petviashvili start: gamma={params.gamma}, beta={params.beta}, alpha={alpha}, "
        f"sigma={params.sigma}, N={grid.dim}, n={grid.n}, L={grid.L}"
    )

    stabilizer = float("nan")
    residual = float("inf")
    iterations = 0
    for iterations in range(max_iter + 1):
        field = Field(grid, u)
        u_hat = to_spectral(field)
        n_u = nonlinearity(u, params.sigma)
        l_u = from_spectral(grid, symbol * u_hat, real=True).values

        norm_h2 = math.sqrt(sobolev_products(field).h2)
        residual = float(np.sqrt(grid.cell_volume * np.sum((l_u - n_u) ** 2)) / norm_h2)
        denominator = inner(field, Field(grid, n_u))
        stabilizer = inner(field, Field(grid, l_u)) / denominator if denominator != 0 else float("inf")

        if iterations % settings.log_every == 0:
            logger.debug(f"Petviashvili it={iterations}: residual={residual:.3e}, S={stabilizer:.12f}")
        if residual < tol:
            break
        if iterations == max_iter:
            raise ConvergenceError(
                f"Petviashvili did not converge in {max_iter} iterations (residual {residual:.3e})",
                iterations=iterations, residual=residual,
            )
        if not np.isfinite(stabilizer) or not (1 / guard < stabilizer < guard):
            raise ConvergenceError(
                f"Petviashvili diverged: stabilizing factor {stabilizer:.6g} outside the guard band",
                iterations=iterations, residual=residual,
            )

        n_hat = to_spectral(Field(grid, n_u))
        if mask is not None:
            n_hat = n_hat * mask
        u = stabilizer ** theta * from_spectral(grid, n_hat / symbol, real=True).values

    profile = Field(grid, u)
    record = evaluate(profile, params, require_action=True)
    logger.info(
        f"Petviashvili converged in {iterations} iterations: residual={residual:.3e}, "
        f"S-1={stabilizer - 1:.3e}, E={record.E:.12g}, mass={record.mass:.12g}"
    )
    return GroundStateResult(
        profile=profile,
        params=params,
        alpha=alpha,
        mass=record.mass,
        el_residual=residual,
        iterations=iterations,
        functionals=record,
        converged=True,
        stabilizer=stabilizer,
    )


# ===========================================
# Normalized gradient flow
# ===========================================

def best_gaussian(params: Params, grid: SpectralGrid, mu: float, n_widths: int = 24) -> Field:
    """
    Mass-mu Gaussian whose width minimizes the energy over a geometric scan
    from 4h to L/8. Interior local minima are preferred over the scan ends.
    """
    radius2 = grid.radius() ** 2
    widths = np.geomspace(4 * grid.h, grid.L / 8, n_widths)
    candidates = []
    energies = []
    for width in widths:
        shape = np.exp(-0.5 * radius2 / width ** 2)
        shape *= math.sqrt(mu / (grid.cell_volume * np.sum(shape ** 2)))
        candidate = Field(grid, shape)
        candidates.append(candidate)
        energies.append(evaluate(candidate, params).E)

    energies = np.asarray(energies)
    interior = [
        i for i in range(1, n_widths - 1)
        if energies[i] <= energies[i - 1] and energies[i] <= energies[i + 1]
    ]
    best = min(interior, key=lambda i: energies[i]) if interior else int(np.argmin(energies))
    logger.debug(f"Initial Gaussian width {widths[best]:.4g}, E={energies[best]:.6g}")
    return candidates[best]


def uniform_energy(params: Params, mu: float, grid: SpectralGrid) -> float:
    """Energy of the constant state of mass mu on the periodic box."""
    volume = grid.volume
    return -((mu / volume) ** (params.sigma + 1)) * volume / (2 * params.sigma + 2)


def negative_energy_threshold(params: Params, mu: float, grid: SpectralGrid, configured: float) -> float:
    """
    Energy a flow must go below to count as a negative-energy minimizer: the configured
    value, lowered to twice the uniform-state energy when a spreading flow could reach it.
    """
    return min(configured, 2.0 * uniform_energy(params, mu, grid))


def normalized_gradient_flow(
    params: Params,
    mu: float,
    init: Optional[Field] = None,
    dt: Optional[float] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    grid: Optional[SpectralGrid] = None,
    residual_tol: Optional[float] = None,
    stop_below_energy: Optional[float] = None,
) -> GroundStateResult:
    """
    Minimize the energy on the sphere {mass = mu} by semi-implicit descent steps
    followed by renormalization.

    Each step uses the current Lagrange estimate a_n and a shift s >= max(a_n, 0, -min symbol):
    u* = (1 + dt(gamma*Delta^2 - beta*Delta + s))^(-1) (u + dt(|u|^(2 sigma) u + (s - a_n) u)),
    whose fixed points solve the Euler-Lagrange equation with frequency a_n.

    Args:
        params: Coefficients (alpha ignored)
        mu: Prescribed mass
        init: Starting profile, rescaled to mass mu; defaults to best_gaussian
        dt: Initial pseudo-time step, halved on energy increase
        tol: Relative energy-change target (settings.ngf_tol)
        max_iter: Step cap (accepted and rejected)
        grid: Grid for the default initial guess
        residual_tol: Additionally require this relative Euler-Lagrange residual
        stop_below_energy: Return as soon as the energy drops below this value

    Returns:
        GroundStateResult; achieved=False when no negative-energy minimizer is detected

    Raises:
        ValueError: sigma >= 4/N, mu <= 0, dt <= 0
        ConvergenceError: energy oscillation at the dt floor, or max_iter reached
    """
    dim = init.grid.dim if init is not None else (grid.dim if grid is not None else params.dim)
    if params.sigma * dim >= 4:
        raise ValueError("sigma >= 4/N: the constrained infimum is -infinity")
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    dt = settings.ngf_dt if dt is None else dt
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    max_iter = settings.ngf_max_iter if max_iter is None else max_iter
    tol = settings.ngf_tol if tol is None else tol

    if init is None:
        if grid is None:
            raise ValueError("either init or grid is required")
        init = best_gaussian(params, grid, mu)
    grid = init.grid
    u = np.real(init.values).astype(np.float64)
    if not np.any(u):
        raise ValueError("initial guess is identically zero")
    u = u * math.sqrt(mu / (grid.cell_volume * np.sum(u ** 2)))

    dispersion = params.gamma * grid.k2 ** 2 + params.beta * grid.k2
    shift_floor = max(0.0, -float(dispersion.min()))
    threshold = negative_energy_threshold(params, mu, grid, settings.ngf_negative_energy)
    tiny = 1e-13

    def energy_and_alpha(values: np.ndarray) -> tuple[float, float, FunctionalRecord]:
        record = evaluate(Field(grid, values), params)
        quadratic = params.gamma * record.lap_l2 + params.beta * record.grad_l2
        return record.E, (record.lp_power - quadratic) / mu, record

    energy, a_n, record = energy_and_alpha(u)
    history = [energy]
    plateau = 0
    accepted = 0
    converged = False
    achieved = True
    message = ""

    logger.info(
        f"NGF start: gamma={params.gamma}, beta={params.beta}, sigma={params.sigma}, "
        f"N={grid.dim}, mu={mu}, dt={dt}, E0={energy:.6g}"
    )

    iteration = 0
    for iteration in range(1, max_iter + 1):
        shift = max(a_n, shift_floor)
        rhs = u + dt * (nonlinearity(u, params.sigma) + (shift - a_n) * u)
        u_star = from_spectral(grid, to_spectral(Field(grid, rhs)) / (1 + dt * (dispersion + shift)), real=True).values
        u_new = u_star * math.sqrt(mu / (grid.cell_volume * np.sum(u_star ** 2)))
        energy_new, a_new, record_new = energy_and_alpha(u_new)

        if energy_new > energy + tiny * max(1.0, abs(energy)):
            dt *= 0.5
            if dt < settings.ngf_dt_floor:
                raise ConvergenceError(
                    f"NGF energy oscillation after reaching the dt floor {settings.ngf_dt_floor}",
                    iterations=iteration,
                )
            logger.debug(f"NGF it={iteration}: energy increased, dt -> {dt:.3g}")
            continue

        change = abs(energy_new - energy)
        u, energy, a_n, record = u_new, energy_new, a_new, record_new
        history.append(energy)
        accepted += 1
        plateau = plateau + 1 if energy > threshold else 0

        if accepted % settings.log_every == 0:
            logger.debug(f"NGF step={accepted}: E={energy:.15g}, alpha={a_n:.12g}, dt={dt:.3g}")

        if stop_below_energy is not None and energy < stop_below_energy:
            message = "energy below requested threshold"
            break
        if energy < threshold and change < tol * abs(energy):
            if residual_tol is None or el_residual(Field(grid, u), params, a_n) < residual_tol:
                converged = True
                break
        if plateau >= settings.ngf_plateau_steps:
            achieved = False
            message = "no negative-energy minimizer detected"
            logger.warning(f"NGF at mu={mu}: {message} (E={energy:.3e} after {accepted} steps)")
            break
    else:
        raise ConvergenceError(
            f"NGF did not converge in {max_iter} iterations (E={energy:.6g})", iterations=max_iter
        )

    profile = Field(grid, u)
    multiplier = lagrange_multiplier(profile, params, mu)
    record = evaluate(profile, params, with_alpha=multiplier.alpha)
    residual = el_residual(profile, params, multiplier.alpha)
    logger.info(
        f"NGF finished after {iteration} iterations: E={energy:.12g}, alpha={multiplier.alpha:.12g}, "
        f"residual={residual:.3e}, converged={converged}, achieved={achieved}"
    )
    return GroundStateResult(
        profile=profile,
        params=params.with_alpha(multiplier.alpha),
        alpha=multiplier.alpha,
        mass=record.mass,
        el_residual=residual,
        iterations=iteration,
        functionals=record,
        converged=converged,
        achieved=achieved and energy < threshold,
        dt=dt,
        message=message,
        energy_history=history,
    )


# ===========================================
# Fourier rearrangement
# ===========================================

def fourier_rearrange(u: Field) -> Field:
    """
    Inverse transform of the symmetric-decreasing rearrangement of |u_hat|.
    Moduli are sorted onto wavenumbers by increasing |k|, then averaged in
    quadrature over shells of equal |k| so the result is radial in k.
    Coefficients are taken relative to the origin x = 0.
    """
    grid = u.grid
    modulus = np.abs(to_spectral(u)).ravel()

    shells = np.zeros(grid.shape, dtype=np.int64)
    for axis in range(grid.dim):
        index = [np.newaxis] * grid.dim
        index[axis] = slice(None)
        shells = shells + (grid.mode_index ** 2)[tuple(index)]
    shells = shells.ravel()

    order = np.argsort(shells, kind="stable")
    rearranged = np.empty_like(modulus)
    rearranged[order] = np.sort(modulus)[::-1]

    _, shell_id = np.unique(shells, return_inverse=True)
    shell_power = np.bincount(shell_id, weights=rearranged ** 2)
    shell_count = np.bincount(shell_id)
    rearranged = np.sqrt(shell_power / shell_count)[shell_id]

    origin_phase = np.exp(1j * sum(k * (-grid.L / 2) for k in grid.kvec))
    coeffs = rearranged.reshape(grid.shape) * origin_phase
    return from_spectral(grid, coeffs, real=True)


# ===========================================
# Rescaling and closed forms
# ===========================================

def _interpolation_matrix(grid: SpectralGrid, targets: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation from the grid samples to arbitrary points on one axis."""
    k = grid.wavenumbers
    offsets = targets[:, np.newaxis] - grid.axis[0]
    # e^{ik(y - x0)} / n applied to fft coefficients
    return np.exp(1j * offsets * k[np.newaxis, :]) / grid.n


def rescale_gamma(u: Field, gamma: float, beta: float, same_grid: bool = False) -> tuple[Field, float]:
    """
    v(x) = u(gamma^(1/4) x), mapping the gamma-equation to the gamma = 1 frame with
    theta = beta / sqrt(gamma).

    By default v keeps the samples of u on a box of length L * gamma^(-1/4), which is
    exact. With same_grid=True v is sampled on u's grid by spectral interpolation;
    points mapped outside the box are set to zero.

    Raises:
        ValueError: gamma <= 0
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    theta = beta / math.sqrt(gamma)
    scale = gamma ** 0.25
    grid = u.grid
    if not same_grid:
        return Field(make_grid(grid.dim, grid.n, grid.L / scale), u.values.copy()), theta

    targets = grid.axis * scale
    matrix = _interpolation_matrix(grid, targets)
    coeffs = to_spectral(u)
    for axis in range(grid.dim):
        coeffs = np.moveaxis(np.tensordot(matrix, np.moveaxis(coeffs, axis, 0), axes=(1, 0)), 0, axis)
    values = coeffs if u.is_complex else coeffs.real
    outside = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        index = [np.newaxis] * grid.dim
        index[axis] = slice(None)
        outside |= (np.abs(targets) > grid.L / 2)[tuple(index)]
    values = np.where(outside, 0.0, values)
    return Field(grid, values), theta


def nls_soliton(alpha: float, sigma: float, grid: SpectralGrid, beta: float = 1.0) -> Field:
    """
    Positive solution of -beta u'' + alpha u = |u|^(2 sigma) u on the line:
    ((sigma+1) alpha)^(1/(2 sigma)) sech^(1/sigma)(sigma sqrt(alpha/beta) x).

    Raises:
        ValueError: grid dimension other than 1, non-positive alpha or beta
    """
    if grid.dim != 1:
        raise ValueError("closed-form soliton is available for N = 1 only")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    amplitude = ((sigma + 1) * alpha) ** (1 / (2 * sigma))
    x = grid.coords[0]
    return Field(grid, amplitude / np.cosh(sigma * math.sqrt(alpha / beta) * x) ** (1 / sigma))


def soliton_mass_constant(sigma: float) -> float:
    """K with mass(alpha) = K alpha^(1/sigma - 1/2) sqrt(beta) for the 1D soliton."""
    p = 2 / sigma
    sech_integral = math.sqrt(math.pi) * gamma_fn(p / 2) / gamma_fn((p + 1) / 2)
    return (sigma + 1) ** (1 / sigma) / sigma * sech_integral


def soliton_alpha_for_mass(mu: float, sigma: float, beta: float = 1.0) -> float:
    """Frequency of the 1D soliton with mass mu (sigma < 2)."""
    if not 0 < sigma < 2:
        raise ValueError("mass-frequency relation is invertible for 0 < sigma < 2")
    exponent = 1 / sigma - 0.5
    return (mu / (soliton_mass_constant(sigma) * math.sqrt(beta))) ** (1 / exponent)
