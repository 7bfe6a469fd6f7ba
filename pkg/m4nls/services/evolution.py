"""
Evolution Service.
Strang split-step integration (optionally composed to fourth order) of i psi_t - gamma*Delta^2 psi + beta*Delta psi + |psi|^(2 sigma) psi = 0,
conservation monitoring, the H2 orbital distance and perturbation experiments.
"""

from dataclasses import dataclass, field as dc_field
from typing import Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import fft as sp_fft
from scipy.optimize import minimize, minimize_scalar

from m4nls.config.settings import settings
from m4nls.models.schemas import Params
from m4nls.services.spectral_core import Field, SpectralGrid, to_spectral, h2_norm
from m4nls.services.functionals import evaluate
from m4nls.utils.errors import EvolutionError
from m4nls.utils.logger import logger


Perturbation = Literal["scale", "noise", "modulated"]
Scheme = Literal["strang", "yoshida4"]
Orbit = Union[Field, Sequence[Field]]

MODULUS_FLOOR = 1e-300

# Triple-jump weights: S(w1 dt) S(w0 dt) S(w1 dt) is fourth order for symmetric S
_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_W1 = 1.0 / (2.0 - _CBRT2)
YOSHIDA_W0 = -_CBRT2 / (2.0 - _CBRT2)


def stage_fractions(scheme: Scheme) -> tuple[float, ...]:
    """Fractions of dt taken by the Strang sub-steps of one step."""
    if scheme == "strang":
        return (1.0,)
    if scheme == "yoshida4":
        return (YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1)
    raise ValueError(f"unknown scheme '{scheme}'")


@dataclass
class StabilityTrace:
    """Quantities recorded along a trajectory."""
    times: list[float] = dc_field(default_factory=list)
    mass: list[float] = dc_field(default_factory=list)
    energy: list[float] = dc_field(default_factory=list)
    orbital_distance: list[float] = dc_field(default_factory=list)
    phase: list[float] = dc_field(default_factory=list)
    params: Optional[Params] = None
    perturbation_descriptor: str = "none"
    blow_up_possible: bool = False
    sup_distance: Optional[float] = None
    fitted_constant: Optional[float] = None
    relative_constant: Optional[float] = None
    verdict: Optional[str] = None

    def relative_drift(self, quantity: Literal["mass", "energy"]) -> float:
        values = np.asarray(getattr(self, quantity))
        scale = abs(values[0]) if values[0] != 0 else 1.0
        return float(np.max(np.abs(values - values[0])) / scale)

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.times, "mass": self.mass, "energy": self.energy, "phase": self.phase}
        if self.orbital_distance:
            columns["orbital_distance"] = self.orbital_distance
        return pd.DataFrame(columns)


@dataclass
class OrbitalFit:
    """Minimizer of ||psi - e^{i theta} U(. - r)||_H2."""
    distance: float
    theta: float
    shift: np.ndarray
    index: int = 0


# ===========================================
# Orbital distance
# ===========================================

def _h2_weights(grid: SpectralGrid) -> np.ndarray:
    return 1.0 + grid.k2 + grid.k2 ** 2


def _axis_phases(grid: SpectralGrid, shift: np.ndarray) -> list[np.ndarray]:
    """
    Per-axis factors of the translation x -> x - r. The Nyquist mode of each axis
    is the cosine that survives sampling, so it picks up cos(k r).
    """
    nyquist = grid.mode_index == -(grid.n // 2)
    factors = []
    for r in shift:
        factor = np.exp(-1j * grid.wavenumbers * r)
        factor[nyquist] = np.cos(grid.wavenumbers[nyquist] * r)
        factors.append(factor)
    return factors


def _translate_coeffs(coeffs: np.ndarray, grid: SpectralGrid, shift: np.ndarray) -> np.ndarray:
    out = coeffs
    for axis, factor in enumerate(_axis_phases(grid, shift)):
        index = [np.newaxis] * grid.dim
        index[axis] = slice(None)
        out = out * factor[tuple(index)]
    return out


class _Correlation:
    """c(r) = weighted H2 pairing of U(. - r) with psi, and its r-derivatives."""

    def __init__(self, psi_hat: np.ndarray, u_hat: np.ndarray, grid: SpectralGrid):
        self.grid = grid
        product = grid.parseval_weight * _h2_weights(grid) * np.conj(u_hat) * psi_hat
        nyquist = np.zeros(grid.shape, dtype=bool)
        for axis in range(grid.dim):
            index = [slice(None)] * grid.dim
            index[axis] = grid.n // 2
            nyquist[tuple(index)] = True
        product[nyquist] = 0.0
        self.product = product

    def on_grid(self) -> np.ndarray:
        """c at every grid shift j*h, FFT order."""
        return self.grid.points * sp_fft.ifftn(self.product)

    def value(self, r: np.ndarray) -> complex:
        phase = np.exp(1j * sum(k * ri for k, ri in zip(self.grid.kvec, r)))
        return complex(np.sum(self.product * phase))

    def derivatives(self, r: np.ndarray):
        kvec = self.grid.kvec
        weighted = self.product * np.exp(1j * sum(k * ri for k, ri in zip(kvec, r)))
        c = np.sum(weighted)
        grad = np.array([np.sum(1j * k * weighted) for k in kvec])
        hess = np.array([[np.sum(-ka * kb * weighted) for kb in kvec] for ka in kvec])
        return c, grad, hess


def _coarse_shift(corr: _Correlation) -> np.ndarray:
    grid = corr.grid
    modulus = np.abs(corr.on_grid())
    peak = modulus.max()
    candidates = np.argwhere(modulus >= peak * (1 - 1e-12))
    shifts = np.where(candidates > grid.n // 2, candidates - grid.n, candidates) * grid.h
    best = int(np.argmin(np.sum(shifts ** 2, axis=1)))
    return shifts[best].astype(float)


def _refine_shift(corr: _Correlation, start: np.ndarray) -> np.ndarray:
    grid = corr.grid

    def objective(r):
        return -abs(corr.value(np.atleast_1d(r))) ** 2

    if grid.dim == 1:
        result = minimize_scalar(
            objective, bounds=(start[0] - grid.h, start[0] + grid.h),
            method="bounded", options={"xatol": 1e-4 * grid.h},
        )
        r = np.array([result.x])
    else:
        result = minimize(
            objective, start, method="Nelder-Mead",
            options={"xatol": 1e-4 * grid.h, "fatol": 0.0, "maxiter": 400},
        )
        r = np.asarray(result.x, dtype=float)

    # Newton on |c|^2 to remove the remaining optimizer tolerance
    value = -objective(r)
    for _ in range(5):
        c, grad_c, hess_c = corr.derivatives(r)
        gradient = 2 * np.real(np.conj(c) * grad_c)
        hessian = 2 * np.real(np.outer(np.conj(grad_c), grad_c) + np.conj(c) * hess_c)
        try:
            step = -np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) >= grid.h:
            break
        candidate = r + step
        new_value = -objective(candidate)
        if new_value < value:
            break
        r, value = candidate, new_value
        if np.linalg.norm(step) < 1e-14 * max(1.0, grid.L):
            break
    return r


def orbital_fit(psi: Field, U: Field) -> OrbitalFit:
    """
    Best phase and translation aligning U to psi in the H2 metric.

    The translation comes from the argmax of the spectrally computed
    cross-correlation (ties go to the smaller shift), refined inside one cell;
    the phase is the argument of the weighted pairing at that shift.

    Raises:
        ValueError: psi and U on different grids
    """
    if not psi.grid.matches(U.grid):
        raise ValueError("grid mismatch between psi and U")
    grid = psi.grid
    psi_hat, u_hat = to_spectral(psi), to_spectral(U)
    corr = _Correlation(psi_hat, u_hat, grid)
    shift = _refine_shift(corr, _coarse_shift(corr))
    theta = float(np.angle(corr.value(shift)))

    aligned = np.exp(1j * theta) * _translate_coeffs(u_hat, grid, shift)
    difference = psi_hat - aligned
    distance = float(np.sqrt(grid.parseval_weight * np.sum(_h2_weights(grid) * np.abs(difference) ** 2)))
    return OrbitalFit(distance=distance, theta=theta, shift=shift)


def orbital_distance(psi: Field, U: Orbit) -> float:
    """
    inf over theta, r of ||psi - e^{i theta} U(. - r)||_H2.
    A sequence of profiles gives the distance to the union of their orbits.
    """
    profiles = [U] if isinstance(U, Field) else list(U)
    return min(orbital_fit(psi, profile).distance for profile in profiles)


# ===========================================
# Split-step integrator
# ===========================================

def _nonlinear_rotation(psi: np.ndarray, sigma: float, dt: float) -> np.ndarray:
    """Exact flow of i psi_t = -|psi|^(2 sigma) psi over dt; |psi| is invariant."""
    modulus2 = psi.real ** 2 + psi.imag ** 2
    if sigma == 1:
        power = modulus2
    else:
        power = np.zeros_like(modulus2)
        positive = modulus2 >= MODULUS_FLOOR
        power[positive] = np.exp(sigma * np.log(modulus2[positive]))
    return psi * np.exp(1j * dt * power)


def _step_count(t0: float, t_end: float, dt: float) -> int:
    if dt == 0:
        raise ValueError("dt must be non-zero")
    span = t_end - t0
    steps = int(round(span / dt))
    if steps <= 0:
        raise ValueError(f"t_end - t0 = {span} is not reached by steps of dt = {dt}")
    if abs(steps * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"t_end - t0 = {span} is not a multiple of dt = {dt}")
    return steps


def split_step_evolve(
    psi0: Field,
    params: Params,
    dt: float,
    t_end: float,
    record_every: int = 1,
    reference: Optional[Orbit] = None,
    t0: float = 0.0,
    descriptor: str = "none",
    scheme: Scheme = "strang",
) -> tuple[StabilityTrace, Field]:
    """
    Strang splitting: exact linear half-steps in Fourier space around an exact
    pointwise nonlinear phase rotation. Second order in dt; a negative dt runs
    backwards in time. scheme="yoshida4" composes three Strang sub-steps into a
    symmetric fourth-order step.

    Args:
        psi0: Initial wave function (cast to complex)
        params: Equation coefficients; alpha is not used
        dt: Time step
        t_end: Final time, reached from t0 in whole steps
        record_every: Recording stride in steps (the final state is always recorded)
        reference: Profile or profiles for the orbital distance column
        t0: Initial time
        descriptor: Label stored in the trace
        scheme: "strang" (second order) or "yoshida4" (fourth order, three sub-steps)

    Returns:
        (trace, final state)

    Raises:
        ValueError: inconsistent t_end/dt, record_every < 1 or unknown scheme
        EvolutionError: non-finite values, carrying the last good state and the trace so far
    """
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    steps = _step_count(t0, t_end, dt)
    grid = psi0.grid
    blow_up = params.sigma_n >= 4
    if blow_up:
        logger.warning(f"sigma N = {params.sigma_n:g} >= 4: blow-up possible")

    trace = StabilityTrace(params=params, perturbation_descriptor=descriptor, blow_up_possible=blow_up)
    dispersion = params.gamma * grid.k2 ** 2 + params.beta * grid.k2
    stages = [(w * dt, np.exp(-0.5j * w * dt * dispersion)) for w in stage_fractions(scheme)]

    def record(t: float, psi_hat: np.ndarray):
        state = Field(grid, sp_fft.ifftn(psi_hat))
        record_ = evaluate(state, params)
        trace.times.append(t)
        trace.mass.append(record_.mass)
        trace.energy.append(record_.E)
        trace.phase.append(float(np.angle(psi_hat.flat[0])))
        if reference is not None:
            trace.orbital_distance.append(orbital_distance(state, reference))

    logger.info(
        f"Split-step ({scheme}): dt={dt:g}, steps={steps}, n={grid.n}, N={grid.dim}, "
        f"gamma={params.gamma:g}, beta={params.beta:g}, sigma={params.sigma:g}"
    )
    psi_hat = sp_fft.fftn(np.asarray(psi0.values, dtype=np.complex128))
    if not np.all(np.isfinite(psi_hat)):
        raise ValueError("initial state contains NaN or Inf")
    record(t0, psi_hat)

    for step in range(1, steps + 1):
        previous = psi_hat
        for tau, half in stages:
            psi = sp_fft.ifftn(half * psi_hat)
            psi_hat = half * sp_fft.fftn(_nonlinear_rotation(psi, params.sigma, tau))
        if not np.all(np.isfinite(psi_hat)):
            trace.phase = list(np.unwrap(trace.phase))
            logger.error(f"Split-step: non-finite state at t={t0 + step * dt:g}")
            raise EvolutionError(
                f"non-finite state at t = {t0 + step * dt:g}",
                last_state=Field(grid, sp_fft.ifftn(previous)),
                trace=trace,
            )
        if step % record_every == 0 or step == steps:
            record(t0 + step * dt, psi_hat)
        if step % settings.log_every == 0:
            logger.debug(f"Split-step {step}/{steps}: mass={trace.mass[-1]:.15g}")

    trace.phase = [float(p) for p in np.unwrap(trace.phase)]
    final = Field(grid, sp_fft.ifftn(psi_hat))
    logger.info(
        f"Split-step done: mass drift={trace.relative_drift('mass'):.3e}, "
        f"energy drift={trace.relative_drift('energy'):.3e}"
    )
    return trace, final


# ===========================================
# Perturbation experiments
# ===========================================

def perturb(U: Field, perturbation: Perturbation, epsilon: float, seed: int = 0) -> Field:
    """
    Perturbed initial state:
    scale (1 + eps) U; noise U + band-limited complex noise of H2 size eps ||U||_H2;
    modulated U (1 + eps cos(8 pi x_1 / L)).
    """
    grid = U.grid
    base = np.asarray(U.values, dtype=np.complex128)
    if perturbation == "scale":
        return Field(grid, (1 + epsilon) * base)
    if perturbation == "modulated":
        return Field(grid, base * (1 + epsilon * np.cos(2 * np.pi * 4 * grid.coords[0] / grid.L)))
    if perturbation == "noise":
        if epsilon == 0:
            return Field(grid, base)
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        band = np.ones(grid.shape, dtype=bool)
        keep = np.abs(grid.mode_index) <= grid.n // 8
        for axis in range(grid.dim):
            index = [np.newaxis] * grid.dim
            index[axis] = slice(None)
            band = band & keep[tuple(index)]
        noise = sp_fft.ifftn(sp_fft.fftn(noise) * band)
        noise *= epsilon * h2_norm(U) / h2_norm(Field(grid, noise))
        return Field(grid, base + noise)
    raise ValueError(f"unknown perturbation '{perturbation}'")


def stability_experiment(
    U: Field,
    params: Params,
    perturbation: Perturbation = "scale",
    epsilon: float = 1e-3,
    t_end: float = 1.0,
    dt: float = 1e-3,
    record_every: int = 10,
    seed: int = 0,
    orbit_set: Optional[Sequence[Field]] = None,
    scheme: Scheme = "yoshida4",
) -> StabilityTrace:
    """
    Evolve a perturbation of the standing wave U and track the orbital distance
    to U (or to the union of orbits of orbit_set).

    The verdict compares sup_t d against C * epsilon with
    C <= settings.stability_constant_max. The constant relative to ||U||_H2
    is reported alongside.

    Raises:
        ValueError: epsilon < 0
        EvolutionError: propagated from split_step_evolve
    """
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    psi0 = perturb(U, perturbation, epsilon, seed)
    reference = list(orbit_set) if orbit_set else U
    descriptor = f"{perturbation}(epsilon={epsilon:g}, seed={seed})"
    trace, _ = split_step_evolve(
        psi0, params, dt, t_end, record_every=record_every, reference=reference,
        descriptor=descriptor, scheme=scheme,
    )

    trace.sup_distance = float(max(trace.orbital_distance))
    if epsilon == 0:
        trace.verdict = "unperturbed"
    else:
        trace.fitted_constant = trace.sup_distance / epsilon
        trace.relative_constant = trace.fitted_constant / h2_norm(U)
        if trace.fitted_constant <= settings.stability_constant_max:
            trace.verdict = "bounded by C*epsilon"
        else:
            trace.verdict = "exceeds C*epsilon bound"
    logger.info(
        f"Stability experiment {descriptor}: sup d={trace.sup_distance:.6e}, "
        f"C={trace.fitted_constant}, C/||U||_H2={trace.relative_constant}, verdict={trace.verdict}"
    )
    return trace
