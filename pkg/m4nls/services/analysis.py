"""
Analysis Service.
Studies assembled from the solvers: tail decay fits, sign structure,
critical-mass bisection, the gamma -> 0 limit, alpha(mu) charts,
stability-condition sweeps and the 1D shooting check.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, TypeVar

import numpy as np
import pandas as pd
from scipy import stats

from m4nls.config.settings import settings
from m4nls.models.schemas import (
    Params,
    DecayFit,
    SignReport,
    MassSample,
    CriticalMassReport,
    ShootReport,
)
from m4nls.services.spectral_core import (
    Field,
    SpectralGrid,
    align_peak,
    linear_decay_rate,
    sobolev_products,
)
from m4nls.services.functionals import (
    CRITICAL_TOL,
    critical_mass_formula,
    gn_constant_estimate,
)
from m4nls.services.solvers import (
    negative_energy_threshold,
    nls_soliton,
    normalized_gradient_flow,
    petviashvili_solve,
    rescale_gamma,
    soliton_alpha_for_mass,
)
from m4nls.services.linearization import stability_condition
from m4nls.utils.errors import NumericalFailure
from m4nls.utils.logger import logger


T = TypeVar("T")
R = TypeVar("R")

SEAM_TOL = 1e-12


def _ordered_map(job: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """Run pure jobs, concurrently when threads > 1; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [job(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, items))


# ===========================================
# Decay
# ===========================================

def theoretical_rate(alpha: float, beta: float) -> tuple[float, str]:
    """
    Predicted exponential tail rate of solutions with gamma = 1.

    beta > 2 sqrt(alpha):  sqrt(beta - sqrt(beta^2 - 4 alpha)) / sqrt(2)
    beta = 2 sqrt(alpha):  sqrt(beta)
    |beta| < 2 sqrt(alpha): sqrt(2 sqrt(alpha) - beta) / 2

    The two first formulas do not agree in the limit beta -> 2 sqrt(alpha).

    Raises:
        ValueError: alpha <= 0 or beta <= -2 sqrt(alpha)
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    seam = 2 * math.sqrt(alpha)
    if beta <= -seam:
        raise ValueError(f"beta must exceed -2 sqrt(alpha) = {-seam:g}, got {beta}")
    if abs(beta - seam) <= SEAM_TOL * seam:
        return math.sqrt(beta), "beta_eq"
    if beta > seam:
        return math.sqrt(beta - math.sqrt(beta ** 2 - 4 * alpha)) / math.sqrt(2), "beta_gt"
    return math.sqrt(seam - beta) / 2, "beta_lt"


def suggest_box_length(params: Params, target: Optional[float] = None, default: float = 40.0) -> float:
    """
    Box length at which the linear tail exp(-rate |x|) falls below target at the edge,
    with 20% margin. Without a frequency the default is returned.
    """
    target = settings.tail_target if target is None else target
    if params.alpha is None or params.alpha <= 0:
        return default
    rate = linear_decay_rate(params)
    length = 2.4 * math.log(1.0 / target) / rate
    return float(10.0 * math.ceil(length / 10.0))


def _ray(u: Field) -> tuple[np.ndarray, np.ndarray]:
    """Samples along +x_1 from the discrete peak up to distance L/2 (periodic wrap)."""
    grid = u.grid
    values = np.real(u.values)
    peak = np.unravel_index(int(np.argmax(np.abs(values))), values.shape)
    offsets = np.arange(grid.n // 2 + 1)
    index = list(peak)
    index[0] = (peak[0] + offsets) % grid.n
    return offsets * grid.h, values[tuple(index)]


def _local_maxima(samples: np.ndarray) -> np.ndarray:
    inner = samples[1:-1]
    mask = (inner > samples[:-2]) & (inner >= samples[2:])
    return np.flatnonzero(mask) + 1


def fit_decay_rate(
    u: Field,
    window_fraction: float = 0.5,
    params: Optional[Params] = None,
    floor: Optional[float] = None,
) -> DecayFit:
    """
    Least-squares slope of log|u| against distance from the peak over the outer
    window [(1 - w) L/2, L/2] of the ray along x_1. Oscillating tails are fitted on
    the local maxima of |u|.

    With params the fit runs in the gamma = 1 frame (rescale_gamma) and is compared
    against theoretical_rate there; gamma = 0 is compared with sqrt(alpha/beta).

    Raises:
        ValueError: field not decayed at the box edge, or fewer than 3 samples in the window
    """
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    floor = settings.decay_floor if floor is None else floor

    theoretical = regime = linear = None
    if params is not None and params.alpha is not None:
        if params.gamma == 0:
            linear = linear_decay_rate(params)
            theoretical, regime = linear, "nls"
        else:
            if params.gamma != 1:
                u, beta = rescale_gamma(u, params.gamma, params.beta)
                params = Params(gamma=1.0, beta=beta, alpha=params.alpha, sigma=params.sigma, dim=params.dim)
            linear = linear_decay_rate(params)
            theoretical, regime = theoretical_rate(params.alpha, params.beta)

    distance, samples = _ray(u)
    modulus = np.abs(samples)
    top = float(modulus.max())
    if top == 0:
        raise ValueError("decay fit undefined for a zero field")
    if modulus[-1] >= settings.decay_threshold * top:
        raise ValueError(
            f"field has not decayed at the box edge (|u| = {modulus[-1]:.3e} relative {modulus[-1] / top:.3e})"
        )

    radius = u.grid.L / 2
    lower = (1 - window_fraction) * radius
    in_window = (distance >= lower) & (modulus > floor * top)
    signs = np.sign(samples[in_window])
    envelope = bool(np.any(signs[1:] != signs[:-1])) if signs.size > 1 else False

    if envelope:
        peaks = _local_maxima(modulus)
        chosen = peaks[(distance[peaks] >= lower) & (modulus[peaks] > floor * top)]
    else:
        chosen = np.flatnonzero(in_window)
    if chosen.size < 3:
        raise ValueError(f"window empty: {chosen.size} usable samples in [{lower:g}, {radius:g}]")

    fit = stats.linregress(distance[chosen], np.log(modulus[chosen]))
    r_squared = float(min(max(fit.rvalue ** 2, 0.0), 1.0))
    non_exponential = r_squared < 0.99
    if non_exponential:
        logger.warning(f"Decay fit: non-exponential tail (r^2 = {r_squared:.4f})")
    result = DecayFit(
        fitted_rate=float(-fit.slope),
        window=(float(distance[chosen].min()), float(distance[chosen].max())),
        r_squared=r_squared,
        n_samples=int(chosen.size),
        envelope=envelope,
        non_exponential=non_exponential,
        theoretical_rate=theoretical,
        regime=regime,
        linear_rate=linear,
    )
    logger.info(
        f"Decay fit: rate={result.fitted_rate:.8g} over {result.window}, r^2={r_squared:.6f}, "
        f"envelope={envelope}, theory={theoretical} ({regime})"
    )
    return result


# ===========================================
# Shape diagnostics
# ===========================================

def sign_report(u: Field, params: Optional[Params] = None) -> SignReport:
    """
    Sign changes along the radial ray after normalizing the peak to be positive.
    Samples below settings.sign_threshold relative to the peak are ignored.
    With params the classification is checked against beta^2 vs 4 gamma alpha.

    Raises:
        ValueError: zero field
    """
    values = np.real(u.values)
    peak = float(values.flat[int(np.argmax(np.abs(values)))])
    if peak == 0:
        raise ValueError("sign report undefined for a zero field")
    normalized = u.with_values(values / peak)
    _, ray = _ray(normalized)
    significant = ray[np.abs(ray) > settings.sign_threshold]
    changes = int(np.sum(np.sign(significant[1:]) != np.sign(significant[:-1])))
    classification = "sign-changing" if changes > 0 else "single-signed"

    expected = consistent = None
    if params is not None and params.alpha is not None:
        if params.gamma == 0 or params.beta >= 2 * math.sqrt(params.gamma * params.alpha):
            expected = "single-signed"
        else:
            expected = "sign-changing"
        consistent = expected == classification

    return SignReport(
        n_sign_changes_radial=changes,
        min_over_max=float(np.min(normalized.values)),
        classification=classification,
        expected=expected,
        consistent=consistent,
    )


def radial_deviation(u: Field) -> float:
    """
    Symmetry defect about the peak, relative to max |u|: the evenness defect
    max |u(x) - u(-x)| in 1D, the largest spread over shells of equal radius otherwise.
    """
    centered = align_peak(u)
    values = np.real(centered.values)
    top = float(np.max(np.abs(values)))
    if top == 0:
        raise ValueError("radial deviation undefined for a zero field")
    grid = u.grid
    if grid.dim == 1:
        mirrored = np.roll(values[::-1], 1)
        return float(np.max(np.abs(values - mirrored)) / top)

    # shells of exactly equal radius: same squared index offset from the origin
    offsets = np.arange(grid.n) - grid.n // 2
    squared = sum(np.meshgrid(*([offsets ** 2] * grid.dim), indexing="ij"))
    shells = squared.ravel()
    flat = values.ravel()
    inside = shells < (grid.n // 2) ** 2
    spread = 0.0
    for shell in np.unique(shells[inside]):
        members = flat[(shells == shell) & inside]
        if members.size > 1:
            spread = max(spread, float(members.max() - members.min()))
    return spread / top


# ===========================================
# Critical mass
# ===========================================

def critical_mass_search(
    params: Params,
    mu_lo: float,
    mu_hi: float,
    bisect_tol: float = 0.05,
    grid: Optional[SpectralGrid] = None,
    dt: Optional[float] = None,
    threads: int = 1,
) -> CriticalMassReport:
    """
    Bisection on the indicator "normalized gradient flow reaches E < threshold", with the
    threshold lowered below the uniform-state energy of each mass (negative_energy_threshold).

    A geometric scan of settings.critical_scan_points masses (run concurrently when
    threads > 1) brackets the transition; bisection then narrows it to a relative
    width below bisect_tol. The indicator is checked to be monotone over every sample.

    Raises:
        ValueError: sigma >= 4/N, mu_lo >= mu_hi, or the bracket ends have the wrong sign
        NumericalFailure: indicator not monotone (no estimate emitted)
    """
    if grid is None:
        raise ValueError("a grid is required")
    dim = grid.dim
    sn = params.sigma * dim
    if sn < 2 - CRITICAL_TOL:
        note = "sigma < 2/N: minimizers exist for every mass, mu_c = 0"
        logger.info(f"Critical mass: {note}")
        return CriticalMassReport(mu_c_est=0.0, bracket=(0.0, 0.0), note=note)
    if sn >= 4:
        raise ValueError("critical mass search needs sigma < 4/N")
    if not 0 < mu_lo < mu_hi:
        raise ValueError(f"need 0 < mu_lo < mu_hi, got [{mu_lo}, {mu_hi}]")

    profiles: dict[float, Field] = {}

    def sample(mu: float) -> MassSample:
        threshold = negative_energy_threshold(params, mu, grid, settings.critical_energy_threshold)
        result = normalized_gradient_flow(params, mu, dt=dt, grid=grid, stop_below_energy=threshold)
        energy = result.functionals.E
        negative = energy < threshold
        if negative:
            profiles[mu] = result.profile
        logger.info(f"Critical mass sample mu={mu:.8g}: E={energy:.6e}, negative={negative}")
        return MassSample(mu=mu, energy=energy, negative=negative, iterations=result.iterations)

    scan = np.geomspace(mu_lo, mu_hi, max(settings.critical_scan_points, 2))
    samples = _ordered_map(sample, scan, threads)
    if samples[0].negative:
        raise ValueError(f"mu_lo = {mu_lo} already gives negative energy")
    if not samples[-1].negative:
        raise ValueError(f"mu_hi = {mu_hi} does not give negative energy")

    def check_monotone():
        ordered = sorted(samples, key=lambda p: p.mu)
        flags = [p.negative for p in ordered]
        if any(a and not b for a, b in zip(flags, flags[1:])):
            raise NumericalFailure(
                "negative-energy indicator is not monotone in mu: "
                + ", ".join(f"{p.mu:.6g}:{int(p.negative)}" for p in ordered)
            )

    check_monotone()
    first_negative = next(i for i, p in enumerate(samples) if p.negative)
    lo, hi = samples[first_negative - 1].mu, samples[first_negative].mu

    while (hi - lo) / hi >= bisect_tol:
        mid = 0.5 * (lo + hi)
        result = sample(mid)
        samples.append(result)
        if result.negative:
            hi = mid
        else:
            lo = mid
    check_monotone()

    estimate = 0.5 * (lo + hi)
    formula = None
    if params.beta == 1 and params.gamma > 0 and hi in profiles:
        form = "H1" if abs(sn - 2) < CRITICAL_TOL else "mixed"
        try:
            best, _, _ = gn_constant_estimate({"ngf": profiles[hi]}, params.sigma, form)
            formula = critical_mass_formula(params.gamma, params.sigma, dim, best)
        except ValueError as e:
            logger.info(f"Critical mass formula skipped: {e}")

    logger.info(f"Critical mass bracket [{lo:.8g}, {hi:.8g}], estimate {estimate:.8g}, formula {formula}")
    return CriticalMassReport(
        mu_c_est=estimate,
        bracket=(lo, hi),
        samples=sorted(samples, key=lambda p: p.mu),
        note="bisection on the negative-energy indicator",
        formula_estimate=formula,
    )


# ===========================================
# gamma -> 0 limit
# ===========================================

def limit_profile(beta: float, mu: float, sigma: float, grid: SpectralGrid) -> tuple[Field, float]:
    """
    Mass-mu solution of -beta Delta w + alpha0 w = |w|^(2 sigma) w centered at the origin.
    Closed form in 1D; otherwise two Petviashvili runs (frequency 1, then the
    frequency matching mu through the scaling mass(alpha) = alpha^(1/sigma - N/2) mass(1)).
    """
    if grid.dim == 1:
        alpha0 = soliton_alpha_for_mass(mu, sigma, beta)
        return nls_soliton(alpha0, sigma, grid, beta), alpha0
    base = Params(gamma=0.0, beta=beta, alpha=1.0, sigma=sigma, dim=grid.dim)
    unit = petviashvili_solve(base, grid=grid)
    alpha0 = (mu / unit.mass) ** (1 / (1 / sigma - grid.dim / 2))
    scaled = petviashvili_solve(base.with_alpha(alpha0), grid=grid)
    return scaled.profile, alpha0


def _align(u: Field) -> Field:
    centered = align_peak(u)
    values = np.real(centered.values)
    if values.flat[int(np.argmax(np.abs(values)))] < 0:
        values = -values
    return centered.with_values(values)


def gamma_limit_study(
    beta: float,
    mu: float,
    sigma: float,
    gamma_list: list[float],
    grid: SpectralGrid,
    tol: Optional[float] = None,
    residual_tol: float = 1e-10,
    threads: int = 1,
) -> pd.DataFrame:
    """
    Mass-mu minimizers along a decreasing gamma ladder against the gamma = 0 limit.

    Returns:
        DataFrame with gamma, err_l2, err_h1, err_h2, alpha, gamma_lap, energy, iterations;
        the last row is gamma = 0 (flow at gamma = 0 against the limit profile)

    Raises:
        ValueError: sigma >= 2/N, beta <= 0, or gamma_list not positive and decreasing
    """
    dim = grid.dim
    if not 0 < sigma < 2 / dim:
        raise ValueError(f"gamma limit needs 0 < sigma < 2/N, got sigma = {sigma}, N = {dim}")
    if beta <= 0:
        raise ValueError("gamma limit needs beta > 0")
    if not gamma_list or any(g <= 0 for g in gamma_list) or any(b >= a for a, b in zip(gamma_list, gamma_list[1:])):
        raise ValueError("gamma_list must be positive and strictly decreasing")

    limit, alpha0 = limit_profile(beta, mu, sigma, grid)
    logger.info(f"Gamma limit: mu={mu}, beta={beta}, sigma={sigma}, alpha0={alpha0:.12g}")

    def row(gamma: float) -> dict:
        params = Params(gamma=gamma, beta=beta, sigma=sigma, dim=dim)
        result = normalized_gradient_flow(params, mu, grid=grid, tol=tol, residual_tol=residual_tol)
        difference = _align(result.profile).values - limit.values
        norms = sobolev_products(Field(grid, difference))
        return {
            "gamma": gamma,
            "err_l2": math.sqrt(norms.l2),
            "err_h1": math.sqrt(norms.l2 + norms.grad_l2),
            "err_h2": math.sqrt(norms.h2),
            "alpha": result.alpha,
            "gamma_lap": gamma * result.functionals.lap_l2,
            "energy": result.functionals.E,
            "iterations": result.iterations,
        }

    rows = _ordered_map(row, list(gamma_list) + [0.0], threads)
    table = pd.DataFrame(rows)
    logger.info("Gamma limit errors (H2): " + ", ".join(f"{g:g}:{e:.3e}" for g, e in zip(table.gamma, table.err_h2)))
    return table


# ===========================================
# Sweeps
# ===========================================

def alpha_mass_chart(
    params: Params,
    mu_list: list[float],
    grid: SpectralGrid,
    dt: Optional[float] = None,
    tol: Optional[float] = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Lagrange multiplier alpha(mu) from one gradient-flow run per mass, in input order."""

    def row(mu: float) -> dict:
        result = normalized_gradient_flow(params, mu, grid=grid, dt=dt, tol=tol)
        return {
            "mu": mu,
            "alpha": result.alpha,
            "energy": result.functionals.E,
            "achieved": result.achieved,
            "converged": result.converged,
            "el_residual": result.el_residual,
            "iterations": result.iterations,
        }

    return pd.DataFrame(_ordered_map(row, mu_list, threads))


def stability_condition_sweep(
    params: Params,
    alpha_list: list[float],
    grid: SpectralGrid,
    tol: Optional[float] = None,
    kernel_tol: Optional[float] = None,
    threads: int = 1,
) -> pd.DataFrame:
    """Sign of the integral of v u* across frequencies at fixed (gamma, beta, sigma, N)."""

    def row(alpha: float) -> dict:
        local = params.with_alpha(alpha)
        ground = petviashvili_solve(local, grid=grid, tol=tol)
        report = stability_condition(ground.profile, local, kernel_tol=kernel_tol)
        return {
            "alpha": alpha,
            "integral": report.integral,
            "sign": report.sign,
            "solve_residual": report.solve_residual,
            "kernel_dim": report.kernel_dim,
            "iterations": ground.iterations,
        }

    return pd.DataFrame(_ordered_map(row, alpha_list, threads))


# ===========================================
# 1D shooting
# ===========================================

@dataclass
class ShootResult:
    report: ShootReport
    trajectory: pd.DataFrame


def _factorization(params: Params) -> tuple[float, float]:
    if params.dim != 1:
        raise ValueError("shooting is implemented for N = 1 only")
    alpha = params.require_alpha()
    if params.gamma <= 0 or alpha <= 0:
        raise ValueError("shooting needs gamma > 0 and alpha > 0")
    a = params.beta / params.gamma
    b = alpha / params.gamma
    discriminant = a * a - 4 * b
    if discriminant < 0 or a <= 0:
        raise ValueError("complex factorization: shooting needs beta >= 2 sqrt(gamma alpha)")
    root = math.sqrt(discriminant)
    return 0.5 * (a - root), 0.5 * (a + root)


def shoot_1d(
    params: Params,
    u0: float,
    upp0: float,
    x_max: float = 30.0,
    step: float = 1e-3,
    divergence_threshold: Optional[float] = None,
    decay_threshold: Optional[float] = None,
    record_every: int = 10,
) -> ShootResult:
    """
    Integrate the even solution u(0) = u0, u''(0) = upp0, u'(0) = u'''(0) = 0 forward with
    classical RK4 on u'' = w + l1 u, w'' = l2 w + |u|^(2 sigma) u / gamma, where l1 <= l2
    are the roots of l^2 - (beta/gamma) l + alpha/gamma = 0.

    The Hamiltonian gamma(u'u''' - u''^2/2) - beta u'^2/2 + alpha u^2/2 - |u|^(2 sigma + 2)/(2 sigma + 2)
    is monitored; its drift is measured up to the first interior local minimum of |u|,
    where a numerically computed homoclinic departs from the exact one.

    Raises:
        ValueError: N != 1, gamma or alpha not positive, beta < 2 sqrt(gamma alpha), bad step
    """
    lambda1, lambda2 = _factorization(params)
    if step <= 0 or x_max <= 0:
        raise ValueError("step and x_max must be positive")
    divergence_threshold = settings.divergence_threshold if divergence_threshold is None else divergence_threshold
    decay_threshold = settings.decay_threshold if decay_threshold is None else decay_threshold

    gamma, beta, alpha, sigma = params.gamma, params.beta, params.alpha, params.sigma
    power = 2 * sigma

    def rhs(state):
        u, up, w, wp = state
        return (up, w + lambda1 * u, wp, lambda2 * w + abs(u) ** power * u / gamma)

    def hamiltonian(state) -> tuple[float, float, float]:
        u, up, w, wp = state
        upp = w + lambda1 * u
        uppp = wp + lambda1 * up
        value = (
            gamma * (up * uppp - 0.5 * upp * upp) - 0.5 * beta * up * up
            + 0.5 * alpha * u * u - abs(u) ** (power + 2) / (power + 2)
        )
        return value, upp, uppp

    steps = int(math.ceil(x_max / step - 1e-9))
    state = (float(u0), 0.0, float(upp0) - lambda1 * float(u0), 0.0)
    H0, upp, uppp = hamiltonian(state)

    rows = [(0.0, state[0], state[1], upp, uppp, H0)]
    drift_total = 0.0
    drift_before = None
    departure = None
    outcome = None
    tail_max = 0.0
    prev2 = prev1 = None
    x = 0.0

    for i in range(1, steps + 1):
        k1 = rhs(state)
        k2 = rhs(tuple(s + 0.5 * step * k for s, k in zip(state, k1)))
        k3 = rhs(tuple(s + 0.5 * step * k for s, k in zip(state, k2)))
        k4 = rhs(tuple(s + step * k for s, k in zip(state, k3)))
        state = tuple(
            s + step / 6.0 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
        x = i * step
        H, upp, uppp = hamiltonian(state)
        magnitude = abs(state[0])
        if not math.isfinite(magnitude) or magnitude > divergence_threshold:
            outcome = "diverged"
            rows.append((x, state[0], state[1], upp, uppp, H))
            break

        drift_total = max(drift_total, abs(H - H0))
        if departure is None:
            if prev2 is not None and prev1 < prev2 and prev1 <= magnitude:
                departure = x - step
                drift_before = drift_total
        prev2, prev1 = prev1, magnitude
        if x >= 0.5 * x_max:
            tail_max = max(tail_max, magnitude)
        if i % record_every == 0 or i == steps:
            rows.append((x, state[0], state[1], upp, uppp, H))

    if outcome is None:
        outcome = "decayed" if tail_max < decay_threshold else "undecided"

    report = ShootReport(
        H0=H0,
        H_drift=drift_total if drift_before is None else drift_before,
        H_drift_total=drift_total,
        departure_x=departure,
        outcome=outcome,
        x_end=x,
        lambda1=lambda1,
        lambda2=lambda2,
    )
    logger.info(
        f"Shooting u0={u0:.12g}, u''0={upp0:.12g}: outcome={outcome} at x={x:.4g}, "
        f"H0={H0:.6e}, drift={report.H_drift:.3e}, departure={departure}"
    )
    trajectory = pd.DataFrame(rows, columns=["x", "u", "up", "upp", "uppp", "H"])
    return ShootResult(report=report, trajectory=trajectory)
