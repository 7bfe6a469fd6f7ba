"""
Functionals Service.
Energy, mass, action, Pohozaev and Lagrange-multiplier identities,
Gagliardo-Nirenberg ratios and the critical-mass threshold formula.
"""

import math
from typing import Literal, Mapping, Optional

import numpy as np

from m4nls.models.schemas import (
    Params,
    FunctionalRecord,
    LagrangeMultiplier,
    RecoveredIntegrals,
    IdentityReport,
)
from m4nls.services.spectral_core import (
    Field,
    forward_linear,
    sobolev_products,
    l2_norm,
)
from m4nls.utils.logger import logger


CRITICAL_TOL = 1e-12

GNForm = Literal["H2", "H1", "mixed"]


def nonlinearity(values: np.ndarray, sigma: float) -> np.ndarray:
    """|u|^(2 sigma) u, pointwise."""
    if sigma == 1:
        return np.abs(values) ** 2 * values
    return np.abs(values) ** (2 * sigma) * values


def lp_power(u: Field, sigma: float) -> float:
    return float(u.grid.cell_volume * np.sum(np.abs(u.values) ** (2 * sigma + 2)))


def evaluate(
    u: Field,
    params: Params,
    with_alpha: Optional[float] = None,
    require_action: bool = False,
) -> FunctionalRecord:
    """
    Evaluate E, mass and the L^(2 sigma + 2) power; J and A when a frequency is known.

    Args:
        u: Real profile or complex wave function (|psi| integrands)
        params: Equation coefficients
        with_alpha: Frequency for J and A, defaults to params.alpha
        require_action: Raise instead of omitting J and A when no frequency is known

    Returns:
        FunctionalRecord

    Raises:
        ValueError: require_action without any frequency
    """
    norms = sobolev_products(u)
    lp = lp_power(u, params.sigma)
    energy = 0.5 * params.gamma * norms.lap_l2 + 0.5 * params.beta * norms.grad_l2 - lp / (2 * params.sigma + 2)

    alpha = with_alpha if with_alpha is not None else params.alpha
    if alpha is None and require_action:
        raise ValueError("alpha is required to evaluate J and A")

    J = A = None
    if alpha is not None:
        J = params.gamma * norms.lap_l2 + params.beta * norms.grad_l2 + alpha * norms.l2
        A = 0.5 * J - lp / (2 * params.sigma + 2)

    return FunctionalRecord(
        E=energy, mass=norms.l2, lp_power=lp,
        grad_l2=norms.grad_l2, lap_l2=norms.lap_l2, J=J, A=A,
    )


def el_residual(u: Field, params: Params, alpha: Optional[float] = None) -> float:
    """
    Relative Euler-Lagrange residual
    ||gamma*Delta^2 u - beta*Delta u + alpha u - |u|^(2 sigma) u||_2 / ||u||_H2.
    """
    params = params if alpha is None else params.with_alpha(alpha)
    scale = math.sqrt(sobolev_products(u).h2)
    if scale == 0:
        return 0.0
    residual = forward_linear(params, u).values - nonlinearity(u.values, params.sigma)
    return l2_norm(u.with_values(residual)) / scale


def pohozaev_residual(u: Field, params: Params, relative: bool = False) -> float:
    """
    Signed Pohozaev defect 2 gamma |Delta u|^2 + beta |grad u|^2 - sigma N/(2 sigma + 2) lp.
    With relative=True the defect is divided by the sum of the absolute terms.
    """
    record = evaluate(u, params)
    terms = (
        2 * params.gamma * record.lap_l2,
        params.beta * record.grad_l2,
        -params.sigma_n / (2 * params.sigma + 2) * record.lp_power,
    )
    defect = sum(terms)
    if not relative:
        return defect
    scale = sum(abs(t) for t in terms)
    return defect / scale if scale > 0 else 0.0


def _relative_spread(values: list[float]) -> float:
    scale = max(abs(v) for v in values)
    if scale == 0:
        return 0.0
    return max(abs(a - b) for a in values for b in values) / scale


def lagrange_multiplier(u: Field, params: Params, mu: float) -> LagrangeMultiplier:
    """
    Frequency of a mass-constrained critical point, in three forms.

    Raises:
        ValueError: mu <= 0
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    record = evaluate(u, params)
    sigma = params.sigma
    direct = (record.lp_power - params.gamma * record.lap_l2 - params.beta * record.grad_l2) / mu
    energy_form = (-2 * record.E + sigma / (sigma + 1) * record.lp_power) / mu
    pohozaev_form = (
        (1 - params.sigma_n / (2 * sigma + 2)) * record.lp_power + params.gamma * record.lap_l2
    ) / mu
    return LagrangeMultiplier(
        alpha=direct,
        alpha_energy_form=energy_form,
        alpha_pohozaev_form=pohozaev_form,
        mismatch=_relative_spread([direct, energy_form, pohozaev_form]),
    )


def recover_integrals(E_value: float, alpha: float, mu: float, params: Params) -> RecoveredIntegrals:
    """
    Reconstruct (|Delta u|^2, |grad u|^2, lp) from the energy, frequency and mass
    by solving the Euler-Lagrange, Pohozaev and energy relations.

    Raises:
        ValueError: sigma N = 2 with nonzero energy, or gamma*beta = 0 (singular system)
    """
    g, b, s = params.gamma, params.beta, params.sigma
    if abs(params.sigma_n - 2) < CRITICAL_TOL:
        if abs(E_value) > CRITICAL_TOL * max(1.0, abs(alpha * mu)):
            raise ValueError("sigma N = 2: relations only hold at zero energy")
        if b == 0:
            raise ValueError("sigma N = 2 branch needs beta != 0")
        lp = (s + 1) / s * alpha * mu
        return RecoveredIntegrals(
            lap_l2=0.0, grad_l2=lp / ((s + 1) * b), lp_power=lp, branch="critical_zero_energy"
        )
    if g * b == 0:
        raise ValueError("integral system is singular when gamma * beta = 0")

    system = np.array([
        [g, b, -1.0],
        [2 * g, b, -params.sigma_n / (2 * s + 2)],
        [0.5 * g, 0.5 * b, -1.0 / (2 * s + 2)],
    ])
    rhs = np.array([-alpha * mu, 0.0, E_value])
    lap, grad, lp = np.linalg.solve(system, rhs)
    return RecoveredIntegrals(lap_l2=float(lap), grad_l2=float(grad), lp_power=float(lp))


def _gn_admissible(sigma: float, dim: int, form: GNForm):
    if form == "H1" and dim >= 3 and sigma >= 2.0 / (dim - 2):
        raise ValueError(f"H1 form needs sigma < {2.0 / (dim - 2)} in dimension {dim}")
    if form == "mixed" and not (2.0 / dim < sigma < 4.0 / dim):
        raise ValueError(f"mixed form needs 2/N < sigma < 4/N, got sigma = {sigma}, N = {dim}")
    if form not in ("H2", "H1", "mixed"):
        raise ValueError(f"unknown Gagliardo-Nirenberg form '{form}'")


def gn_ratio(u: Field, sigma: float, form: GNForm) -> float:
    """
    Scale-invariant Gagliardo-Nirenberg quotient lp / (product of norm powers).
    Any admissible u gives a lower bound for the sharp constant of that form.

    Raises:
        ValueError: inadmissible sigma for the form, zero field
    """
    dim = u.grid.dim
    _gn_admissible(sigma, dim, form)
    norms = sobolev_products(u)
    if norms.l2 == 0:
        raise ValueError("Gagliardo-Nirenberg ratio undefined for a zero field")
    lp = lp_power(u, sigma)
    sn = sigma * dim

    if form == "H2":
        denominator = norms.lap_l2 ** (sn / 4) * norms.l2 ** (1 + sigma - sn / 4)
    elif form == "H1":
        denominator = norms.grad_l2 ** (sn / 2) * norms.l2 ** (1 + sigma * (2 - dim) / 2)
    else:
        denominator = (
            norms.l2 ** sigma
            * norms.grad_l2 ** ((4 - sn) / 2)
            * norms.lap_l2 ** (sn / 2 - 1)
        )
    if denominator == 0:
        raise ValueError("Gagliardo-Nirenberg ratio undefined: vanishing derivative norm")
    return lp / denominator


def gn_constant_estimate(
    candidates: Mapping[str, Field], sigma: float, form: GNForm
) -> tuple[float, str, dict[str, float]]:
    """
    Best lower bound for a Gagliardo-Nirenberg constant over candidate profiles
    plus Gaussian and sech-power trial families built on the first candidate's grid.

    Returns:
        (best ratio, label of the best profile, all ratios by label)
    """
    if not candidates:
        raise ValueError("at least one candidate profile is required")
    grid = next(iter(candidates.values())).grid
    radius = grid.radius()
    trials: dict[str, Field] = dict(candidates)
    for width in (0.5, 1.0, 2.0, 4.0):
        trials[f"gaussian(w={width:g})"] = Field(grid, np.exp(-(radius / width) ** 2))
    for power in (1.0, 2.0, 4.0):
        trials[f"sech^{power:g}"] = Field(grid, np.cosh(radius) ** (-power))

    ratios = {label: gn_ratio(f, sigma, form) for label, f in trials.items()}
    best = max(ratios, key=ratios.get)
    logger.info(f"GN[{form}] lower bound {ratios[best]:.10g} from '{best}'")
    return ratios[best], best, ratios


def critical_mass_formula(gamma: float, sigma: float, N: int, C_est: float) -> float:
    """
    Critical mass at beta = 1 from a Gagliardo-Nirenberg constant estimate.
    For sigma = 2/N the constant is the H1 one and mu_c = (1/(2C))^(N/2).

    Raises:
        ValueError: sigma outside [2/N, 4/N), gamma <= 0 or C_est <= 0
    """
    if C_est <= 0:
        raise ValueError("C_est must be positive")
    sn = sigma * N
    if abs(sn - 2) < CRITICAL_TOL:
        return (1.0 / (2 * C_est)) ** (N / 2)
    if not 2 < sn < 4:
        raise ValueError(f"critical mass formula needs 2/N <= sigma < 4/N, got sigma N = {sn}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    V = (
        gamma
        * (1 / (sn - 2) - 0.5)
        * C_est ** (2 / (4 - sn))
        * (gamma * (2 * sigma + 2) / (sn - 2)) ** (2 / (sn - 4))
    )
    return (1 / (2 * V)) ** ((4 - sn) / (2 * sigma))


def alpha_bound(alpha: float, mu: float, sigma: float, N: int, B_est: float, inflate: float = 1.05) -> tuple[float, bool]:
    """
    Upper bound on the Lagrange multiplier of a mass-constrained minimizer from the
    H2 Gagliardo-Nirenberg constant. B_est is inflated to cover estimation slack.

    Returns:
        (bound, alpha <= bound)
    """
    sn = sigma * N
    if sn >= 4:
        raise ValueError("alpha bound needs sigma N < 4")
    exponent = 1 / (1 - sn / 4)
    bound = (inflate * B_est) ** exponent * (2 - sn / (2 * sigma + 2)) * mu ** (sigma * exponent)
    return bound, alpha <= bound


def action_comparison(u_min: Field, u_ground: Field, params: Params) -> dict[str, float]:
    """Action of a mass-constrained minimizer against the ground state at the same frequency."""
    alpha = params.require_alpha()
    a_min = evaluate(u_min, params, with_alpha=alpha, require_action=True).A
    a_ground = evaluate(u_ground, params, with_alpha=alpha, require_action=True).A
    return {"A_minimizer": a_min, "A_ground_state": a_ground, "difference": a_min - a_ground}


def identity_report(u: Field, params: Params, mu: Optional[float] = None) -> IdentityReport:
    """
    Identity suite: Pohozaev, Euler-Lagrange residual, Lagrange multiplier
    (recovered from the field), integral reconstruction and GN ratios.
    """
    record = evaluate(u, params)
    mu = record.mass if mu is None else mu
    multiplier = lagrange_multiplier(u, params, mu)
    alpha = params.alpha if params.alpha is not None else multiplier.alpha

    recovered = defects = None
    try:
        rec = recover_integrals(record.E, alpha, mu, params)
        recovered = (rec.lap_l2, rec.grad_l2, rec.lp_power)
        direct = (record.lap_l2, record.grad_l2, record.lp_power)
        defects = tuple(
            abs(r - d) / abs(d) if d != 0 else abs(r) for r, d in zip(recovered, direct)
        )
    except ValueError as e:
        logger.info(f"Integral reconstruction skipped: {e}")

    ratios = {}
    for form in ("H2", "H1", "mixed"):
        try:
            ratios[form] = gn_ratio(u, params.sigma, form)
        except ValueError:
            continue

    return IdentityReport(
        pohozaev_residual=pohozaev_residual(u, params, relative=True),
        el_residual=el_residual(u, params, alpha),
        alpha=multiplier.alpha,
        lagrange_mismatch=multiplier.mismatch,
        recovered_integrals=recovered,
        consistency_defects=defects,
        gn_ratios=ratios,
        functionals=record,
    )
