import numpy as np
import pytest

from m4nls.config.settings import get_settings
from m4nls.models.schemas import Params
from m4nls.services.functionals import el_residual, evaluate, lp_power
from m4nls.services.solvers import (
    fourier_rearrange,
    negative_energy_threshold,
    nls_soliton,
    normalized_gradient_flow,
    petviashvili_solve,
    rescale_gamma,
    soliton_alpha_for_mass,
    uniform_energy,
)
from m4nls.services.spectral_core import Field, align_peak, make_grid, sobolev_products
from m4nls.utils.errors import SymbolViolationError
from tests.conftest import exact_profile_values

hypothesis = pytest.importorskip("hypothesis")
from hypothesis import given, settings, strategies as st  # noqa: E402


class TestPetviashvili:
    def test_exact_start_is_already_converged(self, exact_U, exact_params):
        result = petviashvili_solve(exact_params, init=exact_U)
        assert result.converged
        assert result.iterations <= 2
        assert result.stabilizer == pytest.approx(1.0, abs=1e-9)

    def test_gaussian_start_reaches_the_exact_profile(self, grid_1d, exact_U, exact_params):
        result = petviashvili_solve(exact_params, grid=grid_1d)
        assert result.el_residual < 1e-10
        aligned = align_peak(result.profile)
        assert np.max(np.abs(aligned.values - exact_U.values)) < 1e-6 * np.max(exact_U.values)
        assert result.functionals.E == pytest.approx(-100.0 / 7.0, rel=1e-8)
        assert result.converged
        assert result.iterations < 200

    def test_nls_limit_matches_the_soliton(self, soliton):
        params = Params(gamma=0.0, beta=1.0, alpha=1.0, sigma=1.0)
        result = petviashvili_solve(params, grid=soliton.grid)
        aligned = align_peak(result.profile)
        assert np.max(np.abs(aligned.values - soliton.values)) < 1e-8

    def test_symbol_violation(self, grid_1d):
        params = Params(gamma=1.0, beta=-3.0, alpha=1.0, sigma=1.0)
        with pytest.raises(SymbolViolationError, match="symbol violation"):
            petviashvili_solve(params, grid=grid_1d)

    def test_invalid_inputs(self, grid_1d, exact_params):
        with pytest.raises(ValueError, match="identically zero"):
            petviashvili_solve(exact_params, init=Field(grid_1d, np.zeros(grid_1d.n)))
        with pytest.raises(ValueError, match="alpha must be positive"):
            petviashvili_solve(exact_params.with_alpha(-1.0), grid=grid_1d)
        with pytest.raises(ValueError, match="init or grid"):
            petviashvili_solve(exact_params)

    def test_summary_is_flat(self, exact_U, exact_params):
        summary = petviashvili_solve(exact_params, init=exact_U).summary()
        assert summary["converged"] is True
        assert summary["mass"] == pytest.approx(20.0, rel=1e-10)
        assert all(not isinstance(v, (dict, list)) for v in summary.values())


class TestNormalizedGradientFlow:
    def test_exact_profile_is_a_fixed_point(self, exact_U, exact_params):
        result = normalized_gradient_flow(exact_params.with_alpha(None), 20.0, init=exact_U)
        assert result.converged and result.achieved
        assert result.alpha == pytest.approx(4.0, rel=1e-8)
        assert result.mass == pytest.approx(20.0, rel=1e-12)

    def test_nls_minimizer_is_the_soliton(self, soliton):
        params = Params(gamma=0.0, beta=1.0, sigma=1.0)
        result = normalized_gradient_flow(params, 4.0, grid=soliton.grid, residual_tol=1e-9)
        assert result.converged
        assert result.alpha == pytest.approx(1.0, rel=1e-6)
        assert np.max(np.abs(align_peak(result.profile).values - soliton.values)) < 1e-6

    def test_energy_history_is_non_increasing(self, soliton):
        params = Params(gamma=0.1, beta=1.0, sigma=1.0)
        result = normalized_gradient_flow(params, 4.0, grid=soliton.grid)
        history = np.asarray(result.energy_history)
        assert np.all(np.diff(history) <= 1e-13 * np.maximum(1.0, np.abs(history[1:])))

    def test_default_tolerance_follows_the_settings(self, soliton, monkeypatch):
        params = Params(gamma=0.0, beta=1.0, sigma=1.0)
        monkeypatch.setattr(get_settings(), "ngf_tol", 1e-4)
        loose = normalized_gradient_flow(params, 4.0, grid=soliton.grid)
        explicit = normalized_gradient_flow(params, 4.0, grid=soliton.grid, tol=1e-4)
        tight = normalized_gradient_flow(params, 4.0, grid=soliton.grid, tol=1e-11)
        assert loose.converged and tight.converged
        assert loose.iterations == explicit.iterations < tight.iterations

    def test_small_supercritical_mass_has_no_minimizer(self):
        grid = make_grid(1, 256, 40.0)
        params = Params(gamma=1.0, beta=1.0, sigma=3.0)
        result = normalized_gradient_flow(params, 0.5, grid=grid)
        assert not result.achieved
        assert result.message == "no negative-energy minimizer detected"

    def test_invalid_inputs(self, grid_1d):
        with pytest.raises(ValueError, match="infimum"):
            normalized_gradient_flow(Params(gamma=1.0, beta=1.0, sigma=4.0), 1.0, grid=grid_1d)
        with pytest.raises(ValueError, match="mu must be positive"):
            normalized_gradient_flow(Params(gamma=1.0, beta=1.0, sigma=1.0), 0.0, grid=grid_1d)
        with pytest.raises(ValueError, match="dt must be positive"):
            normalized_gradient_flow(Params(gamma=1.0, beta=1.0, sigma=1.0), 1.0, grid=grid_1d, dt=-0.1)

    def test_threshold_sits_below_the_uniform_state(self):
        grid = make_grid(1, 256, 40.0)
        params = Params(gamma=1.0, beta=1.0, sigma=3.0)
        assert uniform_energy(params, 0.5, grid) == pytest.approx(-0.5 ** 4 / 40.0 ** 3 / 8.0)
        assert negative_energy_threshold(params, 0.5, grid, -1e-10) == pytest.approx(
            2 * uniform_energy(params, 0.5, grid)
        )
        assert negative_energy_threshold(params, 1e-6, grid, -1e-10) == -1e-10


class TestFourierRearrangement:
    def test_mass_kept_and_gradient_not_increased(self):
        grid = make_grid(1, 256, 40.0)
        x = grid.coords[0]
        u = Field(grid, np.exp(-(x - 3.0) ** 2) + 0.5 * np.exp(-((x + 5.0) ** 2) / 4.0))
        rearranged = fourier_rearrange(u)
        before, after = sobolev_products(u), sobolev_products(rearranged)
        assert after.l2 == pytest.approx(before.l2, rel=1e-12)
        assert after.grad_l2 <= before.grad_l2 * (1 + 1e-12)
        assert after.lap_l2 <= before.lap_l2 * (1 + 1e-12)

    def test_centered_gaussian_is_fixed(self):
        grid = make_grid(1, 128, 20.0)
        u = Field(grid, np.exp(-grid.coords[0] ** 2))
        np.testing.assert_allclose(fourier_rearrange(u).values, u.values, atol=1e-12)

    def test_result_is_even(self):
        grid = make_grid(2, 32, 10.0)
        x, y = grid.coords
        u = Field(grid, np.exp(-((x - 1.0) ** 2) - 2 * (y + 0.5) ** 2))
        values = fourier_rearrange(u).values
        mirrored = np.roll(values[::-1, ::-1], 1, axis=(0, 1))
        np.testing.assert_allclose(values, mirrored, atol=1e-12)

    def test_minimizer_energy_is_not_increased(self, soliton_grid):
        params = Params(gamma=0.1, beta=1.0, sigma=1.0)
        result = normalized_gradient_flow(params, 4.0, grid=soliton_grid)
        assert result.achieved
        before = evaluate(result.profile, params)
        after = evaluate(fourier_rearrange(result.profile), params)
        assert after.mass == pytest.approx(before.mass, rel=1e-12)
        assert after.E <= before.E + 1e-10 * abs(before.E)


def band_limited_field(seed: int, modes: int) -> Field:
    grid = make_grid(1, 256, 40.0)
    rng = np.random.default_rng(seed)
    spectrum = rng.standard_normal(grid.n // 2 + 1) + 1j * rng.standard_normal(grid.n // 2 + 1)
    spectrum[modes:] = 0.0
    return Field(grid, np.fft.irfft(spectrum, grid.n))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31), modes=st.integers(min_value=3, max_value=32))
def test_rearrangement_lowers_curvature_and_raises_the_quartic_norm(seed, modes):
    # band limit keeps |u|^4 exactly integrated on the grid
    u = band_limited_field(seed, modes)
    rearranged = fourier_rearrange(u)
    before, after = sobolev_products(u), sobolev_products(rearranged)
    assert after.lap_l2 <= before.lap_l2 * (1 + 1e-12)
    assert lp_power(rearranged, 1.0) >= lp_power(u, 1.0) * (1 - 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 31), cells=st.integers(min_value=-255, max_value=255))
def test_rearrangement_ignores_translations(seed, cells):
    u = band_limited_field(seed, 24)
    moved = Field(u.grid, np.roll(u.values, cells))
    expected = fourier_rearrange(u).values
    np.testing.assert_allclose(fourier_rearrange(moved).values, expected, rtol=0, atol=1e-12 * np.max(np.abs(expected)))


class TestRescaling:
    def test_rescaled_solution_solves_the_unit_gamma_equation(self):
        wide = make_grid(1, 1024, 160.0)
        # u(x) = U(x/2) solves the equation with gamma = 16, beta = 20, alpha = 4
        u = Field(wide, exact_profile_values(wide.coords[0] / 2.0))
        params = Params(gamma=16.0, beta=20.0, alpha=4.0, sigma=1.0)
        assert el_residual(u, params) < 1e-9

        v, theta = rescale_gamma(u, 16.0, 20.0)
        assert theta == pytest.approx(5.0)
        assert v.grid.L == pytest.approx(80.0)
        assert el_residual(v, Params(gamma=1.0, beta=theta, alpha=4.0, sigma=1.0)) < 1e-9
        assert evaluate(v, params).mass == pytest.approx(20.0, rel=1e-10)

    def test_same_grid_interpolation(self):
        wide = make_grid(1, 1024, 160.0)
        u = Field(wide, exact_profile_values(wide.coords[0] / 2.0))
        v, _ = rescale_gamma(u, 16.0, 20.0, same_grid=True)
        assert v.grid.matches(wide)
        np.testing.assert_allclose(v.values, exact_profile_values(wide.coords[0]), atol=1e-9)

    def test_gamma_must_be_positive(self, exact_U):
        with pytest.raises(ValueError, match="gamma must be positive"):
            rescale_gamma(exact_U, 0.0, 1.0)


class TestClosedForms:
    def test_soliton_mass_and_frequency(self, soliton_grid, soliton):
        np.testing.assert_allclose(nls_soliton(1.0, 1.0, soliton_grid).values, soliton.values, atol=1e-15)
        assert sobolev_products(soliton).l2 == pytest.approx(4.0, rel=1e-12)
        assert soliton_alpha_for_mass(4.0, 1.0) == pytest.approx(1.0)

    def test_frequency_scaling(self, soliton_grid):
        alpha = soliton_alpha_for_mass(2.0, 0.5)
        mass = sobolev_products(nls_soliton(alpha, 0.5, soliton_grid)).l2
        assert mass == pytest.approx(2.0, rel=1e-8)

    def test_soliton_needs_one_dimension(self):
        with pytest.raises(ValueError, match="N = 1"):
            nls_soliton(1.0, 1.0, make_grid(2, 32, 10.0))
        with pytest.raises(ValueError):
            soliton_alpha_for_mass(1.0, 2.5)

