import math

import numpy as np
import pytest

from m4nls.models.schemas import Params
from m4nls.services.analysis import (
    alpha_mass_chart,
    critical_mass_search,
    fit_decay_rate,
    gamma_limit_study,
    limit_profile,
    radial_deviation,
    shoot_1d,
    sign_report,
    stability_condition_sweep,
    suggest_box_length,
    theoretical_rate,
)
from m4nls.services.solvers import petviashvili_solve
from m4nls.services.spectral_core import Field, make_grid, sobolev_products
from tests.conftest import EXACT_AMPLITUDE, exact_profile_values


class TestTheoreticalRate:
    @pytest.mark.parametrize(
        "alpha, beta, rate, regime",
        [
            (4.0, 5.0, 1.0, "beta_gt"),
            (1.0, 0.0, math.sqrt(2.0) / 2.0, "beta_lt"),
            (1.0, 2.0, math.sqrt(2.0), "beta_eq"),
        ],
    )
    def test_regimes(self, alpha, beta, rate, regime):
        value, label = theoretical_rate(alpha, beta)
        assert value == pytest.approx(rate, rel=1e-12)
        assert label == regime

    def test_invalid(self):
        with pytest.raises(ValueError):
            theoretical_rate(0.0, 1.0)
        with pytest.raises(ValueError):
            theoretical_rate(1.0, -2.0)

    def test_box_length(self, exact_params):
        assert suggest_box_length(exact_params) == 70.0
        assert suggest_box_length(exact_params.with_alpha(None)) == 40.0


class TestDecayFit:
    def test_exact_profile(self, exact_U, exact_params):
        fit = fit_decay_rate(exact_U, params=exact_params)
        assert fit.fitted_rate == pytest.approx(1.0, rel=0.02)
        assert fit.theoretical_rate == pytest.approx(1.0)
        assert fit.regime == "beta_gt"
        assert not fit.envelope
        assert not fit.non_exponential

    def test_rescaled_frame(self):
        wide = make_grid(1, 1024, 160.0)
        u = Field(wide, exact_profile_values(wide.coords[0] / 2.0))
        fit = fit_decay_rate(u, params=Params(gamma=16.0, beta=20.0, alpha=4.0, sigma=1.0))
        assert fit.fitted_rate == pytest.approx(1.0, rel=0.02)
        assert fit.theoretical_rate == pytest.approx(1.0)

    def test_gaussian_tail_is_not_exponential(self, grid_1d):
        u = Field(grid_1d, np.exp(-((grid_1d.coords[0] / 8.0) ** 2)))
        fit = fit_decay_rate(u, window_fraction=0.9)
        assert fit.r_squared < 0.99
        assert fit.non_exponential

    def test_undecayed_field(self, grid_1d):
        u = Field(grid_1d, 1.0 / np.cosh(grid_1d.coords[0] / 10.0))
        with pytest.raises(ValueError, match="not decayed"):
            fit_decay_rate(u)

    def test_window_too_narrow(self, exact_U):
        with pytest.raises(ValueError, match="window empty"):
            fit_decay_rate(exact_U, window_fraction=0.01)

    @pytest.mark.slow
    def test_oscillating_tail_uses_the_envelope(self, grid_1d):
        params = Params(gamma=1.0, beta=0.0, alpha=1.0, sigma=1.0)
        profile = petviashvili_solve(params, grid=grid_1d, tol=1e-11).profile
        fit = fit_decay_rate(profile, window_fraction=0.75, params=params, floor=1e-9)
        assert fit.envelope
        assert fit.regime == "beta_lt"
        assert fit.fitted_rate == pytest.approx(math.sqrt(2.0) / 2.0, rel=0.1)

        signs = sign_report(profile, params)
        assert signs.n_sign_changes_radial >= 1
        assert signs.classification == "sign-changing"
        assert signs.consistent


class TestShape:
    def test_single_signed_profile(self, exact_U, exact_params):
        report = sign_report(exact_U, exact_params)
        assert report.n_sign_changes_radial == 0
        assert report.classification == "single-signed"
        assert report.expected == "single-signed"
        assert report.consistent

    def test_zero_field(self, grid_1d):
        zero = Field(grid_1d, np.zeros(grid_1d.n))
        with pytest.raises(ValueError):
            sign_report(zero)
        with pytest.raises(ValueError):
            radial_deviation(zero)

    def test_radial_deviation(self, exact_U):
        assert radial_deviation(exact_U) < 1e-10
        grid = make_grid(2, 64, 16.0)
        x, y = grid.coords
        assert radial_deviation(Field(grid, np.exp(-(x ** 2 + y ** 2)))) < 1e-10
        assert radial_deviation(Field(grid, np.exp(-(x ** 2 + 2 * y ** 2)))) > 0.1


class TestShooting:
    def test_exact_data_keeps_the_hamiltonian(self, exact_params):
        result = shoot_1d(exact_params, EXACT_AMPLITUDE, -EXACT_AMPLITUDE / 2.0)
        report = result.report
        assert report.H0 == pytest.approx(0.0, abs=1e-12)
        assert report.H_drift < 1e-8
        assert report.departure_x is not None
        assert (report.lambda1, report.lambda2) == pytest.approx((1.0, 4.0))

        trajectory = result.trajectory
        early = trajectory[trajectory.x <= 8.0]
        np.testing.assert_allclose(early.u, exact_profile_values(early.x.to_numpy()), atol=1e-6)

    def test_fourth_order_drift(self, exact_params):
        coarse = shoot_1d(exact_params, EXACT_AMPLITUDE, -EXACT_AMPLITUDE / 2.0, x_max=5.0, step=0.02)
        fine = shoot_1d(exact_params, EXACT_AMPLITUDE, -EXACT_AMPLITUDE / 2.0, x_max=5.0, step=0.01)
        assert 12 <= coarse.report.H_drift / fine.report.H_drift <= 20

    def test_perturbed_amplitude_diverges(self, exact_params):
        result = shoot_1d(exact_params, 1.001 * EXACT_AMPLITUDE, -EXACT_AMPLITUDE / 2.0)
        assert result.report.outcome == "diverged"

    def test_zero_data_decays(self, exact_params):
        report = shoot_1d(exact_params, 0.0, 0.0, x_max=5.0).report
        assert report.outcome == "decayed"
        assert report.H0 == 0.0
        assert report.H_drift == 0.0

    def test_complex_factorization_rejected(self):
        with pytest.raises(ValueError, match="complex factorization"):
            shoot_1d(Params(gamma=1.0, beta=1.0, alpha=4.0, sigma=1.0), 1.0, 0.0)

    def test_trajectory_columns(self, exact_params):
        frame = shoot_1d(exact_params, 0.0, 0.0, x_max=1.0, step=0.1, record_every=1).trajectory
        assert list(frame.columns) == ["x", "u", "up", "upp", "uppp", "H"]
        assert len(frame) == 11


class TestCriticalMass:
    def test_subcritical_power_has_zero_critical_mass(self):
        report = critical_mass_search(Params(gamma=1.0, beta=1.0, sigma=1.0), 0.5, 8.0, grid=make_grid(1, 256, 40.0))
        assert report.mu_c_est == 0.0
        assert "sigma < 2/N" in report.note

    def test_invalid_inputs(self):
        grid = make_grid(1, 64, 20.0)
        with pytest.raises(ValueError, match="sigma < 4/N"):
            critical_mass_search(Params(gamma=1.0, beta=1.0, sigma=4.0), 0.5, 8.0, grid=grid)
        with pytest.raises(ValueError, match="mu_lo < mu_hi"):
            critical_mass_search(Params(gamma=1.0, beta=1.0, sigma=3.0), 8.0, 0.5, grid=grid)

    @pytest.mark.slow
    def test_bracket_for_a_supercritical_power(self):
        report = critical_mass_search(Params(gamma=1.0, beta=1.0, sigma=3.0), 0.5, 8.0, grid=make_grid(1, 256, 40.0))
        lo, hi = report.bracket
        assert lo < report.mu_c_est < hi
        assert (hi - lo) / hi < 0.05
        flags = [p.negative for p in report.samples]
        assert flags == sorted(flags)

    @pytest.mark.slow
    def test_estimate_decreases_with_gamma(self):
        grid = make_grid(1, 512, 40.0)
        estimates = [
            critical_mass_search(Params(gamma=gamma, beta=1.0, sigma=3.0), 0.25, 8.0, grid=grid).mu_c_est
            for gamma in (1.0, 0.1, 0.01)
        ]
        assert estimates[0] > estimates[1] > estimates[2]


class TestGammaLimit:
    def test_limit_profile_frequency(self):
        grid = make_grid(1, 256, 40.0)
        profile, alpha0 = limit_profile(1.0, 4.0, 1.0, grid)
        assert alpha0 == pytest.approx(1.0)
        assert sobolev_products(profile).l2 == pytest.approx(4.0, rel=1e-8)

    def test_validation(self):
        grid = make_grid(1, 64, 20.0)
        with pytest.raises(ValueError, match="sigma"):
            gamma_limit_study(1.0, 4.0, 2.0, [0.1], grid)
        with pytest.raises(ValueError, match="decreasing"):
            gamma_limit_study(1.0, 4.0, 1.0, [0.01, 0.1], grid)
        with pytest.raises(ValueError, match="beta"):
            gamma_limit_study(0.0, 4.0, 1.0, [0.1], grid)

    @pytest.mark.slow
    def test_errors_shrink_along_the_ladder(self):
        table = gamma_limit_study(1.0, 4.0, 1.0, [1e-1, 1e-2, 1e-3], make_grid(1, 256, 40.0))
        assert list(table.gamma) == [1e-1, 1e-2, 1e-3, 0.0]
        errors = table.err_h2.to_numpy()
        assert np.all(np.diff(errors) < 0)
        assert errors[-1] < 1e-6
        assert table.alpha.iloc[-1] == pytest.approx(1.0, rel=1e-6)
        assert table.alpha.iloc[2] == pytest.approx(1.0, rel=0.05)
        # gamma * int |Delta u|^2 vanishes along the ladder
        assert np.all(np.diff(table.gamma_lap.to_numpy()) < 0)
        assert table.gamma_lap.iloc[-1] == 0.0


class TestSweeps:
    def test_alpha_chart_keeps_input_order(self, soliton_grid):
        params = Params(gamma=0.0, beta=1.0, sigma=1.0)
        table = alpha_mass_chart(params, [4.0, 2.0], soliton_grid, threads=2)
        assert list(table.mu) == [4.0, 2.0]
        assert table.alpha.iloc[0] == pytest.approx(1.0, rel=1e-3)
        assert table.alpha.iloc[1] == pytest.approx(0.25, rel=1e-3)

    def test_stability_sweep_matches_single_runs(self, exact_params):
        grid = make_grid(1, 256, 80.0)
        table = stability_condition_sweep(exact_params, [4.0], grid)
        assert list(table.columns) == ["alpha", "integral", "sign", "solve_residual", "kernel_dim", "iterations"]
        assert table.kernel_dim.iloc[0] == 1
        assert table.solve_residual.iloc[0] < 1e-8
