"""
Study commands: tail decay and sign structure, critical mass, the gamma -> 0
limit and the 1D shooting check.
"""

from m4nls.cli.commands.common import CommandRouter, RunContext, build_grid, profile_from_config
from m4nls.services.analysis import (
    critical_mass_search,
    fit_decay_rate,
    gamma_limit_study,
    radial_deviation,
    shoot_1d,
    sign_report,
)


router = CommandRouter()


@router.command("decay-fit", summary="Exponential tail rate and sign structure of a profile")
def decay_fit(ctx: RunContext):
    config = ctx.config
    profile, params = profile_from_config(ctx)
    fit = fit_decay_rate(profile, window_fraction=config.experiment.window_fraction, params=params)
    signs = sign_report(profile, params)
    row = fit.model_dump()
    row["window_min"], row["window_max"] = row.pop("window")
    row.update(signs.model_dump())
    row["radial_deviation"] = radial_deviation(profile)
    ctx.run_dir.save_table("decay_fit.csv", [row])
    ctx.flags.update(non_exponential=fit.non_exponential, classification=signs.classification)


@router.command("critical-mass", summary="Bisection for the critical mass")
def critical_mass(ctx: RunContext):
    config = ctx.config
    experiment = config.experiment
    params = config.params()
    report = critical_mass_search(
        params, experiment.mu_lo, experiment.mu_hi, experiment.bisect_tol,
        grid=build_grid(config, params), dt=config.solver.dt, threads=ctx.threads,
    )
    ctx.run_dir.save_table("samples.csv", [p.model_dump() for p in report.samples])
    ctx.run_dir.save_json("critical_mass.json", report.model_dump(exclude={"samples"}))
    ctx.flags["mu_c_est"] = report.mu_c_est


@router.command("gamma-limit", summary="Minimizers along gamma -> 0 against the NLS limit")
def gamma_limit(ctx: RunContext):
    config = ctx.config
    params = config.params()
    table = gamma_limit_study(
        config.beta, config.experiment.mu, config.sigma, config.experiment.gamma_list,
        grid=build_grid(config, params), tol=config.solver.tol, threads=ctx.threads,
    )
    ctx.run_dir.save_table("gamma_limit.csv", table)


@router.command("shoot-1d", summary="Even shooting for the 1D homoclinic with Hamiltonian monitoring")
def shoot(ctx: RunContext):
    config = ctx.config
    experiment = config.experiment
    result = shoot_1d(
        config.params(), experiment.u0, experiment.upp0, x_max=experiment.x_max, step=experiment.step,
    )
    ctx.run_dir.save_table("trajectory.csv", result.trajectory)
    ctx.run_dir.save_json("shoot.json", result.report)
    ctx.flags.update(outcome=result.report.outcome, H_drift=result.report.H_drift)
