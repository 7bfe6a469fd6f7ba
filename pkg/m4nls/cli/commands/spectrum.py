"""
Linearization commands: smallest eigenvalues of L1/L2 with the nondegeneracy
verdict, and the sign of the integral of v u* for L1 v = u*.
"""

from m4nls.cli.commands.common import CommandRouter, RunContext, build_grid, profile_from_config
from m4nls.services.linearization import nondegeneracy_report, smallest_eigenpairs, stability_condition
from m4nls.services.analysis import stability_condition_sweep


router = CommandRouter()


@router.command("spectrum", summary="Smallest eigenvalues of L1 and L2, kernel count")
def spectrum(ctx: RunContext):
    config = ctx.config
    profile, params = profile_from_config(ctx)
    knobs = config.solver

    rows = []
    flags = []
    for which in ("L1", "L2"):
        report = smallest_eigenpairs(profile, params, which, k=knobs.k, kernel_tol=knobs.kernel_tol)
        rows.extend(report.rows())
        flags.extend(report.flags)
        ctx.flags[f"{which}_negative"] = report.n_negative
        ctx.flags[f"{which}_kernel"] = report.kernel_dim_est
    ctx.run_dir.save_table("spectrum.csv", rows)

    verdict = nondegeneracy_report(profile, params, kernel_tol=knobs.kernel_tol)
    ctx.run_dir.save_json("nondegeneracy.json", verdict)
    ctx.flags["verdict"] = verdict.verdict
    if flags:
        ctx.flags["warnings"] = sorted(set(flags))


@router.command("stability-condition", summary="Sign of the integral of v u* with L1 v = u*")
def stability_condition_command(ctx: RunContext):
    config = ctx.config
    alpha_list = config.experiment.alpha_list
    if alpha_list:
        params = config.params()
        table = stability_condition_sweep(
            params, alpha_list, build_grid(config, params.with_alpha(min(alpha_list))),
            tol=config.solver.tol, kernel_tol=config.solver.kernel_tol, threads=ctx.threads,
        )
        ctx.run_dir.save_table("stability_sweep.csv", table)
        ctx.flags["signs"] = list(table["sign"])
        return

    profile, params = profile_from_config(ctx)
    report = stability_condition(profile, params, kernel_tol=config.solver.kernel_tol)
    ctx.run_dir.save_table("stability_condition.csv", [report.model_dump()])
    ctx.flags["sign"] = report.sign
