"""
Main command router.
Aggregates the command families and runs one configured command inside a run directory.
"""

import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

from scipy import fft as sp_fft

from m4nls import __version__
from m4nls.cli.commands import ground_state, spectrum, dynamics, studies
from m4nls.cli.commands.common import CommandRouter, RunContext
from m4nls.models.schemas import RunConfig, RunManifest
from m4nls.utils.errors import NumericalFailure
from m4nls.utils.file_handler import RunDirectory
from m4nls.utils.logger import logger


# Create main command router
cli_router = CommandRouter()

cli_router.include_router(ground_state.router)
cli_router.include_router(spectrum.router)
cli_router.include_router(dynamics.router)
cli_router.include_router(studies.router)


def determinism_note(threads: int) -> str:
    return (
        f"scipy.fft with {threads} worker(s), {threads} sweep job(s); "
        "results do not depend on the thread count beyond 1e-14"
    )


def run(config: RunConfig, out: Optional[Union[str, Path]] = None, threads: int = 1) -> int:
    """
    Execute one command and write its outputs plus the manifest (always last).

    Args:
        config: Validated run configuration
        out: Output directory override (else config.output_dir, else a fresh directory)
        threads: FFT workers and concurrent sweep jobs

    Returns:
        Exit status: 0 success, 1 usage error, 2 numerical failure
    """
    if threads < 1:
        raise ValueError("threads must be at least 1")
    spec = cli_router.get(config.command)
    run_dir = RunDirectory(config.command, out if out is not None else config.output_dir)
    ctx = RunContext(config=config, run_dir=run_dir, threads=threads)

    started_at = datetime.now(timezone.utc)
    clock = time.perf_counter()
    status, exit_code, message = "ok", 0, ""
    logger.info(f"Running '{config.command}' into {run_dir.run_dir} (threads={threads})")

    try:
        with sp_fft.set_workers(threads):
            spec.handler(ctx)
    except NumericalFailure as e:
        status, exit_code, message = "failed", 2, f"{type(e).__name__}: {e}"
        logger.error(f"Numerical failure in '{config.command}': {e}")
    except ValueError as e:
        status, exit_code, message = "failed", 1, f"{type(e).__name__}: {e}"
        logger.error(f"Invalid input for '{config.command}': {e}")
    except Exception as e:
        status, exit_code, message = "failed", 2, f"{type(e).__name__}: {e}"
        logger.exception(f"Unhandled error in '{config.command}'")

    manifest = RunManifest(
        config=config.model_dump(mode="json"),
        version=__version__,
        command=config.command,
        determinism_note=determinism_note(threads),
        threads=threads,
        started_at=started_at,
        wall_time_s=time.perf_counter() - clock,
        status=status,
        exit_code=exit_code,
        message=message,
        flags=ctx.flags,
    )
    run_dir.write_manifest(manifest)
    logger.info(f"'{config.command}' finished with status {status} (exit {exit_code})")
    return exit_code
