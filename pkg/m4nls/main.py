"""
Command-line entry point.
Mixed-dispersion 4NLS Lab - spectral solvers, stability and dynamics studies.

    python -m m4nls --config run.json [--out DIR] [--threads N]

Exit status: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

import argparse
import sys
from typing import Optional, Sequence

from m4nls.cli.router import run
from m4nls.config.settings import settings
from m4nls.utils.config_loader import parse_config
from m4nls.utils.errors import ConfigError, NumericalFailure
from m4nls.utils.logger import logger


class _Parser(argparse.ArgumentParser):
    """Argument errors become ConfigError instead of SystemExit(2)."""

    def error(self, message: str):
        raise ConfigError(message)


def _positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="m4nls",
        description=f"{settings.app_name} v{settings.app_version}",
    )
    parser.add_argument("--config", required=True, help="JSON run configuration (dotted keys)")
    parser.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
    parser.add_argument(
        "--threads", type=_positive_int, default=settings.threads,
        help="FFT workers and concurrent sweep jobs (default %(default)s)",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and configuration, run the command, map failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
        config = parse_config(args.config)
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return 1

    try:
        return run(config, out=args.out, threads=args.threads)
    except NumericalFailure as e:
        logger.error(f"Numerical failure: {e}")
        return 2
    except ValueError as e:
        logger.error(f"Usage error: {e}")
        return 1
    except Exception:
        logger.exception("Unhandled exception")
        return 2


if __name__ == "__main__":
    sys.exit(main())
