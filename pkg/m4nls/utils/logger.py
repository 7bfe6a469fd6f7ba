"""
Logging for the 4NLS laboratory.
One package logger: DEBUG to <log_dir>/m4nls.log, settings.log_level to stdout.
"""

import sys
import logging
from pathlib import Path
from typing import Optional

from m4nls.config.settings import settings


LOGGER_NAME = "M4NLS"
LOG_FORMAT = "[%(asctime)s] [%(levelname)s] [%(name)s:%(module)s:%(lineno)d] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure_logger(log_dir: Optional[Path] = None, console_level: Optional[str] = None) -> logging.Logger:
    """
    Attach the file and console handlers to the package logger.

    Calling it again replaces the handlers, so the log file can be moved
    (for example into a test scratch directory) without duplicate output.
    """
    log_dir = Path(log_dir) if log_dir is not None else settings.log_dir
    log_dir.mkdir(parents=True, exist_ok=True)
    level = "DEBUG" if settings.debug else (console_level or settings.log_level).upper()
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    to_file = logging.FileHandler(log_dir / "m4nls.log", encoding="utf-8")
    to_file.setLevel(logging.DEBUG)
    to_console = logging.StreamHandler(sys.stdout)
    to_console.setLevel(level)

    package_logger = logging.getLogger(LOGGER_NAME)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()
    for handler in (to_file, to_console):
        handler.setFormatter(formatter)
        package_logger.addHandler(handler)
    package_logger.setLevel(logging.DEBUG)
    package_logger.propagate = False
    return package_logger


logger = configure_logger()
