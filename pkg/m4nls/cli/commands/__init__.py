"""
Command handlers grouped by family.
"""

from m4nls.cli.commands import ground_state, spectrum, dynamics, studies

__all__ = [
    "ground_state",
    "spectrum",
    "dynamics",
    "studies",
]
