"""
Shared pieces of the command handlers: the command router, the run context,
and helpers building parameters, grids and profiles from a RunConfig.
"""

from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Optional

import numpy as np

from m4nls.models.schemas import Params, RunConfig
from m4nls.services.spectral_core import Field, SpectralGrid, make_grid
from m4nls.services.functionals import lagrange_multiplier, evaluate
from m4nls.services.solvers import petviashvili_solve
from m4nls.services.analysis import suggest_box_length
from m4nls.utils.file_handler import RunDirectory, load_field
from m4nls.utils.logger import logger


@dataclass
class RunContext:
    """Everything a command handler needs; handlers record manifest flags here."""
    config: RunConfig
    run_dir: RunDirectory
    threads: int = 1
    flags: dict[str, Any] = dc_field(default_factory=dict)


Handler = Callable[[RunContext], None]


@dataclass
class CommandSpec:
    name: str
    handler: Handler
    summary: str = ""


class CommandRouter:
    """Name -> handler registry; routers are merged with include_router."""

    def __init__(self):
        self.commands: dict[str, CommandSpec] = {}

    def command(self, name: str, summary: str = "") -> Callable[[Handler], Handler]:
        def decorator(handler: Handler) -> Handler:
            if name in self.commands:
                raise ValueError(f"command '{name}' registered twice")
            self.commands[name] = CommandSpec(name=name, handler=handler, summary=summary)
            return handler
        return decorator

    def include_router(self, other: "CommandRouter"):
        for name, spec in other.commands.items():
            if name in self.commands:
                raise ValueError(f"command '{name}' registered twice")
            self.commands[name] = spec

    def get(self, name: str) -> CommandSpec:
        if name not in self.commands:
            raise ValueError(f"unknown command '{name}'")
        return self.commands[name]


# ===========================================
# Builders
# ===========================================

def build_grid(config: RunConfig, params: Optional[Params] = None) -> SpectralGrid:
    """Grid of the config; L defaults to the box suggested by the linear tail."""
    params = params or config.params()
    length = config.L if config.L is not None else suggest_box_length(params)
    if config.L is None:
        logger.info(f"Box length not given, using L = {length:g}")
    return make_grid(config.dim, config.n, length)


def load_input(config: RunConfig) -> Optional[Field]:
    if config.input_field is None:
        return None
    field = load_field(config.input_field)
    if field.grid.dim != config.dim:
        raise ValueError(f"input field is {field.grid.dim}D but dim = {config.dim}")
    return field


def profile_from_config(ctx: RunContext, save: bool = True) -> tuple[Field, Params]:
    """
    Profile for the analysis commands: the input field when given (alpha recovered
    from the Lagrange identity if missing), otherwise a Petviashvili ground state.
    """
    config = ctx.config
    params = config.params()
    loaded = load_input(config)
    if loaded is not None:
        profile = loaded if not loaded.is_complex else loaded.with_values(np.real(loaded.values))
        if params.alpha is None:
            mass = evaluate(profile, params).mass
            params = params.with_alpha(lagrange_multiplier(profile, params, mass).alpha)
            logger.info(f"alpha recovered from the input field: {params.alpha:.12g}")
        ctx.flags["profile_source"] = "input_field"
        return profile, params

    grid = build_grid(config, params)
    result = petviashvili_solve(params, grid=grid, tol=config.solver.tol, max_iter=config.solver.max_iter)
    ctx.flags["profile_source"] = "petviashvili"
    ctx.flags["petviashvili_iterations"] = result.iterations
    if save:
        ctx.run_dir.save_field("profile.m4nl", result.profile)
    return result.profile, params
