"""Benchmark catalog and configuration parsing.

Two built-in problems: the 2D Mandel consolidation benchmark (traction on
the top edge, goal = time-integrated bottom pressure) and a 3D footing
problem (traction on a centered compression patch, goal = time-integrated
patch pressure).  Defaults reproduce the reference setups: Mandel on an
80x16 grid and footing on a 16^3 grid, both with T = 5e6 s over 5000 steps.

Configuration files are flat ``key = value`` text with dotted section
prefixes; see CONFIG_KEYS for the schema.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .adaptive import MoreDwrConfig
from .assembly import BlockOperators, MaterialParams, assemble_operators
from .discretization import (BoundaryTag, ProblemKind, build_structured_mesh,
                             build_taylor_hood_space, tag_boundaries)
from .fom import TimeGrid
from .linsolve import LinearSolverConfig, Preconditioner, SolverMethod

__all__ = [
    "ProblemSpec",
    "ConfigError",
    "mandel_spec",
    "footing_spec",
    "parse_config",
    "build_problem",
]


class ConfigError(ValueError):
    """Configuration rejected; carries the offending line number if known."""

    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


@dataclass
class ProblemSpec:
    """Complete description of one benchmark run."""

    kind: ProblemKind
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    cells_per_axis: tuple[int, ...]
    t_end: float
    num_steps: int
    material: MaterialParams
    traction_tag: BoundaryTag
    traction_direction: tuple[float, ...]
    goal_tag: BoundaryTag
    neumann_tags: tuple[BoundaryTag, ...]
    solver: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    moredwr: MoreDwrConfig = field(default_factory=MoreDwrConfig)

    @property
    def fingerprint(self) -> str:
        cells = "x".join(str(n) for n in self.cells_per_axis)
        return f"{self.kind.value}:{cells}:{self.num_steps}:{self.t_end:.17g}"

    def validate(self) -> None:
        if self.num_steps < 0:
            raise ConfigError(f"number of steps must be >= 0, got {self.num_steps}")
        if self.t_end <= 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if len(self.cells_per_axis) != len(self.origin):
            raise ConfigError("cells and geometry dimensions do not match")
        if any(n < 1 for n in self.cells_per_axis):
            raise ConfigError(f"cell counts must be >= 1, got {self.cells_per_axis}")
        self.material.validate()
        self.solver.validate()
        self.moredwr.validate()


def mandel_spec(cells=(80, 16), steps=5000, t_end=5.0e6) -> ProblemSpec:
    """2D consolidation benchmark with defaults at reference resolution."""
    return ProblemSpec(
        kind=ProblemKind.MANDEL,
        origin=(0.0, 0.0),
        extent=(100.0, 20.0),
        cells_per_axis=tuple(cells),
        t_end=t_end,
        num_steps=steps,
        material=MaterialParams(),
        traction_tag=BoundaryTag.TOP,
        traction_direction=(0.0, 1.0),
        goal_tag=BoundaryTag.BOTTOM,
        neumann_tags=(BoundaryTag.TOP, BoundaryTag.RIGHT),
        solver=LinearSolverConfig(method=SolverMethod.DIRECT),
        # the stopping check stays suppressed through the extra-enrichment
        # phase: the estimate underestimates severely before the dual bases
        # have seen the late-dual transient
        moredwr=MoreDwrConfig(extra_dual_iterations=5, min_iterations=5),
    )


def footing_spec(cells=(16, 16, 16), steps=5000, t_end=5.0e6) -> ProblemSpec:
    """3D footing benchmark; iterative solver by default (large systems)."""
    return ProblemSpec(
        kind=ProblemKind.FOOTING,
        origin=(-32.0, -32.0, 0.0),
        extent=(64.0, 64.0, 64.0),
        cells_per_axis=tuple(cells),
        t_end=t_end,
        num_steps=steps,
        material=MaterialParams(),
        traction_tag=BoundaryTag.COMPRESSION,
        traction_direction=(0.0, 0.0, 1.0),
        goal_tag=BoundaryTag.COMPRESSION,
        neumann_tags=(BoundaryTag.TOP, BoundaryTag.COMPRESSION, BoundaryTag.WALL),
        solver=LinearSolverConfig(method=SolverMethod.GMRES,
                                  preconditioner=Preconditioner.JACOBI),
        moredwr=MoreDwrConfig(extra_dual_iterations=8, min_iterations=8),
    )


def build_problem(spec: ProblemSpec) -> tuple[BlockOperators, TimeGrid]:
    """Mesh, tag, assemble and constrain one benchmark problem."""
    spec.validate()
    mesh = build_structured_mesh(spec.origin, spec.extent, spec.cells_per_axis)
    mesh = tag_boundaries(mesh, spec.kind)
    space = build_taylor_hood_space(mesh)
    ops = assemble_operators(
        space, spec.material, spec.kind,
        traction_tag=spec.traction_tag,
        traction_direction=np.asarray(spec.traction_direction),
        goal_tag=spec.goal_tag,
        neumann_tags=spec.neumann_tags,
    )
    grid = TimeGrid(t_end=spec.t_end, num_elements=spec.num_steps)
    return ops, grid


# ----------------------------------------------------------------------------
# key-value configuration
# ----------------------------------------------------------------------------

def _parse_cells(text: str) -> tuple[int, ...]:
    try:
        cells = tuple(int(part) for part in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse cell counts from {text!r}") from exc
    if len(cells) not in (2, 3):
        raise ConfigError(f"cells must have 2 or 3 axes, got {text!r}")
    return cells


CONFIG_KEYS: dict[str, type] = {
    "problem": str,
    "cells": str,
    "steps": int,
    "t_end": float,
    "tol": float,
    "solver.method": str,
    "solver.gmres_tolerance": float,
    "solver.gmres_restart": int,
    "solver.max_iterations": int,
    "solver.preconditioner": str,
    "moredwr.energy_primal_u": float,
    "moredwr.energy_primal_p": float,
    "moredwr.energy_dual_u": float,
    "moredwr.energy_dual_p": float,
    "moredwr.extra_dual_iterations": int,
    "moredwr.extra_dual_steps": int,
    "moredwr.max_iterations": int,
    "moredwr.min_iterations": int,
    "material.compressibility_modulus": float,
    "material.biot_alpha": float,
    "material.viscosity": float,
    "material.permeability": float,
    "material.density": float,
    "material.traction_magnitude": float,
    "material.lame_mu": float,
    "material.lame_lambda": float,
}


def read_config_file(path) -> dict:
    """Parse a flat key-value file; unknown keys are rejected with line info."""
    settings: dict = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                                  line=lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown key {key!r}", line=lineno)
            try:
                settings[key] = CONFIG_KEYS[key](value)
            except ValueError as exc:
                raise ConfigError(
                    f"cannot parse value {value!r} for key {key!r}: {exc}",
                    line=lineno) from exc
    return settings


def parse_config(path=None, overrides: dict | None = None) -> ProblemSpec:
    """Build a validated ProblemSpec from a config file and/or overrides.

    ``overrides`` uses the same keys as the file and wins over it.  The
    ``problem`` key selects the benchmark whose defaults fill everything
    not mentioned.
    """
    settings = read_config_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        settings[key] = CONFIG_KEYS[key](value)

    problem = str(settings.pop("problem", "mandel")).lower()
    if problem == ProblemKind.MANDEL.value:
        spec = mandel_spec()
    elif problem == ProblemKind.FOOTING.value:
        spec = footing_spec()
    else:
        raise ConfigError(f"unknown problem {problem!r}")

    if "cells" in settings:
        cells = _parse_cells(settings.pop("cells"))
        if len(cells) != len(spec.origin):
            raise ConfigError(
                f"{problem} needs {len(spec.origin)} cell axes, got {cells}")
        spec.cells_per_axis = cells
    if "steps" in settings:
        steps = settings.pop("steps")
        if steps < 0:
            raise ConfigError(f"steps must be >= 0, got {steps}")
        spec.num_steps = steps
    if "t_end" in settings:
        spec.t_end = settings.pop("t_end")
    if "tol" in settings:
        spec.moredwr = dataclasses.replace(spec.moredwr,
                                           tol_rel=settings.pop("tol"))

    solver_fields = {}
    if "solver.method" in settings:
        try:
            solver_fields["method"] = SolverMethod(settings.pop("solver.method").lower())
        except ValueError:
            raise ConfigError("solver.method must be 'direct' or 'gmres'")
    if "solver.preconditioner" in settings:
        try:
            solver_fields["preconditioner"] = Preconditioner(
                settings.pop("solver.preconditioner").lower())
        except ValueError:
            raise ConfigError("solver.preconditioner must be 'none' or 'jacobi'")
    for name in ("gmres_tolerance", "gmres_restart", "max_iterations"):
        key = f"solver.{name}"
        if key in settings:
            solver_fields[name] = settings.pop(key)
    if solver_fields:
        spec.solver = dataclasses.replace(spec.solver, **solver_fields)

    moredwr_fields = {}
    for name in ("energy_primal_u", "energy_primal_p", "energy_dual_u",
                 "energy_dual_p", "extra_dual_iterations", "extra_dual_steps",
                 "max_iterations", "min_iterations"):
        key = f"moredwr.{name}"
        if key in settings:
            moredwr_fields[name] = settings.pop(key)
    if moredwr_fields:
        spec.moredwr = dataclasses.replace(spec.moredwr, **moredwr_fields)

    material_fields = {}
    for fld in dataclasses.fields(MaterialParams):
        key = f"material.{fld.name}"
        if key in settings:
            material_fields[fld.name] = settings.pop(key)
    if material_fields:
        spec.material = dataclasses.replace(spec.material, **material_fields)

    if settings:
        raise ConfigError(f"unhandled keys: {sorted(settings)}")
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec
