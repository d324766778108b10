# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""Manufactured truths and initial guesses for experiments and tests."""

from __future__ import annotations as _future_annotations

import numpy as np

from bilevel.model import ParabolicModel
from bilevel.reference import ReferenceSolver
from bilevel.spaces import Array, Component, Parameter, SpaceTimeGrid, StateField

from .config import ExperimentConfig, SourceMode, TruthKind


def manufactured_state(grid: SpaceTimeGrid) -> StateField:
    """u(t, x) = exp(-t) sin(pi x / length) on the grid."""
    mode = np.sin(np.pi * grid.nodes / grid.length)
    return StateField(np.exp(-grid.times)[:, None] * mode[None, :], grid)


def discrete_source(model: ParabolicModel, theta: Parameter, state: StateField) -> Array:
    """The source for which ``state`` solves the discrete model exactly."""
    grid = model.grid
    values = state.values
    reaction = theta.c * values[1:] + model.nonlinearity.value(values[1:])
    return (
        np.diff(values, axis=0) / grid.ht
        + model.stiffness(theta).matvec(values[1:]) / grid.hx
        + reaction
    )


def analytic_source(model: ParabolicModel, theta: Parameter) -> Array:
    """The continuous source of the manufactured state for a spatially constant a."""
    grid = model.grid
    u = manufactured_state(grid).values[1:]
    wavenumber = np.pi / grid.length
    return (-1.0 + theta.a * wavenumber**2 + theta.c) * u + model.nonlinearity.value(u)


def truth_parameter(
    model: ParabolicModel,
    config: ExperimentConfig,
) -> tuple[Parameter, StateField]:
    """theta-dagger and its state; inactive components carry the true values."""
    grid = model.grid
    base = Parameter(
        a=config.model.a.copy(),
        c=config.model.c.copy(),
        phi=np.zeros((grid.nt, grid.nx)),
        u0=np.zeros(grid.nx),
        active=config.model.active,
    )

    if config.truth.kind is TruthKind.EXPLICIT:
        theta = base.replace(
            phi=np.tile(np.asarray(config.truth.phi, dtype=np.float64), (grid.nt, 1)),
            u0=np.asarray(config.truth.u0, dtype=np.float64),
        )
        return theta, ReferenceSolver(model, config.scheme.solver).solve_forward(theta)

    state = manufactured_state(grid)
    if config.truth.source is SourceMode.ANALYTIC:
        theta = base.replace(phi=analytic_source(model, base), u0=state.initial.copy())
        return theta, ReferenceSolver(model, config.scheme.solver).solve_forward(theta)

    return base.replace(phi=discrete_source(model, base, state), u0=state.initial.copy()), state


def initial_guess(theta_true: Parameter) -> Parameter:
    """Zero on the active components (one for a), the truth elsewhere."""
    changes = {
        name.value: (
            np.ones_like(theta_true.a)
            if name is Component.A
            else np.zeros_like(theta_true.component(name))
        )
        for name in theta_true.active
    }
    return theta_true.replace(**changes)


__all__ = (
    "analytic_source",
    "discrete_source",
    "initial_guess",
    "manufactured_state",
    "truth_parameter",
)
