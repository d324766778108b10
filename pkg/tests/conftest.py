# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""Small grids and fixtures shared by the test modules."""

from __future__ import annotations as _future_annotations

from collections.abc import Callable, Iterable

import numpy as np
import pytest

from bilevel.experiment.fixtures import discrete_source, manufactured_state
from bilevel.model import NonlinearitySpec, ParabolicModel
from bilevel.observe import ObservationSpec
from bilevel.problem import InverseProblem
from bilevel.reference import OracleCache, ReferenceSolver
from bilevel.spaces import DEFAULT_ACTIVE, Component, Parameter, SpaceTimeGrid, build_grid


@pytest.fixture
def grid() -> SpaceTimeGrid:
    return build_grid(9, 10, 1.0, 0.5)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def linear_model(grid: SpaceTimeGrid) -> ParabolicModel:
    return ParabolicModel(grid, NonlinearitySpec("zero"))


@pytest.fixture
def cubic_model(grid: SpaceTimeGrid) -> ParabolicModel:
    return ParabolicModel(grid, NonlinearitySpec("monotone_cubic"))


@pytest.fixture
def sin_model(grid: SpaceTimeGrid) -> ParabolicModel:
    return ParabolicModel(grid, NonlinearitySpec("lipschitz_sin", lipschitz=1.0))


@pytest.fixture
def truth() -> Callable[..., Parameter]:
    """theta whose exact discrete state is exp(-t) sin(pi x)."""

    def build(
        model: ParabolicModel,
        active: Iterable[Component] = DEFAULT_ACTIVE,
        c: float = 1.0,
    ) -> Parameter:
        grid = model.grid
        base = Parameter(
            a=np.ones(grid.nx),
            c=np.full(grid.nx, c),
            phi=np.zeros((grid.nt, grid.nx)),
            u0=np.zeros(grid.nx),
            active=frozenset(active),
        )
        state = manufactured_state(grid)
        return base.replace(phi=discrete_source(model, base, state), u0=state.initial.copy())

    return build


@pytest.fixture
def problem() -> Callable[..., InverseProblem]:
    def build(model: ParabolicModel, observation: ObservationSpec | None = None) -> InverseProblem:
        return InverseProblem(
            model,
            OracleCache(ReferenceSolver(model)),
            observation or ObservationSpec.full(model.grid),
        )

    return build
