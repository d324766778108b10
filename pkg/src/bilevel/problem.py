# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from typing import Protocol

import dataclasses

from bilevel.adjoint import s_prime_adjoint
from bilevel.errors import ValidationError
from bilevel.model import ParabolicModel
from bilevel.observe import ObservationData, ObservationSpec, observe, observe_adjoint
from bilevel.spaces import DiscreteOperators, Parameter, SpaceTimeGrid, StateField


class Oracle(Protocol):
    def solve_forward(self, theta: Parameter) -> StateField: ...

    def solve_sensitivity(self, theta: Parameter, u: StateField, xi: Parameter) -> StateField: ...


@dataclasses.dataclass(frozen=True, eq=False)
class InverseProblem:
    """The reduced map G = L o S with its derivative and adjoint."""

    model: ParabolicModel
    oracle: Oracle
    observation: ObservationSpec

    def __post_init__(self) -> None:
        if self.observation.grid != self.model.grid:
            raise ValidationError("observation and model grids differ")
        if not self.observation.has_adjoint:
            raise ValidationError("observations at t = 0 cannot drive the inverse problem")

    @property
    def grid(self) -> SpaceTimeGrid:
        return self.model.grid

    @property
    def ops(self) -> DiscreteOperators:
        return self.model.ops

    def state(self, theta: Parameter) -> StateField:
        return self.oracle.solve_forward(theta)

    def forward(self, theta: Parameter) -> ObservationData:
        return observe(self.observation, self.state(theta))

    def apply_derivative(self, theta: Parameter, u: StateField, xi: Parameter) -> ObservationData:
        return observe(self.observation, self.oracle.solve_sensitivity(theta, u, xi))

    def apply_derivative_adjoint(
        self,
        theta: Parameter,
        u: StateField,
        r: ObservationData,
    ) -> Parameter:
        return s_prime_adjoint(
            self.model,
            theta,
            u,
            observe_adjoint(self.observation, self.ops, r),
        )

    def misfit(self, u: StateField, data: ObservationData) -> ObservationData:
        return observe(self.observation, u) - data

    def gradient(
        self,
        theta: Parameter,
        u: StateField,
        data: ObservationData,
    ) -> tuple[Parameter, ObservationData]:
        """The Landweber direction S'(theta)* L* (L u - y) at a given state, and the misfit."""
        residual = self.misfit(u, data)
        return self.apply_derivative_adjoint(theta, u, residual), residual


__all__ = ("InverseProblem", "Oracle")
