# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from typing import TYPE_CHECKING

import dataclasses

import numpy as np

from bilevel.errors import ValidationError
from bilevel.spaces import (
    Array,
    Component,
    Parameter,
    SpaceTag,
    SpaceTimeGrid,
    StateField,
    apply_I_X,
    inner,
    parameter_inner,
)

if TYPE_CHECKING:
    from bilevel.model import ParabolicModel
    from bilevel.problem import Oracle


@dataclasses.dataclass(frozen=True, eq=False)
class AdjointField:
    values: Array
    grid: SpaceTimeGrid

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValidationError(f"adjoint shape {self.values.shape} != {self.grid.shape}")

    @property
    def initial(self) -> Array:
        return self.values[0]


def solve_adjoint(
    model: ParabolicModel,
    theta: Parameter,
    u_base: StateField,
    v: StateField,
) -> AdjointField:
    """
    Backward Euler in reversed time for -z' + f'_u(theta, u)* z = D_U v, z(T) = 0.

    Step n couples z^n to the coefficient and the source at t_{n+1}; f'_u is
    symmetric per slice so its transpose is itself.
    """
    grid = model.grid
    if v.values.shape != grid.shape or u_base.values.shape != grid.shape:
        raise ValidationError("adjoint inputs do not conform to the grid")

    hx, ht = grid.hx, grid.ht
    source = model.ops.riesz.matvec(v.values)
    values = np.zeros(grid.shape)

    for step in range(grid.nt - 1, -1, -1):
        jacobian = model.jacobian(theta, u_base.values[step + 1]).shifted(hx / ht)
        values[step] = jacobian.solve(hx * values[step + 1] / ht + source[step + 1])

    return AdjointField(values, grid)


def s_prime_adjoint(
    model: ParabolicModel,
    theta: Parameter,
    u_base: StateField,
    v: StateField,
) -> Parameter:
    """S'(theta)* v = I_X( -int f'_theta* z dt + A* z(0) ), on the active components."""
    grid = model.grid
    z = solve_adjoint(model, theta, u_base, v)

    dual = {
        name: -grid.ht * values
        for name, values in model.fprime_theta_dual(theta, u_base, z.values).items()
    }
    if Component.U0 in theta.active:
        dual[Component.U0] = model.ops.apply_mass(z.initial)

    return apply_I_X(model.ops, dual, theta.active)


def duality_pair(  # noqa: PLR0913 both sides need every input
    model: ParabolicModel,
    oracle: Oracle,
    theta: Parameter,
    u_base: StateField,
    xi: Parameter,
    v: StateField,
) -> tuple[float, float]:
    """<S' xi, v>_calU and <xi, S'* v>_X, evaluated independently."""
    sensitivity = oracle.solve_sensitivity(theta, u_base, xi)
    left = inner(SpaceTag.CAL_U, sensitivity, v, model.ops)
    right = parameter_inner(model.ops, xi, s_prime_adjoint(model, theta, u_base, v))
    return left, right


__all__ = ("AdjointField", "duality_pair", "s_prime_adjoint", "solve_adjoint")
