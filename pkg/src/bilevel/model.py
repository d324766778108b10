# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
The reaction-diffusion model class

    u' - d/dx(a du/dx) + c u + Phi(u) = phi,    u(0) = u0,

as the residual map F(theta)(u) = (u' + f(theta, u); u0 - u(0)) on the grid,
with the stiffness and reaction terms placed at t_{n+1}.
"""

from __future__ import annotations as _future_annotations

from typing import Any

import dataclasses
import enum

import numpy as np

from bilevel.errors import ValidationError
from bilevel.spaces import (
    DEFAULT_A_MIN,
    Array,
    Component,
    DiscreteOperators,
    Parameter,
    ResidualPair,
    SpaceTimeGrid,
    StateField,
    SymmetricTridiagonal,
    assemble_operators,
    stiffness_coefficient_gradient,
    stiffness_operator,
    v_representer,
)


class NonlinearityKind(enum.StrEnum):
    ZERO = "zero"
    LIPSCHITZ_SIN = "lipschitz_sin"
    MONOTONE_CUBIC = "monotone_cubic"


@dataclasses.dataclass(frozen=True)
class NonlinearitySpec:
    kind: NonlinearityKind = NonlinearityKind.MONOTONE_CUBIC
    lipschitz: float = 1.0
    monotone: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NonlinearityKind(self.kind))
        if self.lipschitz < 0 or self.monotone < 0:
            raise ValidationError("nonlinearity constants must be non-negative")

    def value(self, u: Array) -> Array:
        match self.kind:
            case NonlinearityKind.ZERO:
                return np.zeros_like(u)
            case NonlinearityKind.LIPSCHITZ_SIN:
                return self.lipschitz * np.sin(u)
            case NonlinearityKind.MONOTONE_CUBIC:
                return u**3

    def derivative(self, u: Array) -> Array:
        match self.kind:
            case NonlinearityKind.ZERO:
                return np.zeros_like(u)
            case NonlinearityKind.LIPSCHITZ_SIN:
                return self.lipschitz * np.cos(u)
            case NonlinearityKind.MONOTONE_CUBIC:
                return 3.0 * u**2

    @property
    def is_linear(self) -> bool:
        return self.kind is NonlinearityKind.ZERO

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class ParabolicModel:
    grid: SpaceTimeGrid
    nonlinearity: NonlinearitySpec
    a_min: float
    ops: DiscreteOperators

    __slots__ = ("grid", "nonlinearity", "a_min", "ops")

    def __init__(
        self,
        grid: SpaceTimeGrid,
        nonlinearity: NonlinearitySpec,
        *,
        a_min: float = DEFAULT_A_MIN,
    ) -> None:
        self.grid = grid
        self.nonlinearity = nonlinearity
        self.a_min = a_min
        # The space operators (mass, D_U) do not depend on the unknown diffusion.
        self.ops = assemble_operators(grid, np.ones(grid.nx), a_min=min(a_min, 1.0))

    def operators(self, theta: Parameter) -> DiscreteOperators:
        return assemble_operators(self.grid, theta.a, a_min=self.a_min)

    def stiffness(self, theta: Parameter) -> SymmetricTridiagonal:
        return self.operators(theta).stiffness_a

    def _state(self, u: StateField | Array) -> Array:
        values = u.values if isinstance(u, StateField) else np.asarray(u, dtype=np.float64)
        if values.shape != self.grid.shape:
            raise ValidationError(f"state shape {values.shape} != grid shape {self.grid.shape}")
        return values

    def jacobian(self, theta: Parameter, state: Array) -> SymmetricTridiagonal:
        """f'_u at one time slice: K_a + M diag(c + Phi'(u))."""
        reaction = theta.c + self.nonlinearity.derivative(state)
        return self.stiffness(theta).shifted(self.grid.hx * reaction)

    def _apply_jacobians(self, theta: Parameter, states: Array, directions: Array) -> Array:
        stiffness = self.stiffness(theta)
        reaction = theta.c + self.nonlinearity.derivative(states)
        return stiffness.matvec(directions) + self.grid.hx * reaction * directions

    def apply_f(self, theta: Parameter, u: StateField | Array) -> Array:
        """f(theta, u^{n+1}) for every step, as calUstar functionals."""
        theta.check(self.grid)
        values = self._state(u)[1:]
        stiffness = self.stiffness(theta)
        reaction = theta.c * values + self.nonlinearity.value(values) - theta.phi
        return stiffness.matvec(values) + self.grid.hx * reaction

    def pde_residual(self, theta: Parameter, u: StateField | Array) -> ResidualPair:
        values = self._state(u)
        time_part = self.grid.hx * np.diff(values, axis=0) / self.grid.ht
        return ResidualPair(
            pde_part=time_part + self.apply_f(theta, values),
            init_part=theta.u0 - values[0],
        )

    def residual_norm(self, theta: Parameter, u: StateField | Array) -> float:
        return self.pde_residual(theta, u).norm(self.ops)

    def apply_fprime_u(
        self,
        theta: Parameter,
        u: StateField | Array,
        h: StateField | Array,
    ) -> Array:
        values = self._state(u)
        return self._apply_jacobians(theta, values[1:], self._state(h)[1:])

    def _check_direction(self, theta: Parameter, xi: Parameter) -> None:
        inactive = xi.active - theta.active
        if inactive:
            raise ValidationError(
                f"direction supported on inactive component(s) {sorted(inactive)}",
            )

    def apply_fprime_theta(
        self,
        theta: Parameter,
        u: StateField | Array,
        xi: Parameter,
    ) -> Array:
        self._check_direction(theta, xi)
        values = self._state(u)[1:]
        out = np.zeros_like(values)

        if Component.PHI in xi.active:
            out -= self.grid.hx * xi.phi
        if Component.C in xi.active:
            out += self.grid.hx * xi.c * values
        if Component.A in xi.active:
            out += stiffness_operator(self.grid, xi.a).matvec(values)

        return out

    def fprime_theta_dual(
        self,
        theta: Parameter,
        u: StateField | Array,
        z: Array,
    ) -> dict[Component, Array]:
        """
        Dual vectors of xi -> sum_n <f'_theta(u^{n+1}) xi, z^n>, one per active component.

        Only the first nt slices of z are paired; u0 does not enter f.
        """
        values = self._state(u)[1:]
        slices = z[:-1]
        dual: dict[Component, Array] = {}

        if Component.PHI in theta.active:
            dual[Component.PHI] = -self.grid.hx * slices
        if Component.C in theta.active:
            dual[Component.C] = self.grid.hx * np.sum(values * slices, axis=0)
        if Component.A in theta.active:
            dual[Component.A] = stiffness_coefficient_gradient(self.grid, slices, values)
        if Component.U0 in theta.active:
            dual[Component.U0] = np.zeros(self.grid.nx)

        return dual

    def apply_Fprime(  # noqa: N802
        self,
        theta: Parameter,
        u: StateField | Array,
        h: StateField | Array,
    ) -> ResidualPair:
        direction = self._state(h)
        time_part = self.grid.hx * np.diff(direction, axis=0) / self.grid.ht
        return ResidualPair(
            pde_part=time_part + self.apply_fprime_u(theta, u, direction),
            init_part=-direction[0],
        )

    def apply_Fprime_adjoint(  # noqa: N802
        self,
        theta: Parameter,
        u: StateField | Array,
        w: ResidualPair,
    ) -> StateField:
        values = self._state(u)
        grid = self.grid
        weighted = self.ops.riesz.solve(w.pde_part)

        dual = np.zeros(grid.shape)
        dual[1:] += grid.hx * weighted
        dual[1:] += grid.ht * self._apply_jacobians(theta, values[1:], weighted)
        dual[:-1] -= grid.hx * weighted
        dual[0] -= grid.hx * w.init_part

        return v_representer(self.ops, dual)


__all__ = ("NonlinearityKind", "NonlinearitySpec", "ParabolicModel")
