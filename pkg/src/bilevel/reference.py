# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import dataclasses
import logging

import lru
import numpy as np

from bilevel.errors import NewtonDivergenceError, ValidationError
from bilevel.model import ParabolicModel
from bilevel.spaces import Component, Parameter, StateField

_logger = logging.getLogger("bilevel").getChild("reference")


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-12
    newton_max: int = 25

    def __post_init__(self) -> None:
        if not self.newton_tol > 0:
            raise ValidationError(f"newton_tol must be positive ({self.newton_tol})")
        if self.newton_max < 1:
            raise ValidationError(f"newton_max must be at least 1 ({self.newton_max})")


class ReferenceSolver:
    """Backward Euler with a Newton solve per step: the oracle S(theta)."""

    model: ParabolicModel
    config: SolverConfig

    __slots__ = ("model", "config")

    def __init__(self, model: ParabolicModel, config: SolverConfig | None = None) -> None:
        self.model = model
        self.config = config or SolverConfig()

    def solve_forward(self, theta: Parameter) -> StateField:
        grid = self.model.grid
        theta.check(grid)
        stiffness = self.model.stiffness(theta)
        nonlinearity = self.model.nonlinearity
        hx, ht = grid.hx, grid.ht

        values = np.empty(grid.shape)
        values[0] = theta.u0

        for step in range(grid.nt):
            previous = values[step]
            constant = hx * previous / ht + hx * theta.phi[step]
            scale = max(1.0, float(np.max(np.abs(constant))))
            current = previous.copy()

            for iteration in range(self.config.newton_max + 1):
                residual = (
                    hx * current / ht
                    + stiffness.matvec(current)
                    + hx * (theta.c * current + nonlinearity.value(current))
                    - constant
                )
                size = float(np.max(np.abs(residual)))

                if not np.isfinite(size):
                    raise NewtonDivergenceError(step + 1, size, "(non-finite residual)")
                if size <= self.config.newton_tol * scale:
                    break
                if iteration == self.config.newton_max:
                    raise NewtonDivergenceError(step + 1, size, "(iteration cap reached)")

                jacobian = stiffness.shifted(
                    hx / ht + hx * (theta.c + nonlinearity.derivative(current)),
                )
                current = current - jacobian.solve(residual)

            values[step + 1] = current

        _logger.debug("Forward solve complete", extra={"steps": grid.nt})
        return StateField(values, grid)

    def solve_sensitivity(self, theta: Parameter, u: StateField, xi: Parameter) -> StateField:
        """The linearised equation p' + f'_u p = -f'_theta xi, p(0) = A xi."""
        grid = self.model.grid
        hx, ht = grid.hx, grid.ht
        source = self.model.apply_fprime_theta(theta, u, xi)

        values = np.zeros(grid.shape)
        if Component.U0 in xi.active:
            values[0] = xi.u0

        for step in range(grid.nt):
            jacobian = self.model.jacobian(theta, u.values[step + 1]).shifted(hx / ht)
            values[step + 1] = jacobian.solve(hx * values[step] / ht - source[step])

        return StateField(values, grid)


class OracleCache:
    """Memoised forward solves, keyed on the full parameter. Cached states are read-only."""

    _solver: ReferenceSolver
    _cache: lru.LRU[bytes, StateField]

    def __init__(self, solver: ReferenceSolver, size: int = 64) -> None:
        self._solver = solver
        self._cache = lru.LRU(size)

    @property
    def solver(self) -> ReferenceSolver:
        return self._solver

    def solve_forward(self, theta: Parameter) -> StateField:
        key = theta.key()
        cached = self._cache.get(key)
        if cached is not None:
            return cached

        state = self._solver.solve_forward(theta)
        state.values.setflags(write=False)
        self._cache[key] = state
        return state

    def solve_sensitivity(self, theta: Parameter, u: StateField, xi: Parameter) -> StateField:
        return self._solver.solve_sensitivity(theta, u, xi)


__all__ = ("OracleCache", "ReferenceSolver", "SolverConfig")
