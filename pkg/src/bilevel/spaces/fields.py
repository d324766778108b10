# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from collections.abc import Iterable
from typing import Any

import dataclasses
import enum

import numpy as np

from bilevel.errors import ValidationError
from bilevel.spaces.grid import Array, DiscreteOperators, SpaceTimeGrid


class Component(enum.StrEnum):
    A = "a"
    C = "c"
    PHI = "phi"
    U0 = "u0"

    @classmethod
    def _missing_(cls, value: object) -> Component | None:
        value = str(value).lower()
        for member in cls:
            if member.value == value:
                return member
        return None


DEFAULT_ACTIVE = frozenset({Component.PHI, Component.U0})


def parse_active(names: Iterable[str | Component]) -> frozenset[Component]:
    try:
        return frozenset(Component(name) for name in names)
    except ValueError as err:
        raise ValidationError(f"unknown parameter component in {list(names)!r}") from err


@dataclasses.dataclass(frozen=True, eq=False)
class Parameter:
    """
    The unknown (a, c, phi, u0).

    phi holds one nodal source field per time step; row n is the source at
    t_{n+1}. Components outside ``active`` are frozen: arithmetic keeps the
    left operand's values there, so an update theta - step * direction never
    moves them.
    """

    a: Array
    c: Array
    phi: Array
    u0: Array
    active: frozenset[Component] = DEFAULT_ACTIVE

    def __post_init__(self) -> None:
        nx = np.shape(self.u0)[0] if np.ndim(self.u0) == 1 else -1
        if nx < 1 or np.shape(self.a) != (nx,) or np.shape(self.c) != (nx,):
            raise ValidationError(
                f"a, c, u0 must share one spatial size: {np.shape(self.a)}, "
                f"{np.shape(self.c)}, {np.shape(self.u0)}",
            )
        if np.ndim(self.phi) != 2 or np.shape(self.phi)[1] != nx:  # noqa: PLR2004
            raise ValidationError(f"phi must be (nt, {nx}), got {np.shape(self.phi)}")

    @classmethod
    def zeros(
        cls,
        grid: SpaceTimeGrid,
        active: Iterable[Component] = DEFAULT_ACTIVE,
    ) -> Parameter:
        return cls(
            a=np.zeros(grid.nx),
            c=np.zeros(grid.nx),
            phi=np.zeros((grid.nt, grid.nx)),
            u0=np.zeros(grid.nx),
            active=frozenset(active),
        )

    def component(self, name: Component) -> Array:
        return getattr(self, name.value)  # type: ignore[no-any-return]

    def replace(self, **changes: Any) -> Parameter:
        return dataclasses.replace(self, **changes)

    def check(self, grid: SpaceTimeGrid) -> None:
        if self.u0.shape != (grid.nx,) or self.phi.shape != (grid.nt, grid.nx):
            raise ValidationError(
                f"parameter shapes {self.u0.shape}/{self.phi.shape} do not match grid "
                f"({grid.nx} nodes, {grid.nt} steps)",
            )

    def restricted(self) -> Parameter:
        """A copy with every inactive component zeroed; used for directions."""
        return Parameter(
            **{
                name.value: (
                    self.component(name).copy()
                    if name in self.active
                    else np.zeros_like(self.component(name))
                )
                for name in Component
            },
            active=self.active,
        )

    def project(self, a_min: float) -> Parameter:
        if Component.A not in self.active:
            return self
        return self.replace(a=np.maximum(self.a, a_min))

    def _combine(self, other: Parameter, sign: float) -> Parameter:
        if not isinstance(other, Parameter):
            return NotImplemented
        return Parameter(
            **{
                name.value: (
                    self.component(name) + sign * other.component(name)
                    if name in self.active
                    else self.component(name).copy()
                )
                for name in Component
            },
            active=self.active,
        )

    def __add__(self, other: Parameter) -> Parameter:
        return self._combine(other, 1.0)

    def __sub__(self, other: Parameter) -> Parameter:
        return self._combine(other, -1.0)

    def __mul__(self, scale: float) -> Parameter:
        return Parameter(
            **{
                name.value: (
                    scale * self.component(name)
                    if name in self.active
                    else self.component(name).copy()
                )
                for name in Component
            },
            active=self.active,
        )

    __rmul__ = __mul__

    def __neg__(self) -> Parameter:
        return self * -1.0

    def key(self) -> bytes:
        """Byte key identifying the full parameter, for caches."""
        parts = [self.component(name).tobytes() for name in Component]
        parts.append(",".join(sorted(self.active)).encode())
        return b"|".join(parts)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(self.component(name))) for name in Component)

    def json(self) -> dict[str, Any]:
        return {
            "active": sorted(self.active),
            **{name.value: self.component(name).tolist() for name in Component},
        }


@dataclasses.dataclass(frozen=True, eq=False)
class StateField:
    """A space-time trajectory: values[n, i] = u(t_n, x_i)."""

    values: Array
    grid: SpaceTimeGrid

    def __post_init__(self) -> None:
        if np.shape(self.values) != self.grid.shape:
            raise ValidationError(
                f"state shape {np.shape(self.values)} != grid shape {self.grid.shape}",
            )

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> StateField:
        return cls(np.zeros(grid.shape), grid)

    @classmethod
    def constant_in_time(cls, grid: SpaceTimeGrid, initial: Array) -> StateField:
        return cls(np.tile(np.asarray(initial, dtype=np.float64), (grid.nt + 1, 1)), grid)

    @property
    def initial(self) -> Array:
        return self.values[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other: StateField) -> StateField:
        return StateField(self.values + other.values, self.grid)

    def __sub__(self, other: StateField) -> StateField:
        return StateField(self.values - other.values, self.grid)

    def __mul__(self, scale: float) -> StateField:
        return StateField(scale * self.values, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> StateField:
        return StateField(-self.values, self.grid)


@dataclasses.dataclass(frozen=True, eq=False)
class ResidualPair:
    """An element of calUstar x H: the PDE part per step and the initial mismatch."""

    pde_part: Array
    init_part: Array

    def __post_init__(self) -> None:
        if np.ndim(self.pde_part) != 2 or np.shape(self.pde_part)[1:] != np.shape(  # noqa: PLR2004
            self.init_part,
        ):
            raise ValidationError(
                f"residual parts do not conform: {np.shape(self.pde_part)} vs "
                f"{np.shape(self.init_part)}",
            )

    @classmethod
    def zeros(cls, grid: SpaceTimeGrid) -> ResidualPair:
        return cls(np.zeros((grid.nt, grid.nx)), np.zeros(grid.nx))

    def inner(self, other: ResidualPair, ops: DiscreteOperators) -> float:
        grid = ops.grid
        pde = grid.ht * float(np.sum(self.pde_part * ops.riesz.solve(other.pde_part)))
        init = grid.hx * float(np.dot(self.init_part, other.init_part))
        return pde + init

    def norm(self, ops: DiscreteOperators) -> float:
        return float(np.sqrt(max(self.inner(self, ops), 0.0)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.pde_part)) and np.all(np.isfinite(self.init_part)))

    def __add__(self, other: ResidualPair) -> ResidualPair:
        return ResidualPair(self.pde_part + other.pde_part, self.init_part + other.init_part)

    def __sub__(self, other: ResidualPair) -> ResidualPair:
        return ResidualPair(self.pde_part - other.pde_part, self.init_part - other.init_part)

    def __mul__(self, scale: float) -> ResidualPair:
        return ResidualPair(scale * self.pde_part, scale * self.init_part)

    __rmul__ = __mul__


__all__ = (
    "DEFAULT_ACTIVE",
    "Component",
    "Parameter",
    "ResidualPair",
    "StateField",
    "parse_active",
)
