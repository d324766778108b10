# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from typing import Any

import dataclasses
import functools

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse

from bilevel.errors import ValidationError

Array = npt.NDArray[np.float64]

DEFAULT_A_MIN = 1e-3
MIN_NODES = 2
MIN_STEPS = 2


@dataclasses.dataclass(frozen=True)
class SpaceTimeGrid:
    """
    Uniform grid on (0, length) x [0, final_time].

    Only the nx interior nodes are unknowns; the homogeneous Dirichlet boundary
    nodes at 0 and length are implicit. Trajectories have nt + 1 time slices.
    """

    nx: int
    nt: int
    length: float
    final_time: float

    def __post_init__(self) -> None:
        problems = []
        if self.nx < MIN_NODES:
            problems.append(f"nx too small ({self.nx} < {MIN_NODES})")
        if self.nt < MIN_STEPS:
            problems.append(f"nt too small ({self.nt} < {MIN_STEPS})")
        if not self.length > 0:
            problems.append(f"length must be positive ({self.length})")
        if not self.final_time > 0:
            problems.append(f"final time must be positive ({self.final_time})")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def hx(self) -> float:
        return self.length / (self.nx + 1)

    @property
    def ht(self) -> float:
        return self.final_time / self.nt

    @property
    def nodes(self) -> Array:
        return self.hx * np.arange(1, self.nx + 1, dtype=np.float64)

    @property
    def times(self) -> Array:
        return self.ht * np.arange(self.nt + 1, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt + 1, self.nx)

    def refined(self, factor: int = 2) -> SpaceTimeGrid:
        """The grid with hx and ht divided by ``factor``."""
        return SpaceTimeGrid(
            factor * (self.nx + 1) - 1,
            factor * self.nt,
            self.length,
            self.final_time,
        )

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def build_grid(nx: int, nt: int, length: float, final_time: float) -> SpaceTimeGrid:
    return SpaceTimeGrid(int(nx), int(nt), float(length), float(final_time))


@dataclasses.dataclass(frozen=True, eq=False)
class SymmetricTridiagonal:
    main: Array
    off: Array

    @property
    def size(self) -> int:
        return int(self.main.size)

    def matvec(self, values: Array) -> Array:
        """Apply along the last axis; leading axes are batched."""
        out = self.main * values
        out[..., :-1] += self.off * values[..., 1:]
        out[..., 1:] += self.off * values[..., :-1]
        return out

    def shifted(self, diagonal: Array | float) -> SymmetricTridiagonal:
        return SymmetricTridiagonal(self.main + diagonal, self.off)

    def solve(self, rhs: Array) -> Array:
        """Solve along the last axis; leading axes are batched."""
        size = self.size
        bands = np.zeros((3, size))
        bands[0, 1:] = self.off
        bands[1] = self.main
        bands[2, :-1] = self.off

        columns = np.asarray(rhs, dtype=np.float64).reshape(-1, size).T
        solution = scipy.linalg.solve_banded((1, 1), bands, columns, check_finite=False)
        return np.ascontiguousarray(solution.T).reshape(np.shape(rhs))

    def eigh(self) -> tuple[Array, Array]:
        return scipy.linalg.eigh_tridiagonal(self.main, self.off)  # type: ignore[no-any-return]

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.diags(
            [self.off, self.main, self.off],
            [-1, 0, 1],
            format="csr",
        )


def _face_values(coefficient: Array) -> Array:
    # Boundary faces take the value of the adjacent interior node.
    faces = np.empty(coefficient.size + 1)
    faces[0] = coefficient[0]
    faces[-1] = coefficient[-1]
    faces[1:-1] = 0.5 * (coefficient[:-1] + coefficient[1:])
    return faces


def stiffness_operator(grid: SpaceTimeGrid, coefficient: Array) -> SymmetricTridiagonal:
    """
    Central-difference stiffness of -d/dx(coefficient d/dx) with Dirichlet ends.

    Linear in the coefficient and not checked for positivity, so it also
    realises the directional operator K_xi for a diffusion direction xi.
    """
    coefficient = np.asarray(coefficient, dtype=np.float64)
    if coefficient.shape != (grid.nx,):
        raise ValidationError(f"coefficient shape {coefficient.shape} != ({grid.nx},)")

    faces = _face_values(coefficient)
    return SymmetricTridiagonal(
        (faces[:-1] + faces[1:]) / grid.hx,
        -faces[1:-1] / grid.hx,
    )


def stiffness_coefficient_gradient(grid: SpaceTimeGrid, left: Array, right: Array) -> Array:
    """Gradient with respect to a of sum(left^T K_a right) over all leading axes."""
    pad = [(0, 0)] * (left.ndim - 1) + [(1, 1)]
    left_diff = np.diff(np.pad(left, pad), axis=-1)
    right_diff = np.diff(np.pad(right, pad), axis=-1)

    per_face = (left_diff * right_diff).reshape(-1, grid.nx + 1).sum(axis=0) / grid.hx

    gradient = np.zeros(grid.nx)
    gradient[0] += per_face[0]
    gradient[-1] += per_face[-1]
    gradient[:-1] += 0.5 * per_face[1:-1]
    gradient[1:] += 0.5 * per_face[1:-1]
    return gradient


@dataclasses.dataclass(frozen=True, eq=False)
class DiscreteOperators:
    grid: SpaceTimeGrid
    coefficient: Array
    stiffness_a: SymmetricTridiagonal
    riesz: SymmetricTridiagonal

    @property
    def mass_weight(self) -> float:
        return self.grid.hx

    @property
    def mass(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.diags(np.full(self.grid.nx, self.grid.hx), format="csr")

    @property
    def stiffness(self) -> scipy.sparse.csr_matrix:
        return self.stiffness_a.to_sparse()

    @property
    def riesz_DU(self) -> scipy.sparse.csr_matrix:  # noqa: N802 conventional operator name
        return self.riesz.to_sparse()

    @property
    def time_derivative(self) -> scipy.sparse.csr_matrix:
        """Map from nt + 1 slices to nt forward difference quotients."""
        nt = self.grid.nt
        return scipy.sparse.diags(
            [np.full(nt, -1.0), np.full(nt, 1.0)],
            [0, 1],
            shape=(nt, nt + 1),
            format="csr",
        ) / self.grid.ht

    @functools.cached_property
    def riesz_modes(self) -> tuple[Array, Array]:
        """Eigenpairs of D_U; the mass is a multiple of the identity so they diagonalise both."""
        return self.riesz.eigh()

    def apply_mass(self, values: Array) -> Array:
        return self.grid.hx * values

    def solve_mass(self, values: Array) -> Array:
        return values / self.grid.hx


def assemble_operators(
    grid: SpaceTimeGrid,
    a_field: Array,
    *,
    a_min: float = DEFAULT_A_MIN,
) -> DiscreteOperators:
    a_field = np.asarray(a_field, dtype=np.float64)
    if a_field.shape != (grid.nx,):
        raise ValidationError(f"a_field shape {a_field.shape} != ({grid.nx},)")
    if not a_min > 0:
        raise ValidationError(f"lower diffusion bound must be positive (a_min = {a_min})")
    if not np.all(np.isfinite(a_field)) or np.any(a_field < a_min):
        raise ValidationError(
            f"diffusion coefficient must satisfy a >= a_min > 0 (a_min = {a_min}, "
            f"min(a) = {np.min(a_field):.4g})",
        )

    unit = stiffness_operator(grid, np.ones(grid.nx))
    return DiscreteOperators(
        grid=grid,
        coefficient=a_field.copy(),
        stiffness_a=stiffness_operator(grid, a_field),
        riesz=unit.shifted(grid.hx),
    )


__all__ = (
    "DEFAULT_A_MIN",
    "Array",
    "DiscreteOperators",
    "SpaceTimeGrid",
    "SymmetricTridiagonal",
    "assemble_operators",
    "build_grid",
    "stiffness_coefficient_gradient",
    "stiffness_operator",
)
