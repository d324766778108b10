# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
Inner products, Riesz maps and the space-time representer solve.

Representations: H and U elements are nodal vectors; Ustar elements are
functionals (so <g, v> = g . v). calU elements are (nt + 1, nx) nodal
trajectories, calUstar elements (nt, nx) functional trajectories whose row n
lives at t_{n+1}. calV is calU with the time derivative measured in calUstar.
"""

from __future__ import annotations as _future_annotations

from collections.abc import Mapping
from typing import Protocol

import enum
import logging

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from bilevel.errors import RepresenterError, ValidationError
from bilevel.spaces.fields import Component, Parameter, ResidualPair, StateField
from bilevel.spaces.grid import Array, DiscreteOperators

_logger = logging.getLogger("bilevel").getChild("spaces")

REPRESENTER_RTOL = 1e-10


class SpaceTag(enum.StrEnum):
    H = "H"
    U = "U"
    USTAR = "Ustar"
    CAL_U = "calU"
    CAL_USTAR = "calUstar"
    CAL_V = "calV"
    Y = "Y"
    X = "X"


class DataInner(Protocol):
    def inner(self, left: Array, right: Array) -> float: ...


def _values(element: object) -> Array:
    if isinstance(element, StateField):
        return element.values
    values = getattr(element, "values", element)
    return np.asarray(values, dtype=np.float64)


def _expect(tag: SpaceTag, array: Array, shape: tuple[int, ...]) -> None:
    if array.shape != shape:
        raise ValidationError(f"{tag} element has shape {array.shape}, expected {shape}")


def apply_riesz_DU(ops: DiscreteOperators, values: Array) -> Array:  # noqa: N802
    return ops.riesz.matvec(np.asarray(values, dtype=np.float64))


def apply_riesz_DU_inv(ops: DiscreteOperators, functional: Array) -> Array:  # noqa: N802
    return ops.riesz.solve(np.asarray(functional, dtype=np.float64))


def velocity(ops: DiscreteOperators, values: Array) -> Array:
    """Forward difference quotients (u^{n+1} - u^n) / ht, one row per step."""
    return np.diff(values, axis=0) / ops.grid.ht


def velocity_functional(ops: DiscreteOperators, values: Array) -> Array:
    """The calUstar representation of the time derivative."""
    return ops.apply_mass(velocity(ops, values))


def parameter_gram(ops: DiscreteOperators, component: Component, values: Array) -> Array:
    """Apply the X Gram matrix of one component, giving its dual vector."""
    grid = ops.grid
    match component:
        case Component.C | Component.U0:
            return ops.apply_mass(values)
        case Component.PHI:
            return grid.ht * grid.hx**2 * ops.riesz.solve(values)
        case Component.A:
            return ops.riesz.matvec(ops.riesz.matvec(values) / grid.hx)

    raise ValidationError(f"unknown parameter component {component!r}")


def parameter_inner(ops: DiscreteOperators, left: Parameter, right: Parameter) -> float:
    total = 0.0
    for name in sorted(left.active | right.active):
        total += float(
            np.sum(left.component(name) * parameter_gram(ops, name, right.component(name))),
        )
    return total


def inner(
    tag: SpaceTag | str,
    left: object,
    right: object,
    ops: DiscreteOperators,
    *,
    observation: DataInner | None = None,
) -> float:
    tag = SpaceTag(tag)
    grid = ops.grid

    if tag is SpaceTag.X:
        if not isinstance(left, Parameter) or not isinstance(right, Parameter):
            raise ValidationError("X inner product needs Parameter operands")
        return parameter_inner(ops, left, right)

    if tag is SpaceTag.Y:
        if observation is None:
            raise ValidationError("Y inner product needs the observation spec")
        return float(observation.inner(_values(left), _values(right)))

    x, y = _values(left), _values(right)
    if x.shape != y.shape:
        raise ValidationError(f"{tag} operands differ in shape: {x.shape} vs {y.shape}")

    match tag:
        case SpaceTag.H:
            _expect(tag, x, (grid.nx,))
            return grid.hx * float(np.dot(x, y))
        case SpaceTag.U:
            _expect(tag, x, (grid.nx,))
            return float(np.dot(x, ops.riesz.matvec(y)))
        case SpaceTag.USTAR:
            _expect(tag, x, (grid.nx,))
            return float(np.dot(x, ops.riesz.solve(y)))
        case SpaceTag.CAL_U:
            _expect(tag, x, grid.shape)
            return grid.ht * float(np.sum(x[1:] * ops.riesz.matvec(y[1:])))
        case SpaceTag.CAL_USTAR:
            _expect(tag, x, (grid.nt, grid.nx))
            return grid.ht * float(np.sum(x * ops.riesz.solve(y)))
        case SpaceTag.CAL_V:
            _expect(tag, x, grid.shape)
            return inner(SpaceTag.CAL_U, x, y, ops) + inner(
                SpaceTag.CAL_USTAR,
                velocity_functional(ops, x),
                velocity_functional(ops, y),
                ops,
            )

    raise ValidationError(f"unknown space tag {tag!r}")


def norm(
    tag: SpaceTag | str,
    element: object,
    ops: DiscreteOperators,
    *,
    observation: DataInner | None = None,
) -> float:
    if isinstance(element, ResidualPair):
        return element.norm(ops)
    return float(np.sqrt(max(inner(tag, element, element, ops, observation=observation), 0.0)))


def apply_v_gram(ops: DiscreteOperators, values: Array) -> Array:
    """The calV Gram matrix applied to a trajectory; returns the dual vector."""
    grid = ops.grid
    out = np.zeros_like(values)
    out[1:] = grid.ht * ops.riesz.matvec(values[1:])

    flux = grid.hx**2 / grid.ht * ops.riesz.solve(np.diff(values, axis=0))
    out[1:] += flux
    out[:-1] -= flux
    return out


def _modal_preconditioner(ops: DiscreteOperators) -> scipy.sparse.linalg.LinearOperator:
    # Mass is hx * I, so the eigenvectors of D_U block-diagonalise the calV Gram
    # into one tridiagonal system in time per spatial mode.
    grid = ops.grid
    eigenvalues, modes = ops.riesz_modes
    steps = grid.nt + 1

    bands = np.zeros((len(eigenvalues), 3, steps))
    for k, eigenvalue in enumerate(eigenvalues):
        coupling = grid.hx**2 / (grid.ht * eigenvalue)
        main = np.full(steps, 2.0 * coupling)
        main[0] = main[-1] = coupling
        main[1:] += grid.ht * eigenvalue
        bands[k, 0, 1:] = -coupling
        bands[k, 1] = main
        bands[k, 2, :-1] = -coupling

    def apply(flat: Array) -> Array:
        modal = flat.reshape(steps, grid.nx) @ modes
        for k in range(grid.nx):
            modal[:, k] = scipy.linalg.solve_banded((1, 1), bands[k], modal[:, k])
        return (modal @ modes.T).ravel()

    size = steps * grid.nx
    return scipy.sparse.linalg.LinearOperator((size, size), matvec=apply, dtype=np.float64)


def v_representer(ops: DiscreteOperators, rhs: Array) -> StateField:
    """
    Solve the calV Gram system for the representer of a dual vector.

    ``rhs`` is the assembled functional on trajectories, shape (nt + 1, nx);
    the result p satisfies inner(calV, p, h) = sum(rhs * h) for all h.
    """
    grid = ops.grid
    rhs = np.asarray(rhs, dtype=np.float64)
    _expect(SpaceTag.CAL_V, rhs, grid.shape)

    if not np.any(rhs):
        return StateField.zeros(grid)

    size = rhs.size
    gram = scipy.sparse.linalg.LinearOperator(
        (size, size),
        matvec=lambda flat: apply_v_gram(ops, flat.reshape(grid.shape)).ravel(),
        dtype=np.float64,
    )

    iterations = 0

    def count(_: Array) -> None:
        nonlocal iterations
        iterations += 1

    solution, info = scipy.sparse.linalg.cg(
        gram,
        rhs.ravel(),
        rtol=REPRESENTER_RTOL,
        atol=0.0,
        maxiter=10 * size,
        M=_modal_preconditioner(ops),
        callback=count,
    )

    if info != 0:
        residual = rhs.ravel() - gram.matvec(solution)
        relative = float(np.linalg.norm(residual) / np.linalg.norm(rhs))
        _logger.error(
            "Representer solve failed",
            extra={"iterations": iterations, "residual": relative},
        )
        raise RepresenterError(iterations, relative)

    return StateField(solution.reshape(grid.shape), grid)


def dual_norm_v(ops: DiscreteOperators, functional: Array) -> float:
    """calV* norm of a dual vector, through the representer."""
    representer = v_representer(ops, functional)
    return float(np.sqrt(max(np.sum(functional * representer.values), 0.0)))


def apply_I_X(  # noqa: N802
    ops: DiscreteOperators,
    dual: Mapping[Component, Array],
    active: frozenset[Component],
) -> Parameter:
    grid = ops.grid
    extra = set(dual) - set(active)
    if extra:
        raise ValidationError(f"dual supplied for inactive component(s) {sorted(extra)}")

    result = Parameter.zeros(grid, active)
    updates: dict[str, Array] = {}
    for name, values in dual.items():
        values = np.asarray(values, dtype=np.float64)
        expected = result.component(name).shape
        if values.shape != expected:
            raise ValidationError(f"dual {name} has shape {values.shape}, expected {expected}")

        match name:
            case Component.C | Component.U0:
                updates[name.value] = ops.solve_mass(values)
            case Component.PHI:
                updates[name.value] = ops.riesz.matvec(values) / (grid.ht * grid.hx**2)
            case Component.A:
                updates[name.value] = ops.riesz.solve(grid.hx * ops.riesz.solve(values))

    return result.replace(**updates)


__all__ = (
    "SpaceTag",
    "apply_I_X",
    "apply_riesz_DU",
    "apply_riesz_DU_inv",
    "apply_v_gram",
    "dual_norm_v",
    "inner",
    "norm",
    "parameter_gram",
    "parameter_inner",
    "v_representer",
    "velocity",
    "velocity_functional",
)
