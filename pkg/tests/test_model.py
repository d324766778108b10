# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import numpy as np
import pytest

from bilevel.diagnostics import smooth_parameter, smooth_state
from bilevel.errors import ValidationError
from bilevel.experiment.fixtures import analytic_source, manufactured_state
from bilevel.model import NonlinearitySpec, ParabolicModel
from bilevel.spaces import Component, Parameter, ResidualPair, SpaceTag, StateField, inner


def _finite_difference_order(remainder, eps=(1e-2, 1e-3)):
    coarse, fine = (remainder(step) for step in eps)
    return np.log10(coarse / fine) / np.log10(eps[0] / eps[1])


class TestNonlinearity:
    def test_derivatives(self):
        u = np.linspace(-2.0, 2.0, 41)
        for kind in ("zero", "lipschitz_sin", "monotone_cubic"):
            law = NonlinearitySpec(kind, lipschitz=2.0)
            step = 1e-6
            numerical = (law.value(u + step) - law.value(u - step)) / (2 * step)
            np.testing.assert_allclose(law.derivative(u), numerical, atol=1e-6)

    def test_negative_constants_rejected(self):
        with pytest.raises(ValidationError):
            NonlinearitySpec("lipschitz_sin", lipschitz=-1.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="quartic"):
            NonlinearitySpec("quartic")


class TestResidual:
    def test_zero_problem(self, linear_model, grid):
        theta = Parameter.zeros(grid).replace(a=np.ones(grid.nx))
        residual = linear_model.pde_residual(theta, StateField.zeros(grid))
        assert not np.any(residual.pde_part)
        assert not np.any(residual.init_part)

    def test_initial_mismatch_is_linear(self, cubic_model, truth, rng):
        theta = truth(cubic_model)
        g = rng.standard_normal(cubic_model.grid.nx)
        state = manufactured_state(cubic_model.grid)
        moved = cubic_model.pde_residual(theta.replace(u0=theta.u0 + g), state)
        base = cubic_model.pde_residual(theta, state)
        np.testing.assert_allclose(moved.init_part - base.init_part, g, atol=1e-14)

    def test_discrete_manufactured_solution(self, cubic_model, truth):
        theta = truth(cubic_model)
        state = manufactured_state(cubic_model.grid)
        assert cubic_model.residual_norm(theta, state) < 1e-12

    def test_analytic_source_converges(self, grid):
        """With the continuous source the residual is a consistency error, O(hx^2 + ht)."""
        sizes = []
        for level in (grid, grid.refined()):
            model = ParabolicModel(level, NonlinearitySpec("monotone_cubic"))
            base = Parameter(
                a=np.ones(level.nx),
                c=np.ones(level.nx),
                phi=np.zeros((level.nt, level.nx)),
                u0=np.zeros(level.nx),
            )
            state = manufactured_state(level)
            theta = base.replace(phi=analytic_source(model, base), u0=state.initial.copy())
            sizes.append(model.residual_norm(theta, state))

        assert sizes[0] > 0
        assert sizes[1] < 0.7 * sizes[0]

    def test_state_shape_checked(self, cubic_model, truth):
        with pytest.raises(ValidationError, match="state shape"):
            cubic_model.pde_residual(truth(cubic_model), np.zeros((3, 3)))


class TestDerivatives:
    def test_linear_jacobian_is_stiffness(self, grid, rng):
        model = ParabolicModel(grid, NonlinearitySpec("zero"))
        theta = Parameter.zeros(grid).replace(a=1.0 + rng.uniform(size=grid.nx))
        u = smooth_state(grid, rng)
        h = smooth_state(grid, rng)
        np.testing.assert_allclose(
            model.apply_fprime_u(theta, u, h),
            model.stiffness(theta).matvec(h.values[1:]),
            atol=1e-12,
        )

    def test_state_derivative_second_order(self, cubic_model, truth, rng):
        theta = truth(cubic_model)
        u = smooth_state(cubic_model.grid, rng)
        h = smooth_state(cubic_model.grid, rng)
        base = cubic_model.apply_f(theta, u)
        slope = cubic_model.apply_fprime_u(theta, u, h)

        def remainder(step):
            return np.linalg.norm(cubic_model.apply_f(theta, u + h * step) - base - step * slope)

        assert _finite_difference_order(remainder) >= 1.9

    def test_zero_direction(self, cubic_model, truth, rng):
        theta = truth(cubic_model)
        u = smooth_state(cubic_model.grid, rng)
        assert not np.any(cubic_model.apply_fprime_u(theta, u, StateField.zeros(cubic_model.grid)))

    def test_source_direction(self, cubic_model, truth, rng):
        grid = cubic_model.grid
        theta = truth(cubic_model, active={Component.PHI})
        xi = Parameter.zeros(grid, {Component.PHI}).replace(
            phi=rng.standard_normal((grid.nt, grid.nx)),
        )
        out = cubic_model.apply_fprime_theta(theta, smooth_state(grid, rng), xi)
        np.testing.assert_allclose(out, -grid.hx * xi.phi)

    @pytest.mark.parametrize("name", [Component.A, Component.C])
    def test_coefficient_directions_are_exact(self, cubic_model, truth, rng, name):
        """f is affine in a and c, so the directional derivative has no remainder."""
        grid = cubic_model.grid
        theta = truth(cubic_model, active={name})
        xi = smooth_parameter(grid, frozenset({name}), rng) * 0.1
        u = smooth_state(grid, rng)
        step = 1e-3
        difference = cubic_model.apply_f(theta + xi * step, u) - cubic_model.apply_f(theta, u)
        np.testing.assert_allclose(
            difference,
            step * cubic_model.apply_fprime_theta(theta, u, xi),
            rtol=1e-8,
            atol=1e-12,
        )

    def test_inactive_direction_rejected(self, cubic_model, truth, rng):
        grid = cubic_model.grid
        theta = truth(cubic_model, active={Component.PHI})
        xi = Parameter.zeros(grid, {Component.C})
        with pytest.raises(ValidationError, match="inactive"):
            cubic_model.apply_fprime_theta(theta, smooth_state(grid, rng), xi)


class TestResidualDerivative:
    def test_adjoint_identity(self, cubic_model, truth, rng):
        grid = cubic_model.grid
        ops = cubic_model.ops
        theta = truth(cubic_model)
        for _ in range(20):
            u = smooth_state(grid, rng)
            h = smooth_state(grid, rng)
            image = cubic_model.apply_Fprime(theta, u, h)
            w = image + ResidualPair(
                rng.standard_normal((grid.nt, grid.nx)),
                rng.standard_normal(grid.nx),
            ) * 0.1
            left = image.inner(w, ops)
            right = inner(SpaceTag.CAL_V, h, cubic_model.apply_Fprime_adjoint(theta, u, w), ops)
            np.testing.assert_allclose(left, right, rtol=1e-8)

    def test_zero_pair(self, cubic_model, truth, rng):
        grid = cubic_model.grid
        out = cubic_model.apply_Fprime_adjoint(
            truth(cubic_model),
            smooth_state(grid, rng),
            ResidualPair.zeros(grid),
        )
        assert not np.any(out.values)

    def test_linear_adjoint_ignores_state(self, grid, rng):
        model = ParabolicModel(grid, NonlinearitySpec("zero"))
        theta = Parameter.zeros(grid).replace(a=np.ones(grid.nx))
        w = ResidualPair(rng.standard_normal((grid.nt, grid.nx)), rng.standard_normal(grid.nx))
        first = model.apply_Fprime_adjoint(theta, smooth_state(grid, rng), w)
        second = model.apply_Fprime_adjoint(theta, smooth_state(grid, rng), w)
        np.testing.assert_allclose(first.values, second.values, atol=1e-14)

    def test_initial_part(self, cubic_model, truth, rng):
        grid = cubic_model.grid
        h = smooth_state(grid, rng)
        image = cubic_model.apply_Fprime(truth(cubic_model), smooth_state(grid, rng), h)
        np.testing.assert_allclose(image.init_part, -h.values[0])
