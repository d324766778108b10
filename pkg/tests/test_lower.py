# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import numpy as np
import pytest

from bilevel.diagnostics import (
    check_fejer,
    check_residual_monotone,
    estimate_operator_norm,
    fit_rate,
    lower_derivative_map,
    smooth_state,
)
from bilevel.errors import LowerDivergenceError, ValidationError
from bilevel.lower import (
    LowerReport,
    LowerStoppingConfig,
    LowerStoppingMode,
    calibrate_rate_const,
    eps_surrogate,
    lower_landweber,
    lower_step_size,
    lower_stop_index,
)
from bilevel.model import NonlinearitySpec, ParabolicModel
from bilevel.reference import ReferenceSolver
from bilevel.spaces import SpaceTag, SpaceTimeGrid, StateField, norm


@pytest.fixture(params=["zero", "lipschitz_sin", "monotone_cubic"])
def any_model(request, grid: SpaceTimeGrid) -> ParabolicModel:
    return ParabolicModel(grid, NonlinearitySpec(request.param))


class TestStopIndex:
    """K(j) = ceil((C q^j / (gamma0 delta))^(2 alpha))."""

    def test_worked_values(self):
        cfg = LowerStoppingConfig(q=1.1, gamma0=1.0, rate_const=1.0, alpha=1.0)
        assert lower_stop_index(0, 0.1, cfg) == 100
        assert lower_stop_index(2, 0.1, cfg) == 147

    def test_constant_without_decay(self):
        cfg = LowerStoppingConfig(q=1.0)
        assert len({lower_stop_index(j, 0.1, cfg) for j in range(10)}) == 1

    def test_grows_with_j(self):
        cfg = LowerStoppingConfig(q=1.5)
        indices = [lower_stop_index(j, 0.1, cfg) for j in range(6)]
        assert indices == sorted(indices)
        assert indices[-1] > indices[0]

    def test_noise_free_uses_cap(self):
        cfg = LowerStoppingConfig(K=321, q=1.1)
        assert lower_stop_index(4, 0.0, cfg) == 321

    def test_negative_noise(self):
        with pytest.raises(ValidationError, match="non-negative"):
            lower_stop_index(0, -0.1, LowerStoppingConfig())

    def test_alpha_doubles_exponent(self):
        cfg = LowerStoppingConfig(alpha=2.0)
        assert lower_stop_index(0, 0.1, cfg) == 10_000


class TestConfig:
    def test_defaults_valid(self):
        cfg = LowerStoppingConfig()
        assert cfg.mode is LowerStoppingMode.FIXED_K
        assert cfg.violations() == []

    def test_mode_from_string(self):
        assert LowerStoppingConfig(mode="EPSILON_TARGET").mode is LowerStoppingMode.EPSILON_TARGET

    def test_step_scale_bounds(self):
        with pytest.raises(ValidationError, match="step_scale"):
            LowerStoppingConfig(step_scale=2.0)

    def test_every_problem_reported(self):
        with pytest.raises(ValidationError, match="q must be.*gamma0 must be"):
            LowerStoppingConfig(q=0.5, gamma0=0.0)

    def test_report_length_checked(self, grid):
        with pytest.raises(ValidationError, match="one entry per iterate"):
            LowerReport(
                u_final=StateField.zeros(grid),
                residual_history=[1.0, 0.5],
                steps_taken=3,
                eps_estimate=0.5,
                step=1.0,
            )


class TestSurrogate:
    def test_scales_linearly_for_affine_residual(self, linear_model, truth, rng):
        theta = truth(linear_model)
        u_star = ReferenceSolver(linear_model).solve_forward(theta)
        h = smooth_state(linear_model.grid, rng)
        once = eps_surrogate(linear_model, theta, u_star + h, 1.0)
        twice = eps_surrogate(linear_model, theta, u_star + h * 2.0, 1.0)
        np.testing.assert_allclose(twice, 2 * once, rtol=1e-8)

    def test_c_coe_multiplies(self, cubic_model, truth, rng):
        theta = truth(cubic_model)
        u = smooth_state(cubic_model.grid, rng)
        np.testing.assert_allclose(
            eps_surrogate(cubic_model, theta, u, 3.0),
            3.0 * eps_surrogate(cubic_model, theta, u, 1.0),
            rtol=1e-14,
        )


class TestIteration:
    def test_target_met_at_start(self, cubic_model, truth):
        theta = truth(cubic_model)
        u_star = ReferenceSolver(cubic_model).solve_forward(theta)
        cfg = LowerStoppingConfig(mode=LowerStoppingMode.EPSILON_TARGET, eps_target=1e-8)
        report = lower_landweber(cubic_model, theta, u_star, cfg)
        assert report.steps_taken == 0
        assert report.residual_history == [report.final_residual]
        assert report.eps_estimate <= 1e-8

    def test_zero_cap(self, cubic_model, truth):
        theta = truth(cubic_model)
        report = lower_landweber(
            cubic_model,
            theta,
            StateField.zeros(cubic_model.grid),
            LowerStoppingConfig(),
            max_steps=0,
        )
        assert report.steps_taken == 0
        assert not np.any(report.u_final.values)

    def test_fixed_cap_respected(self, cubic_model, truth):
        theta = truth(cubic_model)
        report = lower_landweber(
            cubic_model,
            theta,
            StateField.zeros(cubic_model.grid),
            LowerStoppingConfig(K=25),
        )
        assert report.steps_taken == 25
        assert len(report.residual_history) == 26

    def test_residual_monotone_for_affine_residual(self, linear_model, truth):
        theta = truth(linear_model)
        u_star = ReferenceSolver(linear_model).solve_forward(theta)
        report = lower_landweber(
            linear_model,
            theta,
            StateField.zeros(linear_model.grid),
            LowerStoppingConfig(K=500),
            u_star=u_star,
        )
        floor = 1e-12 * report.residual_history[0]
        assert check_residual_monotone(report.residual_history, rtol=1e-9, atol=floor) == []
        assert report.error_history_v[-1] < 1e-2 * report.error_history_v[0]

    @pytest.mark.parametrize("c", [1.0, 2.0])
    def test_fejer_near_solution(self, any_model, truth, c):
        theta = truth(any_model, c=c)
        u_star = ReferenceSolver(any_model).solve_forward(theta)
        direction = smooth_state(any_model.grid, np.random.default_rng(int(10 * c)))
        size = norm(SpaceTag.CAL_V, direction, any_model.ops)
        report = lower_landweber(
            any_model,
            theta,
            u_star + direction * (0.05 / size),
            LowerStoppingConfig(K=500),
            u_star=u_star,
        )
        errors = report.error_history_v
        assert report.steps_taken == 500
        assert check_fejer(errors, rtol=1e-9, atol=1e-12 * errors[0]) == []
        assert errors[-1] < errors[0]

    def test_rate(self, any_model, truth):
        theta = truth(any_model)
        u_star = ReferenceSolver(any_model).solve_forward(theta)
        report = lower_landweber(
            any_model,
            theta,
            StateField.zeros(any_model.grid),
            LowerStoppingConfig(K=1000),
            u_star=u_star,
        )
        errors = report.error_history
        residuals = report.residual_history
        assert fit_rate(errors[10:], first_index=10, floor=1e-8 * errors[0]).slope <= -0.45
        assert fit_rate(residuals[10:], first_index=10, floor=1e-8 * residuals[0]).slope <= -0.45

    def test_step_keeps_norm_condition(self, any_model, truth):
        """mu M_r^2 < 2 against a Krylov-exhaustive norm of F'(u_init)."""
        theta = truth(any_model)
        u_init = StateField.zeros(any_model.grid)
        step = lower_step_size(any_model, theta, u_init, LowerStoppingConfig())
        exact = estimate_operator_norm(
            lower_derivative_map(any_model, theta, u_init),
            300,
            rtol=0.0,
        ).estimate
        assert step * exact**2 < 1.0

    def test_oversized_step_diverges(self, linear_model, truth):
        theta = truth(linear_model)
        u_init = StateField.zeros(linear_model.grid)
        cfg = LowerStoppingConfig(K=50)
        step = 100 * lower_step_size(linear_model, theta, u_init, cfg)
        with pytest.raises(LowerDivergenceError):
            lower_landweber(linear_model, theta, u_init, cfg, step=step)

    def test_negative_cap(self, cubic_model, truth):
        with pytest.raises(ValidationError, match="non-negative"):
            lower_landweber(
                cubic_model,
                truth(cubic_model),
                StateField.zeros(cubic_model.grid),
                LowerStoppingConfig(),
                max_steps=-1,
                step=1.0,
            )


class TestCalibration:
    def test_recovers_constant(self):
        k = np.arange(1, 200, dtype=np.float64)
        history = np.concatenate([[10.0], 3.0 / np.sqrt(k)])
        np.testing.assert_allclose(calibrate_rate_const(history, 1.0, 2.0), 6.0, rtol=1e-12)

    def test_needs_points(self):
        with pytest.raises(ValidationError, match="two residuals"):
            calibrate_rate_const([1.0, 0.0, 0.0], 1.0, 1.0)
