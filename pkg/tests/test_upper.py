# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import dataclasses
import itertools
import math

import numpy as np
import pytest

from bilevel.diagnostics import (
    check_fejer,
    check_residual_monotone,
    estimate_operator_norm,
    lower_derivative_map,
    reduced_map,
)
from bilevel.errors import InfeasibleRuleError, UpperDivergenceError, ValidationError
from bilevel.lower import LowerStoppingConfig, LowerStoppingMode
from bilevel.observe import add_noise
from bilevel.problem import InverseProblem
from bilevel.spaces import Parameter, parameter_inner
from bilevel.upper import (
    ConstantsLedger,
    StopReason,
    StoppingRule,
    bilevel_landweber,
    build_ledger,
    gamma_hat_prior,
    gamma_posterior,
    posterior_stop_check,
    prior_stop_index,
    single_level_landweber,
)


@dataclasses.dataclass
class Setup:
    problem: InverseProblem
    theta_true: Parameter
    theta0: Parameter
    ledger: ConstantsLedger


@pytest.fixture
def linear_setup(linear_model, truth, problem) -> Setup:
    """Affine forward map with full observation and a unit-scaled step."""
    fixture = problem(linear_model)
    theta_true = truth(linear_model)
    theta0 = theta_true.replace(phi=0.5 * theta_true.phi, u0=0.5 * theta_true.u0)
    u0 = fixture.state(theta0)
    m_raw = estimate_operator_norm(reduced_map(fixture, theta0, u0), 50).bound()
    m_lower = estimate_operator_norm(lower_derivative_map(linear_model, theta0, u0), 50).bound()
    ledger = ConstantsLedger(tau=2.0, radius=10.0, step=1.0 / m_raw**2, m_lower=m_lower)
    return Setup(fixture, theta_true, theta0, ledger)


def _prior_ledger(
    ledger: ConstantsLedger,
    delta: float,
    index: int,
    radius0: float = 10.0,
) -> ConstantsLedger:
    """A ledger whose prior stopping index at ``delta`` is exactly ``index``."""
    ledger = ledger.replace(radius0=radius0)
    scaled = delta**2 * ledger.step
    bracket = ledger.k_upper**2 / ledger.mu_upper + 5 * ledger.m_upper**2
    return ledger.replace(radius=math.sqrt(radius0**2 + (index + 0.5) * scaled * bracket))


def _x_norm(problem: InverseProblem, theta: Parameter) -> float:
    return math.sqrt(parameter_inner(problem.ops, theta, theta))


def _epsilon_lower(gamma0: float, cap: int = 2000, eps_target: float = 1e-8) -> LowerStoppingConfig:
    return LowerStoppingConfig(
        mode=LowerStoppingMode.EPSILON_TARGET,
        K=cap,
        gamma0=gamma0,
        eps_target=eps_target,
    )


class TestPosteriorFactor:
    def test_limit_case(self):
        ledger = ConstantsLedger(m_upper=1.0, c_tc=0.1, k_upper=1.1)
        assert gamma_posterior(0, ledger, gamma_j=0.0, eps_split=0.0) == pytest.approx(2.75)

    def test_with_lower_tolerance(self):
        ledger = ConstantsLedger(m_upper=0.5, c_tc=0.05, k_upper=1.05, l_norm=1.0)
        value = gamma_posterior(0, ledger, gamma_j=0.01, eps_split=0.1)
        np.testing.assert_allclose(value, 1.522, atol=5e-4)

    def test_infeasible(self):
        ledger = ConstantsLedger(m_upper=1.0, c_tc=0.1, k_upper=1.1, l_norm=1.0)
        with pytest.raises(InfeasibleRuleError) as err:
            gamma_posterior(0, ledger, gamma_j=0.05, eps_split=0.1)
        assert err.value.denominator < 0

    def test_uses_ledger_decay(self):
        ledger = ConstantsLedger(gamma0=0.01, gamma_bar=0.01, q=2.0)
        assert gamma_posterior(3, ledger) == gamma_posterior(0, ledger, gamma_j=0.01 / 8)
        assert gamma_posterior(3, ledger) < gamma_posterior(0, ledger)

    def test_positive_gamma_needs_split(self):
        with pytest.raises(ValidationError, match="eps_split"):
            gamma_posterior(0, ConstantsLedger(), gamma_j=0.1, eps_split=0.0)


class TestPosteriorCheck:
    def test_at_threshold(self):
        assert posterior_stop_check(0.1, 0.1, 1.0)

    def test_above_threshold(self):
        assert not posterior_stop_check(0.2, 0.1, 1.0)

    def test_noise_free_never_stops_early(self):
        assert not posterior_stop_check(1e-12, 0.0, 3.0)

    def test_tau_must_be_positive(self):
        with pytest.raises(ValidationError, match="tau"):
            posterior_stop_check(0.1, 0.1, 0.0)


class TestPriorIndex:
    @pytest.fixture
    def ledger(self) -> ConstantsLedger:
        return ConstantsLedger(
            radius=1.0,
            radius0=0.5,
            k_upper=1.0,
            mu_upper=1.0,
            m_upper=0.5,
            l_norm=1.0,
            gamma_bar=0.0,
            rho=math.inf,
            step=1.0,
        )

    def test_worked_value(self, ledger):
        assert prior_stop_index(0.1, ledger) == 33

    def test_huge_noise(self, ledger):
        assert prior_stop_index(1e3, ledger) == 0

    def test_quadratic_in_noise(self, ledger):
        assert prior_stop_index(0.01, ledger) == 3333
        ratio = prior_stop_index(0.005, ledger) / prior_stop_index(0.01, ledger)
        assert ratio == pytest.approx(4.0, rel=1e-3)

    def test_drift_bound(self, ledger):
        bounded = ledger.replace(rho=0.5, d_bound=0.1, q=2.0)
        index = prior_stop_index(0.1, bounded)
        assert index < prior_stop_index(0.1, ledger)
        assert 0.1 * gamma_hat_prior(index, bounded) <= 0.5
        assert 0.1 * gamma_hat_prior(index + 1, bounded) > 0.5

    def test_needs_noise(self, ledger):
        with pytest.raises(ValidationError, match="positive noise"):
            prior_stop_index(0.0, ledger)


class TestNoisePropagation:
    def test_origin(self):
        assert gamma_hat_prior(0, ConstantsLedger()) == 0.0

    def test_worked_value(self):
        ledger = ConstantsLedger(m_upper=0.5, m_s=1.0, l_norm=1.0, d_bound=0.1, q=2.0)
        assert gamma_hat_prior(1, ledger) == pytest.approx(0.8)

    def test_monotone(self):
        ledger = ConstantsLedger(d_bound=0.05, q=1.3)
        values = [gamma_hat_prior(j, ledger) for j in range(30)]
        assert np.all(np.diff(values) > 0)

    def test_overflow_is_infinite(self):
        assert gamma_hat_prior(10**6, ConstantsLedger(d_bound=1.0)) == math.inf


class TestLedger:
    def test_defaults_valid(self):
        assert ConstantsLedger().validate().violations() == []

    def test_tau_below_factor(self):
        ledger = ConstantsLedger(tau=1.0)
        assert any("tau must exceed" in problem for problem in ledger.violations())
        with pytest.raises(ValidationError, match="constants ledger"):
            ledger.validate()

    def test_cone_constant_mismatch(self):
        problems = ConstantsLedger(c_tc=0.2).violations()
        assert any("k_upper must equal" in problem for problem in problems)

    def test_unknown_constant(self):
        with pytest.raises(ValidationError, match="unknown ledger constant"):
            ConstantsLedger().replace(nonsense=1.0)

    def test_json_drops_infinities(self):
        assert ConstantsLedger().json()["rho"] is None


class TestSingleLevel:
    def test_no_iterations(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        report = single_level_landweber(s.problem, s.theta0, data, s.ledger, max_iter=0)
        assert report.theta_final is s.theta0
        assert report.stop_reason is StopReason.MAX_ITER
        assert report.j_star == 0
        assert len(report.residual_history) == 1

    def test_exact_start(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        report = single_level_landweber(s.problem, s.theta_true, data, s.ledger, max_iter=10)
        assert report.residual_history[0] == pytest.approx(0.0, abs=1e-14)
        assert report.stop_reason is StopReason.POSTERIOR_DISCREPANCY
        assert report.j_star == 0

    def test_noise_free_fejer(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        report = single_level_landweber(
            s.problem,
            s.theta0,
            data,
            s.ledger,
            max_iter=30,
            theta_true=s.theta_true,
        )
        assert report.stop_reason is StopReason.MAX_ITER
        assert check_fejer(report.error_history, rtol=1e-9) == []
        assert check_residual_monotone(report.residual_history, rtol=1e-9) == []
        assert report.final_error < report.error_history[0]

    def test_discrepancy_stop(self, linear_setup):
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 0.05, seed=1)
        report = single_level_landweber(s.problem, s.theta0, data, s.ledger, max_iter=500)
        threshold = s.ledger.tau * data.delta
        assert report.stop_reason is StopReason.POSTERIOR_DISCREPANCY
        assert report.final_residual <= threshold
        assert all(residual > threshold for residual in report.residual_history[:-1])
        assert report.j_star == len(report.residual_history) - 1

    def test_prior_index(self, linear_setup):
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 0.05, seed=1)
        ledger = _prior_ledger(s.ledger, data.delta, 5)
        assert prior_stop_index(data.delta, ledger) == 5

        report = single_level_landweber(
            s.problem,
            s.theta0,
            data,
            ledger,
            max_iter=50,
            rule=StoppingRule.PRIOR,
        )
        assert report.stop_reason is StopReason.PRIOR_INDEX
        assert report.j_star == 5

    def test_oversized_step_reports_divergence(self, linear_setup):
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 0.05, seed=1)
        ledger = s.ledger.replace(step=1e6 * s.ledger.step)
        report = single_level_landweber(s.problem, s.theta0, data, ledger, max_iter=10)
        assert report.stop_reason is StopReason.DIVERGENCE
        assert report.j_star == 0

    def test_infinite_tau(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        with pytest.raises(InfeasibleRuleError):
            single_level_landweber(
                s.problem,
                s.theta0,
                data,
                s.ledger.replace(tau=math.inf),
                max_iter=5,
            )

    def test_trajectory_and_json(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        report = single_level_landweber(
            s.problem,
            s.theta0,
            data,
            s.ledger,
            max_iter=3,
            keep_trajectory=True,
        )
        assert len(report.trajectory) == 4
        assert report.trajectory[0] is s.theta0
        body = report.json()
        assert body["stop_reason"] == "max_iter"
        assert body["tau"] == 2.0
        assert len(body["residual_history"]) == 4


class TestBilevel:
    def test_exact_lower_level_matches_single_level(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        lower_cfg = LowerStoppingConfig(
            mode=LowerStoppingMode.EPSILON_TARGET,
            K=20_000,
            eps_target=1e-11,
        )
        single = single_level_landweber(
            s.problem,
            s.theta0,
            data,
            s.ledger,
            max_iter=5,
            theta_true=s.theta_true,
        )
        bilevel = bilevel_landweber(
            s.problem,
            s.theta0,
            data,
            s.ledger,
            lower_cfg,
            rule=StoppingRule.POSTERIOR,
            max_iter=5,
            theta_true=s.theta_true,
        )
        np.testing.assert_allclose(bilevel.residual_history, single.residual_history, rtol=1e-4)
        np.testing.assert_allclose(bilevel.error_history, single.error_history, rtol=1e-4)
        assert bilevel.total_lower_steps > 0

    def test_lower_steps_recorded(self, linear_setup):
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 0.05, seed=2)
        report = bilevel_landweber(
            s.problem,
            s.theta0,
            data,
            s.ledger,
            LowerStoppingConfig(K=30),
            rule=StoppingRule.POSTERIOR,
            max_iter=4,
        )
        assert len(report.lower_steps) == len(report.residual_history)
        assert all(0 <= steps <= 30 for steps in report.lower_steps)

    def test_lower_divergence_surfaces(self, linear_setup):
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 0.05, seed=1)
        with pytest.raises(UpperDivergenceError) as err:
            bilevel_landweber(
                s.problem,
                s.theta0,
                data,
                s.ledger.replace(m_lower=1e-4),
                LowerStoppingConfig(K=50),
                rule=StoppingRule.POSTERIOR,
                max_iter=5,
            )
        assert err.value.iteration == 0

    def test_prior_rule_needs_noise(self, linear_setup):
        s = linear_setup
        data = s.problem.forward(s.theta_true)
        with pytest.raises(ValidationError, match="positive noise"):
            bilevel_landweber(
                s.problem,
                s.theta0,
                data,
                s.ledger,
                LowerStoppingConfig(),
                max_iter=5,
            )

    def test_tight_tolerance_tracks_single_level(self, linear_setup):
        """With gamma0 = 1e-6 the first 20 iterates agree to 1e-4 of the truth's norm."""
        s = linear_setup
        data = add_noise(s.problem.forward(s.theta_true), 1e-3, seed=0)
        ledger = _prior_ledger(s.ledger, data.delta, 20)
        assert prior_stop_index(data.delta, ledger) == 20

        single = single_level_landweber(
            s.problem,
            s.theta0,
            data,
            ledger,
            max_iter=50,
            rule=StoppingRule.PRIOR,
            keep_trajectory=True,
        )
        bilevel = bilevel_landweber(
            s.problem,
            s.theta0,
            data,
            ledger,
            _epsilon_lower(1e-6, cap=20_000),
            rule=StoppingRule.PRIOR,
            max_iter=50,
            keep_trajectory=True,
        )
        assert single.j_star == bilevel.j_star == 20
        gaps = [
            _x_norm(s.problem, exact - inexact)
            for exact, inexact in zip(single.trajectory, bilevel.trajectory, strict=True)
        ]
        assert max(gaps) <= 1e-4 * _x_norm(s.problem, s.theta_true)


class TestNoisyBilevel:
    def test_error_shrinks_with_noise(self, linear_setup):
        s = linear_setup
        clean = s.problem.forward(s.theta_true)
        ledger = s.ledger.replace(tau=3.0)
        for seed in (0, 1):
            errors = []
            for delta in (1e-1, 1e-2, 1e-3, 1e-4):
                report = bilevel_landweber(
                    s.problem,
                    s.theta0,
                    add_noise(clean, delta, seed),
                    ledger,
                    _epsilon_lower(0.1, cap=200),
                    rule=StoppingRule.POSTERIOR,
                    max_iter=400,
                    theta_true=s.theta_true,
                )
                errors.append(report.final_error)
            assert all(later <= 1.1 * earlier for earlier, later in itertools.pairwise(errors))
            assert errors[-1] <= 0.25 * errors[0]

    def test_posterior_rule_is_fejer(self, linear_setup):
        s = linear_setup
        clean = s.problem.forward(s.theta_true)
        ledger = s.ledger.replace(tau=3.0)
        stops = []
        for seed in range(5):
            data = add_noise(clean, 0.01, seed)
            report = bilevel_landweber(
                s.problem,
                s.theta0,
                data,
                ledger,
                _epsilon_lower(0.1),
                rule=StoppingRule.POSTERIOR,
                max_iter=500,
                theta_true=s.theta_true,
            )
            threshold = ledger.tau * data.delta
            assert report.stop_reason is StopReason.POSTERIOR_DISCREPANCY
            assert all(residual > threshold for residual in report.residual_history[:-1])
            assert check_fejer(report.error_history, rtol=1e-9) == []
            stops.append(report.j_star)
        assert max(stops) - min(stops) <= 1

    def test_prior_rule_stays_in_ball(self, linear_setup):
        s = linear_setup
        clean = s.problem.forward(s.theta_true)
        radius0 = _x_norm(s.problem, s.theta0 - s.theta_true)
        for seed in range(3):
            data = add_noise(clean, 0.01, seed)
            ledger = _prior_ledger(s.ledger, data.delta, 15, radius0=radius0)
            report = bilevel_landweber(
                s.problem,
                s.theta0,
                data,
                ledger,
                _epsilon_lower(0.1),
                rule=StoppingRule.PRIOR,
                max_iter=50,
                theta_true=s.theta_true,
            )
            assert report.stop_reason is StopReason.PRIOR_INDEX
            assert report.j_star == 15
            assert max(report.error_history) <= ledger.radius

    def test_noise_propagates_linearly(self, linear_setup):
        """At a fixed index the gap to the noise-free iterate scales with delta."""
        s = linear_setup
        clean = s.problem.forward(s.theta_true)
        lower_cfg = _epsilon_lower(1e-3, cap=20_000, eps_target=1e-10)
        reference = bilevel_landweber(
            s.problem,
            s.theta0,
            clean,
            s.ledger,
            lower_cfg,
            rule=StoppingRule.POSTERIOR,
            max_iter=5,
        )
        assert reference.stop_reason is StopReason.MAX_ITER

        deltas = [1e-2, 1e-3, 1e-4]
        gaps = []
        for delta in deltas:
            data = add_noise(clean, delta, seed=0)
            report = bilevel_landweber(
                s.problem,
                s.theta0,
                data,
                _prior_ledger(s.ledger, delta, 5),
                lower_cfg,
                rule=StoppingRule.PRIOR,
                max_iter=50,
            )
            assert report.j_star == 5
            gaps.append(_x_norm(s.problem, report.theta_final - reference.theta_final))
        slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.1)


class TestBuildLedger:
    def test_probed_ledger_is_consistent(self, cubic_model, truth, problem):
        fixture = problem(cubic_model)
        theta_true = truth(cubic_model)
        theta0 = theta_true.replace(phi=0.5 * theta_true.phi)
        ledger = build_ledger(
            fixture,
            theta0,
            theta_true,
            LowerStoppingConfig(gamma0=0.01),
            delta=0.05,
            step_scale=0.5,
            n_pairs=10,
            power_iterations=10,
        )
        assert ledger.k_upper == pytest.approx(1.0 + ledger.c_tc)
        assert ledger.m_upper == pytest.approx(math.sqrt(0.5))
        assert ledger.delta_bar == 0.05
        assert ledger.radius0 < ledger.radius
        assert ledger.violations() == []

    def test_unknown_override(self, linear_model, truth, problem):
        theta_true = truth(linear_model)
        with pytest.raises(ValidationError, match="unknown ledger override"):
            build_ledger(
                problem(linear_model),
                theta_true.replace(u0=0.5 * theta_true.u0),
                theta_true,
                LowerStoppingConfig(),
                delta=0.05,
                overrides={"bogus": 1.0},
                n_pairs=10,
                power_iterations=10,
            )
