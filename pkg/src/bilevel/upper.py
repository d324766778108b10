# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
Upper-level Landweber drivers and their stopping rules.

Every constant in the ledger refers to the step-scaled map sqrt(step) G, so the
unit-step convergence conditions apply to theta <- theta - step G'* (G - y).
"""

from __future__ import annotations as _future_annotations

from collections.abc import Mapping
from typing import Any

import dataclasses
import enum
import logging
import math

import numpy as np

from bilevel.adjoint import solve_adjoint
from bilevel.diagnostics import (
    estimate_operator_norm,
    lower_derivative_map,
    observation_map,
    probe_coercivity,
    probe_PL,
    probe_tangential_cone,
    reduced_map,
    sensitivity_map,
    smooth_state,
    verify_error_lemmas,
)
from bilevel.errors import (
    InfeasibleRuleError,
    LowerDivergenceError,
    UpperDivergenceError,
    ValidationError,
)
from bilevel.lower import LowerStoppingConfig, lower_landweber, lower_stop_index
from bilevel.observe import ObservationData
from bilevel.problem import InverseProblem
from bilevel.spaces import Parameter, SpaceTag, StateField, norm, parameter_inner

_logger = logging.getLogger("bilevel").getChild("upper")

EPS_SPLIT = math.sqrt(2.0) - 1.0
TAU_FACTOR = 1.2
C_TC_FLOOR = 0.01
DIVERGENCE_RADII = 10.0


@dataclasses.dataclass(frozen=True)
class ConstantsLedger:
    """
    Constants of the convergence analysis.

    ``m_upper``/``mu_upper``/``k_upper`` bound G' and its tangential cone,
    ``m_lower``/``mu_lower``/``c_coe`` play the same roles for F, and
    ``d_bound`` collects the adjoint-error terms of the noise-propagation bound.
    """

    m_s: float = 1.0
    m_upper: float = 0.5
    mu_upper: float = 1.55
    k_upper: float = 1.1
    c_tc: float = 0.1
    tau: float = 3.0
    radius: float = 1.0
    radius0: float = 0.5
    l_norm: float = 1.0
    m_lower: float = 1.0
    mu_lower: float = 1.0
    c_coe: float = 1.0
    alpha: float = 1.0
    c_fu: float = 1.0
    l_grad_f: float = 0.0
    c_grad_fa: float = 0.0
    d_bound: float = 0.0
    q: float = 1.0
    gamma0: float = 0.0
    rho: float = math.inf
    eps_split: float = EPS_SPLIT
    gamma_bar: float = 0.0
    delta_bar: float = 0.0
    step: float = 1.0

    def gamma(self, j: int) -> float:
        return self.gamma0 / self.q**j

    def violations(self) -> list[str]:
        problems = []
        if not 0 < self.c_tc < 1:
            problems.append(f"c_tc must lie in (0, 1) ({self.c_tc:.4g})")
        if not math.isclose(self.k_upper, 1 + self.c_tc, rel_tol=1e-9):
            problems.append(f"k_upper must equal 1 + c_tc ({self.k_upper:.4g})")
        if not self.mu_upper > 0:
            problems.append(f"mu_upper must be positive ({self.mu_upper:.4g})")
        if not self.m_upper**2 + self.mu_upper < 2:  # noqa: PLR2004
            problems.append(
                f"m_upper^2 + mu_upper must be < 2 ({self.m_upper**2 + self.mu_upper:.4g})",
            )
        if not 0 <= self.radius0 < self.radius:
            problems.append(f"need 0 <= radius0 < radius ({self.radius0:.4g}, {self.radius:.4g})")
        if self.q < 1:
            problems.append(f"q must be >= 1 ({self.q})")
        if self.gamma0 < 0 or self.gamma_bar < self.gamma0:
            problems.append(f"need 0 <= gamma0 <= gamma_bar ({self.gamma0}, {self.gamma_bar})")
        if not self.step > 0:
            problems.append(f"step must be positive ({self.step})")
        if not self.rho > 0:
            problems.append(f"rho must be positive ({self.rho})")
        if math.isfinite(self.tau):
            try:
                bound = gamma_posterior(0, self)
            except InfeasibleRuleError as err:
                problems.append(str(err))
            else:
                if not self.tau > bound:
                    problems.append(f"tau must exceed Gamma(0) ({self.tau:.4g} <= {bound:.4g})")
        return problems

    def validate(self) -> ConstantsLedger:
        problems = self.violations()
        if problems:
            raise ValidationError("constants ledger: " + "; ".join(problems))
        return self

    def replace(self, **changes: float) -> ConstantsLedger:
        unknown = set(changes) - {field.name for field in dataclasses.fields(self)}
        if unknown:
            raise ValidationError(f"unknown ledger constant(s) {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def json(self) -> dict[str, float | None]:
        return {
            name: value if math.isfinite(value) else None
            for name, value in dataclasses.asdict(self).items()
        }


class StoppingRule(enum.StrEnum):
    POSTERIOR = "posterior"
    PRIOR = "prior"


class StopReason(enum.StrEnum):
    POSTERIOR_DISCREPANCY = "posterior_discrepancy"
    PRIOR_INDEX = "prior_index"
    MAX_ITER = "max_iter"
    DIVERGENCE = "divergence"


@dataclasses.dataclass(eq=False)
class UpperReport:
    theta_final: Parameter
    delta: float
    tau: float
    theta_norm_history: list[float] = dataclasses.field(default_factory=list)
    residual_history: list[float] = dataclasses.field(default_factory=list)
    lower_steps: list[int] = dataclasses.field(default_factory=list)
    lower_residuals: list[float] = dataclasses.field(default_factory=list)
    error_history: list[float] | None = None
    stop_reason: StopReason = StopReason.MAX_ITER
    j_star: int = 0
    trajectory: list[Parameter] | None = None

    @property
    def total_lower_steps(self) -> int:
        return sum(self.lower_steps)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    @property
    def final_error(self) -> float | None:
        return None if not self.error_history else self.error_history[-1]

    def json(self) -> dict[str, Any]:
        return {
            "stop_reason": self.stop_reason.value,
            "j_star": self.j_star,
            "delta": self.delta,
            "tau": self.tau if math.isfinite(self.tau) else None,
            "theta_norm_history": self.theta_norm_history,
            "residual_history": self.residual_history,
            "error_history": self.error_history,
            "lower_steps": self.lower_steps,
            "lower_residuals": self.lower_residuals,
            "theta_final": self.theta_final.json(),
        }


# Stopping rules


def gamma_posterior(
    j: int,
    ledger: ConstantsLedger,
    gamma_j: float | None = None,
    eps_split: float | None = None,
) -> float:
    """The discrepancy factor Gamma(j); raises InfeasibleRuleError when no factor exists."""
    gamma = ledger.gamma(j) if gamma_j is None else gamma_j
    eps = ledger.eps_split if eps_split is None else eps_split
    if gamma < 0 or eps < 0:
        raise ValidationError(f"gamma and eps_split must be non-negative ({gamma}, {eps})")

    m_r, l_norm, k_r = ledger.m_upper, ledger.l_norm, ledger.k_upper
    numerator = 2.0 * (1.0 + ledger.c_tc + l_norm * k_r * gamma)
    denominator = 2.0 - (1.0 + eps) * m_r**2 - 2.0 * ledger.c_tc

    if gamma > 0:
        if eps == 0:
            raise ValidationError("eps_split must be positive when gamma > 0")
        denominator -= l_norm * (2.0 * k_r * gamma + m_r**2 * l_norm * gamma**2) * (1 + 1 / eps)

    if denominator <= 0:
        raise InfeasibleRuleError(denominator)
    return numerator / denominator


def posterior_stop_check(residual_norm: float, delta: float, tau: float) -> bool:
    if not tau > 0:
        raise ValidationError(f"tau must be positive ({tau})")
    return residual_norm <= tau * delta


def gamma_hat_prior(j: int, ledger: ConstantsLedger) -> float:
    """Noise-propagation factor: ||theta^j - theta~^{delta,j}|| <= delta Gamma^(j)."""
    if ledger.q < 1:
        raise ValidationError(f"q must be >= 1 ({ledger.q})")
    if j < 0:
        raise ValidationError(f"upper index must be non-negative ({j})")

    m_r = ledger.m_upper
    growth = m_r**2 + (1.0 + ledger.m_s) * ledger.d_bound
    base = 1.0 + growth
    ratio = 1.0 / ledger.q

    try:
        power = base**j
    except OverflowError:
        return math.inf

    drift = m_r * j if growth == 0 else m_r * (power - 1.0) / growth

    if math.isclose(base, ratio, rel_tol=1e-12):
        geometric = j * ratio ** (j - 1)
    else:
        geometric = (power - ratio**j) / (base - ratio)

    return drift + (m_r * ledger.l_norm + ledger.d_bound) * ratio * geometric


def prior_stop_index(delta: float, ledger: ConstantsLedger) -> int:
    """
    j*(delta): the largest index that keeps the iterates inside the radius-R
    ball and the predicted noise drift delta Gamma^(j) below rho.
    """
    if not delta > 0:
        raise ValidationError(f"the prior rule needs a positive noise level ({delta})")
    if not ledger.radius0 < ledger.radius:
        raise ValidationError("the prior rule needs radius0 < radius")

    scaled = delta * math.sqrt(ledger.step)
    k_r, mu_r, m_r = ledger.k_upper, ledger.mu_upper, ledger.m_upper
    l_gamma = (ledger.l_norm * ledger.gamma_bar) ** 2
    bracket = k_r**2 / mu_r + 5 * m_r**2 + 2 * (k_r**2 / mu_r) * l_gamma + 3.5 * m_r**2 * l_gamma
    j_budget = math.floor((ledger.radius**2 - ledger.radius0**2) / (scaled**2 * bracket))

    if math.isinf(ledger.rho):
        j_drift = j_budget
    else:
        j_drift = 0
        while j_drift < j_budget and scaled * gamma_hat_prior(j_drift + 1, ledger) <= ledger.rho:
            j_drift += 1

    index = min(j_budget, j_drift)
    if index == 0:
        _logger.warning(
            "Prior stopping index is zero; the noise level exhausts the budget",
            extra={"delta": delta, "j_budget": j_budget, "j_drift": j_drift},
        )
    return index


# Drivers


def _x_norm(problem: InverseProblem, theta: Parameter) -> float:
    return float(np.sqrt(max(parameter_inner(problem.ops, theta, theta), 0.0)))


class _Recorder:
    """Per-iteration bookkeeping shared by both drivers."""

    __slots__ = ("problem", "theta0", "theta_true", "report", "limit")

    def __init__(  # noqa: PLR0913
        self,
        problem: InverseProblem,
        theta0: Parameter,
        theta_true: Parameter | None,
        ledger: ConstantsLedger,
        data: ObservationData,
        *,
        keep_trajectory: bool,
    ) -> None:
        self.problem = problem
        self.theta0 = theta0
        self.theta_true = theta_true
        self.limit = DIVERGENCE_RADII * ledger.radius
        self.report = UpperReport(
            theta_final=theta0,
            delta=data.delta,
            tau=ledger.tau,
            error_history=None if theta_true is None else [],
            trajectory=[] if keep_trajectory else None,
        )

    def record(self, theta: Parameter, residual: float, steps: int, lower_residual: float) -> None:
        report = self.report
        report.theta_final = theta
        report.theta_norm_history.append(_x_norm(self.problem, theta))
        report.residual_history.append(residual)
        report.lower_steps.append(steps)
        report.lower_residuals.append(lower_residual)
        if self.theta_true is not None:
            error = _x_norm(self.problem, theta - self.theta_true)
            report.error_history.append(error)  # type: ignore[union-attr]
        if report.trajectory is not None:
            report.trajectory.append(theta)

    def diverged(self, theta: Parameter) -> bool:
        return not theta.is_finite() or _x_norm(self.problem, theta - self.theta0) > self.limit

    def finish(self, j: int, reason: StopReason) -> UpperReport:
        self.report.stop_reason = reason
        self.report.j_star = j
        _logger.info(
            "Upper iteration stopped",
            extra={
                "stop_reason": reason.value,
                "j_star": j,
                "residual": self.report.residual_history[-1],
                "lower_steps": self.report.total_lower_steps,
            },
        )
        return self.report


def _stop_reason(  # noqa: PLR0913
    j: int,
    residual: float,
    data: ObservationData,
    ledger: ConstantsLedger,
    rule: StoppingRule,
    prior_index: int | None,
    max_iter: int,
) -> StopReason | None:
    if rule is StoppingRule.POSTERIOR and posterior_stop_check(residual, data.delta, ledger.tau):
        return StopReason.POSTERIOR_DISCREPANCY
    if rule is StoppingRule.PRIOR and prior_index is not None and j >= prior_index:
        return StopReason.PRIOR_INDEX
    if j >= max_iter:
        return StopReason.MAX_ITER
    return None


def _prepare_rule(
    rule: StoppingRule | str,
    data: ObservationData,
    ledger: ConstantsLedger,
    max_iter: int,
) -> tuple[StoppingRule, int | None]:
    rule = StoppingRule(rule)
    if max_iter < 0:
        raise ValidationError(f"max_iter must be non-negative ({max_iter})")
    if rule is StoppingRule.POSTERIOR and not math.isfinite(ledger.tau):
        raise InfeasibleRuleError(gamma_denominator(ledger))
    if rule is StoppingRule.PRIOR:
        return rule, prior_stop_index(data.delta, ledger)
    return rule, None


def gamma_denominator(ledger: ConstantsLedger) -> float:
    """The denominator of Gamma(0), for error reporting."""
    gamma = ledger.gamma(0)
    value = 2.0 - (1.0 + ledger.eps_split) * ledger.m_upper**2 - 2.0 * ledger.c_tc
    if gamma > 0:
        value -= (
            ledger.l_norm
            * (2.0 * ledger.k_upper * gamma + ledger.m_upper**2 * ledger.l_norm * gamma**2)
            * (1 + 1 / ledger.eps_split)
        )
    return value


def _update(
    problem: InverseProblem,
    theta: Parameter,
    u: StateField,
    residual: ObservationData,
    step: float,
) -> Parameter:
    direction = problem.apply_derivative_adjoint(theta, u, residual)
    return (theta - direction * step).project(problem.model.a_min)


def single_level_landweber(  # noqa: PLR0913
    problem: InverseProblem,
    theta0: Parameter,
    data: ObservationData,
    ledger: ConstantsLedger,
    *,
    max_iter: int,
    rule: StoppingRule | str = StoppingRule.POSTERIOR,
    theta_true: Parameter | None = None,
    keep_trajectory: bool = False,
) -> UpperReport:
    """Landweber on G = L o S with every state from the oracle."""
    rule, prior_index = _prepare_rule(rule, data, ledger, max_iter)
    recorder = _Recorder(problem, theta0, theta_true, ledger, data, keep_trajectory=keep_trajectory)
    theta = theta0

    for j in range(max_iter + 1):
        u = problem.state(theta)
        residual = problem.misfit(u, data)
        size = residual.norm()
        recorder.record(theta, size, 0, problem.model.residual_norm(theta, u))
        _logger.debug("Upper step", extra={"j": j, "residual": size})

        reason = _stop_reason(j, size, data, ledger, rule, prior_index, max_iter)
        if reason is not None:
            return recorder.finish(j, reason)

        theta = _update(problem, theta, u, residual, ledger.step)
        if recorder.diverged(theta):
            return recorder.finish(j, StopReason.DIVERGENCE)

    raise AssertionError("unreachable")  # pragma: no cover


def bilevel_landweber(  # noqa: PLR0913
    problem: InverseProblem,
    theta0: Parameter,
    data: ObservationData,
    ledger: ConstantsLedger,
    lower_cfg: LowerStoppingConfig,
    *,
    rule: StoppingRule | str = StoppingRule.PRIOR,
    max_iter: int,
    theta_true: Parameter | None = None,
    u_init: StateField | None = None,
    keep_trajectory: bool = False,
) -> UpperReport:
    """
    Landweber on G with each state replaced by K(j) lower-level steps.

    The lower level stops at min(K(j), lower_cfg.K), or earlier in
    ``epsilon_target`` mode once its surrogate drops below delta gamma(j).
    Warm starts reuse the previous lower-level output.
    """
    rule, prior_index = _prepare_rule(rule, data, ledger, max_iter)
    recorder = _Recorder(problem, theta0, theta_true, ledger, data, keep_trajectory=keep_trajectory)
    model = problem.model
    grid = problem.grid
    lower_step = lower_cfg.step_scale / ledger.m_lower**2

    theta = theta0
    previous = u_init if u_init is not None else StateField.constant_in_time(grid, theta0.u0)

    for j in range(max_iter + 1):
        cap = min(lower_stop_index(j, data.delta, lower_cfg), lower_cfg.K)
        target = data.delta * lower_cfg.gamma(j) if data.delta > 0 else lower_cfg.eps_target
        start = previous if lower_cfg.warm_start else StateField.constant_in_time(grid, theta.u0)

        try:
            lower = lower_landweber(
                model,
                theta,
                start,
                lower_cfg,
                step=lower_step,
                max_steps=cap,
                eps_target=target,
            )
        except LowerDivergenceError as err:
            _logger.exception("Lower level diverged", extra={"j": j, "k": err.step})
            raise UpperDivergenceError(j, err.step, str(err)) from err

        u = lower.u_final
        residual = problem.misfit(u, data)
        size = residual.norm()
        recorder.record(theta, size, lower.steps_taken, lower.final_residual)
        _logger.debug(
            "Upper step",
            extra={"j": j, "residual": size, "lower_steps": lower.steps_taken, "K": cap},
        )

        reason = _stop_reason(j, size, data, ledger, rule, prior_index, max_iter)
        if reason is not None:
            return recorder.finish(j, reason)

        theta = _update(problem, theta, u, residual, ledger.step)
        previous = u
        if recorder.diverged(theta):
            return recorder.finish(j, StopReason.DIVERGENCE)

    raise AssertionError("unreachable")  # pragma: no cover


# Ledger assembly


def _adjoint_stability(problem: InverseProblem, theta: Parameter, samples: int, seed: int) -> float:
    """Largest sampled (||z||_calU + ||z(0)||_H) / ||h||_calUstar for the adjoint solve."""
    rng = np.random.default_rng(seed)
    ops = problem.ops
    u = problem.state(theta)
    worst = 0.0
    for _ in range(samples):
        v = smooth_state(problem.grid, rng)
        z = solve_adjoint(problem.model, theta, u, v)
        source = norm(SpaceTag.CAL_U, v, ops)
        if source == 0:
            continue
        size = norm(SpaceTag.CAL_U, StateField(z.values, problem.grid), ops)
        size += norm(SpaceTag.H, z.initial, ops)
        worst = max(worst, size / source)
    return worst


def _jacobian_lipschitz(  # noqa: PLR0913
    problem: InverseProblem,
    theta: Parameter,
    samples: int,
    radius: float,
    seed: int,
) -> float:
    """Largest sampled ||(f'_u(u1) - f'_u(u2)) h||_calUstar / (||u1 - u2||_calU ||h||_calU)."""
    rng = np.random.default_rng(seed)
    ops = problem.ops
    model = problem.model
    center = problem.state(theta)
    worst = 0.0
    for _ in range(samples):
        first = center + smooth_state(problem.grid, rng) * radius
        second = center + smooth_state(problem.grid, rng) * radius
        h = smooth_state(problem.grid, rng)
        change = model.apply_fprime_u(theta, first, h) - model.apply_fprime_u(theta, second, h)
        scale = norm(SpaceTag.CAL_U, first - second, ops) * norm(SpaceTag.CAL_U, h, ops)
        if scale > 0:
            worst = max(worst, norm(SpaceTag.CAL_USTAR, change, ops) / scale)
    return worst


def build_ledger(  # noqa: PLR0913
    problem: InverseProblem,
    theta0: Parameter,
    theta_true: Parameter,
    lower_cfg: LowerStoppingConfig,
    *,
    delta: float,
    step_scale: float = 1.0,
    overrides: Mapping[str, float] | None = None,
    n_pairs: int = 20,
    ball_radius: float = 0.1,
    power_iterations: int = 100,
    coercivity_safety: float = 1.5,
    seed: int = 0,
) -> ConstantsLedger:
    """
    Probe every constant at theta0, rescale to the step-scaled problem, apply
    ``overrides`` and validate.

    Derived constants (k_upper, mu_upper, d_bound, tau) are recomputed from the
    overridden base values unless they are overridden themselves.
    """
    if not 0 < step_scale < 2:  # noqa: PLR2004
        raise ValidationError(f"step_scale must lie in (0, 2) ({step_scale})")
    overrides = dict(overrides or {})
    u0 = problem.state(theta0)
    model = problem.model

    m_s = estimate_operator_norm(sensitivity_map(problem, theta0, u0), power_iterations, seed=seed)
    l_raw = estimate_operator_norm(observation_map(problem), power_iterations, seed=seed)
    m_raw = estimate_operator_norm(reduced_map(problem, theta0, u0), power_iterations, seed=seed)
    m_lower = estimate_operator_norm(
        lower_derivative_map(model, theta0, u0),
        power_iterations,
        seed=seed,
    )
    step = step_scale / m_raw.bound() ** 2

    cone = probe_tangential_cone(
        "upper",
        problem,
        theta0,
        n_pairs=n_pairs,
        ball_radius=ball_radius,
        seed=seed,
    )
    coercivity = probe_coercivity(
        model,
        problem.oracle,
        theta0,
        n_pairs=n_pairs,
        ball_radius=ball_radius,
        seed=seed,
    )
    pl = probe_PL(
        model,
        problem.oracle,
        theta0,
        n_points=n_pairs,
        ball_radius=ball_radius,
        seed=seed,
    )
    lemmas = verify_error_lemmas(problem, theta0)

    radius0 = _x_norm(problem, theta0 - theta_true)
    base: dict[str, float] = {
        "m_s": m_s.bound(),
        "m_upper": math.sqrt(step_scale),
        "c_tc": max(cone.estimate, C_TC_FLOOR),
        "radius0": radius0,
        "radius": 2.0 * radius0 if radius0 > 0 else 1.0,
        "l_norm": math.sqrt(step) * l_raw.bound(),
        "m_lower": m_lower.bound(),
        "mu_lower": pl.estimate,
        "c_coe": coercivity_safety * coercivity.estimate,
        "alpha": lower_cfg.alpha,
        "c_fu": _adjoint_stability(problem, theta0, n_pairs, seed),
        "l_grad_f": _jacobian_lipschitz(problem, theta0, n_pairs, ball_radius, seed),
        "c_grad_fa": max(
            lemmas.adjoint_fit.alpha / (1.0 + m_s.bound()),
            lemmas.adjoint_fit.beta,
            0.0,
        ),
        "q": lower_cfg.q,
        "gamma0": lower_cfg.gamma0,
        "gamma_bar": lower_cfg.gamma0,
        "delta_bar": delta,
        "eps_split": EPS_SPLIT,
        "step": step,
    }
    base |= {key: value for key, value in overrides.items() if key in base}

    derived = dict(base)
    derived["rho"] = overrides.get("rho", 0.1 * base["radius"])
    derived["k_upper"] = overrides.get("k_upper", 1.0 + base["c_tc"])
    derived["mu_upper"] = overrides.get(
        "mu_upper",
        2.0 * (1.0 - base["c_tc"]) - base["m_upper"] ** 2,
    )
    scaled_bar = math.sqrt(base["step"]) * base["delta_bar"]
    derived["d_bound"] = overrides.get(
        "d_bound",
        base["c_grad_fa"]
        * base["l_norm"]
        * (
            scaled_bar
            + base["m_upper"] * base["radius"]
            + base["l_norm"] * scaled_bar * base["gamma_bar"]
        ),
    )

    ledger = ConstantsLedger(**derived, tau=math.inf)
    if "tau" in overrides:
        ledger = ledger.replace(tau=overrides["tau"])
    else:
        try:
            ledger = ledger.replace(tau=TAU_FACTOR * gamma_posterior(0, ledger))
        except InfeasibleRuleError as err:
            _logger.warning(
                "Posterior rule infeasible for the probed constants",
                extra={"denominator": err.denominator},
            )

    unknown = set(overrides) - {field.name for field in dataclasses.fields(ConstantsLedger)}
    if unknown:
        raise ValidationError(f"unknown ledger override(s) {sorted(unknown)}")

    _logger.info("Constants ledger assembled", extra=ledger.json())
    return ledger.validate()


__all__ = (
    "ConstantsLedger",
    "StopReason",
    "StoppingRule",
    "UpperReport",
    "bilevel_landweber",
    "build_ledger",
    "gamma_denominator",
    "gamma_hat_prior",
    "gamma_posterior",
    "posterior_stop_check",
    "prior_stop_index",
    "single_level_landweber",
)
