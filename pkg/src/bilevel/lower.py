# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
Lower-level Landweber iteration: approximate the state S(theta) by gradient
steps on the PDE residual, u <- u - mu F'(u)* F(u), in calV.
"""

from __future__ import annotations as _future_annotations

from collections.abc import Sequence
from typing import Any

import dataclasses
import enum
import logging
import math

import numpy as np

from bilevel.diagnostics import estimate_operator_norm, lower_derivative_map
from bilevel.errors import LowerDivergenceError, ValidationError
from bilevel.model import ParabolicModel
from bilevel.spaces import Parameter, SpaceTag, StateField, norm

_logger = logging.getLogger("bilevel").getChild("lower")

DIVERGENCE_FACTOR = 10.0
_RESIDUAL_FLOOR = 1e-13


class LowerStoppingMode(enum.StrEnum):
    FIXED_K = "fixed_K"
    EPSILON_TARGET = "epsilon_target"

    @classmethod
    def _missing_(cls, value: object) -> LowerStoppingMode | None:
        value = str(value).lower()
        for member in cls:
            if member.value.lower() == value:
                return member
        return None


@dataclasses.dataclass(frozen=True)
class LowerStoppingConfig:
    """
    Stopping controls for the lower level.

    ``K`` caps every run; the prior index K(j) = ceil((C q^j / (gamma0 delta))^(2 alpha))
    is taken from the fitted rate ``rate_const``. ``c_coe`` turns a residual into
    the state-error surrogate used by ``epsilon_target``.
    """

    mode: LowerStoppingMode = LowerStoppingMode.FIXED_K
    K: int = 1000  # noqa: N815
    eps_target: float = 1e-8
    q: float = 1.0
    gamma0: float = 1.0
    rate_const: float = 1.0
    alpha: float = 1.0
    step_scale: float = 1.0
    c_coe: float = 1.0
    power_iterations: int = 100
    warm_start: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", LowerStoppingMode(self.mode))
        problems = self.violations()
        if problems:
            raise ValidationError("lower stopping config: " + "; ".join(problems))

    def violations(self) -> list[str]:
        problems = []
        if self.K < 1:
            problems.append(f"K must be at least 1 ({self.K})")
        if not self.q >= 1:
            problems.append(f"q must be >= 1 ({self.q})")
        if not self.gamma0 > 0:
            problems.append(f"gamma0 must be positive ({self.gamma0})")
        if not self.alpha >= 1:
            problems.append(f"alpha must be >= 1 ({self.alpha})")
        if not 0 < self.step_scale < 2:  # noqa: PLR2004
            problems.append(f"step_scale must lie in (0, 2) ({self.step_scale})")
        if not self.rate_const > 0:
            problems.append(f"rate_const must be positive ({self.rate_const})")
        if not self.c_coe > 0:
            problems.append(f"c_coe must be positive ({self.c_coe})")
        if not self.eps_target >= 0:
            problems.append(f"eps_target must be non-negative ({self.eps_target})")
        if self.power_iterations < 10:  # noqa: PLR2004
            problems.append(f"power_iterations must be at least 10 ({self.power_iterations})")
        return problems

    def gamma(self, j: int) -> float:
        return self.gamma0 / self.q**j

    def replace(self, **changes: Any) -> LowerStoppingConfig:
        return dataclasses.replace(self, **changes)

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class LowerReport:
    u_final: StateField
    residual_history: list[float]
    steps_taken: int
    eps_estimate: float
    step: float
    error_history: list[float] | None = None
    error_history_v: list[float] | None = None

    def __post_init__(self) -> None:
        if len(self.residual_history) != self.steps_taken + 1:
            raise ValidationError("residual history must hold one entry per iterate")

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def json(self) -> dict[str, Any]:
        return {
            "steps_taken": self.steps_taken,
            "eps_estimate": self.eps_estimate,
            "step": self.step,
            "residual_history": self.residual_history,
            "error_history": self.error_history,
            "error_history_v": self.error_history_v,
        }


def eps_surrogate(model: ParabolicModel, theta: Parameter, u_k: StateField, c_coe: float) -> float:
    """C_coe * ||F(theta)(u_k)||, an upper estimate of ||u_k - S(theta)||_calU."""
    return c_coe * model.residual_norm(theta, u_k)


def lower_step_size(
    model: ParabolicModel,
    theta: Parameter,
    u: StateField,
    stop: LowerStoppingConfig,
) -> float:
    derivative = estimate_operator_norm(
        lower_derivative_map(model, theta, u),
        n_iters=stop.power_iterations,
    )
    if derivative.estimate <= 0:
        raise ValidationError("F'(u) vanished; cannot scale the lower step")
    return stop.step_scale / derivative.bound() ** 2


def lower_landweber(  # noqa: PLR0913 stop overrides come from the bi-level driver
    model: ParabolicModel,
    theta: Parameter,
    u_init: StateField,
    stop: LowerStoppingConfig,
    *,
    u_star: StateField | None = None,
    step: float | None = None,
    max_steps: int | None = None,
    eps_target: float | None = None,
) -> LowerReport:
    """
    Run the lower iteration from ``u_init``.

    ``max_steps`` and ``eps_target`` override the config's cap and target for
    one run. With ``u_star`` the calU and calV errors of every iterate are recorded.
    """
    cap = stop.K if max_steps is None else max_steps
    target = stop.eps_target if eps_target is None else eps_target
    if cap < 0:
        raise ValidationError(f"lower step cap must be non-negative ({cap})")

    if step is None:
        step = lower_step_size(model, theta, u_init, stop)

    u = u_init
    residual = model.pde_residual(theta, u)
    size = residual.norm(model.ops)
    if not np.isfinite(size):
        raise LowerDivergenceError(0, size, "initial residual is not finite")

    limit = DIVERGENCE_FACTOR * max(size, _RESIDUAL_FLOOR)
    history = [size]
    errors = None if u_star is None else [norm(SpaceTag.CAL_U, u - u_star, model.ops)]
    errors_v = None if u_star is None else [norm(SpaceTag.CAL_V, u - u_star, model.ops)]

    k = 0
    while k < cap:
        if stop.mode is LowerStoppingMode.EPSILON_TARGET and stop.c_coe * size <= target:
            break
        if size == 0:
            break

        u = u - model.apply_Fprime_adjoint(theta, u, residual) * step
        k += 1

        residual = model.pde_residual(theta, u)
        size = residual.norm(model.ops)
        if not (np.isfinite(size) and u.is_finite()):
            raise LowerDivergenceError(k, size, "non-finite iterate")
        if size > limit:
            raise LowerDivergenceError(k, size, f"residual grew past {limit:.3e}")

        history.append(size)
        if u_star is not None:
            errors.append(norm(SpaceTag.CAL_U, u - u_star, model.ops))  # type: ignore[union-attr]
            errors_v.append(norm(SpaceTag.CAL_V, u - u_star, model.ops))  # type: ignore[union-attr]

    report = LowerReport(
        u_final=u,
        residual_history=history,
        steps_taken=k,
        eps_estimate=stop.c_coe * size,
        step=step,
        error_history=errors,
        error_history_v=errors_v,
    )
    _logger.debug(
        "Lower iteration finished",
        extra={"steps": k, "residual": size, "eps_estimate": report.eps_estimate},
    )
    return report


def lower_stop_index(j: int, delta: float, cfg: LowerStoppingConfig) -> int:
    """
    K(j), the smallest K whose fitted error bound C K^(-1/(2 alpha)) is below delta gamma(j).

    The value is not capped by ``cfg.K``; noise-free runs (delta = 0) use the cap.
    """
    if delta < 0:
        raise ValidationError(f"noise level must be non-negative ({delta})")
    if j < 0:
        raise ValidationError(f"upper index must be non-negative ({j})")
    if delta == 0:
        return cfg.K

    value = (cfg.rate_const / (cfg.gamma(j) * delta)) ** (2 * cfg.alpha)
    if not math.isfinite(value):
        raise ValidationError(f"K({j}) overflows for delta={delta}")
    # Rounding of exact powers must not add a step.
    return max(1, math.ceil(value * (1 - 1e-12)))


def calibrate_rate_const(
    residual_history: Sequence[float],
    alpha: float,
    c_coe: float,
    *,
    floor: float = 0.0,
) -> float:
    """
    The constant C of eps_K ~ C K^(-1/(2 alpha)) from a pilot run.

    Least squares in log-log space with the slope held at -1/(2 alpha), using
    eps_K = c_coe * residual_K for K >= 1.
    """
    values = c_coe * np.asarray(residual_history, dtype=np.float64)
    steps = np.arange(values.size)
    keep = (steps >= 1) & np.isfinite(values) & (values > floor)
    if np.count_nonzero(keep) < 2:  # noqa: PLR2004
        raise ValidationError("rate calibration needs two residuals above the floor")

    offsets = np.log(values[keep]) + np.log(steps[keep]) / (2 * alpha)
    return float(np.exp(np.mean(offsets)))


__all__ = (
    "LowerReport",
    "LowerStoppingConfig",
    "LowerStoppingMode",
    "calibrate_rate_const",
    "eps_surrogate",
    "lower_landweber",
    "lower_step_size",
    "lower_stop_index",
)
