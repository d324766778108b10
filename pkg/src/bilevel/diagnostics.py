# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
Sampling probes for the constants the stopping rules rely on, and verdicts on
iteration histories.

Probes sample smooth random directions, so they can show an assumption is
violated but never prove it holds.
"""

from __future__ import annotations as _future_annotations

from collections.abc import Callable, Iterable, Sequence
from typing import Any, Generic, TypeVar

import dataclasses
import enum
import logging

import numpy as np
import scipy.linalg

from bilevel.adjoint import s_prime_adjoint
from bilevel.errors import ValidationError
from bilevel.model import ParabolicModel
from bilevel.observe import observe, observe_adjoint
from bilevel.problem import InverseProblem, Oracle
from bilevel.spaces import (
    Array,
    Component,
    Parameter,
    SpaceTag,
    SpaceTimeGrid,
    StateField,
    inner,
    norm,
    parameter_inner,
)

_logger = logging.getLogger("bilevel").getChild("diagnostics")

MIN_PROBE_PAIRS = 10
MIN_POWER_ITERATIONS = 10
NORM_SAFETY = 1.05
MIN_HISTORY = 3
MIN_RATE_HISTORY = 20
_DENOMINATOR_FLOOR = 1e-13

T = TypeVar("T")
D = TypeVar("D")


@dataclasses.dataclass(frozen=True)
class ProbeReport:
    name: str
    estimate: float
    sample_count: int
    min_ratio: float
    max_ratio: float
    passed: bool
    threshold: float | None = None
    skipped: int = 0

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValidationError(f"probe {self.name} kept no samples")

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _probe_report(
    name: str,
    ratios: Sequence[float],
    skipped: int,
    *,
    use_min: bool = False,
    threshold: float | None = None,
) -> ProbeReport:
    if not ratios:
        raise ValidationError(f"probe {name}: every sample was skipped")

    estimate = float(min(ratios) if use_min else max(ratios))
    passed = bool(np.isfinite(estimate)) and (threshold is None or estimate < threshold)
    report = ProbeReport(
        name=name,
        estimate=estimate,
        sample_count=len(ratios),
        min_ratio=float(min(ratios)),
        max_ratio=float(max(ratios)),
        passed=passed,
        threshold=threshold,
        skipped=skipped,
    )
    _logger.info("Probe %s", name, extra=report.json())
    return report


def _check_pairs(n_pairs: int) -> None:
    if n_pairs < MIN_PROBE_PAIRS:
        raise ValidationError(f"probes need at least {MIN_PROBE_PAIRS} samples, got {n_pairs}")


# Smooth random directions


def smooth_field(
    grid: SpaceTimeGrid,
    rng: np.random.Generator,
    times: Array,
    modes: int = 3,
) -> Array:
    """Random low sine modes in space times low cosine modes in time, one row per time."""
    space = np.array([np.sin(k * np.pi * grid.nodes / grid.length) for k in range(1, modes + 1)])
    time = np.array([np.cos(m * np.pi * times / grid.final_time) for m in range(modes)])
    weights = rng.standard_normal((modes, modes))
    weights /= np.outer(np.arange(1, modes + 1), np.arange(1, modes + 1))
    return time.T @ weights.T @ space


def smooth_state(grid: SpaceTimeGrid, rng: np.random.Generator, modes: int = 3) -> StateField:
    return StateField(smooth_field(grid, rng, grid.times, modes), grid)


def smooth_parameter(
    grid: SpaceTimeGrid,
    active: frozenset[Component],
    rng: np.random.Generator,
    modes: int = 3,
) -> Parameter:
    direction = Parameter.zeros(grid, active)
    changes = {}
    for name in sorted(active):
        if name is Component.PHI:
            changes[name.value] = smooth_field(grid, rng, grid.times[1:], modes)
        else:
            changes[name.value] = smooth_field(grid, rng, np.zeros(1), modes)[0]
    return direction.replace(**changes)


def rough_state(grid: SpaceTimeGrid, rng: np.random.Generator) -> StateField:
    """Independent normal values on every node, so every grid mode is present."""
    return StateField(rng.standard_normal(grid.shape), grid)


def rough_parameter(
    grid: SpaceTimeGrid,
    active: frozenset[Component],
    rng: np.random.Generator,
) -> Parameter:
    direction = Parameter.zeros(grid, active)
    return direction.replace(
        **{
            name.value: rng.standard_normal(direction.component(name).shape)
            for name in sorted(active)
        },
    )


def lowest_mode_parameter(grid: SpaceTimeGrid, active: frozenset[Component]) -> Parameter:
    mode = np.sin(np.pi * grid.nodes / grid.length)
    direction = Parameter.zeros(grid, active)
    changes = {
        name.value: np.tile(mode, (grid.nt, 1)) if name is Component.PHI else mode.copy()
        for name in active
    }
    return direction.replace(**changes)


def _unit_parameter(model: ParabolicModel, direction: Parameter) -> Parameter:
    size = np.sqrt(parameter_inner(model.ops, direction, direction))
    return direction * (1.0 / size)


# Operator norms


@dataclasses.dataclass(frozen=True)
class LinearMap(Generic[D, T]):
    """
    A linear operator given by its action, its Hilbert adjoint and its range inner product.

    ``sample`` draws a range element with a component along every singular
    vector; norm estimates start from it.
    """

    forward: Callable[[D], T]
    adjoint: Callable[[T], D]
    range_inner: Callable[[T, T], float]
    sample: Callable[[np.random.Generator], T]


@dataclasses.dataclass(frozen=True)
class OperatorNorm:
    estimate: float
    residual: float
    iterations: int

    def bound(self, safety: float = NORM_SAFETY) -> float:
        """The estimate widened by ``safety``; Ritz values never exceed the true norm."""
        return safety * self.estimate


def _top_ritz_pair(diagonal: Sequence[float], off: Sequence[float]) -> tuple[float, Array]:
    if len(diagonal) == 1:
        return float(diagonal[0]), np.ones(1)
    values, vectors = scipy.linalg.eigh_tridiagonal(np.asarray(diagonal), np.asarray(off))
    return float(values[-1]), vectors[:, -1]


def estimate_operator_norm(
    op: LinearMap[Any, Any],
    n_iters: int = 100,
    *,
    seed: int = 0,
    rtol: float = 1e-8,
) -> OperatorNorm:
    """
    Lanczos on op o op* in the range inner product, with full reorthogonalisation.

    Returns the square root of the largest Ritz value. Iteration stops after
    ``n_iters`` steps, when the Krylov space is exhausted, or once the Ritz
    value moves by less than ``rtol`` (relative) after the first
    ``MIN_POWER_ITERATIONS`` steps. ``residual`` is the Lanczos bound
    beta_k |s_k| relative to the Ritz value.
    """
    if n_iters < MIN_POWER_ITERATIONS:
        raise ValidationError(f"power iteration needs at least {MIN_POWER_ITERATIONS} steps")

    rng = np.random.default_rng(seed)
    start = op.sample(rng)
    size = np.sqrt(max(op.range_inner(start, start), 0.0))
    if size == 0:
        return OperatorNorm(0.0, 0.0, 0)

    basis = [start * (1.0 / size)]
    diagonal: list[float] = []
    off: list[float] = []
    eigenvalue = 0.0
    residual = np.inf
    steps = 0
    for steps in range(1, n_iters + 1):
        current = basis[-1]
        image = op.forward(op.adjoint(current))
        diagonal.append(float(op.range_inner(image, current)))
        # Two Gram-Schmidt passes keep the basis orthonormal to roundoff.
        for _ in range(2):
            for vector in reversed(basis):
                image = image - vector * op.range_inner(image, vector)
        beta = float(np.sqrt(max(op.range_inner(image, image), 0.0)))

        ritz, vector = _top_ritz_pair(diagonal, off)
        scale = max(abs(ritz), _DENOMINATOR_FLOOR)
        residual = beta * abs(float(vector[-1])) / scale
        settled = abs(ritz - eigenvalue) <= rtol * scale
        eigenvalue = ritz

        if beta <= _DENOMINATOR_FLOOR * max(ritz, 1.0):
            break
        if settled and steps >= MIN_POWER_ITERATIONS:
            break
        off.append(beta)
        basis.append(image * (1.0 / beta))

    if residual > 1e-3:  # noqa: PLR2004
        _logger.debug(
            "Norm estimate not converged",
            extra={"residual": residual, "steps": steps},
        )

    return OperatorNorm(float(np.sqrt(max(eigenvalue, 0.0))), float(residual), steps)


def lower_derivative_map(
    model: ParabolicModel,
    theta: Parameter,
    u: StateField,
) -> LinearMap[StateField, Any]:
    """F'(u) from calV into calUstar x H."""
    ops = model.ops
    grid = model.grid

    def sample(rng: np.random.Generator) -> Any:  # noqa: ANN401
        return model.apply_Fprime(theta, u, rough_state(grid, rng))

    return LinearMap(
        forward=lambda h: model.apply_Fprime(theta, u, h),
        adjoint=lambda w: model.apply_Fprime_adjoint(theta, u, w),
        range_inner=lambda left, right: left.inner(right, ops),
        sample=sample,
    )


def observation_map(problem: InverseProblem) -> LinearMap[StateField, Any]:
    """L from calU into the data space."""
    grid = problem.grid

    return LinearMap(
        forward=lambda u: observe(problem.observation, u),
        adjoint=lambda r: observe_adjoint(problem.observation, problem.ops, r),
        range_inner=lambda left, right: problem.observation.inner(left.values, right.values),
        sample=lambda rng: observe(problem.observation, rough_state(grid, rng)),
    )


def sensitivity_map(
    problem: InverseProblem,
    theta: Parameter,
    u: StateField,
) -> LinearMap[Any, Any]:
    """S'(theta) from X into calU."""
    model = problem.model
    ops = problem.ops

    return LinearMap(
        forward=lambda xi: problem.oracle.solve_sensitivity(theta, u, xi),
        adjoint=lambda v: s_prime_adjoint(model, theta, u, v),
        range_inner=lambda left, right: inner(SpaceTag.CAL_U, left, right, ops),
        sample=lambda rng: problem.oracle.solve_sensitivity(
            theta,
            u,
            rough_parameter(problem.grid, theta.active, rng),
        ),
    )


def reduced_map(problem: InverseProblem, theta: Parameter, u: StateField) -> LinearMap[Any, Any]:
    """G'(theta) = L S'(theta) from X into the data space."""
    return LinearMap(
        forward=lambda xi: problem.apply_derivative(theta, u, xi),
        adjoint=lambda r: problem.apply_derivative_adjoint(theta, u, r),
        range_inner=lambda left, right: problem.observation.inner(left.values, right.values),
        sample=lambda rng: problem.apply_derivative(
            theta,
            u,
            rough_parameter(problem.grid, theta.active, rng),
        ),
    )


# Lower-level probes


def _ball_state(
    grid: SpaceTimeGrid,
    ops_norm: Callable[[StateField], float],
    rng: np.random.Generator,
    radius: float,
) -> StateField:
    direction = smooth_state(grid, rng)
    return direction * (radius * rng.uniform(0.1, 1.0) / ops_norm(direction))


def coercivity_ratio(
    model: ParabolicModel,
    theta: Parameter,
    u: StateField,
    v: StateField,
) -> float | None:
    """||u - v||_calU / ||F(u) - F(v)||, or None when the images coincide."""
    image = (model.pde_residual(theta, u) - model.pde_residual(theta, v)).norm(model.ops)
    distance = norm(SpaceTag.CAL_U, u - v, model.ops)
    if distance == 0 or image <= _DENOMINATOR_FLOOR * max(1.0, distance):
        return None
    return distance / image


def probe_coercivity(  # noqa: PLR0913 probe controls
    model: ParabolicModel,
    oracle: Oracle,
    theta: Parameter,
    *,
    n_pairs: int = 50,
    ball_radius: float = 0.1,
    seed: int = 0,
) -> ProbeReport:
    _check_pairs(n_pairs)
    rng = np.random.default_rng(seed)
    center = oracle.solve_forward(theta)

    def v_norm(state: StateField) -> float:
        return norm(SpaceTag.CAL_V, state, model.ops)

    ratios: list[float] = []
    skipped = 0
    for _ in range(n_pairs):
        u = center + _ball_state(model.grid, v_norm, rng, ball_radius)
        v = center + _ball_state(model.grid, v_norm, rng, ball_radius)
        ratio = coercivity_ratio(model, theta, u, v)
        if ratio is None:
            skipped += 1
        else:
            ratios.append(ratio)

    return _probe_report("C_coe", ratios, skipped)


class ConeLevel(enum.StrEnum):
    LOWER = "lower"
    UPPER = "upper"


class ConeForm(enum.StrEnum):
    STRONG = "strong"
    WEAK = "weak"


def _cone_ratio(
    linearisation_error: float,
    alignment: float,
    image: float,
    form: ConeForm,
) -> float | None:
    if image <= _DENOMINATOR_FLOOR:
        return None
    if form is ConeForm.STRONG:
        return linearisation_error / image
    return alignment / image**2


def probe_tangential_cone(  # noqa: PLR0913 probe controls
    level: ConeLevel | str,
    problem: InverseProblem,
    theta: Parameter,
    *,
    n_pairs: int = 50,
    ball_radius: float = 0.1,
    seed: int = 0,
    form: ConeForm | str = ConeForm.STRONG,
) -> ProbeReport:
    _check_pairs(n_pairs)
    level, form = ConeLevel(level), ConeForm(form)
    rng = np.random.default_rng(seed)
    model = problem.model
    ops = problem.ops

    ratios: list[float] = []
    skipped = 0

    if level is ConeLevel.LOWER:
        center = problem.state(theta)

        def v_norm(state: StateField) -> float:
            return norm(SpaceTag.CAL_V, state, ops)

        for _ in range(n_pairs):
            u = center + _ball_state(problem.grid, v_norm, rng, ball_radius)
            v = center + _ball_state(problem.grid, v_norm, rng, ball_radius)
            difference = model.pde_residual(theta, u) - model.pde_residual(theta, v)
            error = difference - model.apply_Fprime(theta, u, u - v)
            ratio = _cone_ratio(
                error.norm(ops),
                error.inner(difference, ops),
                difference.norm(ops),
                form,
            )
            if ratio is None:
                skipped += 1
            else:
                ratios.append(ratio)
    else:
        for _ in range(n_pairs):
            first, second = (
                theta + _unit_parameter(
                    model,
                    smooth_parameter(problem.grid, theta.active, rng),
                ) * (ball_radius * rng.uniform(0.1, 1.0))
                for _ in range(2)
            )
            state = problem.state(first)
            difference = observe(problem.observation, state) - problem.forward(second)
            shift = (first - second).restricted()
            error = difference - problem.apply_derivative(first, state, shift)
            ratio = _cone_ratio(
                error.norm(),
                problem.observation.inner(error.values, difference.values),
                difference.norm(),
                form,
            )
            if ratio is None:
                skipped += 1
            else:
                ratios.append(ratio)

    return _probe_report(f"c_tc[{level},{form}]", ratios, skipped, threshold=1.0)


def pl_ratio(
    model: ParabolicModel,
    theta: Parameter,
    u: StateField,
    floor: float = 1e-24,
) -> float | None:
    """||J'(u)||^2_{calV*} / J(u) for J = ||F(u)||^2, or None below the floor."""
    residual = model.pde_residual(theta, u)
    objective = residual.norm(model.ops) ** 2
    if objective <= floor:
        return None

    gradient = model.apply_Fprime_adjoint(theta, u, residual)
    return 4.0 * norm(SpaceTag.CAL_V, gradient, model.ops) ** 2 / objective


def probe_PL(  # noqa: N802, PLR0913
    model: ParabolicModel,
    oracle: Oracle,
    theta: Parameter,
    *,
    n_points: int = 50,
    ball_radius: float = 0.1,
    seed: int = 0,
) -> ProbeReport:
    _check_pairs(n_points)
    rng = np.random.default_rng(seed)
    center = oracle.solve_forward(theta)

    def v_norm(state: StateField) -> float:
        return norm(SpaceTag.CAL_V, state, model.ops)

    ratios: list[float] = []
    skipped = 0
    for _ in range(n_points):
        ratio = pl_ratio(model, theta, center + _ball_state(model.grid, v_norm, rng, ball_radius))
        if ratio is None:
            skipped += 1
        else:
            ratios.append(ratio)

    return _probe_report("mu_PL", ratios, skipped, use_min=True)


# History verdicts


def _increases(history: Sequence[float], rtol: float, atol: float) -> list[int]:
    values = np.asarray(history, dtype=np.float64)
    if values.size < MIN_HISTORY:
        raise ValidationError(f"history too short ({values.size} < {MIN_HISTORY})")
    rising = values[1:] > values[:-1] * (1.0 + rtol) + atol
    return [int(k) for k in np.nonzero(rising)[0] + 1]


def check_fejer(history: Sequence[float], *, rtol: float = 1e-12, atol: float = 0.0) -> list[int]:
    """Indices k where the error history rose from k - 1 to k."""
    return _increases(history, rtol, atol)


def check_residual_monotone(
    residual_history: Sequence[float],
    *,
    rtol: float = 1e-12,
    atol: float = 0.0,
) -> list[int]:
    return _increases(residual_history, rtol, atol)


@dataclasses.dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    points: int

    @property
    def decaying(self) -> bool:
        return self.slope < -1e-9  # noqa: PLR2004


def fit_rate(history: Sequence[float], *, first_index: int = 0, floor: float = 0.0) -> RateFit:
    """
    Least-squares slope of log(value) against log(k) over the tail half.

    ``first_index`` is the iteration number of history[0]; k = 0 and values
    at or below ``floor`` are dropped before the tail is taken.
    """
    values = np.asarray(history, dtype=np.float64)
    if values.size < MIN_RATE_HISTORY:
        raise ValidationError(f"rate fit needs {MIN_RATE_HISTORY} points, got {values.size}")

    steps = first_index + np.arange(values.size)
    keep = np.nonzero((steps >= 1) & np.isfinite(values) & (values > floor))[0]
    if keep.size < 2:  # noqa: PLR2004
        raise ValidationError("rate fit: fewer than two points above the floor")

    tail = keep[keep.size // 2 :]
    if tail.size < 2:  # noqa: PLR2004
        tail = keep

    slope, intercept = np.polyfit(np.log(steps[tail]), np.log(values[tail]), 1)
    return RateFit(float(slope), float(intercept), int(tail.size))


@dataclasses.dataclass(frozen=True)
class SummabilityReport:
    partial_sums: list[float]
    bound: float
    first_violation: int | None

    @property
    def passed(self) -> bool:
        return self.first_violation is None


def check_summability(
    residual_history: Sequence[float],
    initial_error: float,
    mu_r: float,
) -> SummabilityReport:
    """Partial sums of ||F(u_k)||^2 against ||u_0 - u*||^2_calV / mu_r."""
    if not mu_r > 0:
        raise ValidationError(f"mu_r must be positive ({mu_r})")

    sums = np.cumsum(np.square(np.asarray(residual_history, dtype=np.float64)))
    bound = initial_error**2 / mu_r
    above = np.nonzero(sums > bound * (1 + 1e-12))[0]
    return SummabilityReport(
        partial_sums=sums.tolist(),
        bound=float(bound),
        first_violation=int(above[0]) if above.size else None,
    )


# Error lemmas


@dataclasses.dataclass(frozen=True)
class BilinearFit:
    alpha: float
    beta: float
    r_squared: float


@dataclasses.dataclass(frozen=True)
class ErrorLemmaReport:
    samples: list[dict[str, float]]
    output_fit: BilinearFit
    adjoint_fit: BilinearFit
    vanishes: bool

    @property
    def passed(self) -> bool:
        fit = min(self.output_fit.r_squared, self.adjoint_fit.r_squared)
        return self.vanishes and fit >= 0.95  # noqa: PLR2004

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self) | {"passed": self.passed}


def _fit_bilinear(controls: Array, measured: Array) -> BilinearFit:
    coefficients, *_ = np.linalg.lstsq(controls, measured, rcond=None)
    residual = measured - controls @ coefficients
    total = float(np.sum((measured - measured.mean()) ** 2))
    scale = max(float(np.max(np.abs(measured))), 1e-300)
    if total <= (1e-12 * scale) ** 2 or scale <= 1e-12:  # noqa: PLR2004
        r_squared = 1.0
    else:
        r_squared = 1.0 - float(np.sum(residual**2)) / total
    return BilinearFit(float(coefficients[0]), float(coefficients[1]), r_squared)


def verify_error_lemmas(  # noqa: PLR0913
    problem: InverseProblem,
    theta: Parameter,
    *,
    direction: Parameter | None = None,
    dtheta_sizes: Iterable[float] = (0.0, 1e-3, 2e-3, 4e-3),
    eps_sizes: Iterable[float] = (0.0, 1e-3, 2e-3, 4e-3),
    floor: float = 1e-9,
) -> ErrorLemmaReport:
    """
    Output and adjoint errors over a grid of (||dtheta||, eps).

    The state perturbation of size eps points along S'(theta) xi, the aligned
    case of the triangle inequality; xi defaults to the lowest sine mode on
    every active component.
    """
    model = problem.model
    ops = problem.ops
    xi = _unit_parameter(
        model,
        (direction or lowest_mode_parameter(problem.grid, theta.active)).restricted(),
    )

    base = problem.state(theta)
    sensitivity = problem.oracle.solve_sensitivity(theta, base, xi)
    size = norm(SpaceTag.CAL_U, sensitivity, ops)
    if size == 0:
        sensitivity = smooth_state(problem.grid, np.random.default_rng(0))
        size = norm(SpaceTag.CAL_U, sensitivity, ops)
    perturbation = sensitivity * (1.0 / size)

    observed = observe(problem.observation, base)
    probe = observe_adjoint(problem.observation, ops, observed)
    probe = probe * (1.0 / max(norm(SpaceTag.CAL_U, probe, ops), 1e-300))
    reference = s_prime_adjoint(model, theta, base, probe)

    samples: list[dict[str, float]] = []
    for step in dtheta_sizes:
        moved = theta + xi * step
        moved_state = problem.state(moved)
        for eps in eps_sizes:
            approximate = moved_state + perturbation * eps
            output = (observed - observe(problem.observation, approximate)).norm()
            gradient = s_prime_adjoint(model, moved, approximate, probe)
            difference = reference - gradient
            adjoint = float(np.sqrt(max(parameter_inner(ops, difference, difference), 0.0)))
            samples.append({"dtheta": step, "eps": eps, "output": output, "adjoint": adjoint})

    controls = np.array([[s["dtheta"], s["eps"]] for s in samples])
    outputs = np.array([s["output"] for s in samples])
    adjoints = np.array([s["adjoint"] for s in samples])

    origin = [s for s in samples if s["dtheta"] == 0 and s["eps"] == 0]
    vanishes = all(
        s["output"] <= floor * max(1.0, outputs.max())
        and s["adjoint"] <= floor * max(1.0, adjoints.max())
        for s in origin
    )

    return ErrorLemmaReport(
        samples=samples,
        output_fit=_fit_bilinear(controls, outputs),
        adjoint_fit=_fit_bilinear(controls, adjoints),
        vanishes=vanishes,
    )


__all__ = (
    "BilinearFit",
    "ConeForm",
    "ConeLevel",
    "ErrorLemmaReport",
    "LinearMap",
    "NORM_SAFETY",
    "OperatorNorm",
    "ProbeReport",
    "RateFit",
    "SummabilityReport",
    "check_fejer",
    "check_residual_monotone",
    "check_summability",
    "coercivity_ratio",
    "estimate_operator_norm",
    "fit_rate",
    "lower_derivative_map",
    "lowest_mode_parameter",
    "observation_map",
    "pl_ratio",
    "probe_PL",
    "probe_coercivity",
    "probe_tangential_cone",
    "reduced_map",
    "rough_parameter",
    "rough_state",
    "sensitivity_map",
    "smooth_parameter",
    "smooth_state",
    "verify_error_lemmas",
)
