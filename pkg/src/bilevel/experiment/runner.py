# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from collections.abc import Sequence
from typing import Any

import asyncio
import csv
import dataclasses
import json
import logging
import pathlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from bilevel.adjoint import duality_pair
from bilevel.diagnostics import (
    ConeForm,
    ConeLevel,
    estimate_operator_norm,
    lower_derivative_map,
    observation_map,
    probe_coercivity,
    probe_PL,
    probe_tangential_cone,
    reduced_map,
    sensitivity_map,
    smooth_parameter,
    smooth_state,
    verify_error_lemmas,
)
from bilevel.errors import ValidationError
from bilevel.lower import (
    LowerStoppingConfig,
    LowerStoppingMode,
    calibrate_rate_const,
    lower_landweber,
)
from bilevel.model import ParabolicModel
from bilevel.observe import ObservationData, add_noise, observe, observe_adjoint
from bilevel.problem import InverseProblem
from bilevel.reference import OracleCache, ReferenceSolver
from bilevel.spaces import (
    Parameter,
    ResidualPair,
    SpaceTag,
    StateField,
    inner,
    norm,
    parameter_inner,
)
from bilevel.upper import (
    ConstantsLedger,
    UpperReport,
    bilevel_landweber,
    build_ledger,
    single_level_landweber,
)

from .config import ExperimentConfig, SchemeMode
from .fixtures import initial_guess, truth_parameter

_logger = logging.getLogger("bilevel").getChild("runner")

HISTORY_COLUMNS = ("j", "residual", "error", "lower_steps", "lower_residual")
SWEEP_COLUMNS = ("delta", "seed", "j_star", "final_error", "final_residual", "total_lower_steps")
ADJOINT_SAMPLES = 20
ADJOINT_RTOL = 1e-9
GRADIENT_RTOL = 1e-2
PILOT_RESIDUAL_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class RunResult:
    report: UpperReport
    data: ObservationData
    seed: int


class Experiment:
    """One configured fixture: the model, its oracle, the truth and the clean data."""

    config: ExperimentConfig
    problem: InverseProblem
    theta_true: Parameter
    u_true: StateField
    theta0: Parameter
    clean: ObservationData
    _prepared: tuple[ConstantsLedger, LowerStoppingConfig] | None

    __slots__ = ("config", "problem", "theta_true", "u_true", "theta0", "clean", "_prepared")

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        model = ParabolicModel(config.grid, config.model.nonlinearity, a_min=config.model.a_min)
        oracle = OracleCache(ReferenceSolver(model, config.scheme.solver))
        self.problem = InverseProblem(model, oracle, config.observation)
        self.theta_true, self.u_true = truth_parameter(model, config)
        self.theta0 = initial_guess(self.theta_true)
        self.clean = observe(config.observation, self.u_true)
        self._prepared = None

    def noisy(self, delta: float, seed: int) -> ObservationData:
        return add_noise(self.clean, delta, seed)

    def pilot_start(self) -> StateField:
        """
        The bi-level starting state at theta0, moved off S(theta0) by the probe
        radius (in calV) when it already solves the PDE there.
        """
        model = self.problem.model
        probes = self.config.probes
        start = StateField.constant_in_time(self.config.grid, self.theta0.u0)
        if model.residual_norm(self.theta0, start) > PILOT_RESIDUAL_FLOOR:
            return start

        direction = smooth_state(self.config.grid, np.random.default_rng(probes.seed))
        size = norm(SpaceTag.CAL_V, direction, model.ops)
        _logger.info(
            "Pilot start already solves the PDE; perturbing it",
            extra={"radius": probes.ball_radius},
        )
        return start + direction * (probes.ball_radius / size)

    def prepare(self) -> tuple[ConstantsLedger, LowerStoppingConfig]:
        """The ledger and the calibrated lower config, shared by every run of this fixture."""
        if self._prepared is not None:
            return self._prepared

        config = self.config
        probes = config.probes
        lower_cfg = config.scheme.lower
        ledger = build_ledger(
            self.problem,
            self.theta0,
            self.theta_true,
            lower_cfg,
            delta=max(config.noise.deltas),
            step_scale=config.scheme.step_scale,
            overrides=config.scheme.ledger,
            n_pairs=probes.n_pairs,
            ball_radius=probes.ball_radius,
            power_iterations=probes.power_iterations,
            coercivity_safety=probes.coercivity_safety,
            seed=probes.seed,
        )
        lower_cfg = lower_cfg.replace(c_coe=ledger.c_coe)

        if probes.calibrate:
            pilot = lower_landweber(
                self.problem.model,
                self.theta0,
                self.pilot_start(),
                lower_cfg.replace(mode=LowerStoppingMode.FIXED_K),
                step=lower_cfg.step_scale / ledger.m_lower**2,
                max_steps=probes.pilot_steps,
            )
            rate_const = calibrate_rate_const(pilot.residual_history, lower_cfg.alpha, ledger.c_coe)
            lower_cfg = lower_cfg.replace(rate_const=rate_const)
            _logger.info("Calibrated lower rate constant", extra={"rate_const": rate_const})

        self._prepared = (ledger, lower_cfg)
        return self._prepared

    def execute(self, delta: float, seed: int) -> RunResult:
        config = self.config
        ledger, lower_cfg = self.prepare()
        data = self.noisy(delta, seed)
        _logger.info(
            "Starting run",
            extra={"delta": delta, "seed": seed, "mode": config.scheme.mode.value},
        )

        if config.scheme.mode is SchemeMode.SINGLE:
            report = single_level_landweber(
                self.problem,
                self.theta0,
                data,
                ledger,
                max_iter=config.scheme.max_iter,
                rule=config.scheme.rule,
                theta_true=self.theta_true,
                keep_trajectory=config.output.trajectory,
            )
        else:
            report = bilevel_landweber(
                self.problem,
                self.theta0,
                data,
                ledger,
                lower_cfg,
                rule=config.scheme.rule,
                max_iter=config.scheme.max_iter,
                theta_true=self.theta_true,
                keep_trajectory=config.output.trajectory,
            )

        return RunResult(report, data, seed)


# Writers


def _write_json(path: pathlib.Path, payload: dict[str, Any]) -> pathlib.Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        handle.write("\n")
    return path


def _json_default(value: object) -> Any:  # noqa: ANN401
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _write_csv(path: pathlib.Path, columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def history_rows(report: UpperReport) -> list[list[str]]:
    errors = report.error_history or [None] * len(report.residual_history)
    return [
        [str(j), _cell(residual), _cell(error), str(steps), _cell(lower)]
        for j, (residual, error, steps, lower) in enumerate(
            zip(
                report.residual_history,
                errors,
                report.lower_steps,
                report.lower_residuals,
                strict=True,
            ),
        )
    ]


def _report_payload(experiment: Experiment, result: RunResult) -> dict[str, Any]:
    ledger, lower_cfg = experiment.prepare()
    return {
        "config_hash": experiment.config.config_hash(),
        "config": experiment.config.json(),
        "delta": result.data.delta,
        "seed": result.seed,
        "constants": ledger.json(),
        "lower": lower_cfg.json(),
        "result": result.report.json(),
    }


def run(config: ExperimentConfig, out_dir: pathlib.Path | None = None) -> RunResult:
    """Run the first configured (delta, seed) and write report.json and histories.csv."""
    out_dir = pathlib.Path(out_dir or config.output.directory)
    experiment = Experiment(config)
    result = experiment.execute(config.noise.deltas[0], config.noise.seeds[0])

    _write_json(out_dir / "report.json", _report_payload(experiment, result))
    _write_csv(out_dir / "histories.csv", HISTORY_COLUMNS, history_rows(result.report))

    _logger.info(
        "Run written",
        extra={"directory": str(out_dir), "stop_reason": result.report.stop_reason.value},
    )
    return result


async def _sweep(
    experiment: Experiment,
    entries: Sequence[tuple[float, int]],
    workers: int,
) -> list[RunResult | BaseException]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="sweep-") as executor:
        return await asyncio.gather(
            *(
                loop.run_in_executor(executor, experiment.execute, delta, seed)
                for delta, seed in entries
            ),
            return_exceptions=True,
        )


def sweep(config: ExperimentConfig, out_dir: pathlib.Path | None = None) -> list[RunResult]:
    """
    One run per (delta, seed), concurrently; writes one report per entry and sweep.csv.

    Failed entries are logged and left out of the table.
    """
    entries = [(delta, seed) for delta in config.noise.deltas for seed in config.noise.seeds]
    if len(entries) < 2:  # noqa: PLR2004
        raise ValidationError("a sweep needs at least two (delta, seed) entries")

    out_dir = pathlib.Path(out_dir or config.output.directory)
    experiment = Experiment(config)
    # Probes run once, before the workers share the ledger.
    experiment.prepare()

    outcomes = asyncio.run(_sweep(experiment, entries, config.output.workers))

    results: list[RunResult] = []
    for (delta, seed), outcome in zip(entries, outcomes, strict=True):
        if isinstance(outcome, BaseException):
            _logger.error(
                "Sweep entry failed",
                extra={"delta": delta, "seed": seed},
                exc_info=outcome,
            )
            continue
        results.append(outcome)
        name = f"delta-{delta:g}-seed-{seed}"
        _write_json(out_dir / "entries" / f"{name}.json", _report_payload(experiment, outcome))

    rows = [
        [
            _cell(result.data.delta),
            str(result.seed),
            str(result.report.j_star),
            _cell(result.report.final_error),
            _cell(result.report.final_residual),
            str(result.report.total_lower_steps),
        ]
        for result in sorted(results, key=lambda item: (item.data.delta, item.seed))
    ]
    _write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, rows)
    _logger.info("Sweep written", extra={"entries": len(rows), "failed": len(entries) - len(rows)})
    return results


def probe(config: ExperimentConfig, out_dir: pathlib.Path | None = None) -> dict[str, Any]:
    """Every assumption probe at the initial guess, written to probes.json."""
    out_dir = pathlib.Path(out_dir or config.output.directory)
    experiment = Experiment(config)
    problem = experiment.problem
    model = problem.model
    theta = experiment.theta0
    state = problem.state(theta)
    settings = config.probes
    sampling = {"ball_radius": settings.ball_radius, "seed": settings.seed}

    reports = [
        probe_coercivity(model, problem.oracle, theta, n_pairs=settings.n_pairs, **sampling),
        probe_PL(model, problem.oracle, theta, n_points=settings.n_pairs, **sampling),
    ]
    reports.extend(
        probe_tangential_cone(
            level,
            problem,
            theta,
            n_pairs=settings.n_pairs,
            form=form,
            **sampling,
        )
        for level in ConeLevel
        for form in ConeForm
    )

    norms = {
        "M_S": sensitivity_map(problem, theta, state),
        "L": observation_map(problem),
        "M_R": reduced_map(problem, theta, state),
        "M_r": lower_derivative_map(model, theta, state),
    }
    lemmas = verify_error_lemmas(problem, theta)

    payload = {
        "config_hash": config.config_hash(),
        "probes": [report.json() for report in reports],
        "operator_norms": {
            name: dataclasses.asdict(
                estimate_operator_norm(op, settings.power_iterations, seed=settings.seed),
            )
            for name, op in norms.items()
        },
        "error_lemmas": lemmas.json(),
    }
    for report in reports:
        if not report.passed:
            _logger.warning("Probe failed", extra=report.json())

    _write_json(out_dir / "probes.json", payload)
    return payload


def _relative(left: float, right: float) -> float:
    return abs(left - right) / max(abs(left), abs(right), 1e-300)


def check_adjoint(config: ExperimentConfig, out_dir: pathlib.Path | None = None) -> dict[str, Any]:
    """Adjoint identities of F', L and S', and a finite-difference gradient check."""
    out_dir = pathlib.Path(out_dir or config.output.directory)
    experiment = Experiment(config)
    problem = experiment.problem
    model = problem.model
    ops = problem.ops
    grid = config.grid
    theta = experiment.theta0
    state = problem.state(theta)
    rng = np.random.default_rng(config.probes.seed)

    lower_errors = []
    observation_errors = []
    upper_errors = []
    for _ in range(ADJOINT_SAMPLES):
        u = state + smooth_state(grid, rng) * config.probes.ball_radius
        h = smooth_state(grid, rng)
        w = ResidualPair(rng.standard_normal((grid.nt, grid.nx)), rng.standard_normal(grid.nx))
        left = model.apply_Fprime(theta, u, h).inner(w, ops)
        right = inner(SpaceTag.CAL_V, h, model.apply_Fprime_adjoint(theta, u, w), ops)
        lower_errors.append(_relative(left, right))

        v = smooth_state(grid, rng)
        r = observe(problem.observation, smooth_state(grid, rng))
        left = problem.observation.inner(observe(problem.observation, v).values, r.values)
        right = inner(SpaceTag.CAL_U, v, observe_adjoint(problem.observation, ops, r), ops)
        observation_errors.append(_relative(left, right))

        xi = smooth_parameter(grid, theta.active, rng)
        upper_errors.append(
            _relative(*duality_pair(model, problem.oracle, theta, state, xi, v)),
        )

    data = experiment.noisy(config.noise.deltas[0], config.noise.seeds[0])
    direction = smooth_parameter(grid, theta.active, rng)
    gradient, _ = problem.gradient(theta, state, data)
    predicted = parameter_inner(ops, gradient, direction)
    step = 1e-4

    def objective(point: Parameter) -> float:
        return 0.5 * (problem.forward(point) - data).norm() ** 2

    measured = (objective(theta + direction * step) - objective(theta - direction * step)) / (
        2 * step
    )
    gradient_error = _relative(predicted, measured)

    payload = {
        "config_hash": config.config_hash(),
        "samples": ADJOINT_SAMPLES,
        "lower_identity": {"max_relative": max(lower_errors), "rtol": ADJOINT_RTOL},
        "observation_identity": {"max_relative": max(observation_errors), "rtol": ADJOINT_RTOL},
        "upper_identity": {"max_relative": max(upper_errors), "rtol": ADJOINT_RTOL},
        "gradient": {
            "predicted": predicted,
            "finite_difference": measured,
            "relative": gradient_error,
            "rtol": GRADIENT_RTOL,
        },
    }
    payload["passed"] = (
        max(lower_errors + observation_errors + upper_errors) <= ADJOINT_RTOL
        and gradient_error <= GRADIENT_RTOL
    )
    if not payload["passed"]:
        _logger.warning("Adjoint check failed", extra={"gradient_error": gradient_error})

    _write_json(out_dir / "adjoint.json", payload)
    return payload


__all__ = (
    "HISTORY_COLUMNS",
    "SWEEP_COLUMNS",
    "Experiment",
    "RunResult",
    "check_adjoint",
    "history_rows",
    "probe",
    "run",
    "sweep",
)
