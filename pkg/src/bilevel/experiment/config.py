# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

"""
Experiment configuration.

A configuration is a JSON object of named blocks. Parsing walks every block and
collects every problem before raising, so one ConfigError lists them all.
"""

from __future__ import annotations as _future_annotations

from collections.abc import Callable, Mapping
from typing import Any, TypeVar

import copy
import dataclasses
import enum
import hashlib
import json
import os
import pathlib

import numpy as np

from bilevel.errors import ConfigError, ValidationError
from bilevel.lower import LowerStoppingConfig
from bilevel.model import NonlinearityKind, NonlinearitySpec
from bilevel.observe import ObservationKind, ObservationSpec
from bilevel.reference import SolverConfig
from bilevel.spaces import DEFAULT_A_MIN, Component, SpaceTimeGrid
from bilevel.upper import ConstantsLedger, StoppingRule

E = TypeVar("E", bound=enum.Enum)

CONFIG_ENV = "BILEVEL_CONFIG"
OUTPUT_ENV = "BILEVEL_OUTPUT_DIR"


def resources() -> pathlib.Path:
    return (pathlib.Path(__file__).parent / "resources").resolve()


class SchemeMode(enum.StrEnum):
    BILEVEL = "bilevel"
    SINGLE = "single"


class TruthKind(enum.StrEnum):
    MANUFACTURED = "manufactured"
    EXPLICIT = "explicit"


class SourceMode(enum.StrEnum):
    DISCRETE = "discrete"
    ANALYTIC = "analytic"


class _Block:
    """Typed access to one JSON object, recording problems under a dotted path."""

    __slots__ = ("data", "path", "problems")

    def __init__(self, data: object, path: str, problems: list[str]) -> None:
        self.path = path
        self.problems = problems
        if data is None:
            data = {}
        if not isinstance(data, Mapping):
            self.fail("", "must be an object")
            data = {}
        self.data = data

    def fail(self, key: str, message: str) -> None:
        where = ".".join(part for part in (self.path, key) if part) or "config"
        self.problems.append(f"{where}: {message}")

    def unknown(self, *known: str) -> None:
        for key in sorted(set(self.data) - set(known)):
            self.fail(key, "unknown key")

    def block(self, key: str) -> _Block:
        return _Block(self.data.get(key), f"{self.path}.{key}" if self.path else key, self.problems)

    def number(  # noqa: PLR0913
        self,
        key: str,
        default: float,
        *,
        minimum: float | None = None,
        strict: bool = False,
        maximum: float | None = None,
    ) -> float:
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int | float):
            self.fail(key, f"must be a number, got {value!r}")
            return default
        if minimum is not None and (value <= minimum if strict else value < minimum):
            self.fail(key, f"must be {'>' if strict else '>='} {minimum}, got {value}")
        if maximum is not None and value >= maximum:
            self.fail(key, f"must be < {maximum}, got {value}")
        return float(value)

    def integer(self, key: str, default: int, *, minimum: int | None = None) -> int:
        value = self.data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(key, f"must be an integer, got {value!r}")
            return default
        if minimum is not None and value < minimum:
            self.fail(key, f"must be >= {minimum}, got {value}")
        return value

    def flag(self, key: str, default: bool) -> bool:  # noqa: FBT001
        value = self.data.get(key, default)
        if not isinstance(value, bool):
            self.fail(key, f"must be true or false, got {value!r}")
            return default
        return value

    def choice(self, key: str, default: E, kind: type[E]) -> E:
        value = self.data.get(key, default.value)
        try:
            return kind(value)
        except ValueError:
            options = ", ".join(str(member.value) for member in kind)
            self.fail(key, f"must be one of {options}, got {value!r}")
            return default

    def numbers(self, key: str, default: list[float] | None = None) -> list[float] | None:
        value = self.data.get(key, default)
        if value is None:
            return None
        if not isinstance(value, list) or not all(
            isinstance(item, int | float) and not isinstance(item, bool) for item in value
        ):
            self.fail(key, "must be a list of numbers")
            return default
        return [float(item) for item in value]

    def field(self, key: str, default: float | list[float], nx: int) -> np.ndarray:
        """A spatial field given as a constant or as one value per interior node."""
        value = self.data.get(key, default)
        if isinstance(value, int | float) and not isinstance(value, bool):
            return np.full(nx, float(value))
        if isinstance(value, list) and len(value) == nx:
            try:
                return np.asarray(value, dtype=np.float64)
            except (TypeError, ValueError):
                pass
        self.fail(key, f"must be a number or a list of {nx} numbers")
        return np.full(nx, float(default) if isinstance(default, int | float) else 1.0)

    def attempt(self, key: str, build: Callable[[], Any]) -> Any:  # noqa: ANN401
        try:
            return build()
        except (ValidationError, TypeError) as err:
            self.fail(key, str(err))
            return None


@dataclasses.dataclass(frozen=True)
class ModelBlock:
    nonlinearity: NonlinearitySpec
    a: np.ndarray
    c: np.ndarray
    active: frozenset[Component]
    a_min: float = DEFAULT_A_MIN

    def json(self) -> dict[str, Any]:
        return {
            "nonlinearity": self.nonlinearity.json(),
            "a": self.a.tolist(),
            "c": self.c.tolist(),
            "active": sorted(self.active),
            "a_min": self.a_min,
        }


@dataclasses.dataclass(frozen=True)
class TruthBlock:
    kind: TruthKind = TruthKind.MANUFACTURED
    source: SourceMode = SourceMode.DISCRETE
    phi: list[float] | None = None
    u0: list[float] | None = None

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class NoiseBlock:
    deltas: tuple[float, ...]
    seeds: tuple[int, ...]

    def json(self) -> dict[str, Any]:
        return {"delta": list(self.deltas), "seeds": list(self.seeds)}


@dataclasses.dataclass(frozen=True)
class SchemeBlock:
    mode: SchemeMode
    rule: StoppingRule
    step_scale: float
    max_iter: int
    ledger: dict[str, float]
    lower: LowerStoppingConfig
    solver: SolverConfig

    def json(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "rule": self.rule.value,
            "step_scale": self.step_scale,
            "max_iter": self.max_iter,
            "ledger": dict(sorted(self.ledger.items())),
            "lower": self.lower.json(),
            "solver": dataclasses.asdict(self.solver),
        }


@dataclasses.dataclass(frozen=True)
class ProbeBlock:
    n_pairs: int = 20
    ball_radius: float = 0.1
    power_iterations: int = 100
    coercivity_safety: float = 1.5
    seed: int = 0
    calibrate: bool = True
    pilot_steps: int = 200

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    trajectory: bool = False
    workers: int = 4

    def json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True, eq=False)
class ExperimentConfig:
    grid: SpaceTimeGrid
    model: ModelBlock
    truth: TruthBlock
    observation: ObservationSpec
    noise: NoiseBlock
    scheme: SchemeBlock
    probes: ProbeBlock
    output: OutputBlock
    raw: dict[str, Any]

    @classmethod
    def from_json(cls, data: object) -> ExperimentConfig:  # noqa: C901, PLR0915
        problems: list[str] = []
        root = _Block(data, "", problems)
        root.unknown("grid", "model", "truth", "observation", "noise", "scheme", "probes", "output")

        # Grid
        block = root.block("grid")
        block.unknown("nx", "nt", "length", "T")
        grid = block.attempt(
            "",
            lambda: SpaceTimeGrid(
                nx=block.integer("nx", 49, minimum=1),
                nt=block.integer("nt", 100, minimum=1),
                length=block.number("length", 1.0, minimum=0, strict=True),
                final_time=block.number("T", 0.5, minimum=0, strict=True),
            ),
        )
        nx = grid.nx if grid is not None else 1

        # Model
        block = root.block("model")
        block.unknown("nonlinearity", "a", "c", "active", "a_min")
        law = block.block("nonlinearity")
        law.unknown("kind", "lipschitz", "monotone")
        nonlinearity = law.attempt(
            "",
            lambda: NonlinearitySpec(
                kind=law.choice("kind", NonlinearityKind.MONOTONE_CUBIC, NonlinearityKind),
                lipschitz=law.number("lipschitz", 1.0, minimum=0),
                monotone=law.number("monotone", 0.0, minimum=0),
            ),
        )
        a_min = block.number("a_min", DEFAULT_A_MIN, minimum=0, strict=True)
        a = block.field("a", 1.0, nx)
        if np.any(a < a_min):
            block.fail("a", f"must satisfy a >= a_min (a_min = {a_min:g})")
        c = block.field("c", 1.0, nx)
        names = block.data.get("active", ["phi", "u0"])
        active: frozenset[Component] = frozenset()
        if not isinstance(names, list) or not names:
            block.fail("active", "must be a non-empty list of components")
        else:
            try:
                active = frozenset(Component(name) for name in names)
            except ValueError:
                block.fail("active", f"unknown component in {names!r}")

        # Truth
        block = root.block("truth")
        block.unknown("kind", "source", "phi", "u0")
        truth = TruthBlock(
            kind=block.choice("kind", TruthKind.MANUFACTURED, TruthKind),
            source=block.choice("source", SourceMode.DISCRETE, SourceMode),
            phi=block.numbers("phi"),
            u0=block.numbers("u0"),
        )
        if truth.kind is TruthKind.EXPLICIT:
            for key in ("phi", "u0"):
                values = getattr(truth, key)
                if values is None or len(values) != nx:
                    block.fail(key, f"explicit truth needs a list of {nx} numbers")
        if truth.source is SourceMode.ANALYTIC and len(set(a.tolist())) > 1:
            block.fail("source", "analytic sources need a spatially constant a")

        # Observation
        block = root.block("observation")
        block.unknown("kind", "count", "times", "intervals")
        kind = block.choice("kind", ObservationKind.SNAPSHOTS, ObservationKind)
        observation = None
        if grid is not None:
            observation = block.attempt("", lambda: _observation(block, grid, kind))

        # Noise
        block = root.block("noise")
        block.unknown("delta", "seeds")
        deltas = block.numbers("delta", [1e-2]) or []
        if not deltas:
            block.fail("delta", "must list at least one noise level")
        if any(delta < 0 for delta in deltas):
            block.fail("delta", "noise levels must be non-negative")
        seeds = block.data.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or not all(
            isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0 for seed in seeds
        ):
            block.fail("seeds", "must be a non-empty list of non-negative integers")
            seeds = [0]

        # Scheme
        block = root.block("scheme")
        block.unknown("mode", "rule", "step_scale", "max_iter", "ledger", "lower", "solver")
        rule = block.choice("rule", StoppingRule.PRIOR, StoppingRule)
        if rule is StoppingRule.PRIOR and any(delta <= 0 for delta in deltas):
            block.fail("rule", "the prior rule needs every noise level to be positive")
        ledger = block.data.get("ledger", {})
        known = {field.name for field in dataclasses.fields(ConstantsLedger)}
        if not isinstance(ledger, dict):
            block.fail("ledger", "must be an object of constant overrides")
            ledger = {}
        for key, value in ledger.items():
            if key not in known:
                block.fail(f"ledger.{key}", "unknown constant")
            elif isinstance(value, bool) or not isinstance(value, int | float):
                block.fail(f"ledger.{key}", f"must be a number, got {value!r}")
        lower = block.block("lower")
        lower_fields = {field.name for field in dataclasses.fields(LowerStoppingConfig)}
        lower.unknown(*lower_fields)
        lower_cfg = lower.attempt(
            "",
            lambda: LowerStoppingConfig(
                **{key: value for key, value in lower.data.items() if key in lower_fields},
            ),
        )
        solver_block = block.block("solver")
        solver_block.unknown("newton_tol", "newton_max")
        solver = solver_block.attempt(
            "",
            lambda: SolverConfig(
                newton_tol=solver_block.number("newton_tol", 1e-12, minimum=0, strict=True),
                newton_max=solver_block.integer("newton_max", 25, minimum=1),
            ),
        )
        scheme = SchemeBlock(
            mode=block.choice("mode", SchemeMode.BILEVEL, SchemeMode),
            rule=rule,
            step_scale=block.number("step_scale", 1.0, minimum=0, strict=True, maximum=2),
            max_iter=block.integer("max_iter", 200, minimum=0),
            ledger={key: float(value) for key, value in ledger.items()},
            lower=lower_cfg or LowerStoppingConfig(),
            solver=solver or SolverConfig(),
        )

        # Probes and output
        block = root.block("probes")
        block.unknown(*(field.name for field in dataclasses.fields(ProbeBlock)))
        probes = ProbeBlock(
            n_pairs=block.integer("n_pairs", 20, minimum=10),
            ball_radius=block.number("ball_radius", 0.1, minimum=0, strict=True),
            power_iterations=block.integer("power_iterations", 100, minimum=10),
            coercivity_safety=block.number("coercivity_safety", 1.5, minimum=1),
            seed=block.integer("seed", 0, minimum=0),
            calibrate=block.flag("calibrate", default=True),
            pilot_steps=block.integer("pilot_steps", 200, minimum=20),
        )
        block = root.block("output")
        block.unknown("directory", "trajectory", "workers")
        directory = block.data.get("directory", "out")
        if not isinstance(directory, str) or not directory:
            block.fail("directory", "must be a non-empty path")
            directory = "out"
        output = OutputBlock(
            directory=directory,
            trajectory=block.flag("trajectory", default=False),
            workers=block.integer("workers", 4, minimum=1),
        )

        if problems:
            raise ConfigError(problems)

        return cls(
            grid=grid,
            model=ModelBlock(nonlinearity, a, c, active, a_min),
            truth=truth,
            observation=observation,
            noise=NoiseBlock(tuple(deltas), tuple(seeds)),
            scheme=scheme,
            probes=probes,
            output=output,
            raw=copy.deepcopy(dict(data)),  # type: ignore[arg-type]
        )

    def json(self) -> dict[str, Any]:
        observation = self.observation.json()
        observation.pop("grid")
        return {
            "grid": {
                "nx": self.grid.nx,
                "nt": self.grid.nt,
                "length": self.grid.length,
                "T": self.grid.final_time,
            },
            "model": self.model.json(),
            "truth": self.truth.json(),
            "observation": observation,
            "noise": self.noise.json(),
            "scheme": self.scheme.json(),
            "probes": self.probes.json(),
            "output": self.output.json(),
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        max_iter: int | None = None,
        output: str | pathlib.Path | None = None,
    ) -> ExperimentConfig:
        data = copy.deepcopy(self.raw)
        if seed is not None:
            data.setdefault("noise", {})["seeds"] = [seed]
            data.setdefault("probes", {})["seed"] = seed
        if max_iter is not None:
            data.setdefault("scheme", {})["max_iter"] = max_iter
        if output is not None:
            data.setdefault("output", {})["directory"] = str(output)
        return ExperimentConfig.from_json(data)


def _observation(block: _Block, grid: SpaceTimeGrid, kind: ObservationKind) -> ObservationSpec:
    match kind:
        case ObservationKind.FULL:
            return ObservationSpec.full(grid)
        case ObservationKind.SNAPSHOTS:
            times = block.numbers("times")
            if times is not None:
                spec = ObservationSpec.snapshots(grid, times)
            else:
                count = block.integer("count", 10, minimum=1)
                spec = ObservationSpec.equispaced_snapshots(grid, count)
            if not spec.has_adjoint:
                raise ValidationError("snapshot times must lie in (0, T]")
            return spec
        case ObservationKind.AVERAGES:
            intervals = block.data.get("intervals", [[0.2, 0.4], [0.6, 0.8]])
            if not isinstance(intervals, list) or not all(
                isinstance(pair, list) and len(pair) == 2 for pair in intervals  # noqa: PLR2004
            ):
                raise ValidationError("intervals must be a list of [low, high] pairs")
            return ObservationSpec.interval_windows(
                grid,
                [(float(low), float(high)) for low, high in intervals],
            )


def load_config(path: str | pathlib.Path | None = None) -> ExperimentConfig:
    """Read a configuration file; without a path, BILEVEL_CONFIG or the bundled default."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or resources() / "default.json"
    with pathlib.Path(path).open(encoding="utf-8") as file:
        data = json.load(file)
    return ExperimentConfig.from_json(data)


__all__ = (
    "CONFIG_ENV",
    "OUTPUT_ENV",
    "ExperimentConfig",
    "ModelBlock",
    "NoiseBlock",
    "OutputBlock",
    "ProbeBlock",
    "SchemeBlock",
    "SchemeMode",
    "SourceMode",
    "TruthBlock",
    "TruthKind",
    "load_config",
    "resources",
)
