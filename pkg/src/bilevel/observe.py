# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from collections.abc import Sequence
from typing import Any

import csv
import dataclasses
import enum
import json
import pathlib

import numpy as np

from bilevel.errors import ValidationError
from bilevel.spaces import Array, DiscreteOperators, SpaceTimeGrid, StateField

_GRID_TOLERANCE = 1e-9


class ObservationKind(enum.StrEnum):
    FULL = "full"
    SNAPSHOTS = "snapshots"
    AVERAGES = "averages"


@dataclasses.dataclass(frozen=True, eq=False)
class ObservationSpec:
    """
    The observation operator L and the inner product of its data space.

    full: the field on slices 1..nt, time- and mass-weighted.
    snapshots: the field at chosen grid slices, mass-weighted per snapshot.
    averages: window integrals w_j . M u^n on slices 1..nt, time-weighted.
    """

    kind: ObservationKind
    grid: SpaceTimeGrid
    slices: tuple[int, ...] = ()
    windows: Array | None = None

    @classmethod
    def full(cls, grid: SpaceTimeGrid) -> ObservationSpec:
        return cls(ObservationKind.FULL, grid)

    @classmethod
    def snapshots(cls, grid: SpaceTimeGrid, times: Sequence[float]) -> ObservationSpec:
        if not times:
            raise ValidationError("snapshot observation needs at least one time")

        slices = []
        for time in times:
            position = float(time) / grid.ht
            index = round(position)
            if abs(position - index) > _GRID_TOLERANCE * max(1.0, position):
                raise ValidationError(f"snapshot time {time} is not on the time grid")
            if not 0 <= index <= grid.nt:
                raise ValidationError(f"snapshot time {time} outside [0, {grid.final_time}]")
            slices.append(index)

        return cls(ObservationKind.SNAPSHOTS, grid, slices=tuple(slices))

    @classmethod
    def equispaced_snapshots(cls, grid: SpaceTimeGrid, count: int = 10) -> ObservationSpec:
        return cls.snapshots(grid, [grid.final_time * k / count for k in range(1, count + 1)])

    @classmethod
    def averages(cls, grid: SpaceTimeGrid, windows: Array) -> ObservationSpec:
        windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if windows.shape[1] != grid.nx:
            raise ValidationError(f"windows must have {grid.nx} columns, got {windows.shape}")
        if np.any(windows < 0):
            raise ValidationError("observation windows must be non-negative")

        mass = grid.hx * windows.sum(axis=1)
        if np.any(mass <= 0):
            raise ValidationError("every observation window needs positive mass")

        return cls(ObservationKind.AVERAGES, grid, windows=windows / mass[:, None])

    @classmethod
    def interval_windows(
        cls,
        grid: SpaceTimeGrid,
        intervals: Sequence[tuple[float, float]],
    ) -> ObservationSpec:
        nodes = grid.nodes
        windows = np.array(
            [((nodes >= low) & (nodes <= high)).astype(np.float64) for low, high in intervals],
        )
        return cls.averages(grid, windows)

    @property
    def times(self) -> list[float]:
        return [index * self.grid.ht for index in self.slices]

    @property
    def has_adjoint(self) -> bool:
        """The t = 0 slice carries no calU weight, so a snapshot there has no adjoint."""
        return 0 not in self.slices

    @property
    def value_shape(self) -> tuple[int, int]:
        match self.kind:
            case ObservationKind.FULL:
                return (self.grid.nt, self.grid.nx)
            case ObservationKind.SNAPSHOTS:
                return (len(self.slices), self.grid.nx)
            case ObservationKind.AVERAGES:
                assert self.windows is not None  # noqa: S101
                return (self.grid.nt, self.windows.shape[0])

    @property
    def sample_times(self) -> list[float]:
        if self.kind is ObservationKind.SNAPSHOTS:
            return self.times
        return [n * self.grid.ht for n in range(1, self.grid.nt + 1)]

    def apply(self, values: Array) -> Array:
        match self.kind:
            case ObservationKind.FULL:
                return values[1:].copy()
            case ObservationKind.SNAPSHOTS:
                return values[list(self.slices)].copy()
            case ObservationKind.AVERAGES:
                assert self.windows is not None  # noqa: S101
                return self.grid.hx * values[1:] @ self.windows.T

    def inner(self, left: Array, right: Array) -> float:
        left, right = np.asarray(left), np.asarray(right)
        if left.shape != self.value_shape or right.shape != self.value_shape:
            raise ValidationError(
                f"data shapes {left.shape}/{right.shape} != {self.value_shape} ({self.kind})",
            )

        product = float(np.sum(left * right))
        match self.kind:
            case ObservationKind.FULL:
                return self.grid.ht * self.grid.hx * product
            case ObservationKind.SNAPSHOTS:
                return self.grid.hx * product
            case ObservationKind.AVERAGES:
                return self.grid.ht * product

    def adjoint(self, ops: DiscreteOperators, data: Array) -> Array:
        grid = self.grid
        data = np.asarray(data, dtype=np.float64)
        if data.shape != self.value_shape:
            raise ValidationError(f"data shape {data.shape} != {self.value_shape}")

        out = np.zeros(grid.shape)
        match self.kind:
            case ObservationKind.FULL:
                out[1:] = ops.riesz.solve(grid.hx * data)
            case ObservationKind.SNAPSHOTS:
                if not self.has_adjoint:
                    raise ValidationError("a snapshot at t = 0 has no adjoint into calU")
                for index, row in zip(self.slices, data, strict=True):
                    out[index] += ops.riesz.solve(grid.hx * row) / grid.ht
            case ObservationKind.AVERAGES:
                assert self.windows is not None  # noqa: S101
                out[1:] = ops.riesz.solve(grid.hx * data @ self.windows)
        return out

    def json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "grid": self.grid.json(),
            "times": self.times,
            "windows": None if self.windows is None else self.windows.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> ObservationSpec:
        grid = SpaceTimeGrid(**data["grid"])
        match ObservationKind(data["kind"]):
            case ObservationKind.FULL:
                return cls.full(grid)
            case ObservationKind.SNAPSHOTS:
                return cls.snapshots(grid, data["times"])
            case ObservationKind.AVERAGES:
                return cls.averages(grid, np.asarray(data["windows"]))


@dataclasses.dataclass(frozen=True, eq=False)
class ObservationData:
    values: Array
    spec: ObservationSpec
    delta: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if np.shape(self.values) != self.spec.value_shape:
            raise ValidationError(
                f"data shape {np.shape(self.values)} != {self.spec.value_shape}",
            )
        if self.delta < 0:
            raise ValidationError(f"noise level must be non-negative ({self.delta})")

    def norm(self) -> float:
        return float(np.sqrt(max(self.spec.inner(self.values, self.values), 0.0)))

    def __sub__(self, other: ObservationData) -> ObservationData:
        return ObservationData(self.values - other.values, self.spec)

    def __add__(self, other: ObservationData) -> ObservationData:
        return ObservationData(self.values + other.values, self.spec)

    def __mul__(self, scale: float) -> ObservationData:
        return ObservationData(scale * self.values, self.spec)

    __rmul__ = __mul__


def observe(spec: ObservationSpec, u: StateField) -> ObservationData:
    if u.grid != spec.grid:
        raise ValidationError("state and observation live on different grids")
    return ObservationData(spec.apply(u.values), spec)


def observe_adjoint(
    spec: ObservationSpec,
    ops: DiscreteOperators,
    r: ObservationData | Array,
) -> StateField:
    values = r.values if isinstance(r, ObservationData) else r
    return StateField(spec.adjoint(ops, values), spec.grid)


def add_noise(y: ObservationData, delta: float, seed: int) -> ObservationData:
    """Perturb y by a seeded Gaussian direction scaled to exactly delta in the data norm."""
    if delta < 0:
        raise ValidationError(f"noise level must be non-negative ({delta})")
    if delta == 0:
        return ObservationData(y.values.copy(), y.spec, 0.0, seed)

    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(y.spec.value_shape)
    scale = np.sqrt(y.spec.inner(direction, direction))
    return ObservationData(y.values + delta * direction / scale, y.spec, float(delta), seed)


def _sidecar(path: pathlib.Path) -> pathlib.Path:
    if path.suffix.lower() == ".json":
        raise ValidationError(f"observation data path {path} would collide with its .json sidecar")
    return path.with_suffix(".json")


def save_observation(data: ObservationData, path: pathlib.Path) -> pathlib.Path:
    """Write one CSV row per time sample, plus a JSON sidecar with spec, delta and seed."""
    path = pathlib.Path(path)
    sidecar = _sidecar(path)
    columns = data.values.shape[1]
    label = "w" if data.spec.kind is ObservationKind.AVERAGES else "x"

    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["t", *(f"{label}{i + 1}" for i in range(columns))])
        for time, row in zip(data.spec.sample_times, data.values, strict=True):
            writer.writerow([repr(float(time)), *(repr(float(value)) for value in row)])

    with sidecar.open("w", encoding="utf-8") as handle:
        json.dump(
            {"spec": data.spec.json(), "delta": data.delta, "seed": data.seed},
            handle,
            indent=2,
            sort_keys=True,
        )
        handle.write("\n")

    return sidecar


def load_observation(path: pathlib.Path) -> ObservationData:
    path = pathlib.Path(path)
    with _sidecar(path).open(encoding="utf-8") as handle:
        meta = json.load(handle)

    spec = ObservationSpec.from_json(meta["spec"])
    with path.open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))

    values = np.array([[float(value) for value in row[1:]] for row in rows[1:]])
    return ObservationData(values.reshape(spec.value_shape), spec, meta["delta"], meta["seed"])


__all__ = (
    "ObservationData",
    "ObservationKind",
    "ObservationSpec",
    "add_noise",
    "load_observation",
    "observe",
    "observe_adjoint",
    "save_observation",
)
