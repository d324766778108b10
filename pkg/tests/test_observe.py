# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

import numpy as np
import pytest

from bilevel.diagnostics import smooth_state
from bilevel.errors import ValidationError
from bilevel.experiment.fixtures import manufactured_state
from bilevel.observe import (
    ObservationData,
    ObservationSpec,
    add_noise,
    load_observation,
    observe,
    observe_adjoint,
    save_observation,
)
from bilevel.problem import InverseProblem
from bilevel.reference import ReferenceSolver
from bilevel.spaces import SpaceTag, StateField, inner


@pytest.fixture(params=["full", "snapshots", "averages"])
def spec(request, grid):
    match request.param:
        case "full":
            return ObservationSpec.full(grid)
        case "snapshots":
            return ObservationSpec.equispaced_snapshots(grid, 5)
        case _:
            return ObservationSpec.interval_windows(grid, [(0.2, 0.4), (0.5, 0.9)])


class TestObserve:
    def test_zero_state(self, spec, grid):
        assert not np.any(observe(spec, StateField.zeros(grid)).values)

    def test_full_norm_is_l2(self, grid, rng):
        u = smooth_state(grid, rng)
        y = observe(ObservationSpec.full(grid), u)
        expected = np.sqrt(grid.ht * grid.hx * np.sum(u.values[1:] ** 2))
        np.testing.assert_allclose(y.norm(), expected, rtol=1e-12)

    def test_snapshots_of_manufactured_state(self, grid):
        spec = ObservationSpec.snapshots(grid, [0.0, grid.final_time])
        y = observe(spec, manufactured_state(grid))
        mode = np.sin(np.pi * grid.nodes)
        np.testing.assert_allclose(y.values[0], mode, atol=1e-14)
        np.testing.assert_allclose(y.values[1], np.exp(-grid.final_time) * mode, atol=1e-14)
        assert not spec.has_adjoint

    def test_snapshot_off_grid(self, grid):
        with pytest.raises(ValidationError, match="not on the time grid"):
            ObservationSpec.snapshots(grid, [grid.ht / 3])

    def test_snapshot_outside_window(self, grid):
        with pytest.raises(ValidationError, match="outside"):
            ObservationSpec.snapshots(grid, [2 * grid.final_time])

    def test_negative_window(self, grid):
        windows = np.ones((1, grid.nx))
        windows[0, 0] = -1.0
        with pytest.raises(ValidationError, match="non-negative"):
            ObservationSpec.averages(grid, windows)

    def test_windows_are_normalised(self, grid):
        spec = ObservationSpec.interval_windows(grid, [(0.0, 1.0)])
        y = observe(spec, StateField(np.ones(grid.shape), grid))
        np.testing.assert_allclose(y.values, 1.0, rtol=1e-12)

    def test_other_grid_rejected(self, grid):
        other = grid.refined()
        with pytest.raises(ValidationError, match="different grids"):
            observe(ObservationSpec.full(grid), StateField.zeros(other))

    def test_initial_snapshot_cannot_drive_inversion(self, linear_model):
        spec = ObservationSpec.snapshots(linear_model.grid, [0.0, 0.5])
        with pytest.raises(ValidationError, match="t = 0"):
            InverseProblem(linear_model, ReferenceSolver(linear_model), spec)


class TestAdjoint:
    def test_adjoint_identity(self, spec, linear_model, rng):
        grid = linear_model.grid
        ops = linear_model.ops
        for _ in range(20):
            u = smooth_state(grid, rng)
            r = ObservationData(rng.standard_normal(spec.value_shape), spec)
            left = spec.inner(observe(spec, u).values, r.values)
            right = inner(SpaceTag.CAL_U, u, observe_adjoint(spec, ops, r), ops)
            np.testing.assert_allclose(left, right, rtol=1e-10, atol=1e-13)

    def test_zero_residual(self, spec, linear_model):
        back = observe_adjoint(spec, linear_model.ops, np.zeros(spec.value_shape))
        assert not np.any(back.values)

    def test_initial_slice_untouched(self, spec, linear_model, rng):
        r = rng.standard_normal(spec.value_shape)
        back = observe_adjoint(spec, linear_model.ops, r)
        assert not np.any(back.values[0])


class TestNoise:
    def test_zero_noise(self, spec, grid, rng):
        y = observe(spec, smooth_state(grid, rng))
        noisy = add_noise(y, 0.0, seed=3)
        np.testing.assert_array_equal(noisy.values, y.values)
        assert noisy.delta == 0.0

    @pytest.mark.parametrize("delta", [1e-1, 1e-2, 1e-3])
    def test_exact_noise_level(self, spec, grid, rng, delta):
        y = observe(spec, smooth_state(grid, rng))
        noisy = add_noise(y, delta, seed=11)
        np.testing.assert_allclose((noisy - y).norm(), delta, rtol=1e-12)
        assert noisy.delta == delta

    def test_seeded(self, spec, grid, rng):
        y = observe(spec, smooth_state(grid, rng))
        np.testing.assert_array_equal(add_noise(y, 0.1, 5).values, add_noise(y, 0.1, 5).values)
        assert not np.array_equal(add_noise(y, 0.1, 5).values, add_noise(y, 0.1, 6).values)

    def test_negative_noise(self, spec, grid):
        y = observe(spec, StateField.zeros(grid))
        with pytest.raises(ValidationError, match="non-negative"):
            add_noise(y, -1.0, 0)


class TestFiles:
    def test_save_and_load(self, spec, grid, rng, tmp_path):
        y = add_noise(observe(spec, smooth_state(grid, rng)), 0.01, seed=2)
        path = tmp_path / "data.csv"
        sidecar = save_observation(y, path)

        assert sidecar == tmp_path / "data.json"
        header = path.read_text(encoding="utf-8").splitlines()[0].split(",")
        assert header[0] == "t"
        assert len(header) == spec.value_shape[1] + 1

        loaded = load_observation(path)
        np.testing.assert_array_equal(loaded.values, y.values)
        assert loaded.spec.kind is spec.kind
        assert loaded.delta == pytest.approx(0.01)
        assert loaded.seed == 2

    def test_json_data_path_rejected(self, spec, grid, tmp_path):
        y = observe(spec, StateField.zeros(grid))
        path = tmp_path / "data.json"
        with pytest.raises(ValidationError, match="sidecar"):
            save_observation(y, path)
        assert not path.exists()

    def test_one_time_per_row(self, spec, grid):
        assert len(spec.sample_times) == spec.value_shape[0]
        assert spec.sample_times == sorted(spec.sample_times)
