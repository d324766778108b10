# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from .config import ExperimentConfig, load_config
from .runner import Experiment, RunResult, check_adjoint, probe, run, sweep

__all__ = (
    "Experiment",
    "ExperimentConfig",
    "RunResult",
    "check_adjoint",
    "load_config",
    "probe",
    "run",
    "sweep",
)
