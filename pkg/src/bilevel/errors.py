# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from collections.abc import Iterable


class BilevelError(Exception):
    pass


class ValidationError(BilevelError, ValueError):
    """A precondition of an operation was not met."""


class ConfigError(ValidationError):
    problems: list[str]

    def __init__(self, problems: Iterable[str]) -> None:
        self.problems = list(problems)
        super().__init__(
            f"{len(self.problems)} configuration problem(s): " + "; ".join(self.problems),
        )


class SolverError(BilevelError, RuntimeError):
    pass


class NewtonDivergenceError(SolverError):
    step: int
    residual: float

    def __init__(self, step: int, residual: float, reason: str = "") -> None:
        self.step = step
        self.residual = residual
        super().__init__(
            f"Newton iteration failed at time step {step} (residual {residual:.3e}) {reason}",
        )


class RepresenterError(SolverError):
    iterations: int
    residual: float

    def __init__(self, iterations: int, residual: float) -> None:
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG on the space-time Gram system did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e}); the grid is ill-conditioned",
        )


class LowerDivergenceError(SolverError):
    step: int
    residual: float

    def __init__(self, step: int, residual: float, reason: str) -> None:
        self.step = step
        self.residual = residual
        super().__init__(f"lower-level iteration aborted at k={step}: {reason}")


class UpperDivergenceError(SolverError):
    iteration: int
    lower_steps: int

    def __init__(self, iteration: int, lower_steps: int, reason: str) -> None:
        self.iteration = iteration
        self.lower_steps = lower_steps
        super().__init__(f"upper iteration j={iteration} (K={lower_steps}): {reason}")


class InfeasibleRuleError(BilevelError, ArithmeticError):
    denominator: float

    def __init__(self, denominator: float) -> None:
        self.denominator = denominator
        super().__init__(
            f"posterior rule infeasible for these constants (denominator {denominator:.4g} <= 0);"
            " shrink gamma0 or eps_split",
        )


__all__ = (
    "BilevelError",
    "ConfigError",
    "InfeasibleRuleError",
    "LowerDivergenceError",
    "NewtonDivergenceError",
    "RepresenterError",
    "SolverError",
    "UpperDivergenceError",
    "ValidationError",
)
