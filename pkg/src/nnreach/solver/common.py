"""Shared solver types: options, statuses, solutions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED_OBJECTIVE = "unbounded_objective"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverOptions:
    """Numerical knobs shared by both solvers.

    strict_margin shifts every matrix inequality to F(y) ⪯ -margin*I inside
    the solver, so returned points satisfy the original inequality with
    headroom; it is small enough to be invisible at reporting tolerances.
    """

    tol_gap: float = 1e-8
    tol_feas: float = 1e-7
    max_iter: int = 200
    strict_margin: float = 1e-9
    step_fraction: float = 0.99
    stall_window: int = 10
    stall_factor: float = 10.0
    verbose: int = 0

    def replace(self, **kw) -> "SolverOptions":
        data = self.__dict__ | kw
        return SolverOptions(**data)


@dataclass
class Solution:
    """Solver outcome. ``y`` and ``objective`` are meaningful for OPTIMAL and
    (best iterate) MAX_ITERATIONS; ``duals`` carries certificates or dual
    variables used by the solution checker."""

    status: SolveStatus
    y: np.ndarray | None = None
    objective: float | None = None
    diagnostics: dict = field(default_factory=dict)
    duals: dict = field(default_factory=dict)
