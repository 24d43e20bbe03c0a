"""Interior-point solvers for the certificate programs.

``solve_linear`` handles linear objectives over LMI and sign constraints with
a homogeneous self-dual predictor-corrector method; ``solve_maxdet`` handles
max-log-det objectives with a barrier method; ``check_solution`` re-verifies
either solver's output independently.
"""

from .common import Solution, SolveStatus, SolverOptions
from .check import CheckReport, check_solution
from .ipm import solve_linear
from .maxdet import solve_maxdet

__all__ = [
    "CheckReport",
    "Solution",
    "SolveStatus",
    "SolverOptions",
    "check_solution",
    "solve_linear",
    "solve_maxdet",
]
