"""Post-hoc verification of solver output against the original problem data.

Solutions carry certificate material — dual matrices on the linear path, the
barrier gap bound and final t on the determinant path — so optimality and
feasibility can be re-verified here from the raw problem arrays, without
trusting the solver's internal bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..assembly import LinearObjective, LmiProblem, MaxdetObjective
from .common import Solution, SolveStatus, SolverOptions
from .maxdet import _DELTA_CERT, _Barrier, certified_gap_bound


@dataclass
class CheckReport:
    """Outcome of re-verifying a solution.

    ``ok`` is True only for an OPTIMAL solution whose constraint residuals,
    certificate residuals, and duality gap all pass the tolerances. The
    numeric fields are populated whenever they are computable so failed
    checks still carry diagnostics.
    """

    ok: bool = True
    messages: list[str] = field(default_factory=list)
    max_eig: float | None = None
    sign_violation: float | None = None
    gap: float | None = None
    stationarity: float | None = None

    def fail(self, msg: str) -> None:
        self.ok = False
        self.messages.append(msg)


def _feasibility(report: CheckReport, problem: LmiProblem, y: np.ndarray, feas_tol: float) -> None:
    if problem.f0:
        worst = -np.inf
        for k in range(problem.n_blocks):
            worst = max(worst, float(np.linalg.eigvalsh(problem.materialize(y, k))[-1]))
        report.max_eig = worst
        if worst > feas_tol:
            report.fail(f"constraint block exceeds PSD tolerance: max eig {worst:.3e}")
    if problem.g.shape[0]:
        viol = float(np.max(problem.ineq_residual(y)))
        report.sign_violation = max(viol, 0.0)
        if viol > feas_tol:
            report.fail(f"sign constraint violated by {viol:.3e}")


def _check_linear(
    report: CheckReport,
    problem: LmiProblem,
    sol: Solution,
    feas_tol: float,
    gap_tol: float,
) -> None:
    c = problem.objective.c
    pobj = float(c @ sol.y)
    if sol.objective is not None and abs(pobj - sol.objective) > 1e-9 * (1.0 + abs(pobj)):
        report.fail(
            f"reported objective {sol.objective:.12g} differs from recomputed {pobj:.12g}"
        )
    duals = sol.duals or {}
    xs = duals.get("X")
    x_lp = duals.get("x_lp")
    if xs is None or x_lp is None:
        report.fail("solution carries no dual certificate")
        return
    for k, x in enumerate(xs):
        lo = float(np.linalg.eigvalsh(x)[0])
        if lo < -feas_tol:
            report.fail(f"dual matrix {k} is not PSD: min eig {lo:.3e}")
    if x_lp.size and float(x_lp.min()) < -feas_tol:
        report.fail(f"dual sign multiplier negative: {float(x_lp.min()):.3e}")

    # Stationarity: c_i + sum_k <F_k[i], X_k> + (G' x_lp)_i = 0.
    resid = c.copy()
    for f, x in zip(problem.fs, xs):
        resid += f.reshape(f.shape[0], -1) @ x.ravel()
    if problem.g.shape[0]:
        resid += problem.g.T @ x_lp
    report.stationarity = float(np.abs(resid).max() / (1.0 + np.abs(c).max()))
    if report.stationarity > feas_tol:
        report.fail(f"dual stationarity residual {report.stationarity:.3e}")

    # Weak duality: the certified lower bound must meet the attained value.
    dobj = sum(float(np.tensordot(f0, x)) for f0, x in zip(problem.f0, xs))
    if problem.g.shape[0]:
        dobj -= float(problem.h @ x_lp)
    report.gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
    if report.gap > gap_tol:
        report.fail(f"duality gap {report.gap:.3e}")


def _check_maxdet(
    report: CheckReport,
    problem: LmiProblem,
    sol: Solution,
    gap_tol: float,
    opts: SolverOptions,
) -> None:
    obj = problem.objective
    a = np.zeros((obj.dim, obj.dim))
    for v, p, q in obj.entries:
        a[p, q] += sol.y[v]
        if p != q:
            a[q, p] += sol.y[v]
    lo = float(np.linalg.eigvalsh(a)[0])
    if lo <= 0:
        report.fail(f"objective matrix is not positive definite: min eig {lo:.3e}")
        return
    ld = float(np.linalg.slogdet(a)[1])
    if sol.objective is not None and abs(ld - sol.objective) > 1e-9 * (1.0 + abs(ld)):
        report.fail(f"reported log det {sol.objective:.12g} differs from recomputed {ld:.12g}")

    duals = sol.duals or {}
    t = duals.get("t")
    nu = duals.get("nu")
    if t is None or nu is None:
        report.fail("solution carries no barrier certificate")
        return
    # The gap certificate holds at (approximate) t-centers; re-derive the
    # Newton decrement to confirm centering, then re-derive the bound.
    bar = _Barrier(problem, opts)
    try:
        grad, hess = bar.grad_hess(sol.y, t)
        d = np.sqrt(np.clip(np.diag(hess), 1e-300, None))
        hs = hess / d[:, None] / d[None, :]
        step = np.linalg.solve(hs + 1e-13 * np.eye(bar.q), -grad / d) / d
        delta = float(np.sqrt(max(-grad @ step, 0.0)))
    except np.linalg.LinAlgError:
        report.fail("could not recompute the centering decrement")
        return
    if delta > 1.1 * _DELTA_CERT:
        report.fail(f"point is not centered: decrement {delta:.3e}")
    report.gap = certified_gap_bound(nu, t, delta) / (1.0 + abs(ld))
    if report.gap > gap_tol:
        report.fail(f"barrier gap bound {report.gap:.3e}")


def check_solution(
    problem: LmiProblem,
    solution: Solution,
    feas_tol: float = 1e-6,
    gap_tol: float = 1e-6,
    options: SolverOptions | None = None,
) -> CheckReport:
    """Re-verify a solution from scratch.

    Feasibility is recomputed by materializing every constraint block at the
    returned point; optimality is re-certified from the duals (linear
    objective) or the barrier gap bound plus a recomputed Newton decrement
    (determinant objective).
    """
    report = CheckReport()
    if solution.status != SolveStatus.OPTIMAL:
        report.fail(f"status is '{solution.status.value}', not optimal")
    if solution.y is None:
        report.fail("solution carries no point")
        return report
    y = np.asarray(solution.y, dtype=float)
    if y.shape != (problem.n_vars,):
        report.fail(f"point has shape {y.shape}, expected ({problem.n_vars},)")
        return report

    _feasibility(report, problem, y, feas_tol)
    if isinstance(problem.objective, LinearObjective):
        _check_linear(report, problem, solution, feas_tol, gap_tol)
    elif isinstance(problem.objective, MaxdetObjective):
        _check_maxdet(report, problem, solution, gap_tol, options or SolverOptions())
    else:
        report.fail(f"unknown objective type {type(problem.objective).__name__}")
    return report
